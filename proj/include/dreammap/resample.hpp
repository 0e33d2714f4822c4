// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

#include "dreammap/grid.hpp"

namespace dreammap {

inline bool valid_scale_factor(int factor) {
  return factor == 1 || factor == 2 || factor == 4 || factor == 8 || factor == 16;
}

/// Bilinear upscaling with align-corners semantics: output sample i maps to
/// source coordinate i*(in-1)/(out-1) per axis, so corner samples are
/// preserved exactly. A length-1 axis is replicated.
template <typename Scalar>
GridMapT<Scalar> bilinear_upscale(const GridMapT<Scalar>& map, int factor) {
  if (!valid_scale_factor(factor))
    throw std::invalid_argument("bilinear_upscale: factor must be one of {1,2,4,8,16}");
  if (factor == 1) return map;

  const int in_h = map.height(), in_w = map.width();
  const int out_h = in_h * factor, out_w = in_w * factor;

  struct AxisSample {
    int lo, hi;
    double frac;
  };
  auto axis_samples = [](int in_len, int out_len) {
    std::vector<AxisSample> s(out_len);
    for (int i = 0; i < out_len; ++i) {
      if (in_len == 1) {
        s[i] = {0, 0, 0.0};
        continue;
      }
      double src = static_cast<double>(i) * (in_len - 1) / (out_len - 1);
      int lo = static_cast<int>(src);
      if (lo > in_len - 2) lo = in_len - 2;
      s[i] = {lo, lo + 1, src - lo};
    }
    return s;
  };

  const auto rows = axis_samples(in_h, out_h);
  const auto cols = axis_samples(in_w, out_w);

  typename GridMapT<Scalar>::Vec out(static_cast<Eigen::Index>(out_h) * out_w);
  for (int r = 0; r < out_h; ++r) {
    const auto& rs = rows[r];
    for (int c = 0; c < out_w; ++c) {
      const auto& cs = cols[c];
      const double tl = map(rs.lo, cs.lo), tr = map(rs.lo, cs.hi);
      const double bl = map(rs.hi, cs.lo), br = map(rs.hi, cs.hi);
      const double top = tl + (tr - tl) * cs.frac;
      const double bot = bl + (br - bl) * cs.frac;
      out[static_cast<Eigen::Index>(r) * out_w + c] =
          static_cast<Scalar>(top + (bot - top) * rs.frac);
    }
  }
  return GridMapT<Scalar>(out_h, out_w, std::move(out), map.unit());
}

}  // namespace dreammap
