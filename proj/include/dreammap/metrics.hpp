// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>

#include "dreammap/grid.hpp"

namespace dreammap {

namespace detail {
template <typename Scalar>
void check_comparable(const GridMapT<Scalar>& a, const GridMapT<Scalar>& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("metrics: shape mismatch");
  if (a.unit() != b.unit())
    throw std::invalid_argument("metrics: unit mismatch");
}
}  // namespace detail

/// Root mean square error over all cells.
template <typename Scalar>
Scalar rmse(const GridMapT<Scalar>& estimate, const GridMapT<Scalar>& truth) {
  detail::check_comparable(estimate, truth);
  const auto diff = estimate.values() - truth.values();
  return std::sqrt(diff.squaredNorm() / static_cast<Scalar>(estimate.size()));
}

/// Mean absolute error over all cells.
template <typename Scalar>
Scalar mae(const GridMapT<Scalar>& estimate, const GridMapT<Scalar>& truth) {
  detail::check_comparable(estimate, truth);
  return (estimate.values() - truth.values()).cwiseAbs().sum() /
         static_cast<Scalar>(estimate.size());
}

}  // namespace dreammap
