// SPDX-License-Identifier: Apache-2.0

#include "dreammap/synth.hpp"

#include <cmath>
#include <stdexcept>

#include "dreammap/errors.hpp"
#include "dreammap/resample.hpp"
#include "dreammap/rng.hpp"

namespace dreammap {

void validate(const SynthConfig& cfg) {
  if (cfg.base_h < 2 || cfg.base_w < 2)
    throw std::invalid_argument("SynthConfig: base dimensions must be >= 2");
  if (!(cfg.path_loss_exp > 0))
    throw std::invalid_argument("SynthConfig: path_loss_exp must be > 0");
  if (cfg.shadowing_sigma_dbm < 0 || cfg.occupant_atten_db < 0)
    throw std::invalid_argument("SynthConfig: attenuation and sigma must be >= 0");
  if (!(cfg.correlation_len_cells > 0))
    throw std::invalid_argument("SynthConfig: correlation_len_cells must be > 0");
  if (cfg.n_occupants < 0)
    throw std::invalid_argument("SynthConfig: n_occupants must be >= 0");
  if (!(cfg.occupant_radius_cells > 0))
    throw std::invalid_argument("SynthConfig: occupant_radius_cells must be > 0");
  if (cfg.ap_row < 0 || cfg.ap_row > cfg.base_h - 1 || cfg.ap_col < 0 ||
      cfg.ap_col > cfg.base_w - 1)
    throw std::invalid_argument("SynthConfig: ap_location outside grid");
}

namespace {

// White Gaussian noise smoothed with a separable Gaussian kernel
// (std = corr_len, truncated at 3 sigma, renormalized at borders), then
// rescaled to the requested sample standard deviation.
Eigen::VectorXd correlated_shadowing(int h, int w, double sigma, double corr_len,
                                     RngStream& rng) {
  const int n = h * w;
  Eigen::VectorXd field = Eigen::VectorXd::Zero(n);
  if (sigma == 0.0) return field;

  Eigen::VectorXd white(n);
  for (int i = 0; i < n; ++i) white[i] = rng.next_gauss();

  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * corr_len)));
  Eigen::VectorXd taps(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k)
    taps[k + radius] = std::exp(-0.5 * (k * k) / (corr_len * corr_len));

  auto blur_axis = [&](const Eigen::VectorXd& src, bool rows) {
    Eigen::VectorXd dst(n);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        double acc = 0.0, wsum = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int rr = rows ? r + k : r;
          const int cc = rows ? c : c + k;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const double t = taps[k + radius];
          acc += t * src[rr * w + cc];
          wsum += t;
        }
        dst[r * w + c] = acc / wsum;
      }
    }
    return dst;
  };

  field = blur_axis(blur_axis(white, true), false);

  if (n < 2) return Eigen::VectorXd::Zero(n);
  const double mean = field.mean();
  const double sd = std::sqrt((field.array() - mean).square().sum() / (n - 1));
  if (sd < 1e-15) return Eigen::VectorXd::Zero(n);
  return field * (sigma / sd);
}

}  // namespace

EnvironmentPair synth_pair(const SynthConfig& cfg,
                           std::vector<Eigen::Vector2d>* occupant_centers) {
  validate(cfg);
  const int h = cfg.base_h, w = cfg.base_w, n = h * w;

  RngStream shadow_rng = derive_stream(cfg.seed, "synth/shadow");
  const Eigen::VectorXd shadow =
      correlated_shadowing(h, w, cfg.shadowing_sigma_dbm, cfg.correlation_len_cells,
                           shadow_rng);

  Eigen::VectorXd empty(n);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double d = std::hypot(r - cfg.ap_row, c - cfg.ap_col);
      empty[r * w + c] = cfg.tx_ref_dbm -
                         10.0 * cfg.path_loss_exp * std::log10(std::max(d, 0.5)) +
                         shadow[r * w + c];
    }
  }

  // Occupants sit in the interior (1-cell margin when the grid allows it).
  RngStream occ_rng = derive_stream(cfg.seed, "synth/occupants");
  const double r_lo = h > 2 ? 1.0 : 0.0, r_hi = h > 2 ? h - 2.0 : h - 1.0;
  const double c_lo = w > 2 ? 1.0 : 0.0, c_hi = w > 2 ? w - 2.0 : w - 1.0;
  std::vector<Eigen::Vector2d> centers(cfg.n_occupants);
  for (auto& p : centers) {
    p.x() = r_lo + occ_rng.next_unit() * (r_hi - r_lo);
    p.y() = c_lo + occ_rng.next_unit() * (c_hi - c_lo);
  }
  if (occupant_centers) *occupant_centers = centers;

  Eigen::VectorXd occupied = empty;
  const double two_rad_sq = 2.0 * cfg.occupant_radius_cells * cfg.occupant_radius_cells;
  for (const auto& p : centers) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double dsq = (r - p.x()) * (r - p.x()) + (c - p.y()) * (c - p.y());
        occupied[r * w + c] -= cfg.occupant_atten_db * std::exp(-dsq / two_rad_sq);
      }
    }
  }

  EnvironmentPair pair;
  pair.empty = GridMap(h, w, std::move(empty), Unit::dBm);
  pair.occupied = GridMap(h, w, std::move(occupied), Unit::dBm);
  pair.meta.source = "synthetic";
  pair.meta.seed = cfg.seed;
  pair.meta.scale = 1;
  return pair;
}

EnvironmentPair normalize_pair(const EnvironmentPair& pair) {
  if (pair.empty.unit() != Unit::dBm || pair.occupied.unit() != Unit::dBm)
    throw std::invalid_argument("normalize_pair: expects a dBm pair");
  const double lo = std::min(pair.empty.values().minCoeff(), pair.occupied.values().minCoeff());
  const double hi = std::max(pair.empty.values().maxCoeff(), pair.occupied.values().maxCoeff());
  if (!(lo < hi))
    throw DataError("normalize_pair: degenerate constant pair");

  auto to_unit = [&](const GridMap& m) {
    GridMap::Vec v = (m.values().array() - lo) / (hi - lo);
    return GridMap(m.height(), m.width(), std::move(v), Unit::Normalized);
  };
  EnvironmentPair out;
  out.empty = to_unit(pair.empty);
  out.occupied = to_unit(pair.occupied);
  out.meta = pair.meta;
  out.meta.dbm_min = lo;
  out.meta.dbm_max = hi;
  return out;
}

GridMap denormalize_map(const GridMap& map, const PairMeta& meta) {
  if (map.unit() != Unit::Normalized)
    throw std::invalid_argument("denormalize_map: expects a normalized map");
  if (!(meta.dbm_min < meta.dbm_max))
    throw std::invalid_argument("denormalize_map: meta has no valid range");
  GridMap::Vec v = meta.dbm_min + map.values().array() * (meta.dbm_max - meta.dbm_min);
  return GridMap(map.height(), map.width(), std::move(v), Unit::dBm);
}

EnvironmentPair denormalize_pair(const EnvironmentPair& pair) {
  EnvironmentPair out;
  out.empty = denormalize_map(pair.empty, pair.meta);
  out.occupied = denormalize_map(pair.occupied, pair.meta);
  out.meta = pair.meta;
  return out;
}

Dataset make_dataset(const SynthConfig& cfg, int n_train, int n_eval, int scale) {
  validate(cfg);
  if (n_train < 1 || n_eval < 1)
    throw std::invalid_argument("make_dataset: n_train and n_eval must be >= 1");
  if (!valid_scale_factor(scale))
    throw std::invalid_argument("make_dataset: scale must be one of {1,2,4,8,16}");

  Dataset ds;
  for (int i = 0; i < n_train + n_eval; ++i) {
    SynthConfig one = cfg;
    one.seed = derive_stream(cfg.seed, "dataset/pair", static_cast<std::uint64_t>(i)).next_u64();
    EnvironmentPair pair = synth_pair(one);
    pair.empty = bilinear_upscale(pair.empty, scale);
    pair.occupied = bilinear_upscale(pair.occupied, scale);
    pair.meta.scale = scale;
    pair = normalize_pair(pair);
    (i < n_train ? ds.train : ds.eval).push_back(std::move(pair));
  }
  return ds;
}

}  // namespace dreammap
