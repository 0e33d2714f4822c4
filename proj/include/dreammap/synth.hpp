// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "dreammap/grid.hpp"

namespace dreammap {

/// Log-distance path-loss field with spatially correlated shadowing, plus
/// Gaussian attenuation bumps for occupants. Stands in for a measured
/// empty/occupied indoor dataset.
struct SynthConfig {
  int base_h = 9;
  int base_w = 11;
  double ap_row = 2.0;  // continuous AP location, grid cells
  double ap_col = 3.0;
  double tx_ref_dbm = -30.0;
  double path_loss_exp = 2.2;
  double shadowing_sigma_dbm = 2.0;
  double correlation_len_cells = 2.0;
  int n_occupants = 8;
  double occupant_atten_db = 6.0;
  double occupant_radius_cells = 1.5;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

/// Generate one empty/occupied pair in dBm. The shadowing field is shared by
/// both maps; occupancy is the only difference. Deterministic given the seed.
/// When `occupant_centers` is given it receives the sampled (row, col)
/// positions.
EnvironmentPair synth_pair(const SynthConfig& cfg,
                           std::vector<Eigen::Vector2d>* occupant_centers = nullptr);

/// Affine map of a dBm pair onto [0, 1] using the min/max over both maps
/// jointly; the range is recorded in the pair's meta.
EnvironmentPair normalize_pair(const EnvironmentPair& pair);

/// Inverse of normalize_pair using the recorded range.
EnvironmentPair denormalize_pair(const EnvironmentPair& pair);
GridMap denormalize_map(const GridMap& map, const PairMeta& meta);

struct Dataset {
  std::vector<EnvironmentPair> train;
  std::vector<EnvironmentPair> eval;
};

/// n_train + n_eval pairs from per-pair derived seeds, upscaled by `scale`
/// and normalized. Pure function of its arguments.
Dataset make_dataset(const SynthConfig& cfg, int n_train, int n_eval, int scale);

}  // namespace dreammap
