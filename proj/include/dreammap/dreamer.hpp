// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dreammap/grid.hpp"
#include "dreammap/parallel.hpp"
#include "dreammap/world_model.hpp"

namespace dreammap {

enum class SelectionRule { ArgminVariance, ArgmaxVariance, Random };

const char* selection_rule_name(SelectionRule rule);
SelectionRule parse_selection_rule(const std::string& name);

struct AcquisitionConfig {
  int pool_size = 40;      // candidate cells scored per step
  int dream_samples = 12;  // imagined rollouts per candidate
  int budget = 10;         // environment queries
  SelectionRule rule = SelectionRule::ArgminVariance;
  std::uint64_t seed = 0;
  Exec scoring_mode = Exec::Auto;  // forced serial/parallel scoring for tests
};

void validate(const AcquisitionConfig& cfg, int grid_cells);

struct StepRecord {
  int t = 0;
  ActionCoord action;
  double value = 0.0;
  std::vector<std::pair<int, double>> scores;  // (cell, u); empty for Random
  double rmse_after = std::numeric_limits<double>::quiet_NaN();
  double seconds_cum = 0.0;
};

struct AcquisitionTrace {
  std::vector<StepRecord> steps;
  GridMap reconstruction;
  int oracle_queries = 0;
  int grid_height = 0;
  int grid_width = 0;
};

/// Counts every pointwise query of the occupied map.
class MeasurementOracle {
 public:
  explicit MeasurementOracle(const GridMap& occupied) : occupied_(&occupied) {}
  double query(int cell) {
    ++count_;
    return (*occupied_)[cell];
  }
  int count() const { return count_; }

 private:
  const GridMap* occupied_;
  int count_ = 0;
};

/// Uniform sample without replacement from the unmeasured cells; all of them
/// when fewer than pool_size remain.
std::vector<ActionCoord> sample_candidates(const MeasurementState& state, int pool_size,
                                           RngStream& rng);

struct DreamOptions {
  bool zero_latent_variance = false;  // test hook: collapse the dreamed distribution
};

/// Mean over cells of the unbiased per-cell sample variance.
double mean_cell_variance(const std::vector<GridMap>& maps);

/// Dream k imagined next maps for one candidate action and score their
/// disagreement. Never mutates the committed belief or recurrent state.
double score_candidate(const WorldModel& model, const LatentBelief& belief,
                       const DynamicsState& dyn, const ActionCoord& action, int k_dreams,
                       RngStream& rng, const DreamOptions& options = {});

/// Lowest score wins under ArgminVariance (ties to the lowest cell index);
/// ArgmaxVariance is symmetric; Random ignores the scores.
ActionCoord select_action(const std::vector<std::pair<ActionCoord, double>>& scored,
                          SelectionRule rule, RngStream* random_rng = nullptr);

/// The sequential acquisition loop: encode, pool, dream-score, select, query,
/// update, and finally reconstruct from the last observation. The occupied
/// map is touched only through the oracle (plus optional trace metrics).
AcquisitionTrace run_acquisition(const WorldModel& model, const GridMap& empty,
                                 MeasurementOracle& oracle, const AcquisitionConfig& cfg,
                                 const GridMap* truth_for_metrics = nullptr,
                                 const DreamOptions& options = {});

AcquisitionTrace run_acquisition(const WorldModel& model, const EnvironmentPair& pair,
                                 const AcquisitionConfig& cfg);

// Trace JSONL: one object per step
//   {"t": ..., "action": [r, c], "value": ..., "scores": [[r, c, u], ...],
//    "rmse_after": ...}
// plus a final record {"reconstruction": "<map path>"}.
void save_trace_jsonl(const std::filesystem::path& path, const AcquisitionTrace& trace,
                      const std::string& reconstruction_path);

struct LoadedTrace {
  AcquisitionTrace trace;  // reconstruction not populated (lives in its own file)
  std::string reconstruction_path;
};

LoadedTrace load_trace_jsonl(const std::filesystem::path& path, int grid_height,
                             int grid_width);

}  // namespace dreammap
