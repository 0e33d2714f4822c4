// SPDX-License-Identifier: Apache-2.0

#include "dreammap/dreamer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "dreammap/errors.hpp"
#include "dreammap/metrics.hpp"

namespace dreammap {

const char* selection_rule_name(SelectionRule rule) {
  switch (rule) {
    case SelectionRule::ArgminVariance: return "argmin_variance";
    case SelectionRule::ArgmaxVariance: return "argmax_variance";
    case SelectionRule::Random: return "random";
  }
  return "argmin_variance";
}

SelectionRule parse_selection_rule(const std::string& name) {
  if (name == "argmin_variance") return SelectionRule::ArgminVariance;
  if (name == "argmax_variance") return SelectionRule::ArgmaxVariance;
  if (name == "random") return SelectionRule::Random;
  throw std::invalid_argument("unknown selection rule: " + name);
}

void validate(const AcquisitionConfig& cfg, int grid_cells) {
  if (cfg.pool_size < 1) throw std::invalid_argument("AcquisitionConfig: pool_size >= 1");
  if (cfg.dream_samples < 2)
    throw std::invalid_argument("AcquisitionConfig: dream_samples >= 2");
  if (cfg.budget < 1 || cfg.budget > grid_cells)
    throw std::invalid_argument("AcquisitionConfig: budget must be in [1, grid cells]");
}

std::vector<ActionCoord> sample_candidates(const MeasurementState& state, int pool_size,
                                           RngStream& rng) {
  std::vector<int> free = state.unmeasured_cells();
  if (free.empty()) throw std::invalid_argument("sample_candidates: no unmeasured cells");
  std::vector<int> chosen = sample_distinct(std::move(free), pool_size, rng);
  std::vector<ActionCoord> out;
  out.reserve(chosen.size());
  for (int cell : chosen) out.push_back(make_action(cell, state.height(), state.width()));
  return out;
}

double mean_cell_variance(const std::vector<GridMap>& maps) {
  if (maps.size() < 2)
    throw std::invalid_argument("mean_cell_variance: needs >= 2 maps");
  const int k = static_cast<int>(maps.size());
  // identical maps have exactly zero variance; skip the rounding of the mean
  const bool all_equal = std::all_of(maps.begin() + 1, maps.end(),
                                     [&](const GridMap& m) { return m == maps[0]; });
  if (all_equal) return 0.0;
  const Eigen::Index n = maps[0].values().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  for (const auto& m : maps) mean += m.values();
  mean /= k;
  Eigen::VectorXd ssq = Eigen::VectorXd::Zero(n);
  for (const auto& m : maps) ssq += (m.values() - mean).cwiseAbs2();
  return ssq.sum() / ((k - 1) * static_cast<double>(n));
}

double score_candidate(const WorldModel& model, const LatentBelief& belief,
                       const DynamicsState& dyn, const ActionCoord& action, int k_dreams,
                       RngStream& rng, const DreamOptions& options) {
  if (k_dreams < 2) throw std::invalid_argument("score_candidate: k_dreams >= 2");
  // one dynamics step; the per-candidate recurrent state is discarded
  const DynamicsPrediction pred = dynamics_step(model, belief.sample, action, dyn);
  nn::Vec sigma = (pred.log_var / 2.0).array().exp();
  if (options.zero_latent_variance) sigma.setZero();

  const auto& arch = model.arch();
  std::vector<GridMap> dreamed;
  dreamed.reserve(k_dreams);
  for (int k = 0; k < k_dreams; ++k) {
    nn::Vec z(pred.mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i)
      z[i] = pred.mean[i] + sigma[i] * rng.next_gauss();
    dreamed.push_back(decode(model, z, arch.grid_h, arch.grid_w));
  }
  return mean_cell_variance(dreamed);
}

ActionCoord select_action(const std::vector<std::pair<ActionCoord, double>>& scored,
                          SelectionRule rule, RngStream* random_rng) {
  if (scored.empty()) throw std::invalid_argument("select_action: empty candidate set");
  if (rule == SelectionRule::Random) {
    if (!random_rng) throw std::invalid_argument("select_action: Random needs an rng");
    return scored[random_rng->next_index(static_cast<int>(scored.size()))].first;
  }
  const bool want_min = rule == SelectionRule::ArgminVariance;
  const auto better = [&](const std::pair<ActionCoord, double>& a,
                          const std::pair<ActionCoord, double>& b) {
    if (a.second != b.second) return want_min ? a.second < b.second : a.second > b.second;
    return a.first.cell_index < b.first.cell_index;
  };
  const auto* best = &scored[0];
  for (const auto& s : scored)
    if (better(s, *best)) best = &s;
  return best->first;
}

AcquisitionTrace run_acquisition(const WorldModel& model, const GridMap& empty,
                                 MeasurementOracle& oracle, const AcquisitionConfig& cfg,
                                 const GridMap* truth_for_metrics,
                                 const DreamOptions& options) {
  const auto& arch = model.arch();
  if (empty.height() != arch.grid_h || empty.width() != arch.grid_w)
    throw std::invalid_argument("run_acquisition: empty map does not match model grid");
  validate(cfg, empty.size());

  const auto start_time = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time)
        .count();
  };

  AcquisitionTrace trace;
  MeasurementState state(arch.grid_h, arch.grid_w, empty.unit());
  DynamicsState dyn = initial_dynamics_state(arch);

  for (int t = 0; t < cfg.budget; ++t) {
    const Observation obs = make_observation(empty, state);
    RngStream enc_rng = derive_stream(cfg.seed, "acq/encode", t);
    const LatentBelief belief = encode(model, obs, enc_rng);

    RngStream pool_rng = derive_stream(cfg.seed, "acq/pool", t);
    const std::vector<ActionCoord> candidates =
        sample_candidates(state, cfg.pool_size, pool_rng);

    std::vector<std::pair<ActionCoord, double>> scored(candidates.size());
    if (cfg.rule != SelectionRule::Random) {
      // Dream noise is keyed per (step, candidate), so scoring order and
      // thread count cannot change the scores.
      parallel_for(
          static_cast<int>(candidates.size()),
          [&](int i) {
            RngStream dream_rng = derive_stream(cfg.seed, "acq/dream", t, i);
            scored[i] = {candidates[i],
                         score_candidate(model, belief, dyn, candidates[i],
                                         cfg.dream_samples, dream_rng, options)};
          },
          cfg.scoring_mode);
    } else {
      for (size_t i = 0; i < candidates.size(); ++i) scored[i] = {candidates[i], 0.0};
    }

    RngStream select_rng = derive_stream(cfg.seed, "acq/select", t);
    const ActionCoord action =
        select_action(scored, cfg.rule, cfg.rule == SelectionRule::Random ? &select_rng
                                                                          : nullptr);

    const double value = oracle.query(action.cell_index);
    apply_measurement(state, action.cell_index, value);
    dyn = dynamics_step(model, belief.sample, action, dyn).next;

    StepRecord rec;
    rec.t = t;
    rec.action = action;
    rec.value = value;
    if (cfg.rule != SelectionRule::Random) {
      rec.scores.reserve(scored.size());
      for (const auto& [cand, u] : scored) rec.scores.emplace_back(cand.cell_index, u);
    }
    if (truth_for_metrics) {
      const GridMap est = reconstruct(model, make_observation(empty, state));
      rec.rmse_after = rmse(est, *truth_for_metrics);
    }
    rec.seconds_cum = elapsed();
    trace.steps.push_back(std::move(rec));
  }

  trace.reconstruction = reconstruct(model, make_observation(empty, state));
  trace.oracle_queries = oracle.count();
  trace.grid_height = arch.grid_h;
  trace.grid_width = arch.grid_w;
  return trace;
}

AcquisitionTrace run_acquisition(const WorldModel& model, const EnvironmentPair& pair,
                                 const AcquisitionConfig& cfg) {
  MeasurementOracle oracle(pair.occupied);
  return run_acquisition(model, pair.empty, oracle, cfg, &pair.occupied);
}

void save_trace_jsonl(const std::filesystem::path& path, const AcquisitionTrace& trace,
                      const std::string& reconstruction_path) {
  if (trace.grid_width < 1)
    throw std::invalid_argument("save_trace_jsonl: trace has no grid shape");
  std::ofstream out(path);
  if (!out) throw DataError("save_trace_jsonl: cannot open " + path.string());
  for (const auto& rec : trace.steps) {
    nlohmann::json j;
    j["t"] = rec.t;
    const auto [r, c] = cell_coords(rec.action.cell_index, trace.grid_width);
    j["action"] = {r, c};
    j["value"] = rec.value;
    auto scores = nlohmann::json::array();
    for (const auto& [cell, u] : rec.scores) {
      const auto [sr, sc] = cell_coords(cell, trace.grid_width);
      scores.push_back({sr, sc, u});
    }
    j["scores"] = std::move(scores);
    if (std::isfinite(rec.rmse_after))
      j["rmse_after"] = rec.rmse_after;
    else
      j["rmse_after"] = nullptr;
    out << j.dump() << '\n';
  }
  nlohmann::json final_rec;
  final_rec["reconstruction"] = reconstruction_path;
  out << final_rec.dump() << '\n';
}

LoadedTrace load_trace_jsonl(const std::filesystem::path& path, int grid_height,
                             int grid_width) {
  std::ifstream in(path);
  if (!in) throw DataError("load_trace_jsonl: cannot open " + path.string());
  LoadedTrace loaded;
  loaded.trace.grid_height = grid_height;
  loaded.trace.grid_width = grid_width;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("load_trace_jsonl: bad line: " + std::string(e.what()));
    }
    if (j.contains("reconstruction")) {
      loaded.reconstruction_path = j.at("reconstruction").get<std::string>();
      continue;
    }
    StepRecord rec;
    rec.t = j.at("t").get<int>();
    const auto action = j.at("action");
    const int row = action.at(0).get<int>(), col = action.at(1).get<int>();
    rec.action = make_action(cell_index(row, col, grid_width), grid_height, grid_width);
    rec.value = j.at("value").get<double>();
    for (const auto& s : j.at("scores")) {
      const int cell = cell_index(s.at(0).get<int>(), s.at(1).get<int>(), grid_width);
      rec.scores.emplace_back(cell, s.at(2).get<double>());
    }
    if (!j.at("rmse_after").is_null()) rec.rmse_after = j.at("rmse_after").get<double>();
    loaded.trace.steps.push_back(std::move(rec));
  }
  return loaded;
}

}  // namespace dreammap
