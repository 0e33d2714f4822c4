// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <numeric>
#include <set>

#include "dreammap/dreamer.hpp"
#include "dreammap/synth.hpp"
#include "test_util.hpp"

using namespace dreammap;

namespace {

EnvironmentPair pair_for(int h, int w, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.base_h = h;
  cfg.base_w = w;
  cfg.ap_row = 0.5;
  cfg.ap_col = 0.5;
  cfg.n_occupants = 2;
  cfg.seed = seed;
  return normalize_pair(synth_pair(cfg));
}

WorldModel mini_model(std::uint64_t seed) {
  WorldModel model(Architecture::miniature());
  model.init_weights(seed);
  return model;
}

std::uint64_t hash_doubles(const double* data, size_t count, std::uint64_t h) {
  for (size_t i = 0; i < count; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, data + i, sizeof(bits));
    h = hash_mix(h, bits);
  }
  return h;
}

std::uint64_t state_hash(const LatentBelief& z, const DynamicsState& dyn,
                         const MeasurementState& st) {
  std::uint64_t h = 0x5157;
  h = hash_doubles(z.mean.data(), z.mean.size(), h);
  h = hash_doubles(z.log_var.data(), z.log_var.size(), h);
  h = hash_doubles(z.sample.data(), z.sample.size(), h);
  h = hash_doubles(dyn.hidden.data(), dyn.hidden.size(), h);
  h = hash_doubles(dyn.cell.data(), dyn.cell.size(), h);
  h = hash_doubles(st.value_map().values().data(), st.value_map().size(), h);
  h = hash_doubles(st.mask().values().data(), st.mask().size(), h);
  for (int cell : st.visited()) h = hash_mix(h, static_cast<std::uint64_t>(cell));
  return h;
}

bool traces_equal(const AcquisitionTrace& a, const AcquisitionTrace& b) {
  if (a.steps.size() != b.steps.size()) return false;
  for (size_t i = 0; i < a.steps.size(); ++i) {
    if (a.steps[i].action.cell_index != b.steps[i].action.cell_index) return false;
    if (a.steps[i].value != b.steps[i].value) return false;
    if (a.steps[i].scores != b.steps[i].scores) return false;
  }
  return a.reconstruction == b.reconstruction;
}

}  // namespace

TEST_CASE("sample_candidates pool rules") {
  MeasurementState st(3, 3, Unit::Normalized);
  RngStream rng = derive_stream(1, "pool");
  const auto all = sample_candidates(st, 40, rng);
  CHECK(all.size() == 9);

  for (int cell = 0; cell < 8; ++cell) apply_measurement(st, cell, 0.5);
  RngStream rng2 = derive_stream(2, "pool");
  const auto last = sample_candidates(st, 40, rng2);
  REQUIRE(last.size() == 1);
  CHECK(last[0].cell_index == 8);

  // membership oracle on a 9x11 grid with 10 cells measured
  MeasurementState big(9, 11, Unit::Normalized);
  for (int cell = 0; cell < 10; ++cell) apply_measurement(big, cell * 7 % 99, 0.25);
  RngStream rng3 = derive_stream(3, "pool");
  const auto five = sample_candidates(big, 5, rng3);
  CHECK(five.size() == 5);
  std::set<int> seen;
  for (const auto& a : five) {
    CHECK(!big.is_visited(a.cell_index));
    seen.insert(a.cell_index);
  }
  CHECK(seen.size() == 5);

  MeasurementState full(2, 2, Unit::Normalized);
  for (int cell = 0; cell < 4; ++cell) apply_measurement(full, cell, 0.1);
  RngStream rng4 = derive_stream(4, "pool");
  CHECK_THROWS_AS(sample_candidates(full, 5, rng4), std::invalid_argument);
}

TEST_CASE("mean_cell_variance two-sample closed form") {
  GridMap a = GridMap::constant(3, 3, 0.5, Unit::Normalized);
  GridMap::Vec v = a.values();
  const double d = 0.34;
  v[4] += d;
  const GridMap b(3, 3, std::move(v), Unit::Normalized);
  const double u = mean_cell_variance({a, b});
  CHECK(u == doctest::Approx(d * d / (2.0 * 9.0)).epsilon(1e-12));

  CHECK(mean_cell_variance({a, a, a}) == 0.0);
  CHECK_THROWS_AS(mean_cell_variance({a}), std::invalid_argument);
}

TEST_CASE("score_candidate: zero-variance hook, determinism, non-negativity") {
  const WorldModel model = mini_model(5);
  const EnvironmentPair pair = pair_for(5, 5, 6);
  const Observation obs = make_observation(
      pair.empty, MeasurementState(5, 5, pair.empty.unit()));
  RngStream enc = derive_stream(7, "enc");
  const LatentBelief z = encode(model, obs, enc);
  const DynamicsState dyn = initial_dynamics_state(model.arch());
  const ActionCoord a = make_action(13, 5, 5);

  DreamOptions zero;
  zero.zero_latent_variance = true;
  RngStream r1 = derive_stream(8, "dream");
  CHECK(score_candidate(model, z, dyn, a, 6, r1, zero) == 0.0);

  RngStream r2 = derive_stream(8, "dream");
  RngStream r3 = derive_stream(8, "dream");
  const double u1 = score_candidate(model, z, dyn, a, 4, r2);
  const double u2 = score_candidate(model, z, dyn, a, 4, r3);
  CHECK(u1 == u2);
  CHECK(u1 >= 0.0);
  CHECK(u1 > 0.0);  // live variance decodes to distinct maps
}

TEST_CASE("score_candidate leaves belief, dynamics state and measurements unchanged") {
  const WorldModel model = mini_model(9);
  const EnvironmentPair pair = pair_for(5, 5, 10);
  MeasurementState st(5, 5, pair.empty.unit());
  apply_measurement(st, 3, pair.occupied[3]);
  RngStream enc = derive_stream(11, "enc");
  const LatentBelief z = encode(model, make_observation(pair.empty, st), enc);
  DynamicsState dyn = initial_dynamics_state(model.arch());

  const std::uint64_t before = state_hash(z, dyn, st);
  RngStream dream = derive_stream(12, "dream");
  score_candidate(model, z, dyn, make_action(7, 5, 5), 5, dream);
  CHECK(state_hash(z, dyn, st) == before);
}

TEST_CASE("select_action rules and scan oracle") {
  auto mk = [](int cell, double u) {
    return std::make_pair(make_action(cell, 9, 11), u);
  };
  std::vector<std::pair<ActionCoord, double>> two{mk(3, 0.5), mk(7, 0.2)};
  CHECK(select_action(two, SelectionRule::ArgminVariance).cell_index == 7);
  CHECK(select_action(two, SelectionRule::ArgmaxVariance).cell_index == 3);

  std::vector<std::pair<ActionCoord, double>> ties{mk(42, 1.0), mk(5, 1.0), mk(17, 1.0)};
  CHECK(select_action(ties, SelectionRule::ArgminVariance).cell_index == 5);
  CHECK(select_action(ties, SelectionRule::ArgmaxVariance).cell_index == 5);

  RngStream rng = derive_stream(13, "scores");
  std::vector<std::pair<ActionCoord, double>> many;
  for (int i = 0; i < 40; ++i) many.push_back(mk(i * 2, rng.next_unit()));
  int best = many[0].first.cell_index;
  double best_u = many[0].second;
  for (const auto& [a, u] : many)
    if (u < best_u || (u == best_u && a.cell_index < best)) {
      best_u = u;
      best = a.cell_index;
    }
  CHECK(select_action(many, SelectionRule::ArgminVariance).cell_index == best);

  CHECK_THROWS_AS(select_action({}, SelectionRule::ArgminVariance),
                  std::invalid_argument);

  RngStream pick = derive_stream(14, "pick");
  const ActionCoord r = select_action(many, SelectionRule::Random, &pick);
  CHECK(std::any_of(many.begin(), many.end(),
                    [&](const auto& s) { return s.first.cell_index == r.cell_index; }));
}

TEST_CASE("run_acquisition basic contract") {
  const WorldModel model = mini_model(15);
  const EnvironmentPair pair = pair_for(5, 5, 16);

  AcquisitionConfig cfg;
  cfg.pool_size = 6;
  cfg.dream_samples = 3;
  cfg.budget = 1;
  cfg.seed = 17;
  const AcquisitionTrace one = run_acquisition(model, pair, cfg);
  CHECK(one.steps.size() == 1);
  CHECK(one.oracle_queries == 1);
  CHECK(one.reconstruction.height() == 5);
  CHECK(std::isfinite(one.steps[0].rmse_after));

  // exhaustive budget fills the mask and reproduces the occupied map
  cfg.budget = 25;
  cfg.rule = SelectionRule::Random;
  MeasurementOracle oracle(pair.occupied);
  MeasurementState replay(5, 5, pair.empty.unit());
  const AcquisitionTrace full =
      run_acquisition(model, pair.empty, oracle, cfg, &pair.occupied);
  CHECK(full.oracle_queries == 25);
  std::set<int> cells;
  for (const auto& step : full.steps) {
    cells.insert(step.action.cell_index);
    apply_measurement(replay, step.action.cell_index, step.value);
  }
  CHECK(cells.size() == 25);
  CHECK(replay.mask().values().sum() == 25.0);
  CHECK(replay.value_map() == pair.occupied);
}

TEST_CASE("trace determinism: reruns, serial vs parallel, prefix property") {
  const WorldModel model = mini_model(19);
  const EnvironmentPair pair = pair_for(5, 5, 20);

  AcquisitionConfig cfg;
  cfg.pool_size = 8;
  cfg.dream_samples = 3;
  cfg.budget = 9;
  cfg.seed = 21;

  SUBCASE("random rule reruns identically") {
    cfg.rule = SelectionRule::Random;
    const AcquisitionTrace a = run_acquisition(model, pair, cfg);
    const AcquisitionTrace b = run_acquisition(model, pair, cfg);
    CHECK(traces_equal(a, b));
  }

  SUBCASE("forced serial and parallel scoring agree bit-exactly") {
    cfg.scoring_mode = Exec::Serial;
    const AcquisitionTrace serial = run_acquisition(model, pair, cfg);
    cfg.scoring_mode = Exec::Parallel;
    const AcquisitionTrace parallel = run_acquisition(model, pair, cfg);
    CHECK(traces_equal(serial, parallel));
  }

  SUBCASE("a smaller budget is a prefix of a larger one") {
    const AcquisitionTrace nine = run_acquisition(model, pair, cfg);
    cfg.budget = 4;
    const AcquisitionTrace four = run_acquisition(model, pair, cfg);
    for (int t = 0; t < 4; ++t) {
      CHECK(four.steps[t].action.cell_index == nine.steps[t].action.cell_index);
      CHECK(four.steps[t].value == nine.steps[t].value);
    }
  }
}

TEST_CASE("acquisition config validation") {
  AcquisitionConfig cfg;
  cfg.pool_size = 0;
  CHECK_THROWS_AS(validate(cfg, 25), std::invalid_argument);
  cfg = AcquisitionConfig{};
  cfg.dream_samples = 1;  // variance needs two samples
  CHECK_THROWS_AS(validate(cfg, 25), std::invalid_argument);
  cfg = AcquisitionConfig{};
  cfg.budget = 26;
  CHECK_THROWS_AS(validate(cfg, 25), std::invalid_argument);
  CHECK_THROWS_AS(parse_selection_rule("biggest"), std::invalid_argument);
}

TEST_CASE("trace JSONL round-trip is byte-stable") {
  const auto dir = test::scratch_dir("trace_io");
  const WorldModel model = mini_model(23);
  const EnvironmentPair pair = pair_for(5, 5, 24);
  AcquisitionConfig cfg;
  cfg.pool_size = 5;
  cfg.dream_samples = 3;
  cfg.budget = 4;
  cfg.seed = 25;
  const AcquisitionTrace trace = run_acquisition(model, pair, cfg);

  const auto path = dir / "trace.jsonl";
  save_trace_jsonl(path, trace, "recon.map");
  const LoadedTrace loaded = load_trace_jsonl(path, 5, 5);
  CHECK(loaded.reconstruction_path == "recon.map");
  REQUIRE(loaded.trace.steps.size() == trace.steps.size());
  for (size_t i = 0; i < trace.steps.size(); ++i) {
    CHECK(loaded.trace.steps[i].action.cell_index == trace.steps[i].action.cell_index);
    CHECK(loaded.trace.steps[i].value == trace.steps[i].value);
    CHECK(loaded.trace.steps[i].scores == trace.steps[i].scores);
  }

  save_trace_jsonl(dir / "trace2.jsonl", loaded.trace, loaded.reconstruction_path);
  CHECK(test::read_file(path) == test::read_file(dir / "trace2.jsonl"));
}

TEST_CASE("standard-size model runs the loop end to end") {
  WorldModel model(Architecture::standard(9, 11));
  model.init_weights(31);
  const EnvironmentPair pair = pair_for(9, 11, 32);
  AcquisitionConfig cfg;
  cfg.pool_size = 6;
  cfg.dream_samples = 3;
  cfg.budget = 3;
  cfg.seed = 33;
  const AcquisitionTrace trace = run_acquisition(model, pair, cfg);
  CHECK(trace.oracle_queries == 3);
  for (const auto& step : trace.steps) {
    CHECK(step.scores.size() == 6);
    for (const auto& [cell, u] : step.scores) CHECK(u >= 0.0);
  }
}
