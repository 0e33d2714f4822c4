// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dreammap/errors.hpp"
#include "dreammap/metrics.hpp"
#include "dreammap/synth.hpp"
#include "dreammap/world_model.hpp"
#include "grad_check.hpp"
#include "test_util.hpp"

using namespace dreammap;

namespace {

EnvironmentPair tiny_pair(int h, int w, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.base_h = h;
  cfg.base_w = w;
  cfg.ap_row = 0.5;
  cfg.ap_col = 0.5;
  cfg.n_occupants = 2;
  cfg.seed = seed;
  return normalize_pair(synth_pair(cfg));
}

Observation observe(const EnvironmentPair& pair, const std::vector<int>& cells) {
  MeasurementState st(pair.empty.height(), pair.empty.width(), pair.empty.unit());
  for (int cell : cells) apply_measurement(st, cell, pair.occupied[cell]);
  return make_observation(pair.empty, st);
}

}  // namespace

TEST_CASE("architecture padding and derived dims") {
  const Architecture a = Architecture::standard(9, 11);
  CHECK(a.padded_h() == 12);
  CHECK(a.padded_w() == 12);
  CHECK(a.pooled_h() == 3);
  CHECK(a.flat_dim() == 64 * 9);

  const Architecture m = Architecture::miniature();
  CHECK(m.padded_h() == 8);
  CHECK(m.latent_dim == 8);
  CHECK(m.hidden_dim == 16);
}

TEST_CASE("encode emits latent_dim-sized beliefs across grid sizes") {
  for (int scale : {1, 2, 4}) {
    const int h = 9 * scale, w = 11 * scale;
    WorldModel model(Architecture::standard(h, w));
    model.init_weights(1);
    const EnvironmentPair pair = tiny_pair(h, w, 2);
    RngStream rng = derive_stream(3, "enc");
    const LatentBelief belief = encode(model, observe(pair, {0, 5}), rng);
    CHECK(belief.mean.size() == 64);
    CHECK(belief.log_var.size() == 64);
    CHECK(belief.sample.size() == 64);
    CHECK(belief.mean.allFinite());
  }
}

TEST_CASE("zero-weight model gives zero mean, zero log-var, sample = noise") {
  WorldModel model(Architecture::miniature());  // weights start at zero
  const EnvironmentPair pair = tiny_pair(5, 5, 4);
  nn::Vec noise(model.arch().latent_dim);
  RngStream rng = derive_stream(9, "noise");
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = rng.next_gauss();

  const LatentBelief belief = encode_with_noise(model, observe(pair, {3}), noise);
  CHECK(belief.mean.isZero());
  CHECK(belief.log_var.isZero());
  CHECK((belief.sample - noise).cwiseAbs().maxCoeff() == 0.0);

  const GridMap out = decode(model, belief.sample, 5, 5);
  CHECK(out.values().isZero());
}

TEST_CASE("same recorded noise gives identical samples") {
  WorldModel model(Architecture::miniature());
  model.init_weights(7);
  const EnvironmentPair pair = tiny_pair(5, 5, 8);
  const Observation obs = observe(pair, {1, 12});
  nn::Vec noise = nn::Vec::LinSpaced(8, -1.0, 1.0);
  const LatentBelief a = encode_with_noise(model, obs, noise);
  const LatentBelief b = encode_with_noise(model, obs, noise);
  CHECK((a.sample - b.sample).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.sample ==
        a.mean + ((a.log_var / 2.0).array().exp() * a.noise.array()).matrix());
}

TEST_CASE("decode target shapes across the scale set") {
  // every upscaled size of the 9x11 base maps back onto its own architecture
  for (int scale : {1, 2, 4, 8, 16}) {
    const int h = 9 * scale, w = 11 * scale;
    WorldModel model(Architecture::standard(h, w));
    const GridMap out = decode(model, nn::Vec::Zero(64), h, w);
    CHECK(out.height() == h);
    CHECK(out.width() == w);
  }
  WorldModel model(Architecture::standard(9, 11));
  CHECK_THROWS_AS(decode(model, nn::Vec::Zero(64), 20, 20), std::invalid_argument);
  CHECK_THROWS_AS(decode(model, nn::Vec::Zero(32), 9, 11), std::invalid_argument);
}

TEST_CASE("dynamics step: zero weights, purity, live memory") {
  const Architecture arch = Architecture::miniature();
  WorldModel zero_model(arch);
  const nn::Vec z = nn::Vec::Constant(arch.latent_dim, 0.3);
  const ActionCoord a = make_action(7, arch.grid_h, arch.grid_w);
  const DynamicsState s0 = initial_dynamics_state(arch);

  const DynamicsPrediction zp = dynamics_step(zero_model, z, a, s0);
  CHECK(zp.mean.isZero());
  CHECK(zp.log_var.isZero());

  WorldModel model(arch);
  model.init_weights(12);
  const DynamicsPrediction p1 = dynamics_step(model, z, a, s0);
  const DynamicsPrediction p2 = dynamics_step(model, z, a, s0);
  CHECK((p1.mean - p2.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p1.log_var - p2.log_var).cwiseAbs().maxCoeff() == 0.0);

  // recurrent state carries information: stepping from the updated state
  // differs from stepping from the initial state
  const ActionCoord b = make_action(11, arch.grid_h, arch.grid_w);
  const DynamicsPrediction seq = dynamics_step(model, z, b, p1.next);
  const DynamicsPrediction fresh = dynamics_step(model, z, b, s0);
  CHECK((seq.mean - fresh.mean).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("kl divergence formula and reparameterization statistics") {
  CHECK(kl_standard_normal(nn::Vec::Zero(8), nn::Vec::Zero(8)) == 0.0);
  RngStream rng = derive_stream(21, "kl");
  for (int i = 0; i < 30; ++i) {
    nn::Vec mean(4), log_var(4);
    for (int j = 0; j < 4; ++j) {
      mean[j] = rng.next_gauss();
      log_var[j] = rng.next_gauss();
    }
    CHECK(kl_standard_normal(mean, log_var) >= 0.0);
  }

  // empirical mean of samples concentrates on the belief mean
  WorldModel model(Architecture::miniature());
  model.init_weights(22);
  const EnvironmentPair pair = tiny_pair(5, 5, 23);
  const Observation obs = observe(pair, {2, 17});
  RngStream noise_rng = derive_stream(24, "rep");
  const int n = 10000;
  nn::Vec acc = nn::Vec::Zero(8);
  nn::Vec mean, sigma;
  for (int k = 0; k < n; ++k) {
    const LatentBelief b = encode(model, obs, noise_rng);
    acc += b.sample;
    if (k == 0) {
      mean = b.mean;
      sigma = (b.log_var / 2.0).array().exp();
    }
  }
  acc /= n;
  for (int j = 0; j < 8; ++j)
    CHECK(std::abs(acc[j] - mean[j]) <= 3.0 * sigma[j] / std::sqrt(double(n)));
}

TEST_CASE("full training-loss gradient check on the miniature instance") {
  const Architecture arch = Architecture::miniature();
  const EnvironmentPair pair = tiny_pair(arch.grid_h, arch.grid_w, 31);
  WorldModel model(arch);
  test::randomize_all_params(model, 32);
  const Episode ep = test::miniature_episode(pair, arch, 3, 33);
  const auto result = test::check_episode_gradients(model, ep, 1e-3);
  INFO("passed ", result.passed, " of ", result.total, ", worst rel ", result.worst_rel);
  CHECK(result.fraction() >= 0.99);
}

TEST_CASE("episode loss breakdown is consistent") {
  const Architecture arch = Architecture::miniature();
  const EnvironmentPair pair = tiny_pair(5, 5, 41);
  WorldModel model(arch);
  model.init_weights(42);
  const Episode ep = test::miniature_episode(pair, arch, 4, 43);
  const LossBreakdown l = episode_loss(model, ep, 0.5, false);
  CHECK(l.total == doctest::Approx(l.recon + 0.5 * l.kl + l.dyn_nll).epsilon(1e-12));
  CHECK(l.recon >= 0.0);
  CHECK(l.kl >= 0.0);
  CHECK(std::isfinite(l.dyn_nll));
}

TEST_CASE("reconstruct is deterministic and shaped like the observation") {
  WorldModel model(Architecture::standard(9, 11));
  model.init_weights(51);
  const EnvironmentPair pair = tiny_pair(9, 11, 52);
  const Observation obs = observe(pair, {0, 50, 97});
  const GridMap a = reconstruct(model, obs);
  const GridMap b = reconstruct(model, obs);
  CHECK(a.height() == 9);
  CHECK(a.width() == 11);
  CHECK(a == b);
}

TEST_CASE("training overfits a single pair (reconstruction sanity)") {
  const EnvironmentPair pair = tiny_pair(6, 6, 61);
  WorldModel model(Architecture::standard(6, 6));

  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.episodes_per_epoch = 8;
  cfg.batch_size = 4;
  cfg.max_sequence_len = 10;
  cfg.seed = 62;

  // untrained reference: same init the trainer will use
  model.init_weights(derive_stream(cfg.seed, "weights").next_u64());
  const Observation probe = observe(pair, {0, 7, 14, 21, 28, 35});
  const double before = rmse(reconstruct(model, probe), pair.occupied);

  const TrainResult result = train(model, {pair}, nullptr, cfg);
  CHECK(!result.diverged);
  const double after = rmse(reconstruct(model, probe), pair.occupied);
  // >= 10x lower reconstruction MSE than the untrained network
  CHECK(after * after * 10.0 <= before * before);
}

TEST_CASE("training is deterministic and learning beats frozen weights") {
  const EnvironmentPair pair = tiny_pair(5, 5, 71);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.episodes_per_epoch = 6;
  cfg.batch_size = 3;
  cfg.max_sequence_len = 25;  // L spans the whole grid
  cfg.kl_weight = 0.0;
  cfg.seed = 72;

  WorldModel a(Architecture::miniature());
  const TrainResult ra = train(a, {pair}, &pair, cfg);
  WorldModel b(Architecture::miniature());
  const TrainResult rb = train(b, {pair}, &pair, cfg);
  REQUIRE(ra.trace.size() == rb.trace.size());
  for (size_t i = 0; i < ra.trace.size(); ++i) {
    CHECK(ra.trace[i].mean_loss == rb.trace[i].mean_loss);
    CHECK(ra.trace[i].holdout_rmse == rb.trace[i].holdout_rmse);
  }

  // frozen oracle: zero learning rate leaves the probe error constant
  TrainConfig frozen = cfg;
  frozen.learning_rate = 1e-30;
  WorldModel c(Architecture::miniature());
  const TrainResult rc = train(c, {pair}, &pair, frozen);
  for (size_t i = 1; i < rc.trace.size(); ++i)
    CHECK(rc.trace[i].holdout_rmse ==
          doctest::Approx(rc.trace[0].holdout_rmse).epsilon(1e-9));

  // trained probe error improves on the frozen one
  CHECK(ra.trace.back().holdout_rmse < rc.trace.back().holdout_rmse);
}

TEST_CASE("training flags divergence instead of emitting non-finite weights") {
  const EnvironmentPair pair = tiny_pair(5, 5, 81);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.episodes_per_epoch = 4;
  cfg.batch_size = 2;
  cfg.learning_rate = 1e14;  // guaranteed blow-up
  cfg.seed = 82;
  WorldModel model(Architecture::miniature());
  const TrainResult result = train(model, {pair}, nullptr, cfg);
  CHECK(result.diverged);
  CHECK(!result.message.empty());
}

TEST_CASE("model file round-trip") {
  const auto dir = test::scratch_dir("model_io");
  WorldModel model(Architecture::miniature());
  model.init_weights(91);
  model.provenance().config_hash = 0xABCDEF;
  model.provenance().epochs_completed = 17;
  model.provenance().final_loss = 0.125;

  const auto path = dir / "model.dmwm";
  save_model(path, model);
  const WorldModel back = load_model(path);
  CHECK(back.arch() == model.arch());
  CHECK(back.provenance().config_hash == 0xABCDEF);
  CHECK(back.provenance().epochs_completed == 17);
  CHECK(back.provenance().final_loss == 0.125);

  // float32 storage: second save is byte-identical
  save_model(dir / "model2.dmwm", back);
  CHECK(test::read_file(path) == test::read_file(dir / "model2.dmwm"));
  CHECK(test::read_file(dir / "model.dmwm.json") ==
        test::read_file(dir / "model2.dmwm.json"));

  // loaded weights drive identical predictions (within f32 rounding)
  const EnvironmentPair pair = tiny_pair(5, 5, 92);
  const Observation obs = observe(pair, {6});
  const GridMap a = reconstruct(model, obs);
  const GridMap b = reconstruct(back, obs);
  CHECK((a.values() - b.values()).cwiseAbs().maxCoeff() <= 1e-5);

  CHECK_THROWS_AS(load_model(dir / "missing.dmwm"), DataError);
}
