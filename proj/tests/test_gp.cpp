// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <vector>

#include "dreammap/errors.hpp"
#include "dreammap/gp.hpp"
#include "dreammap/metrics.hpp"
#include "dreammap/rng.hpp"
#include "dreammap/synth.hpp"
#include "test_util.hpp"

using namespace dreammap;
using dreammap::test::random_map;

namespace {

Eigen::Vector2d pt(int cell, int width) {
  return {static_cast<double>(cell / width), static_cast<double>(cell % width)};
}

// Direct dense-solve reference: explicit matrix inverse, plain loops.
struct DenseOracle {
  GridMap mean;
  GridMap variance;
};

DenseOracle gp_oracle(const KernelParams& k, const GridMap& empty,
                      const MeasurementState& state) {
  const auto& visited = state.visited();
  const int m = static_cast<int>(visited.size());
  const int w = empty.width();
  Eigen::MatrixXd gram(m, m);
  Eigen::VectorXd resid(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j)
      gram(i, j) = kernel_eval(k, pt(visited[i], w), pt(visited[j], w));
    resid[i] = state.value_map()[visited[i]] - empty[visited[i]];
  }
  const Eigen::MatrixXd inv = gram.inverse();

  GridMap::Vec mean(empty.size()), var(empty.size());
  for (int q = 0; q < empty.size(); ++q) {
    Eigen::VectorXd cross(m);
    for (int i = 0; i < m; ++i) cross[i] = kernel_eval(k, pt(visited[i], w), pt(q, w));
    mean[q] = empty[q] + cross.dot(inv * resid);
    var[q] = std::max(0.0, kernel_eval(k, pt(q, w), pt(q, w)) - cross.dot(inv * cross));
  }
  DenseOracle out;
  out.mean = GridMap(empty.height(), w, std::move(mean), empty.unit());
  out.variance = GridMap(empty.height(), w, std::move(var), empty.unit());
  return out;
}

MeasurementState random_state(const GridMap& truth, int count, std::uint64_t seed) {
  MeasurementState st(truth.height(), truth.width(), truth.unit());
  std::vector<int> all(truth.size());
  std::iota(all.begin(), all.end(), 0);
  RngStream rng = derive_stream(seed, "gp-test/cells");
  for (int cell : sample_distinct(std::move(all), count, rng))
    apply_measurement(st, cell, truth[cell]);
  return st;
}

// Draw one GP sample on the full grid via a dense Cholesky.
GridMap sample_gp_map(const KernelParams& k, int h, int w, std::uint64_t seed) {
  const int n = h * w;
  Eigen::MatrixXd gram(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) gram(i, j) = kernel_eval(k, pt(i, w), pt(j, w));
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  REQUIRE(llt.info() == Eigen::Success);
  RngStream rng = derive_stream(seed, "gp-test/sample");
  Eigen::VectorXd white(n);
  for (int i = 0; i < n; ++i) white[i] = rng.next_gauss();
  GridMap::Vec values = llt.matrixL() * white;
  return GridMap(h, w, std::move(values), Unit::dBm);
}

}  // namespace

TEST_CASE("kernel_eval closed forms") {
  const KernelParams k{1.0, 2.0, 3.0, 0.5};
  CHECK(kernel_eval(k, {2, 2}, {2, 2}) == doctest::Approx(3.5).epsilon(1e-15));

  KernelParams decay{0.0, 2.0, 1.5, 0.25};
  const double far = kernel_eval(decay, {0, 0}, {0, 10 * decay.rbf_len});
  CHECK(far < 1e-3 * decay.rbf_var);

  const double at_len = kernel_eval(decay, {0, 0}, {0, decay.rbf_len});
  CHECK(at_len == doctest::Approx(decay.rbf_var * std::exp(-0.5)).epsilon(1e-12));

  // symmetry
  RngStream rng = derive_stream(5, "sym");
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector2d p{rng.next_unit() * 9, rng.next_unit() * 9};
    const Eigen::Vector2d q{rng.next_unit() * 9, rng.next_unit() * 9};
    CHECK(kernel_eval(k, p, q) == kernel_eval(k, q, p));
  }
}

TEST_CASE("empty_copy baseline") {
  SynthConfig cfg;
  cfg.seed = 13;
  cfg.n_occupants = 0;
  EnvironmentPair pair = synth_pair(cfg);
  CHECK(empty_copy(pair) == pair.empty);
  CHECK(rmse(empty_copy(pair), pair.occupied) == 0.0);

  // one occupant: copy error equals the RMS of the bump field alone
  cfg.n_occupants = 1;
  cfg.shadowing_sigma_dbm = 0.0;
  std::vector<Eigen::Vector2d> centers;
  pair = synth_pair(cfg, &centers);
  REQUIRE(centers.size() == 1);
  double acc = 0.0;
  const double two_rad_sq = 2.0 * cfg.occupant_radius_cells * cfg.occupant_radius_cells;
  for (int r = 0; r < cfg.base_h; ++r)
    for (int c = 0; c < cfg.base_w; ++c) {
      const double dsq = (r - centers[0].x()) * (r - centers[0].x()) +
                         (c - centers[0].y()) * (c - centers[0].y());
      const double bump = cfg.occupant_atten_db * std::exp(-dsq / two_rad_sq);
      acc += bump * bump;
    }
  const double oracle_rmse = std::sqrt(acc / pair.empty.size());
  CHECK(rmse(empty_copy(pair), pair.occupied) ==
        doctest::Approx(oracle_rmse).epsilon(1e-12));
}

TEST_CASE("gp_reconstruct zero residuals keep the prior mean") {
  const GridMap empty = random_map(6, 6, Unit::Normalized, 3);
  MeasurementState st(6, 6, Unit::Normalized);
  for (int cell : {0, 7, 14, 21, 35}) apply_measurement(st, cell, empty[cell]);
  const KernelParams k{0.0, 0.5, 2.0, 1e-3};
  const GpPosterior post = gp_reconstruct(k, empty, st);
  CHECK((post.mean.values() - empty.values()).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("gp_reconstruct single-measurement closed form") {
  const GridMap empty = random_map(5, 7, Unit::Normalized, 21);
  const KernelParams k{0.0, 0.8, 1.7, 0.05};
  MeasurementState st(5, 7, Unit::Normalized);
  const int i = 16;
  const double measured = empty[i] + 0.37;
  apply_measurement(st, i, measured);

  const GpPosterior post = gp_reconstruct(k, empty, st);
  const double residual = measured - empty[i];
  const double k_ii = kernel_eval(k, pt(i, 7), pt(i, 7));  // noise on the diagonal
  for (int q = 0; q < empty.size(); ++q) {
    if (q == i) continue;
    const double k_qi = kernel_eval(k, pt(q, 7), pt(i, 7));
    const double expected = empty[q] + residual * k_qi / k_ii;
    CHECK(post.mean[q] == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("gp_reconstruct matches the dense oracle") {
  for (int trial = 0; trial < 8; ++trial) {
    RngStream rng = derive_stream(100 + trial, "gp-oracle");
    const int h = 8, w = 8;
    const GridMap empty = random_map(h, w, Unit::Normalized, 50 + trial);
    const GridMap truth = random_map(h, w, Unit::Normalized, 80 + trial);
    const MeasurementState st = random_state(truth, 5, 60 + trial);
    const KernelParams k{0.0, 0.2 + rng.next_unit(), 1.0 + 2.0 * rng.next_unit(),
                         0.01 + 0.05 * rng.next_unit()};
    const GpPosterior post = gp_reconstruct(k, empty, st);
    const DenseOracle oracle = gp_oracle(k, empty, st);
    CHECK((post.mean.values() - oracle.mean.values()).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((post.variance.values() - oracle.variance.values()).cwiseAbs().maxCoeff() <=
          1e-8);
  }
}

TEST_CASE("gp posterior invariants") {
  const GridMap empty = random_map(7, 7, Unit::Normalized, 31);
  const GridMap truth = random_map(7, 7, Unit::Normalized, 32);
  const KernelParams k{0.0, 0.6, 1.8, 0.02};
  const double prior_var = k.const_var + k.rbf_var + k.noise_var;

  const MeasurementState st = random_state(truth, 9, 33);
  const GpPosterior post = gp_reconstruct(k, empty, st);

  for (int cell : st.visited()) CHECK(post.variance[cell] <= k.noise_var + 1e-8);
  CHECK(post.variance.values().maxCoeff() <= prior_var + 1e-8);
  CHECK(post.variance.values().minCoeff() >= 0.0);

  // monotone information: one more measurement never raises the variance
  MeasurementState more(7, 7, Unit::Normalized);
  for (int cell : st.visited()) apply_measurement(more, cell, truth[cell]);
  int extra = 0;
  while (more.is_visited(extra)) ++extra;
  apply_measurement(more, extra, truth[extra]);
  const GpPosterior post2 = gp_reconstruct(k, empty, more);
  CHECK(((post.variance.values() - post2.variance.values()).array() >= -1e-9).all());

  // permutation invariance in the visited order
  MeasurementState reversed(7, 7, Unit::Normalized);
  const auto& cells = st.visited();
  for (auto it = cells.rbegin(); it != cells.rend(); ++it)
    apply_measurement(reversed, *it, truth[*it]);
  const GpPosterior post3 = gp_reconstruct(k, empty, reversed);
  CHECK((post.mean.values() - post3.mean.values()).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((post.variance.values() - post3.variance.values()).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("fit_kernel recovers the length scale from GP-sampled data") {
  const KernelParams truth{0.0, 1.0, 2.0, 0.01};
  const GridMap data = sample_gp_map(truth, 12, 12, 5);
  const KernelFit fit = fit_kernel_detailed(data, 1024);

  CHECK(fit.params.rbf_len >= truth.rbf_len / 2.0);
  CHECK(fit.params.rbf_len <= truth.rbf_len * 2.0);

  // argmax by construction of the search
  for (const auto& [candidate, lml] : fit.grid) CHECK(fit.lml >= lml);

  // determinism
  const KernelParams again = fit_kernel(data, 1024);
  CHECK(again.rbf_len == fit.params.rbf_len);
  CHECK(again.rbf_var == fit.params.rbf_var);
  CHECK(again.noise_var == fit.params.noise_var);
}

TEST_CASE("fit_kernel treats white noise as noise") {
  RngStream rng = derive_stream(17, "white");
  GridMap::Vec v(100);
  for (int i = 0; i < 100; ++i) v[i] = -60.0 + 3.0 * rng.next_gauss();
  const GridMap data(10, 10, std::move(v), Unit::dBm);
  const KernelParams fit = fit_kernel(data, 1024);

  // condition on half the cells; held-out posterior should stay near the mean
  const double data_mean = data.values().mean();
  const GridMap prior = GridMap::constant(10, 10, data_mean, Unit::dBm);
  MeasurementState st(10, 10, Unit::dBm);
  for (int cell = 0; cell < 100; cell += 2) apply_measurement(st, cell, data[cell]);
  const GpPosterior post = gp_reconstruct(fit, prior, st);

  int ok = 0, held_out = 0;
  for (int cell = 1; cell < 100; cell += 2) {
    ++held_out;
    const double sd = std::sqrt(post.variance[cell]);
    if (std::abs(post.mean[cell] - data_mean) <= 3.0 * sd) ++ok;
  }
  CHECK(ok >= static_cast<int>(0.95 * held_out));
}

TEST_CASE("fit_kernel subsample cap and validation") {
  CHECK_THROWS_AS(fit_kernel(random_map(4, 4, Unit::dBm, 1), 8), std::invalid_argument);
  // larger than max_points exercises the subsample path
  const GridMap big = random_map(40, 40, Unit::dBm, 2, -90, -30);
  const KernelParams k = fit_kernel(big, 64);
  CHECK(k.rbf_var > 0);
  CHECK(k.noise_var > 0);
}

TEST_CASE("cholesky jitter escalation") {
  // singular but PSD-fixable: duplicate rows
  Eigen::MatrixXd gram(3, 3);
  gram << 1, 1, 0.5, 1, 1, 0.5, 0.5, 0.5, 1;
  const auto llt = cholesky_with_jitter(gram);
  CHECK(llt.info() == Eigen::Success);

  Eigen::MatrixXd negative = -Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(cholesky_with_jitter(negative), NumericError);
}
