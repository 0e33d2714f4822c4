// SPDX-License-Identifier: Apache-2.0

#include "dreammap/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "dreammap/errors.hpp"
#include "dreammap/rng.hpp"

namespace dreammap {

void validate(const KernelParams& p) {
  const bool finite = std::isfinite(p.const_var) && std::isfinite(p.rbf_var) &&
                      std::isfinite(p.rbf_len) && std::isfinite(p.noise_var);
  if (!finite || p.const_var < 0 || !(p.rbf_var > 0) || !(p.rbf_len > 0) ||
      !(p.noise_var > 0))
    throw std::invalid_argument("KernelParams: values out of range");
}

double kernel_eval(const KernelParams& params, const Eigen::Vector2d& p,
                   const Eigen::Vector2d& q) {
  const double dsq = (p - q).squaredNorm();
  double k = params.const_var +
             params.rbf_var * std::exp(-dsq / (2.0 * params.rbf_len * params.rbf_len));
  if (p == q) k += params.noise_var;
  return k;
}

GridMap empty_copy(const EnvironmentPair& pair) { return pair.empty; }

Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(Eigen::MatrixXd gram) {
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() == Eigen::Success) return llt;
  double jitter = 1e-10;
  while (jitter <= 1e-4) {
    Eigen::MatrixXd bumped = gram;
    bumped.diagonal().array() += jitter;
    llt.compute(bumped);
    if (llt.info() == Eigen::Success) return llt;
    jitter *= 10.0;
  }
  throw NumericError("cholesky_with_jitter: factorization failed at max jitter");
}

namespace {

Eigen::MatrixXd gram_matrix(const KernelParams& params, const Eigen::MatrixX2d& coords) {
  const Eigen::Index n = coords.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = kernel_eval(params, coords.row(i), coords.row(j));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

Eigen::Vector2d cell_point(int cell, int width) {
  auto [r, c] = cell_coords(cell, width);
  return {static_cast<double>(r), static_cast<double>(c)};
}

}  // namespace

double gp_log_marginal(const KernelParams& params, const Eigen::MatrixX2d& coords,
                       const Eigen::VectorXd& y) {
  const Eigen::Index n = coords.rows();
  const auto llt = cholesky_with_jitter(gram_matrix(params, coords));
  const Eigen::VectorXd alpha = llt.solve(y);
  const double log_det =
      2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * y.dot(alpha) - 0.5 * log_det -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

namespace {

std::vector<double> log_space(double lo, double hi, int count) {
  std::vector<double> out(count);
  const double llo = std::log10(lo), lhi = std::log10(hi);
  for (int i = 0; i < count; ++i)
    out[i] = std::pow(10.0, llo + (lhi - llo) * i / (count - 1));
  return out;
}

// Golden-section maximization of f over log10-space bracket [lo, hi].
template <typename F>
double golden_max_log(F&& f, double lo, double hi, double tol_log10) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = std::log10(lo), b = std::log10(hi);
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(std::pow(10.0, x1));
  double f2 = f(std::pow(10.0, x2));
  while (b - a > tol_log10) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(std::pow(10.0, x2));
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(std::pow(10.0, x1));
    }
  }
  return std::pow(10.0, 0.5 * (a + b));
}

}  // namespace

KernelFit fit_kernel_detailed(const GridMap& empty, int max_points) {
  if (max_points < 16)
    throw std::invalid_argument("fit_kernel: max_points must be >= 16");

  const int n_cells = empty.size();
  std::vector<int> cells(n_cells);
  std::iota(cells.begin(), cells.end(), 0);
  if (n_cells > max_points) {
    RngStream rng = derive_stream(0x9DA7A5EEDULL, "gp/fit_subsample");
    cells = sample_distinct(std::move(cells), max_points, rng);
    std::sort(cells.begin(), cells.end());
  }

  const Eigen::Index n = static_cast<Eigen::Index>(cells.size());
  Eigen::MatrixX2d coords(n, 2);
  Eigen::VectorXd y(n);
  const double map_mean = empty.values().mean();
  for (Eigen::Index i = 0; i < n; ++i) {
    coords.row(i) = cell_point(cells[i], empty.width());
    y[i] = empty[cells[i]] - map_mean;
  }

  double var_y = n > 1 ? (y.array() - y.mean()).square().sum() / (n - 1) : 0.0;
  var_y = std::max(var_y, 1e-12);
  const double max_len = std::max(empty.height(), empty.width());

  const auto rv_grid = log_space(1e-2 * var_y, 1e1 * var_y, 5);
  const auto rl_grid = log_space(0.5, max_len, 5);
  const auto nv_grid = log_space(1e-4 * var_y, var_y, 5);

  auto lml_of = [&](const KernelParams& p) { return gp_log_marginal(p, coords, y); };

  KernelFit fit;
  fit.lml = -std::numeric_limits<double>::infinity();
  for (double rv : rv_grid) {
    for (double rl : rl_grid) {
      for (double nv : nv_grid) {
        KernelParams p{0.0, rv, rl, nv};
        const double lml = lml_of(p);
        fit.grid.emplace_back(p, lml);
        if (lml > fit.lml) {
          fit.lml = lml;
          fit.params = p;
        }
      }
    }
  }

  // Coordinate-wise golden-section refinement, bracketing one grid spacing
  // around the incumbent in log space.
  const double rv_step = rv_grid[1] / rv_grid[0];
  const double rl_step = rl_grid[1] / rl_grid[0];
  const double nv_step = nv_grid[1] / nv_grid[0];
  constexpr double tol = 1e-2;
  for (int sweep = 0; sweep < 2; ++sweep) {
    KernelParams p = fit.params;
    p.rbf_var = golden_max_log(
        [&](double v) { KernelParams q = p; q.rbf_var = v; return lml_of(q); },
        p.rbf_var / rv_step, p.rbf_var * rv_step, tol);
    p.rbf_len = golden_max_log(
        [&](double v) { KernelParams q = p; q.rbf_len = v; return lml_of(q); },
        p.rbf_len / rl_step, p.rbf_len * rl_step, tol);
    p.noise_var = golden_max_log(
        [&](double v) { KernelParams q = p; q.noise_var = v; return lml_of(q); },
        p.noise_var / nv_step, p.noise_var * nv_step, tol);
    const double lml = lml_of(p);
    if (lml > fit.lml) {
      fit.lml = lml;
      fit.params = p;
    }
  }
  return fit;
}

KernelParams fit_kernel(const GridMap& empty, int max_points) {
  return fit_kernel_detailed(empty, max_points).params;
}

GpPosterior gp_reconstruct(const KernelParams& params, const GridMap& empty,
                           const MeasurementState& state) {
  validate(params);
  if (empty.height() != state.height() || empty.width() != state.width())
    throw std::invalid_argument("gp_reconstruct: shape mismatch");
  if (empty.unit() != state.value_map().unit())
    throw std::invalid_argument("gp_reconstruct: unit mismatch");
  const auto& visited = state.visited();
  if (visited.empty())
    throw std::invalid_argument("gp_reconstruct: needs at least one measurement");

  const Eigen::Index m = static_cast<Eigen::Index>(visited.size());
  const int w = empty.width();
  Eigen::MatrixX2d train(m, 2);
  Eigen::VectorXd residual(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    train.row(i) = cell_point(visited[i], w);
    residual[i] = state.value_map()[visited[i]] - empty[visited[i]];
  }

  const auto llt = cholesky_with_jitter(gram_matrix(params, train));
  const Eigen::VectorXd alpha = llt.solve(residual);

  const int n = empty.size();
  GridMap::Vec mean(n), variance(n);
  const double prior_var = params.const_var + params.rbf_var + params.noise_var;

  // Solve in column blocks so big grids stay within a modest footprint.
  constexpr int kBlock = 4096;
  Eigen::MatrixXd cross(m, std::min(n, kBlock));
  for (int start = 0; start < n; start += kBlock) {
    const int count = std::min(kBlock, n - start);
    for (int j = 0; j < count; ++j) {
      const Eigen::Vector2d q = cell_point(start + j, w);
      for (Eigen::Index i = 0; i < m; ++i)
        cross(i, j) = kernel_eval(params, train.row(i), q);
    }
    const Eigen::MatrixXd solved = llt.solve(cross.leftCols(count));
    for (int j = 0; j < count; ++j) {
      const int cell = start + j;
      mean[cell] = empty[cell] + cross.col(j).head(m).dot(alpha);
      const double var = prior_var - cross.col(j).head(m).dot(solved.col(j));
      variance[cell] = std::max(var, 0.0);
    }
  }

  GpPosterior post;
  post.mean = GridMap(empty.height(), w, std::move(mean), empty.unit());
  post.variance = GridMap(empty.height(), w, std::move(variance), empty.unit());
  return post;
}

}  // namespace dreammap
