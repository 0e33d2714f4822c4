// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "dreammap/grid.hpp"

namespace dreammap {

/// Stationary kernel: constant term + RBF + white noise on coincident cells.
///   k(p, q) = const_var + rbf_var * exp(-|p-q|^2 / (2 rbf_len^2))
///           + noise_var * 1[p = q]
struct KernelParams {
  double const_var = 0.0;
  double rbf_var = 1.0;
  double rbf_len = 1.0;
  double noise_var = 1e-2;
};

void validate(const KernelParams& params);

double kernel_eval(const KernelParams& params, const Eigen::Vector2d& p,
                   const Eigen::Vector2d& q);

/// Pointwise posterior over the full grid.
struct GpPosterior {
  GridMap mean;
  GridMap variance;
};

/// The trivial baseline: the empty-environment reference map, unchanged.
GridMap empty_copy(const EnvironmentPair& pair);

/// Cholesky factorization with diagonal jitter escalation (1e-10, x10 per
/// retry, up to 1e-4). Throws NumericError when every level fails.
Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(Eigen::MatrixXd gram);

/// Log marginal likelihood of centered values y at coords under a zero-mean
/// GP with the given kernel.
double gp_log_marginal(const KernelParams& params, const Eigen::MatrixX2d& coords,
                       const Eigen::VectorXd& y);

struct KernelFit {
  KernelParams params;
  double lml = 0.0;
  // every grid-search candidate with its log marginal likelihood
  std::vector<std::pair<KernelParams, double>> grid;
};

/// Fit (rbf_var, rbf_len, noise_var) to the empty map by maximizing the log
/// marginal likelihood of its mean-centered values: a 5x5x5 log-space grid
/// search followed by coordinate-wise golden-section refinement. const_var
/// stays 0; the constant trend is absorbed by the empty-map mean function.
/// Maps larger than max_points cells are subsampled with a fixed seed, so the
/// fit is a pure function of its inputs.
KernelFit fit_kernel_detailed(const GridMap& empty, int max_points = 1024);
KernelParams fit_kernel(const GridMap& empty, int max_points = 1024);

/// GP posterior over the full grid with the empty map as prior mean:
/// conditions the fitted kernel on the residuals (measured - empty) at the
/// visited cells.
GpPosterior gp_reconstruct(const KernelParams& params, const GridMap& empty,
                           const MeasurementState& state);

}  // namespace dreammap
