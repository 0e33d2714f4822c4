// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "dreammap/grid.hpp"
#include "dreammap/nn.hpp"
#include "dreammap/rng.hpp"

namespace dreammap {

/// Network shape shared by the encoder, decoder and dynamics model. The
/// standard instance is fixed; tests may build smaller instances with the
/// same layer topology.
///
/// Encoder: conv3x3(3->c1) ReLU, conv3x3(c1->c1) ReLU, maxpool2,
///          conv3x3(c1->c2) ReLU, conv3x3(c2->c2) ReLU, maxpool2,
///          flatten, fc(fc_dim) ReLU, linear heads (mean, log_var) of
///          latent_dim each.
/// Decoder: linear(latent -> c2*Hp/4*Wp/4), then twice
///          [nearest x2, conv3x3, ReLU] (c2->c1, c1->c1), conv1x1(c1->1).
/// Dynamics: action (row, col) -> MLP(2->e->e, ReLU), concat with z,
///           one LSTM cell (hidden_dim), linear heads for next mean/log_var.
///
/// Inputs are edge-replicated to the next multiple of 4 per axis before the
/// encoder; decoder output is cropped back.
struct Architecture {
  int grid_h = 9;
  int grid_w = 11;
  int conv1_channels = 32;
  int conv2_channels = 64;
  int fc_dim = 256;
  int latent_dim = 64;
  int hidden_dim = 128;
  int action_embed_dim = 32;

  static int pad4(int v) { return (v + 3) / 4 * 4; }
  int padded_h() const { return pad4(grid_h); }
  int padded_w() const { return pad4(grid_w); }
  int pooled_h() const { return padded_h() / 4; }
  int pooled_w() const { return padded_w() / 4; }
  int flat_dim() const { return conv2_channels * pooled_h() * pooled_w(); }

  /// The full-size network for a given grid.
  static Architecture standard(int grid_h, int grid_w);
  /// Small instance for finite-difference checks (8-dim latent, 16 hidden).
  static Architecture miniature();

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

void validate(const Architecture& arch);

/// Gaussian latent belief produced by the encoder.
struct LatentBelief {
  nn::Vec mean;
  nn::Vec log_var;
  nn::Vec sample;  // mean + exp(log_var/2) .* noise
  nn::Vec noise;   // the recorded draw
};

/// Recurrent memory of the dynamics model.
struct DynamicsState {
  nn::Vec hidden;
  nn::Vec cell;
};

DynamicsState initial_dynamics_state(const Architecture& arch);

struct TrainProvenance {
  std::uint64_t config_hash = 0;
  int epochs_completed = 0;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
};

/// Encoder, decoder and dynamics parameters for one grid size.
class WorldModel {
 public:
  struct TensorIds {
    int enc_conv1_w, enc_conv1_b, enc_conv2_w, enc_conv2_b;
    int enc_conv3_w, enc_conv3_b, enc_conv4_w, enc_conv4_b;
    int enc_fc_w, enc_fc_b, enc_mean_w, enc_mean_b, enc_logvar_w, enc_logvar_b;
    int dec_fc_w, dec_fc_b, dec_conv1_w, dec_conv1_b, dec_conv2_w, dec_conv2_b;
    int dec_out_w, dec_out_b;
    int act_fc1_w, act_fc1_b, act_fc2_w, act_fc2_b;
    int lstm_wx, lstm_wh, lstm_b;
    int dyn_mean_w, dyn_mean_b, dyn_logvar_w, dyn_logvar_b;
  };

  explicit WorldModel(const Architecture& arch);

  const Architecture& arch() const { return arch_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const TensorIds& ids() const { return ids_; }
  TrainProvenance& provenance() { return prov_; }
  const TrainProvenance& provenance() const { return prov_; }

  /// Deterministic He/Xavier-style initialization keyed per tensor.
  void init_weights(std::uint64_t seed);

 private:
  Architecture arch_;
  nn::ParamStore params_;
  TensorIds ids_{};
  TrainProvenance prov_;
};

/// Observation as the (S x 3) model input [empty | values | mask].
nn::Mat pack_observation(const Observation& obs);

/// Edge-replicate a (h*w x C) feature block to (ph*pw x C).
nn::Mat pad_replicate(const nn::Mat& x, int h, int w, int ph, int pw);

LatentBelief encode(const WorldModel& model, const Observation& obs, RngStream& rng);
LatentBelief encode_with_noise(const WorldModel& model, const Observation& obs,
                               const nn::Vec& noise);

GridMap decode(const WorldModel& model, const nn::Vec& z, int target_h, int target_w);

struct DynamicsPrediction {
  nn::Vec mean;
  nn::Vec log_var;
  DynamicsState next;
};

DynamicsPrediction dynamics_step(const WorldModel& model, const nn::Vec& z,
                                 const ActionCoord& action, const DynamicsState& state);

/// Point reconstruction: decode the posterior mean (no sampling).
GridMap reconstruct(const WorldModel& model, const Observation& obs);

/// KL(q || N(0, I)) = 0.5 sum(exp(lv) + mean^2 - 1 - lv).
double kl_standard_normal(const nn::Vec& mean, const nn::Vec& log_var);

/// Diagonal-Gaussian negative log likelihood of target.
double gaussian_nll(const nn::Vec& target, const nn::Vec& mean, const nn::Vec& log_var);

struct TrainConfig {
  double learning_rate = 1e-3;
  double kl_weight = 1e-3;
  int epochs = 200;
  int episodes_per_epoch = 50;
  int max_sequence_len = 20;
  int batch_size = 8;
  int holdout_budget = 10;   // fixed cells for the per-epoch holdout RMSE
  double max_grad_norm = 10.0;  // global-norm clip per optimizer step; <= 0 disables
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);
std::uint64_t train_config_hash(const TrainConfig& cfg);

/// One training episode: a measurement sequence on a normalized pair plus
/// the recorded reparameterization noise per observation step.
///
/// The dynamics loss scores the encoder's next-step posterior mean with the
/// gradient stopped into that target. frozen_dynamics_targets, when set (one
/// vector per transition), replaces the recomputed targets; finite-difference
/// checks use it to evaluate the same function the analytic gradient
/// differentiates.
struct Episode {
  const EnvironmentPair* pair = nullptr;
  std::vector<int> cells;  // L distinct cells, measured in order
  nn::Mat noise;           // latent_dim x (L+1)
  std::vector<nn::Vec> frozen_dynamics_targets;
};

struct LossBreakdown {
  double recon = 0.0;    // mean over steps of per-cell MSE
  double kl = 0.0;       // mean over steps of KL
  double dyn_nll = 0.0;  // mean over transitions of Gaussian NLL
  double total = 0.0;    // recon + kl_weight*kl + dyn_nll
};

/// Episode loss; accumulates parameter gradients when with_grads is set.
/// The dynamics target (next-step posterior mean) is gradient-stopped.
LossBreakdown episode_loss(WorldModel& model, const Episode& episode, double kl_weight,
                           bool with_grads);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double holdout_rmse = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<EpochStats> trace;
  bool diverged = false;
  std::string message;
};

/// Joint training of encoder, decoder and dynamics on random measurement
/// episodes. Deterministic given cfg.seed (weights are re-initialized from
/// it). Stops early and flags divergence when the loss becomes non-finite.
TrainResult train(WorldModel& model, const std::vector<EnvironmentPair>& train_pairs,
                  const EnvironmentPair* holdout, const TrainConfig& cfg);

// Binary model file (magic DMWM, version, architecture descriptor, float32
// tensors in declaration order) plus a JSON sidecar at <path>.json with the
// descriptor and training provenance.
void save_model(const std::filesystem::path& path, const WorldModel& model);
WorldModel load_model(const std::filesystem::path& path);

}  // namespace dreammap
