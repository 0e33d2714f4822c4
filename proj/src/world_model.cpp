// SPDX-License-Identifier: Apache-2.0

#include "dreammap/world_model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "dreammap/metrics.hpp"

#include <json.hpp>

#include "dreammap/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian");

namespace dreammap {

using nn::Mat;
using nn::Vec;

Architecture Architecture::standard(int grid_h, int grid_w) {
  Architecture a;
  a.grid_h = grid_h;
  a.grid_w = grid_w;
  return a;
}

Architecture Architecture::miniature() {
  Architecture a;
  a.grid_h = 5;
  a.grid_w = 5;
  a.conv1_channels = 4;
  a.conv2_channels = 6;
  a.fc_dim = 16;
  a.latent_dim = 8;
  a.hidden_dim = 16;
  a.action_embed_dim = 4;
  return a;
}

void validate(const Architecture& arch) {
  if (arch.grid_h < 1 || arch.grid_w < 1)
    throw std::invalid_argument("Architecture: grid dimensions must be >= 1");
  if (arch.conv1_channels < 1 || arch.conv2_channels < 1 || arch.fc_dim < 1 ||
      arch.latent_dim < 1 || arch.hidden_dim < 1 || arch.action_embed_dim < 1)
    throw std::invalid_argument("Architecture: layer sizes must be >= 1");
}

DynamicsState initial_dynamics_state(const Architecture& arch) {
  return {Vec::Zero(arch.hidden_dim), Vec::Zero(arch.hidden_dim)};
}

WorldModel::WorldModel(const Architecture& arch) : arch_(arch) {
  validate(arch);
  const int c1 = arch.conv1_channels, c2 = arch.conv2_channels;
  const int fd = arch.flat_dim(), fc = arch.fc_dim, lat = arch.latent_dim;
  const int hid = arch.hidden_dim, emb = arch.action_embed_dim;

  auto& p = params_;
  ids_.enc_conv1_w = p.add("enc_conv1_w", c1, 9 * 3);
  ids_.enc_conv1_b = p.add("enc_conv1_b", c1, 1);
  ids_.enc_conv2_w = p.add("enc_conv2_w", c1, 9 * c1);
  ids_.enc_conv2_b = p.add("enc_conv2_b", c1, 1);
  ids_.enc_conv3_w = p.add("enc_conv3_w", c2, 9 * c1);
  ids_.enc_conv3_b = p.add("enc_conv3_b", c2, 1);
  ids_.enc_conv4_w = p.add("enc_conv4_w", c2, 9 * c2);
  ids_.enc_conv4_b = p.add("enc_conv4_b", c2, 1);
  ids_.enc_fc_w = p.add("enc_fc_w", fc, fd);
  ids_.enc_fc_b = p.add("enc_fc_b", fc, 1);
  ids_.enc_mean_w = p.add("enc_mean_w", lat, fc);
  ids_.enc_mean_b = p.add("enc_mean_b", lat, 1);
  ids_.enc_logvar_w = p.add("enc_logvar_w", lat, fc);
  ids_.enc_logvar_b = p.add("enc_logvar_b", lat, 1);
  ids_.dec_fc_w = p.add("dec_fc_w", fd, lat);
  ids_.dec_fc_b = p.add("dec_fc_b", fd, 1);
  ids_.dec_conv1_w = p.add("dec_conv1_w", c1, 9 * c2);
  ids_.dec_conv1_b = p.add("dec_conv1_b", c1, 1);
  ids_.dec_conv2_w = p.add("dec_conv2_w", c1, 9 * c1);
  ids_.dec_conv2_b = p.add("dec_conv2_b", c1, 1);
  ids_.dec_out_w = p.add("dec_out_w", 1, c1);
  ids_.dec_out_b = p.add("dec_out_b", 1, 1);
  ids_.act_fc1_w = p.add("act_fc1_w", emb, 2);
  ids_.act_fc1_b = p.add("act_fc1_b", emb, 1);
  ids_.act_fc2_w = p.add("act_fc2_w", emb, emb);
  ids_.act_fc2_b = p.add("act_fc2_b", emb, 1);
  ids_.lstm_wx = p.add("lstm_wx", 4 * hid, emb + lat);
  ids_.lstm_wh = p.add("lstm_wh", 4 * hid, hid);
  ids_.lstm_b = p.add("lstm_b", 4 * hid, 1);
  ids_.dyn_mean_w = p.add("dyn_mean_w", lat, hid);
  ids_.dyn_mean_b = p.add("dyn_mean_b", lat, 1);
  ids_.dyn_logvar_w = p.add("dyn_logvar_w", lat, hid);
  ids_.dyn_logvar_b = p.add("dyn_logvar_b", lat, 1);
}

void WorldModel::init_weights(std::uint64_t seed) {
  auto fill = [&](int id, double stddev) {
    Mat& m = params_.value(id);
    RngStream rng = derive_stream(seed, "init", static_cast<std::uint64_t>(id));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.next_gauss();
  };
  auto he = [](Eigen::Index fan_in) { return std::sqrt(2.0 / fan_in); };
  auto xavier = [](Eigen::Index fan_in) { return std::sqrt(1.0 / fan_in); };

  const auto& p = params_;
  // ReLU-followed layers get He init; linear heads get Xavier; biases zero.
  for (int id : {ids_.enc_conv1_w, ids_.enc_conv2_w, ids_.enc_conv3_w, ids_.enc_conv4_w,
                 ids_.enc_fc_w, ids_.dec_conv1_w, ids_.dec_conv2_w, ids_.act_fc1_w,
                 ids_.act_fc2_w})
    fill(id, he(p.value(id).cols()));
  for (int id : {ids_.enc_mean_w, ids_.enc_logvar_w, ids_.dec_fc_w, ids_.dec_out_w,
                 ids_.lstm_wx, ids_.lstm_wh, ids_.dyn_mean_w, ids_.dyn_logvar_w})
    fill(id, xavier(p.value(id).cols()));
  for (int id : {ids_.enc_conv1_b, ids_.enc_conv2_b, ids_.enc_conv3_b, ids_.enc_conv4_b,
                 ids_.enc_fc_b, ids_.enc_mean_b, ids_.enc_logvar_b, ids_.dec_fc_b,
                 ids_.dec_conv1_b, ids_.dec_conv2_b, ids_.dec_out_b, ids_.act_fc1_b,
                 ids_.act_fc2_b, ids_.lstm_b, ids_.dyn_mean_b, ids_.dyn_logvar_b})
    params_.value(id).setZero();
  // open the forget gate at the start
  params_.value(ids_.lstm_b).block(arch_.hidden_dim, 0, arch_.hidden_dim, 1).array() = 1.0;
}

nn::Mat pack_observation(const Observation& obs) {
  const int s = obs.empty_ref.size();
  Mat packed(s, 3);
  packed.col(0) = obs.empty_ref.values();
  packed.col(1) = obs.state.value_map().values();
  packed.col(2) = obs.state.mask().values();
  return packed;
}

nn::Mat pad_replicate(const Mat& x, int h, int w, int ph, int pw) {
  if (ph == h && pw == w) return x;
  Mat out(static_cast<Eigen::Index>(ph) * pw, x.cols());
  for (int r = 0; r < ph; ++r) {
    const int sr = std::min(r, h - 1);
    for (int c = 0; c < pw; ++c) {
      const int sc = std::min(c, w - 1);
      out.row(static_cast<Eigen::Index>(r) * pw + c) =
          x.row(static_cast<Eigen::Index>(sr) * w + sc);
    }
  }
  return out;
}

namespace {

Eigen::Map<const Vec> flatten(const Mat& m) {
  return Eigen::Map<const Vec>(m.data(), m.size());
}

struct EncoderCache {
  Mat x_pad;
  Mat cols1, a1, cols2, a2;
  nn::ArgmaxMat am1;
  Mat p1, cols3, a3, cols4, a4;
  nn::ArgmaxMat am2;
  Mat p2;
  Vec fc_pre, fc_act;
};

// Returns (mean, log_var); fills the cache when given.
std::pair<Vec, Vec> encoder_forward(const WorldModel& model, const Mat& packed,
                                    EncoderCache* cache) {
  const auto& arch = model.arch();
  const auto& p = model.params();
  const auto& id = model.ids();
  const int hp = arch.padded_h(), wp = arch.padded_w();
  const int h2 = hp / 2, w2 = wp / 2;

  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;

  c.x_pad = pad_replicate(packed, arch.grid_h, arch.grid_w, hp, wp);
  c.cols1 = nn::im2col3x3(c.x_pad, hp, wp);
  c.a1 = nn::relu(nn::conv3x3_forward(c.cols1, p.value(id.enc_conv1_w),
                                      p.value(id.enc_conv1_b).col(0)));
  c.cols2 = nn::im2col3x3(c.a1, hp, wp);
  c.a2 = nn::relu(nn::conv3x3_forward(c.cols2, p.value(id.enc_conv2_w),
                                      p.value(id.enc_conv2_b).col(0)));
  c.p1 = nn::maxpool2x2_forward(c.a2, hp, wp, c.am1);
  c.cols3 = nn::im2col3x3(c.p1, h2, w2);
  c.a3 = nn::relu(nn::conv3x3_forward(c.cols3, p.value(id.enc_conv3_w),
                                      p.value(id.enc_conv3_b).col(0)));
  c.cols4 = nn::im2col3x3(c.a3, h2, w2);
  c.a4 = nn::relu(nn::conv3x3_forward(c.cols4, p.value(id.enc_conv4_w),
                                      p.value(id.enc_conv4_b).col(0)));
  c.p2 = nn::maxpool2x2_forward(c.a4, h2, w2, c.am2);

  c.fc_pre = nn::dense_forward(p.value(id.enc_fc_w), p.value(id.enc_fc_b).col(0),
                               flatten(c.p2));
  c.fc_act = c.fc_pre.cwiseMax(0.0);
  Vec mean = nn::dense_forward(p.value(id.enc_mean_w), p.value(id.enc_mean_b).col(0),
                               c.fc_act);
  Vec log_var = nn::dense_forward(p.value(id.enc_logvar_w),
                                  p.value(id.enc_logvar_b).col(0), c.fc_act);
  return {std::move(mean), std::move(log_var)};
}

void encoder_backward(WorldModel& model, const EncoderCache& c, const Vec& dmean,
                      const Vec& dlog_var) {
  const auto& arch = model.arch();
  auto& p = model.params();
  const auto& id = model.ids();
  const int hp = arch.padded_h(), wp = arch.padded_w();
  const int h2 = hp / 2, w2 = wp / 2;

  auto add_bias_grad = [&](int i, const Vec& g) { p.grad(i).col(0) += g; };

  Vec dfc_act = Vec::Zero(arch.fc_dim);
  {
    Mat dw = Mat::Zero(arch.latent_dim, arch.fc_dim);
    Vec db = Vec::Zero(arch.latent_dim);
    dfc_act += nn::dense_backward(dmean, p.value(id.enc_mean_w), c.fc_act, dw, db);
    p.grad(id.enc_mean_w) += dw;
    add_bias_grad(id.enc_mean_b, db);
    dw.setZero();
    db.setZero();
    dfc_act += nn::dense_backward(dlog_var, p.value(id.enc_logvar_w), c.fc_act, dw, db);
    p.grad(id.enc_logvar_w) += dw;
    add_bias_grad(id.enc_logvar_b, db);
  }

  Vec dfc_pre = (c.fc_pre.array() > 0.0).select(dfc_act, Vec::Zero(dfc_act.size()));
  Mat dw_fc = Mat::Zero(arch.fc_dim, arch.flat_dim());
  Vec db_fc = Vec::Zero(arch.fc_dim);
  const Vec dflat =
      nn::dense_backward(dfc_pre, p.value(id.enc_fc_w), flatten(c.p2), dw_fc, db_fc);
  p.grad(id.enc_fc_w) += dw_fc;
  add_bias_grad(id.enc_fc_b, db_fc);

  Mat dp2 = Eigen::Map<const Mat>(dflat.data(), c.p2.rows(), c.p2.cols());
  Mat da4 = nn::relu_backward(nn::maxpool2x2_backward(dp2, c.am2, h2, w2),
                              c.a4);  // pre-relu grad via post-relu cache
  {
    Vec db = Vec::Zero(arch.conv2_channels);
    Mat dw = Mat::Zero(arch.conv2_channels, 9 * arch.conv2_channels);
    Mat da3 = nn::conv3x3_backward(da4, c.cols4, p.value(id.enc_conv4_w), h2, w2,
                                   arch.conv2_channels, dw, db);
    p.grad(id.enc_conv4_w) += dw;
    add_bias_grad(id.enc_conv4_b, db);
    da3 = nn::relu_backward(da3, c.a3);

    Vec db3 = Vec::Zero(arch.conv2_channels);
    Mat dw3 = Mat::Zero(arch.conv2_channels, 9 * arch.conv1_channels);
    Mat dp1 = nn::conv3x3_backward(da3, c.cols3, p.value(id.enc_conv3_w), h2, w2,
                                   arch.conv1_channels, dw3, db3);
    p.grad(id.enc_conv3_w) += dw3;
    add_bias_grad(id.enc_conv3_b, db3);

    Mat da2 = nn::relu_backward(nn::maxpool2x2_backward(dp1, c.am1, hp, wp), c.a2);
    Vec db2 = Vec::Zero(arch.conv1_channels);
    Mat dw2 = Mat::Zero(arch.conv1_channels, 9 * arch.conv1_channels);
    Mat da1 = nn::conv3x3_backward(da2, c.cols2, p.value(id.enc_conv2_w), hp, wp,
                                   arch.conv1_channels, dw2, db2);
    p.grad(id.enc_conv2_w) += dw2;
    add_bias_grad(id.enc_conv2_b, db2);
    da1 = nn::relu_backward(da1, c.a1);

    Vec db1 = Vec::Zero(arch.conv1_channels);
    Mat dw1 = Mat::Zero(arch.conv1_channels, 9 * 3);
    nn::conv3x3_backward(da1, c.cols1, p.value(id.enc_conv1_w), hp, wp, 3, dw1, db1);
    p.grad(id.enc_conv1_w) += dw1;
    add_bias_grad(id.enc_conv1_b, db1);
  }
}

struct DecoderCache {
  Vec z, fc_out;
  Mat d0, u1, cols1, a1, u2, cols2, a2;
  Mat out;  // (Sp x 1)
};

// Padded output map (Sp x 1); fills the cache when given.
Mat decoder_forward(const WorldModel& model, const Vec& z, DecoderCache* cache) {
  const auto& arch = model.arch();
  const auto& p = model.params();
  const auto& id = model.ids();
  const int hq = arch.pooled_h(), wq = arch.pooled_w();
  const int h2 = 2 * hq, w2 = 2 * wq;

  DecoderCache local;
  DecoderCache& c = cache ? *cache : local;

  c.z = z;
  c.fc_out = nn::dense_forward(p.value(id.dec_fc_w), p.value(id.dec_fc_b).col(0), z);
  c.d0 = Eigen::Map<const Mat>(c.fc_out.data(), static_cast<Eigen::Index>(hq) * wq,
                               arch.conv2_channels);
  c.u1 = nn::upsample2x_forward(c.d0, hq, wq);
  c.cols1 = nn::im2col3x3(c.u1, h2, w2);
  c.a1 = nn::relu(nn::conv3x3_forward(c.cols1, p.value(id.dec_conv1_w),
                                      p.value(id.dec_conv1_b).col(0)));
  c.u2 = nn::upsample2x_forward(c.a1, h2, w2);
  c.cols2 = nn::im2col3x3(c.u2, arch.padded_h(), arch.padded_w());
  c.a2 = nn::relu(nn::conv3x3_forward(c.cols2, p.value(id.dec_conv2_w),
                                      p.value(id.dec_conv2_b).col(0)));
  c.out = nn::conv1x1_forward(c.a2, p.value(id.dec_out_w), p.value(id.dec_out_b).col(0));
  return c.out;
}

// Backward from the padded output gradient; returns dz.
Vec decoder_backward(WorldModel& model, const DecoderCache& c, const Mat& dout) {
  const auto& arch = model.arch();
  auto& p = model.params();
  const auto& id = model.ids();
  const int hq = arch.pooled_h(), wq = arch.pooled_w();
  const int h2 = 2 * hq, w2 = 2 * wq;

  Mat dw_out = Mat::Zero(1, arch.conv1_channels);
  Vec db_out = Vec::Zero(1);
  Mat da2 = nn::conv1x1_backward(dout, c.a2, p.value(id.dec_out_w), dw_out, db_out);
  p.grad(id.dec_out_w) += dw_out;
  p.grad(id.dec_out_b).col(0) += db_out;
  da2 = nn::relu_backward(da2, c.a2);

  Mat dw2 = Mat::Zero(arch.conv1_channels, 9 * arch.conv1_channels);
  Vec db2 = Vec::Zero(arch.conv1_channels);
  Mat du2 = nn::conv3x3_backward(da2, c.cols2, p.value(id.dec_conv2_w), arch.padded_h(),
                                 arch.padded_w(), arch.conv1_channels, dw2, db2);
  p.grad(id.dec_conv2_w) += dw2;
  p.grad(id.dec_conv2_b).col(0) += db2;

  Mat da1 = nn::relu_backward(nn::upsample2x_backward(du2, h2, w2), c.a1);
  Mat dw1 = Mat::Zero(arch.conv1_channels, 9 * arch.conv2_channels);
  Vec db1 = Vec::Zero(arch.conv1_channels);
  Mat du1 = nn::conv3x3_backward(da1, c.cols1, p.value(id.dec_conv1_w), h2, w2,
                                 arch.conv2_channels, dw1, db1);
  p.grad(id.dec_conv1_w) += dw1;
  p.grad(id.dec_conv1_b).col(0) += db1;

  Mat dd0 = nn::upsample2x_backward(du1, hq, wq);
  const Vec dfc = Eigen::Map<const Vec>(dd0.data(), dd0.size());
  Mat dw_fc = Mat::Zero(arch.flat_dim(), arch.latent_dim);
  Vec db_fc = Vec::Zero(arch.flat_dim());
  Vec dz = nn::dense_backward(dfc, p.value(id.dec_fc_w), c.z, dw_fc, db_fc);
  p.grad(id.dec_fc_w) += dw_fc;
  p.grad(id.dec_fc_b).col(0) += db_fc;
  return dz;
}

struct DynCache {
  Vec action;  // (2)
  Vec e1_pre, e1, e2_pre, e2;
  Vec z;
  nn::LstmCache lstm;
  Vec h_out;
};

DynamicsPrediction dynamics_forward(const WorldModel& model, const Vec& z,
                                    const ActionCoord& action, const DynamicsState& state,
                                    DynCache* cache) {
  const auto& arch = model.arch();
  const auto& p = model.params();
  const auto& id = model.ids();

  DynCache local;
  DynCache& c = cache ? *cache : local;

  c.action = Vec(2);
  c.action << action.row_norm, action.col_norm;
  c.e1_pre = nn::dense_forward(p.value(id.act_fc1_w), p.value(id.act_fc1_b).col(0),
                               c.action);
  c.e1 = c.e1_pre.cwiseMax(0.0);
  c.e2_pre = nn::dense_forward(p.value(id.act_fc2_w), p.value(id.act_fc2_b).col(0), c.e1);
  c.e2 = c.e2_pre.cwiseMax(0.0);
  c.z = z;

  Vec x(arch.action_embed_dim + arch.latent_dim);
  x << c.e2, z;

  DynamicsPrediction pred;
  pred.next.hidden.resize(arch.hidden_dim);
  pred.next.cell.resize(arch.hidden_dim);
  nn::lstm_forward(p.value(id.lstm_wx), p.value(id.lstm_wh), p.value(id.lstm_b).col(0),
                   x, state.hidden, state.cell, pred.next.hidden, pred.next.cell,
                   &c.lstm);
  c.h_out = pred.next.hidden;
  pred.mean = nn::dense_forward(p.value(id.dyn_mean_w), p.value(id.dyn_mean_b).col(0),
                                pred.next.hidden);
  pred.log_var = nn::dense_forward(p.value(id.dyn_logvar_w),
                                   p.value(id.dyn_logvar_b).col(0), pred.next.hidden);
  return pred;
}

// BPTT through one dynamics step. dmean/dlog_var grade the heads; dh/dc flow
// in from the future. Outputs the gradients wrt the latent input and the
// previous recurrent state.
void dynamics_backward(WorldModel& model, const DynCache& c, const Vec& dmean,
                       const Vec& dlog_var, const Vec& dh_future, const Vec& dc_future,
                       Vec& dz, Vec& dh_prev, Vec& dc_prev) {
  const auto& arch = model.arch();
  auto& p = model.params();
  const auto& id = model.ids();

  Vec dh = dh_future;
  {
    Mat dw = Mat::Zero(arch.latent_dim, arch.hidden_dim);
    Vec db = Vec::Zero(arch.latent_dim);
    dh += nn::dense_backward(dmean, p.value(id.dyn_mean_w), c.h_out, dw, db);
    p.grad(id.dyn_mean_w) += dw;
    p.grad(id.dyn_mean_b).col(0) += db;
    dw.setZero();
    db.setZero();
    dh += nn::dense_backward(dlog_var, p.value(id.dyn_logvar_w), c.h_out, dw, db);
    p.grad(id.dyn_logvar_w) += dw;
    p.grad(id.dyn_logvar_b).col(0) += db;
  }

  Mat dwx = Mat::Zero(p.value(id.lstm_wx).rows(), p.value(id.lstm_wx).cols());
  Mat dwh = Mat::Zero(p.value(id.lstm_wh).rows(), p.value(id.lstm_wh).cols());
  Vec db_lstm = Vec::Zero(4 * arch.hidden_dim);
  Vec dx(arch.action_embed_dim + arch.latent_dim);
  nn::lstm_backward(c.lstm, p.value(id.lstm_wx), p.value(id.lstm_wh), dh, dc_future,
                    dwx, dwh, db_lstm, dx, dh_prev, dc_prev);
  p.grad(id.lstm_wx) += dwx;
  p.grad(id.lstm_wh) += dwh;
  p.grad(id.lstm_b).col(0) += db_lstm;

  dz = dx.tail(arch.latent_dim);

  Vec de2 = dx.head(arch.action_embed_dim);
  de2 = (c.e2_pre.array() > 0.0).select(de2, Vec::Zero(de2.size()));
  Mat dw2 = Mat::Zero(arch.action_embed_dim, arch.action_embed_dim);
  Vec db2 = Vec::Zero(arch.action_embed_dim);
  Vec de1 = nn::dense_backward(de2, p.value(id.act_fc2_w), c.e1, dw2, db2);
  p.grad(id.act_fc2_w) += dw2;
  p.grad(id.act_fc2_b).col(0) += db2;
  de1 = (c.e1_pre.array() > 0.0).select(de1, Vec::Zero(de1.size()));
  Mat dw1 = Mat::Zero(arch.action_embed_dim, 2);
  Vec db1 = Vec::Zero(arch.action_embed_dim);
  nn::dense_backward(de1, p.value(id.act_fc1_w), c.action, dw1, db1);
  p.grad(id.act_fc1_w) += dw1;
  p.grad(id.act_fc1_b).col(0) += db1;
}

void check_obs(const WorldModel& model, const Observation& obs) {
  if (obs.empty_ref.height() != model.arch().grid_h ||
      obs.empty_ref.width() != model.arch().grid_w)
    throw std::invalid_argument("encode: observation shape does not match model grid");
  if (obs.empty_ref.unit() != Unit::Normalized)
    throw std::invalid_argument("encode: observation must be in normalized units");
}

GridMap crop_to_grid(const Mat& padded, int hp, int wp, int h, int w) {
  GridMap::Vec v(static_cast<Eigen::Index>(h) * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      v[static_cast<Eigen::Index>(r) * w + c] = padded(static_cast<Eigen::Index>(r) * wp + c, 0);
  return GridMap(h, w, std::move(v), Unit::Normalized);
}

}  // namespace

LatentBelief encode_with_noise(const WorldModel& model, const Observation& obs,
                               const Vec& noise) {
  check_obs(model, obs);
  if (noise.size() != model.arch().latent_dim)
    throw std::invalid_argument("encode: noise dimension mismatch");
  auto [mean, log_var] = encoder_forward(model, pack_observation(obs), nullptr);
  LatentBelief b;
  b.sample = mean + ((log_var / 2.0).array().exp() * noise.array()).matrix();
  b.mean = std::move(mean);
  b.log_var = std::move(log_var);
  b.noise = noise;
  return b;
}

LatentBelief encode(const WorldModel& model, const Observation& obs, RngStream& rng) {
  Vec noise(model.arch().latent_dim);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = rng.next_gauss();
  return encode_with_noise(model, obs, noise);
}

GridMap decode(const WorldModel& model, const Vec& z, int target_h, int target_w) {
  const auto& arch = model.arch();
  if (z.size() != arch.latent_dim)
    throw std::invalid_argument("decode: latent dimension mismatch");
  if (!z.allFinite()) throw std::invalid_argument("decode: non-finite latent");
  if (Architecture::pad4(target_h) != arch.padded_h() ||
      Architecture::pad4(target_w) != arch.padded_w())
    throw std::invalid_argument("decode: target shape incompatible with architecture");
  const Mat out = decoder_forward(model, z, nullptr);
  return crop_to_grid(out, arch.padded_h(), arch.padded_w(), target_h, target_w);
}

DynamicsPrediction dynamics_step(const WorldModel& model, const Vec& z,
                                 const ActionCoord& action, const DynamicsState& state) {
  if (z.size() != model.arch().latent_dim)
    throw std::invalid_argument("dynamics_step: latent dimension mismatch");
  if (state.hidden.size() != model.arch().hidden_dim ||
      state.cell.size() != model.arch().hidden_dim)
    throw std::invalid_argument("dynamics_step: state dimension mismatch");
  return dynamics_forward(model, z, action, state, nullptr);
}

GridMap reconstruct(const WorldModel& model, const Observation& obs) {
  check_obs(model, obs);
  auto [mean, log_var] = encoder_forward(model, pack_observation(obs), nullptr);
  (void)log_var;
  return decode(model, mean, model.arch().grid_h, model.arch().grid_w);
}

double kl_standard_normal(const Vec& mean, const Vec& log_var) {
  return 0.5 * (log_var.array().exp() + mean.array().square() - 1.0 - log_var.array())
                   .sum();
}

double gaussian_nll(const Vec& target, const Vec& mean, const Vec& log_var) {
  const auto diff = (target - mean).array();
  return 0.5 * (std::log(2.0 * std::numbers::pi) * target.size() + log_var.sum() +
                (diff.square() * (-log_var.array()).exp()).sum());
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0)) throw std::invalid_argument("TrainConfig: learning_rate");
  if (cfg.kl_weight < 0) throw std::invalid_argument("TrainConfig: kl_weight");
  if (cfg.epochs < 1 || cfg.episodes_per_epoch < 1)
    throw std::invalid_argument("TrainConfig: epochs and episodes must be >= 1");
  if (cfg.max_sequence_len < 1) throw std::invalid_argument("TrainConfig: max_sequence_len");
  if (cfg.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size");
}

std::uint64_t train_config_hash(const TrainConfig& cfg) {
  std::uint64_t h = hash_str("train-config-v1");
  auto mix_double = [&](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    h = hash_mix(h, bits);
  };
  mix_double(cfg.learning_rate);
  mix_double(cfg.kl_weight);
  h = hash_mix(h, static_cast<std::uint64_t>(cfg.epochs));
  h = hash_mix(h, static_cast<std::uint64_t>(cfg.episodes_per_epoch));
  h = hash_mix(h, static_cast<std::uint64_t>(cfg.max_sequence_len));
  h = hash_mix(h, static_cast<std::uint64_t>(cfg.batch_size));
  h = hash_mix(h, static_cast<std::uint64_t>(cfg.holdout_budget));
  h = hash_mix(h, cfg.seed);
  return h;
}

LossBreakdown episode_loss(WorldModel& model, const Episode& episode, double kl_weight,
                           bool with_grads) {
  const auto& arch = model.arch();
  if (!episode.pair) throw std::invalid_argument("episode_loss: missing pair");
  const EnvironmentPair& pair = *episode.pair;
  const int steps = static_cast<int>(episode.cells.size());
  if (steps < 1) throw std::invalid_argument("episode_loss: needs >= 1 measurement");
  if (episode.noise.rows() != arch.latent_dim || episode.noise.cols() != steps + 1)
    throw std::invalid_argument("episode_loss: noise shape mismatch");
  const bool frozen_targets = !episode.frozen_dynamics_targets.empty();
  if (frozen_targets &&
      episode.frozen_dynamics_targets.size() != static_cast<size_t>(steps))
    throw std::invalid_argument("episode_loss: frozen target count mismatch");

  const int h = arch.grid_h, w = arch.grid_w;
  const int s = h * w;
  const int hp = arch.padded_h(), wp = arch.padded_w();
  const Vec& zo = pair.occupied.values();

  // forward pass over the observation sequence
  std::vector<Mat> packed(steps + 1);
  {
    MeasurementState st(h, w, pair.empty.unit());
    packed[0] = pack_observation(make_observation(pair.empty, st));
    for (int t = 1; t <= steps; ++t) {
      apply_measurement(st, episode.cells[t - 1], pair.occupied[episode.cells[t - 1]]);
      packed[t] = pack_observation(make_observation(pair.empty, st));
    }
  }

  std::vector<Vec> means(steps + 1), log_vars(steps + 1), samples(steps + 1);
  LossBreakdown loss;
  for (int t = 0; t <= steps; ++t) {
    auto [mean, log_var] = encoder_forward(model, packed[t], nullptr);
    samples[t] =
        mean + ((log_var / 2.0).array().exp() * episode.noise.col(t).array()).matrix();
    means[t] = std::move(mean);
    log_vars[t] = std::move(log_var);

    const Mat out = decoder_forward(model, samples[t], nullptr);
    const GridMap est = crop_to_grid(out, hp, wp, h, w);
    loss.recon += (est.values() - zo).squaredNorm() / s;
    loss.kl += kl_standard_normal(means[t], log_vars[t]);
  }

  std::vector<DynCache> dyn_caches(steps);
  std::vector<Vec> pred_means(steps), pred_log_vars(steps);
  DynamicsState dstate = initial_dynamics_state(arch);
  auto dyn_target = [&](int t) -> const Vec& {
    return frozen_targets ? episode.frozen_dynamics_targets[t] : means[t + 1];
  };
  for (int t = 0; t < steps; ++t) {
    const ActionCoord a = make_action(episode.cells[t], h, w);
    DynamicsPrediction pred =
        dynamics_forward(model, samples[t], a, dstate, &dyn_caches[t]);
    loss.dyn_nll += gaussian_nll(dyn_target(t), pred.mean, pred.log_var);
    pred_means[t] = std::move(pred.mean);
    pred_log_vars[t] = std::move(pred.log_var);
    dstate = pred.next;
  }

  loss.recon /= steps + 1;
  loss.kl /= steps + 1;
  loss.dyn_nll /= steps;
  loss.total = loss.recon + kl_weight * loss.kl + loss.dyn_nll;

  if (!with_grads) return loss;

  // BPTT through the dynamics chain; targets are gradient-stopped.
  std::vector<Vec> dsample_dyn(steps);
  Vec dh = Vec::Zero(arch.hidden_dim), dc = Vec::Zero(arch.hidden_dim);
  for (int t = steps - 1; t >= 0; --t) {
    const Vec& target = dyn_target(t);
    const auto inv_var = (-pred_log_vars[t].array()).exp();
    const Vec dmean =
        ((pred_means[t] - target).array() * inv_var).matrix() / steps;
    const Vec dlog_var =
        (0.5 * (1.0 - (target - pred_means[t]).array().square() * inv_var)).matrix() /
        steps;
    Vec dz, dh_prev, dc_prev;
    dynamics_backward(model, dyn_caches[t], dmean, dlog_var, dh, dc, dz, dh_prev,
                      dc_prev);
    dsample_dyn[t] = std::move(dz);
    dh = std::move(dh_prev);
    dc = std::move(dc_prev);
  }

  // per-step encoder/decoder backward (activations recomputed)
  const double recon_scale = 1.0 / (steps + 1);
  for (int t = 0; t <= steps; ++t) {
    DecoderCache dec;
    decoder_forward(model, samples[t], &dec);
    const GridMap est = crop_to_grid(dec.out, hp, wp, h, w);

    Mat dout = Mat::Zero(static_cast<Eigen::Index>(hp) * wp, 1);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        dout(static_cast<Eigen::Index>(r) * wp + c, 0) =
            2.0 * (est(r, c) - zo[static_cast<Eigen::Index>(r) * w + c]) / s * recon_scale;

    Vec dsample = decoder_backward(model, dec, dout);
    if (t < steps) dsample += dsample_dyn[t];

    const auto sigma = (log_vars[t] / 2.0).array().exp();
    Vec dmean = dsample;
    dmean += (kl_weight * recon_scale) * means[t];
    Vec dlog_var =
        (0.5 * dsample.array() * episode.noise.col(t).array() * sigma).matrix();
    dlog_var +=
        (0.5 * (kl_weight * recon_scale) * (log_vars[t].array().exp() - 1.0)).matrix();

    EncoderCache enc;
    encoder_forward(model, packed[t], &enc);
    encoder_backward(model, enc, dmean, dlog_var);
  }
  return loss;
}

namespace {

Episode draw_episode(const std::vector<EnvironmentPair>& pairs, const Architecture& arch,
                     const TrainConfig& cfg, int epoch, int index) {
  RngStream rng = derive_stream(cfg.seed, "episode", static_cast<std::uint64_t>(epoch),
                                static_cast<std::uint64_t>(index));
  Episode ep;
  ep.pair = &pairs[rng.next_index(static_cast<int>(pairs.size()))];
  const int cells_total = arch.grid_h * arch.grid_w;
  const int max_len = std::min(cfg.max_sequence_len, cells_total);
  const int len = 1 + rng.next_index(max_len);
  std::vector<int> all(cells_total);
  std::iota(all.begin(), all.end(), 0);
  ep.cells = sample_distinct(std::move(all), len, rng);

  RngStream noise_rng = derive_stream(cfg.seed, "episode-noise",
                                      static_cast<std::uint64_t>(epoch),
                                      static_cast<std::uint64_t>(index));
  ep.noise.resize(arch.latent_dim, len + 1);
  for (Eigen::Index j = 0; j < ep.noise.cols(); ++j)
    for (Eigen::Index i = 0; i < ep.noise.rows(); ++i)
      ep.noise(i, j) = noise_rng.next_gauss();
  return ep;
}

}  // namespace

TrainResult train(WorldModel& model, const std::vector<EnvironmentPair>& train_pairs,
                  const EnvironmentPair* holdout, const TrainConfig& cfg) {
  validate(cfg);
  if (train_pairs.empty())
    throw std::invalid_argument("train: needs at least one training pair");
  const auto& arch = model.arch();
  for (const auto& pair : train_pairs) {
    if (pair.empty.height() != arch.grid_h || pair.empty.width() != arch.grid_w)
      throw std::invalid_argument("train: pair shape does not match model grid");
    if (pair.empty.unit() != Unit::Normalized)
      throw std::invalid_argument("train: pairs must be normalized");
  }

  model.init_weights(derive_stream(cfg.seed, "weights").next_u64());
  nn::Adam optimizer(cfg.learning_rate);

  // fixed holdout probe so the per-epoch RMSE trace is comparable
  std::vector<int> holdout_cells;
  if (holdout) {
    const int cells_total = arch.grid_h * arch.grid_w;
    std::vector<int> all(cells_total);
    std::iota(all.begin(), all.end(), 0);
    RngStream rng = derive_stream(cfg.seed, "holdout");
    holdout_cells =
        sample_distinct(std::move(all), std::min(cfg.holdout_budget, cells_total), rng);
  }

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (int start = 0; start < cfg.episodes_per_epoch; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, cfg.episodes_per_epoch - start);
      model.params().zero_grads();
      for (int k = 0; k < count; ++k) {
        const Episode ep = draw_episode(train_pairs, arch, cfg, epoch, start + k);
        const LossBreakdown loss = episode_loss(model, ep, cfg.kl_weight, true);
        loss_sum += loss.total;
        if (!std::isfinite(loss.total)) {
          result.diverged = true;
          result.message = "non-finite loss at epoch " + std::to_string(epoch) +
                           " (last good epoch " + std::to_string(epoch - 1) + ")";
          model.provenance().epochs_completed = epoch;
          return result;
        }
      }
      model.params().scale_grads(1.0 / count);
      optimizer.step(model.params());
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / cfg.episodes_per_epoch;
    if (holdout) {
      MeasurementState st(arch.grid_h, arch.grid_w, holdout->empty.unit());
      for (int cell : holdout_cells)
        apply_measurement(st, cell, holdout->occupied[cell]);
      const GridMap est = reconstruct(model, make_observation(holdout->empty, st));
      stats.holdout_rmse = rmse(est, holdout->occupied);
    }
    result.trace.push_back(stats);
  }

  model.provenance().config_hash = train_config_hash(cfg);
  model.provenance().epochs_completed = cfg.epochs;
  model.provenance().final_loss = result.trace.back().mean_loss;
  return result;
}

// ---- serialization ----

namespace {

constexpr char kMagic[4] = {'D', 'M', 'W', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

nlohmann::json arch_to_json(const Architecture& a) {
  return {{"grid_h", a.grid_h},
          {"grid_w", a.grid_w},
          {"conv1_channels", a.conv1_channels},
          {"conv2_channels", a.conv2_channels},
          {"fc_dim", a.fc_dim},
          {"latent_dim", a.latent_dim},
          {"hidden_dim", a.hidden_dim},
          {"action_embed_dim", a.action_embed_dim}};
}

Architecture arch_from_json(const nlohmann::json& j) {
  Architecture a;
  a.grid_h = j.at("grid_h").get<int>();
  a.grid_w = j.at("grid_w").get<int>();
  a.conv1_channels = j.at("conv1_channels").get<int>();
  a.conv2_channels = j.at("conv2_channels").get<int>();
  a.fc_dim = j.at("fc_dim").get<int>();
  a.latent_dim = j.at("latent_dim").get<int>();
  a.hidden_dim = j.at("hidden_dim").get<int>();
  a.action_embed_dim = j.at("action_embed_dim").get<int>();
  return a;
}

}  // namespace

void save_model(const std::filesystem::path& path, const WorldModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_model: cannot open " + path.string());
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  const auto& a = model.arch();
  for (int v : {a.grid_h, a.grid_w, a.conv1_channels, a.conv2_channels, a.fc_dim,
                a.latent_dim, a.hidden_dim, a.action_embed_dim})
    write_pod(out, static_cast<std::int32_t>(v));

  const auto& p = model.params();
  write_pod(out, static_cast<std::uint32_t>(p.tensor_count()));
  for (int i = 0; i < p.tensor_count(); ++i) {
    const nn::Mat& m = p.value(i);
    write_pod(out, static_cast<std::uint32_t>(m.rows()));
    write_pod(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.size(); ++k)
      write_pod(out, static_cast<float>(m.data()[k]));
  }
  if (!out) throw DataError("save_model: write failed for " + path.string());
  out.close();

  nlohmann::json sidecar;
  sidecar["format"] = "DMWM";
  sidecar["version"] = kVersion;
  sidecar["architecture"] = arch_to_json(a);
  nlohmann::json tensors = nlohmann::json::array();
  for (int i = 0; i < p.tensor_count(); ++i)
    tensors.push_back({{"name", p.name(i)},
                       {"rows", p.value(i).rows()},
                       {"cols", p.value(i).cols()}});
  sidecar["tensors"] = tensors;
  nlohmann::json prov;
  prov["config_hash"] = model.provenance().config_hash;
  prov["epochs_completed"] = model.provenance().epochs_completed;
  if (std::isfinite(model.provenance().final_loss))
    prov["final_loss"] = model.provenance().final_loss;
  sidecar["training"] = prov;

  std::ofstream side(path.string() + ".json");
  if (!side) throw DataError("save_model: cannot open sidecar for " + path.string());
  side << sidecar.dump(2) << '\n';
}

WorldModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_model: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("load_model: bad magic in " + path.string());
  if (read_pod<std::uint32_t>(in) != kVersion)
    throw DataError("load_model: unsupported version in " + path.string());

  Architecture a;
  a.grid_h = read_pod<std::int32_t>(in);
  a.grid_w = read_pod<std::int32_t>(in);
  a.conv1_channels = read_pod<std::int32_t>(in);
  a.conv2_channels = read_pod<std::int32_t>(in);
  a.fc_dim = read_pod<std::int32_t>(in);
  a.latent_dim = read_pod<std::int32_t>(in);
  a.hidden_dim = read_pod<std::int32_t>(in);
  a.action_embed_dim = read_pod<std::int32_t>(in);
  if (!in) throw DataError("load_model: truncated descriptor in " + path.string());

  WorldModel model(a);
  auto& p = model.params();
  const auto n_tensors = read_pod<std::uint32_t>(in);
  if (!in || n_tensors != static_cast<std::uint32_t>(p.tensor_count()))
    throw DataError("load_model: tensor count mismatch in " + path.string());
  for (int i = 0; i < p.tensor_count(); ++i) {
    nn::Mat& m = p.value(i);
    const auto rows = read_pod<std::uint32_t>(in);
    const auto cols = read_pod<std::uint32_t>(in);
    if (!in || rows != static_cast<std::uint32_t>(m.rows()) ||
        cols != static_cast<std::uint32_t>(m.cols()))
      throw DataError("load_model: tensor shape mismatch for " + p.name(i));
    for (Eigen::Index k = 0; k < m.size(); ++k)
      m.data()[k] = static_cast<double>(read_pod<float>(in));
  }
  if (!in) throw DataError("load_model: truncated tensors in " + path.string());
  if (!p.values_finite()) throw DataError("load_model: non-finite weights");

  const std::filesystem::path sidecar_path = path.string() + ".json";
  if (std::filesystem::exists(sidecar_path)) {
    std::ifstream side(sidecar_path);
    nlohmann::json sidecar;
    try {
      side >> sidecar;
      const Architecture side_arch = arch_from_json(sidecar.at("architecture"));
      if (!(side_arch == a))
        throw DataError("load_model: sidecar architecture mismatch");
      const auto& prov = sidecar.at("training");
      model.provenance().config_hash = prov.at("config_hash").get<std::uint64_t>();
      model.provenance().epochs_completed = prov.at("epochs_completed").get<int>();
      if (prov.contains("final_loss"))
        model.provenance().final_loss = prov.at("final_loss").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("load_model: bad sidecar for " + path.string() + ": " + e.what());
    }
  }
  return model;
}

}  // namespace dreammap
