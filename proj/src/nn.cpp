// SPDX-License-Identifier: Apache-2.0

#include "dreammap/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace dreammap::nn {

int ParamStore::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  Tensor t;
  t.name = std::move(name);
  t.value = Mat::Zero(rows, cols);
  t.grad = Mat::Zero(rows, cols);
  const std::int64_t prev =
      tensors_.empty() ? 0 : offsets_.back() + tensors_.back().value.size();
  tensors_.push_back(std::move(t));
  offsets_.push_back(prev);
  return static_cast<int>(tensors_.size()) - 1;
}

void ParamStore::zero_grads() {
  for (auto& t : tensors_) t.grad.setZero();
}

void ParamStore::scale_grads(double factor) {
  for (auto& t : tensors_) t.grad *= factor;
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& t : tensors_) sq += t.grad.squaredNorm();
  return std::sqrt(sq);
}

bool ParamStore::values_finite() const {
  for (const auto& t : tensors_)
    if (!t.value.allFinite()) return false;
  return true;
}

std::int64_t ParamStore::scalar_count() const {
  if (tensors_.empty()) return 0;
  return offsets_.back() + tensors_.back().value.size();
}

std::pair<int, std::int64_t> ParamStore::locate(std::int64_t i) const {
  int lo = 0, hi = static_cast<int>(tensors_.size()) - 1;
  while (lo < hi) {
    const int mid = (lo + hi + 1) / 2;
    if (offsets_[mid] <= i)
      lo = mid;
    else
      hi = mid - 1;
  }
  return {lo, i - offsets_[lo]};
}

double ParamStore::get_scalar(std::int64_t i) const {
  auto [id, off] = locate(i);
  return tensors_[id].value.data()[off];
}

void ParamStore::set_scalar(std::int64_t i, double v) {
  auto [id, off] = locate(i);
  tensors_[id].value.data()[off] = v;
}

double ParamStore::grad_scalar(std::int64_t i) const {
  auto [id, off] = locate(i);
  return tensors_[id].grad.data()[off];
}

Mat im2col3x3(const Mat& x, int h, int w) {
  const Eigen::Index s = x.rows();
  const Eigen::Index c_in = x.cols();
  Mat cols = Mat::Zero(s, 9 * c_in);
  for (Eigen::Index c = 0; c < c_in; ++c) {
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const Eigen::Index k = (dr + 1) * 3 + (dc + 1);
        const Eigen::Index col = c * 9 + k;
        const int r0 = std::max(0, -dr), r1 = std::min(h, h - dr);
        const int c0 = std::max(0, -dc), c1 = std::min(w, w - dc);
        for (int r = r0; r < r1; ++r) {
          const Eigen::Index dst = static_cast<Eigen::Index>(r) * w + c0;
          const Eigen::Index src = static_cast<Eigen::Index>(r + dr) * w + (c0 + dc);
          cols.block(dst, col, c1 - c0, 1) = x.block(src, c, c1 - c0, 1);
        }
      }
    }
  }
  return cols;
}

Mat conv3x3_forward(const Mat& cols, const Mat& weight, const Vec& bias) {
  Mat out = cols * weight.transpose();
  out.rowwise() += bias.transpose();
  return out;
}

Mat conv3x3_backward(const Mat& dout, const Mat& cols, const Mat& weight, int h,
                     int w, int c_in, Mat& dweight, Vec& dbias) {
  dweight.noalias() += dout.transpose() * cols;
  dbias += dout.colwise().sum().transpose();

  const Mat dcols = dout * weight;  // (S x 9C)
  Mat dx = Mat::Zero(dout.rows(), c_in);
  for (Eigen::Index c = 0; c < c_in; ++c) {
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const Eigen::Index k = (dr + 1) * 3 + (dc + 1);
        const Eigen::Index col = c * 9 + k;
        const int r0 = std::max(0, -dr), r1 = std::min(h, h - dr);
        const int c0 = std::max(0, -dc), c1 = std::min(w, w - dc);
        for (int r = r0; r < r1; ++r) {
          const Eigen::Index dst = static_cast<Eigen::Index>(r) * w + c0;
          const Eigen::Index src = static_cast<Eigen::Index>(r + dr) * w + (c0 + dc);
          dx.block(src, c, c1 - c0, 1) += dcols.block(dst, col, c1 - c0, 1);
        }
      }
    }
  }
  return dx;
}

Mat conv1x1_forward(const Mat& x, const Mat& weight, const Vec& bias) {
  Mat out = x * weight.transpose();
  out.rowwise() += bias.transpose();
  return out;
}

Mat conv1x1_backward(const Mat& dout, const Mat& x, const Mat& weight, Mat& dweight,
                     Vec& dbias) {
  dweight.noalias() += dout.transpose() * x;
  dbias += dout.colwise().sum().transpose();
  return dout * weight;
}

Mat relu(const Mat& x) { return x.cwiseMax(0.0); }

Mat relu_backward(const Mat& dout, const Mat& x) {
  return (x.array() > 0.0).select(dout, Mat::Zero(dout.rows(), dout.cols()));
}

Mat maxpool2x2_forward(const Mat& x, int h, int w, ArgmaxMat& argmax) {
  if (h % 2 || w % 2)
    throw std::invalid_argument("maxpool2x2: dimensions must be even");
  const int ho = h / 2, wo = w / 2;
  const Eigen::Index c_n = x.cols();
  Mat out(static_cast<Eigen::Index>(ho) * wo, c_n);
  argmax.resize(out.rows(), c_n);
  for (Eigen::Index c = 0; c < c_n; ++c) {
    for (int r = 0; r < ho; ++r) {
      for (int q = 0; q < wo; ++q) {
        const Eigen::Index base = static_cast<Eigen::Index>(2 * r) * w + 2 * q;
        // fixed scan order; first maximum wins on ties
        const Eigen::Index cand[4] = {base, base + 1, base + w, base + w + 1};
        Eigen::Index best = cand[0];
        double best_v = x(cand[0], c);
        for (int k = 1; k < 4; ++k) {
          if (x(cand[k], c) > best_v) {
            best_v = x(cand[k], c);
            best = cand[k];
          }
        }
        const Eigen::Index o = static_cast<Eigen::Index>(r) * wo + q;
        out(o, c) = best_v;
        argmax(o, c) = best;
      }
    }
  }
  return out;
}

Mat maxpool2x2_backward(const Mat& dout, const ArgmaxMat& argmax, int h_in, int w_in) {
  Mat dx = Mat::Zero(static_cast<Eigen::Index>(h_in) * w_in, dout.cols());
  for (Eigen::Index c = 0; c < dout.cols(); ++c)
    for (Eigen::Index o = 0; o < dout.rows(); ++o)
      dx(argmax(o, c), c) += dout(o, c);
  return dx;
}

Mat upsample2x_forward(const Mat& x, int h, int w) {
  const int ho = 2 * h, wo = 2 * w;
  Mat out(static_cast<Eigen::Index>(ho) * wo, x.cols());
  for (int r = 0; r < ho; ++r) {
    for (int q = 0; q < wo; ++q) {
      out.row(static_cast<Eigen::Index>(r) * wo + q) =
          x.row(static_cast<Eigen::Index>(r / 2) * w + q / 2);
    }
  }
  return out;
}

Mat upsample2x_backward(const Mat& dout, int h_in, int w_in) {
  Mat dx = Mat::Zero(static_cast<Eigen::Index>(h_in) * w_in, dout.cols());
  const int wo = 2 * w_in;
  for (int r = 0; r < 2 * h_in; ++r) {
    for (int q = 0; q < wo; ++q) {
      dx.row(static_cast<Eigen::Index>(r / 2) * w_in + q / 2) +=
          dout.row(static_cast<Eigen::Index>(r) * wo + q);
    }
  }
  return dx;
}

Vec dense_forward(const Mat& weight, const Vec& bias, const Vec& x) {
  return weight * x + bias;
}

Vec dense_backward(const Vec& dout, const Mat& weight, const Vec& x, Mat& dweight,
                   Vec& dbias) {
  dweight.noalias() += dout * x.transpose();
  dbias += dout;
  return weight.transpose() * dout;
}

namespace {
inline Vec sigmoid(const Vec& v) {
  return ((-v.array()).exp() + 1.0).inverse().matrix();
}
}  // namespace

void lstm_forward(const Mat& w_x, const Mat& w_h, const Vec& bias, const Vec& x,
                  const Vec& h_prev, const Vec& c_prev, Vec& h_out, Vec& c_out,
                  LstmCache* cache) {
  const Eigen::Index hd = h_prev.size();
  const Vec pre = w_x * x + w_h * h_prev + bias;
  const Vec i = sigmoid(pre.segment(0, hd));
  const Vec f = sigmoid(pre.segment(hd, hd));
  const Vec g = pre.segment(2 * hd, hd).array().tanh().matrix();
  const Vec o = sigmoid(pre.segment(3 * hd, hd));
  c_out = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
  const Vec tanh_c = c_out.array().tanh().matrix();
  h_out = o.cwiseProduct(tanh_c);
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->gate_i = i;
    cache->gate_f = f;
    cache->gate_g = g;
    cache->gate_o = o;
    cache->c = c_out;
    cache->tanh_c = tanh_c;
  }
}

void lstm_backward(const LstmCache& cache, const Mat& w_x, const Mat& w_h,
                   const Vec& dh, const Vec& dc, Mat& dw_x, Mat& dw_h, Vec& dbias,
                   Vec& dx, Vec& dh_prev, Vec& dc_prev) {
  const Eigen::Index hd = dh.size();
  const Vec d_o = dh.cwiseProduct(cache.tanh_c);
  const Vec dc_total =
      dc + dh.cwiseProduct(cache.gate_o)
               .cwiseProduct((1.0 - cache.tanh_c.array().square()).matrix());
  const Vec d_i = dc_total.cwiseProduct(cache.gate_g);
  const Vec d_g = dc_total.cwiseProduct(cache.gate_i);
  const Vec d_f = dc_total.cwiseProduct(cache.c_prev);
  dc_prev = dc_total.cwiseProduct(cache.gate_f);

  Vec dpre(4 * hd);
  dpre.segment(0, hd) =
      d_i.cwiseProduct(cache.gate_i)
          .cwiseProduct((1.0 - cache.gate_i.array()).matrix());
  dpre.segment(hd, hd) =
      d_f.cwiseProduct(cache.gate_f)
          .cwiseProduct((1.0 - cache.gate_f.array()).matrix());
  dpre.segment(2 * hd, hd) =
      d_g.cwiseProduct((1.0 - cache.gate_g.array().square()).matrix());
  dpre.segment(3 * hd, hd) =
      d_o.cwiseProduct(cache.gate_o)
          .cwiseProduct((1.0 - cache.gate_o.array()).matrix());

  dw_x.noalias() += dpre * cache.x.transpose();
  dw_h.noalias() += dpre * cache.h_prev.transpose();
  dbias += dpre;
  dx = w_x.transpose() * dpre;
  dh_prev = w_h.transpose() * dpre;
}

void Adam::step(ParamStore& params) {
  if (m_.empty()) {
    m_.resize(params.tensor_count());
    v_.resize(params.tensor_count());
    for (int i = 0; i < params.tensor_count(); ++i) {
      m_[i] = Mat::Zero(params.value(i).rows(), params.value(i).cols());
      v_[i] = m_[i];
    }
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, steps_);
  const double bc2 = 1.0 - std::pow(beta2_, steps_);
  for (int i = 0; i < params.tensor_count(); ++i) {
    const Mat& g = params.grad(i);
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    params.value(i).array() -=
        lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
  }
}

}  // namespace dreammap::nn
