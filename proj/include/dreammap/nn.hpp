// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace dreammap::nn {

// Feature maps are (S x C) matrices: one column per channel, rows in
// row-major spatial order, so a channel is contiguous in memory and
// flattening is channel-major.
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using ArgmaxMat = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>;

/// Named parameter tensors with paired gradient buffers. Tensor order is the
/// declaration order, which also fixes the serialization order.
class ParamStore {
 public:
  int add(std::string name, Eigen::Index rows, Eigen::Index cols);

  int tensor_count() const { return static_cast<int>(tensors_.size()); }
  const std::string& name(int id) const { return tensors_[id].name; }
  Mat& value(int id) { return tensors_[id].value; }
  const Mat& value(int id) const { return tensors_[id].value; }
  Mat& grad(int id) { return tensors_[id].grad; }
  const Mat& grad(int id) const { return tensors_[id].grad; }

  void zero_grads();
  void scale_grads(double factor);
  double grad_norm() const;
  bool values_finite() const;

  // Flat scalar view across tensors in declaration order (column-major
  // within a tensor); used by finite-difference checks and serialization.
  std::int64_t scalar_count() const;
  double get_scalar(std::int64_t i) const;
  void set_scalar(std::int64_t i, double v);
  double grad_scalar(std::int64_t i) const;

 private:
  struct Tensor {
    std::string name;
    Mat value;
    Mat grad;
  };
  std::pair<int, std::int64_t> locate(std::int64_t i) const;
  std::vector<Tensor> tensors_;
  std::vector<std::int64_t> offsets_;  // running scalar offsets
};

// ---- layer primitives ----
// Backward functions accumulate (+=) into parameter gradients and return
// fresh input gradients.

/// 3x3 neighborhoods with zero padding: (S x C) -> (S x 9C), column c*9+k.
Mat im2col3x3(const Mat& x, int h, int w);

Mat conv3x3_forward(const Mat& cols, const Mat& weight, const Vec& bias);
Mat conv3x3_backward(const Mat& dout, const Mat& cols, const Mat& weight, int h,
                     int w, int c_in, Mat& dweight, Vec& dbias);

Mat conv1x1_forward(const Mat& x, const Mat& weight, const Vec& bias);
Mat conv1x1_backward(const Mat& dout, const Mat& x, const Mat& weight, Mat& dweight,
                     Vec& dbias);

Mat relu(const Mat& x);
Mat relu_backward(const Mat& dout, const Mat& x);

Mat maxpool2x2_forward(const Mat& x, int h, int w, ArgmaxMat& argmax);
Mat maxpool2x2_backward(const Mat& dout, const ArgmaxMat& argmax, int h_in, int w_in);

Mat upsample2x_forward(const Mat& x, int h, int w);
Mat upsample2x_backward(const Mat& dout, int h_in, int w_in);

Vec dense_forward(const Mat& weight, const Vec& bias, const Vec& x);
Vec dense_backward(const Vec& dout, const Mat& weight, const Vec& x, Mat& dweight,
                   Vec& dbias);

/// Single LSTM cell. Weights pack the four gates as stacked blocks
/// [input; forget; cell; output], each hidden_dim rows.
struct LstmCache {
  Vec x, h_prev, c_prev;
  Vec gate_i, gate_f, gate_g, gate_o;
  Vec c, tanh_c;
};

void lstm_forward(const Mat& w_x, const Mat& w_h, const Vec& bias, const Vec& x,
                  const Vec& h_prev, const Vec& c_prev, Vec& h_out, Vec& c_out,
                  LstmCache* cache);

void lstm_backward(const LstmCache& cache, const Mat& w_x, const Mat& w_h,
                   const Vec& dh, const Vec& dc, Mat& dw_x, Mat& dw_h, Vec& dbias,
                   Vec& dx, Vec& dh_prev, Vec& dc_prev);

/// Adam with bias correction; one step consumes the accumulated gradients.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  void step(ParamStore& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace dreammap::nn
