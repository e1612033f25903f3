#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmlcsr/rng.hpp"
#include "dmlcsr/tensor.hpp"

// Minimal CNN layer set with hand-written backward passes. Parallel loops
// write disjoint slices and every cross-sample reduction is serial in batch
// order, so results are bit-identical for any thread count.
namespace dmlcsr::nn {

void set_threads(int n);  // 0 = hardware default
int max_threads();

enum class BnMode { Train, Eval, Accumulate };

// Structural descriptor for operator-graph walks (no-pooling certificate).
struct OpInfo {
  std::string name;
  std::string kind;  // "conv2d", "conv1d_node", "batchnorm", "relu", "add", "concat", "scale"
  int stride = 1;
};

struct ParamRef {
  std::string name;
  std::vector<float>* data = nullptr;
  std::vector<float>* grad = nullptr;  // null for BN running statistics
  std::vector<int> shape;
  bool bn_stat = false;
};

struct Conv2d {
  int in_ch = 0, out_ch = 0, k = 1, stride = 1, pad = 0, dilation = 1;
  bool has_bias = true;
  std::vector<float> weight, dweight;  // (out_ch, in_ch*k*k) row-major
  std::vector<float> bias, dbias;

  void configure(int in, int out, int ksize, int stride_ = 1, int pad_ = 0,
                 int dilation_ = 1, bool bias_ = true);
  void init(Rng& rng);  // He-normal
  static int out_dim(int in, int ksize, int stride, int pad, int dilation);

  void forward(const Tensor& x, Tensor& y) const;
  // accumulates into dweight/dbias; adds into *dx when non-null
  void backward(const Tensor& x, const Tensor& dy, Tensor* dx);

  void collect(std::vector<ParamRef>& out, const std::string& prefix);
  OpInfo op_info(const std::string& name) const { return {name, "conv2d", stride}; }
};

struct BatchNorm2d {
  int ch = 0;
  float eps = 1e-5f, momentum = 0.1f;
  std::vector<float> gamma, beta, dgamma, dbeta;
  std::vector<float> running_mean, running_var;
  std::vector<float> saved_mean, saved_istd;  // batch stats of last Train/Accumulate forward
  std::vector<double> acc_sum, acc_sumsq;     // recalibration accumulators
  std::int64_t acc_count = 0;

  void configure(int channels);
  void forward(const Tensor& x, Tensor& y, BnMode mode);
  void backward(const Tensor& x, const Tensor& dy, Tensor* dx);
  void begin_accumulate();
  void finalize_accumulate();  // running stats <- exact population stats

  void collect(std::vector<ParamRef>& out, const std::string& prefix);
  OpInfo op_info(const std::string& name) const { return {name, "batchnorm", 1}; }
};

// 1D convolution along a graph-node axis with one shared k-tap kernel:
// the adjacency operator of the DDGCN branches (a banded Toeplitz matrix),
// size-agnostic in both node count and feature count.
struct NodeConv1d {
  enum class Axis { Spatial, Channel };
  Axis axis = Axis::Spatial;
  int k = 5;
  std::vector<float> weight, dweight;  // k taps

  void configure(Axis a, int taps);
  void init(Rng& rng);
  void forward(const Tensor& x, Tensor& y) const;
  void backward(const Tensor& x, const Tensor& dy, Tensor* dx);

  void collect(std::vector<ParamRef>& out, const std::string& prefix);
  OpInfo op_info(const std::string& name) const { return {name, "conv1d_node", 1}; }
};

// Learnable scalar gate (the lambda / gamma of the context fusion).
struct ScaleScalar {
  std::vector<float> value{0.0f}, grad{0.0f};  // vectors so ParamRef can address them

  void forward(const Tensor& x, Tensor& y) const;
  void backward(const Tensor& x, const Tensor& dy, Tensor* dx);

  void collect(std::vector<ParamRef>& out, const std::string& prefix);
  OpInfo op_info(const std::string& name) const { return {name, "scale", 1}; }
};

// bilinear interpolation (align_corners=false), arbitrary target size
void bilinear_forward(const Tensor& x, Tensor& y, int oh, int ow);
void bilinear_backward(const Tensor& dy, Tensor& dx_accum);

void relu_forward(Tensor& x);                              // in place
void relu_backward(const Tensor& y_post, Tensor& dy);      // masks dy in place

void add_forward(const Tensor& a, const Tensor& b, Tensor& y);
void accumulate(Tensor& dst, const Tensor& src);           // dst += src

void concat_channels(const std::vector<const Tensor*>& xs, Tensor& y);
void split_channels_accumulate(const Tensor& dy, const std::vector<Tensor*>& dxs);

void zero_grads(const std::vector<ParamRef>& params);

struct Sgd {
  double momentum = 0.9, weight_decay = 0.0;
  std::vector<std::vector<float>> velocity;

  void step(const std::vector<ParamRef>& params, double lr);
};

}  // namespace dmlcsr::nn
