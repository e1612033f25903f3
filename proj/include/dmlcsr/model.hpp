#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmlcsr/nn.hpp"
#include "dmlcsr/tensor.hpp"

namespace dmlcsr::model {

using nn::BnMode;
using nn::OpInfo;
using nn::ParamRef;

struct ModelConfig {
  int num_classes = 11;
  int base_width = 32;           // stage widths derive from this
  int ddgcn_node_dim = 48;       // spatial-branch projection width
  int ddgcn_feature_nodes = 48;  // feature-branch node count
  int ddgcn_adj_kernel = 5;      // taps of the adjacency 1D convolution
  int parse_head_width = 48;
  int edge_head_width = 24;
  bool use_ddgcn = true;         // false: plain conv unit as context (ablation baseline)
  bool with_edge_heads = true;

  int stem_width() const { return base_width / 2; }
  int c2_width() const { return base_width; }
  int c3_width() const { return base_width + base_width / 2; }
  int c4_width() const { return base_width * 2; }
  int c5_width() const { return base_width * 3; }
  int context_width() const {
    return c5_width() + ddgcn_node_dim + ddgcn_feature_nodes;
  }

  void validate() const;  // throws std::invalid_argument
};

struct FeaturePyramid {
  Tensor c1, c2, c3, c4, c5;  // strides 1/2, 1/4, 1/8, 1/16, 1/16 (dilated)
};

struct NetworkOutputs {
  Tensor parsing_logits;        // (N, num_classes, H, W)
  Tensor binary_edge_logits;    // (N, 2, H, W), train mode only
  Tensor category_edge_logits;  // (N, num_classes, H, W), train mode only
  bool has_edges = false;
};

enum class RunMode { Train, Infer };

namespace detail {

// conv + batchnorm; relu is applied by the caller where the block needs it
struct ConvBn {
  nn::Conv2d conv;
  nn::BatchNorm2d bn;
  Tensor a_conv;  // saved BN input

  void configure(int in, int out, int k, int stride = 1, int pad = 0, int dilation = 1);
  void init(Rng& rng);
  void forward(const Tensor& x, Tensor& y, BnMode mode);
  void backward(const Tensor& x, const Tensor& dy, Tensor* dx);
  void collect(std::vector<ParamRef>& out, const std::string& prefix);
};

struct ResidualBlock {
  ConvBn a, b, skip;  // a: 3x3 stride s; b: 3x3; skip: 1x1 stride s
  Tensor a_out, b_out, s_out, y;

  void configure(int in, int out, int stride, int dilation);
  void init(Rng& rng);
  void forward(const Tensor& x, BnMode mode);  // result in y
  void backward(const Tensor& x, const Tensor& dy, Tensor* dx);
  void collect(std::vector<ParamRef>& out, const std::string& prefix);
};

// One DDGCN branch: 1x1 projection, adjacency as a 1D convolution along the
// node axis, residual add + relu, 1x1 node/feature mixing, scalar gate.
struct GraphBranch {
  nn::Conv2d proj, mix;
  nn::NodeConv1d adj;
  nn::ScaleScalar gate;
  Tensor a_proj, a_adj, a_sum, a_mix, a_out;

  void configure(int in, int dim, nn::NodeConv1d::Axis axis, int taps);
  void init(Rng& rng);
  void forward(const Tensor& x);
  void backward(const Tensor& x, const Tensor& dout, Tensor& dx_accum);
  void collect(std::vector<ParamRef>& out, const std::string& prefix);
  void ops(std::vector<OpInfo>& out, const std::string& prefix) const;
};

struct DdgcnModule {
  GraphBranch spatial, feature;
  Tensor out;  // [x ; lambda*H_S ; gamma*H_F]

  void configure(const ModelConfig& cfg);
  void init(Rng& rng);
  void forward(const Tensor& x);
  void backward(const Tensor& x, const Tensor& dout, Tensor& dx_accum);
  void collect(std::vector<ParamRef>& out, const std::string& prefix);
  std::vector<OpInfo> ops() const;
};

// 1x1 reduce + 3x3 conv (both BN+relu) + 1x1 projection + upsample
struct Head {
  ConvBn block1, block2;
  nn::Conv2d proj;
  Tensor a_b1, a_b2, a_low, logits;

  void configure(int in, int width, int out_ch);
  void init(Rng& rng);
  void forward(const Tensor& x, int out_h, int out_w, BnMode mode);
  void backward(const Tensor& x, const Tensor& dlogits, Tensor& dx_accum);
  void collect(std::vector<ParamRef>& out, const std::string& prefix);
};

}  // namespace detail

// Decoupled multi-task network: shared C1-C5 encoder, DDGCN context on C5,
// a parsing head on [context ; C2], and two edge heads on [C2 ; C3 ; C4]
// that are skipped entirely in infer mode.
class DmlCsrNet {
 public:
  DmlCsrNet(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }

  NetworkOutputs forward(const Tensor& images, RunMode mode, BnMode bn);
  // dbinary/dcategory may be null when the edge heads were not run
  void backward(const Tensor& dparse, const Tensor* dbinary, const Tensor* dcategory);

  void zero_grad();
  std::vector<ParamRef> parameters();  // trainable arrays
  std::vector<ParamRef> state();       // trainable + BN running statistics
  std::size_t parameter_count(RunMode mode) const;

  FeaturePyramid encoder_forward(const Tensor& images, BnMode bn);
  Tensor ddgcn_forward(const Tensor& c5);  // standalone, any spatial size
  std::vector<OpInfo> ddgcn_ops() const;

  void begin_bn_accumulate();
  void finalize_bn_accumulate();

 private:
  void build_param_list();

  ModelConfig cfg_;
  detail::ConvBn stem_;
  detail::ResidualBlock s2_, s3_, s4_, s5_;
  detail::DdgcnModule ddgcn_;
  detail::ConvBn base_ctx_;  // ablation context unit (use_ddgcn=false)
  detail::Head parse_head_, bin_head_, cat_head_;

  Tensor c1_, ctx_, up_ctx_, parse_in_, up_c3_, up_c4_, edge_in_;
  Tensor last_images_;
  bool last_had_edges_ = false;

  std::vector<ParamRef> all_state_;
  std::vector<nn::BatchNorm2d*> all_bns_;
};

}  // namespace dmlcsr::model
