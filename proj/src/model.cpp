#include "dmlcsr/model.hpp"

#include <stdexcept>

namespace dmlcsr::model {

void ModelConfig::validate() const {
  if (num_classes < 2) throw std::invalid_argument("ModelConfig: num_classes < 2");
  if (base_width < 2 || base_width % 2 != 0)
    throw std::invalid_argument("ModelConfig: base_width must be even and >= 2");
  if (ddgcn_node_dim <= 0 || ddgcn_feature_nodes <= 0 || parse_head_width <= 0 ||
      edge_head_width <= 0)
    throw std::invalid_argument("ModelConfig: widths must be positive");
  if (ddgcn_adj_kernel <= 0 || ddgcn_adj_kernel % 2 == 0)
    throw std::invalid_argument("ModelConfig: adjacency kernel must be odd");
}

namespace detail {

// ---- ConvBn

void ConvBn::configure(int in, int out, int k, int stride, int pad, int dilation) {
  conv.configure(in, out, k, stride, pad, dilation, /*bias=*/false);
  bn.configure(out);
}

void ConvBn::init(Rng& rng) { conv.init(rng); }

void ConvBn::forward(const Tensor& x, Tensor& y, BnMode mode) {
  conv.forward(x, a_conv);
  bn.forward(a_conv, y, mode);
}

void ConvBn::backward(const Tensor& x, const Tensor& dy, Tensor* dx) {
  Tensor d_conv(a_conv.n, a_conv.c, a_conv.h, a_conv.w);
  bn.backward(a_conv, dy, &d_conv);
  conv.backward(x, d_conv, dx);
}

void ConvBn::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  conv.collect(out, prefix + ".conv");
  bn.collect(out, prefix + ".bn");
}

// ---- ResidualBlock

void ResidualBlock::configure(int in, int out, int stride, int dilation) {
  a.configure(in, out, 3, stride, dilation, dilation);
  b.configure(out, out, 3, 1, dilation, dilation);
  skip.configure(in, out, 1, stride, 0, 1);
}

void ResidualBlock::init(Rng& rng) {
  a.init(rng);
  b.init(rng);
  skip.init(rng);
}

void ResidualBlock::forward(const Tensor& x, BnMode mode) {
  a.forward(x, a_out, mode);
  nn::relu_forward(a_out);
  b.forward(a_out, b_out, mode);
  skip.forward(x, s_out, mode);
  nn::add_forward(b_out, s_out, y);
  nn::relu_forward(y);
}

void ResidualBlock::backward(const Tensor& x, const Tensor& dy, Tensor* dx) {
  Tensor d = dy;
  nn::relu_backward(y, d);
  Tensor d_aout(a_out.n, a_out.c, a_out.h, a_out.w);
  b.backward(a_out, d, &d_aout);
  nn::relu_backward(a_out, d_aout);
  a.backward(x, d_aout, dx);
  skip.backward(x, d, dx);
}

void ResidualBlock::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  a.collect(out, prefix + ".a");
  b.collect(out, prefix + ".b");
  skip.collect(out, prefix + ".skip");
}

// ---- GraphBranch

void GraphBranch::configure(int in, int dim, nn::NodeConv1d::Axis axis, int taps) {
  proj.configure(in, dim, 1, 1, 0, 1, /*bias=*/true);
  mix.configure(dim, dim, 1, 1, 0, 1, /*bias=*/true);
  adj.configure(axis, taps);
}

void GraphBranch::init(Rng& rng) {
  proj.init(rng);
  mix.init(rng);
  adj.init(rng);
  gate.value[0] = 0.0f;  // training starts from identity-augmented features
}

void GraphBranch::forward(const Tensor& x) {
  proj.forward(x, a_proj);
  adj.forward(a_proj, a_adj);
  nn::add_forward(a_proj, a_adj, a_sum);
  nn::relu_forward(a_sum);
  mix.forward(a_sum, a_mix);
  gate.forward(a_mix, a_out);
}

void GraphBranch::backward(const Tensor& x, const Tensor& dout, Tensor& dx_accum) {
  Tensor d_mix(a_mix.n, a_mix.c, a_mix.h, a_mix.w);
  gate.backward(a_mix, dout, &d_mix);
  Tensor d_sum(a_sum.n, a_sum.c, a_sum.h, a_sum.w);
  mix.backward(a_sum, d_mix, &d_sum);
  nn::relu_backward(a_sum, d_sum);
  Tensor d_proj = d_sum;  // identity path of the residual add
  adj.backward(a_proj, d_sum, &d_proj);
  proj.backward(x, d_proj, &dx_accum);
}

void GraphBranch::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  proj.collect(out, prefix + ".proj");
  adj.collect(out, prefix + ".adj");
  mix.collect(out, prefix + ".mix");
  gate.collect(out, prefix + ".gate");
}

void GraphBranch::ops(std::vector<OpInfo>& out, const std::string& prefix) const {
  out.push_back(proj.op_info(prefix + ".proj"));
  out.push_back(adj.op_info(prefix + ".adj"));
  out.push_back({prefix + ".add", "add", 1});
  out.push_back({prefix + ".relu", "relu", 1});
  out.push_back(mix.op_info(prefix + ".mix"));
  out.push_back(gate.op_info(prefix + ".gate"));
}

// ---- DdgcnModule

void DdgcnModule::configure(const ModelConfig& cfg) {
  spatial.configure(cfg.c5_width(), cfg.ddgcn_node_dim, nn::NodeConv1d::Axis::Spatial,
                    cfg.ddgcn_adj_kernel);
  feature.configure(cfg.c5_width(), cfg.ddgcn_feature_nodes,
                    nn::NodeConv1d::Axis::Channel, cfg.ddgcn_adj_kernel);
}

void DdgcnModule::init(Rng& rng) {
  spatial.init(rng);
  feature.init(rng);
}

void DdgcnModule::forward(const Tensor& x) {
  spatial.forward(x);
  feature.forward(x);
  nn::concat_channels({&x, &spatial.a_out, &feature.a_out}, out);
}

void DdgcnModule::backward(const Tensor& x, const Tensor& dout, Tensor& dx_accum) {
  Tensor d_s(spatial.a_out.n, spatial.a_out.c, spatial.a_out.h, spatial.a_out.w);
  Tensor d_f(feature.a_out.n, feature.a_out.c, feature.a_out.h, feature.a_out.w);
  nn::split_channels_accumulate(dout, {&dx_accum, &d_s, &d_f});
  spatial.backward(x, d_s, dx_accum);
  feature.backward(x, d_f, dx_accum);
}

void DdgcnModule::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  spatial.collect(out, prefix + ".spatial");
  feature.collect(out, prefix + ".feature");
}

std::vector<OpInfo> DdgcnModule::ops() const {
  std::vector<OpInfo> out;
  spatial.ops(out, "ddgcn.spatial");
  feature.ops(out, "ddgcn.feature");
  out.push_back({"ddgcn.concat", "concat", 1});
  return out;
}

// ---- Head

void Head::configure(int in, int width, int out_ch) {
  block1.configure(in, width, 1, 1, 0, 1);
  block2.configure(width, width, 3, 1, 1, 1);
  proj.configure(width, out_ch, 1, 1, 0, 1, /*bias=*/true);
}

void Head::init(Rng& rng) {
  block1.init(rng);
  block2.init(rng);
  proj.init(rng);
}

void Head::forward(const Tensor& x, int out_h, int out_w, BnMode mode) {
  block1.forward(x, a_b1, mode);
  nn::relu_forward(a_b1);
  block2.forward(a_b1, a_b2, mode);
  nn::relu_forward(a_b2);
  proj.forward(a_b2, a_low);
  nn::bilinear_forward(a_low, logits, out_h, out_w);
}

void Head::backward(const Tensor& x, const Tensor& dlogits, Tensor& dx_accum) {
  Tensor d_low(a_low.n, a_low.c, a_low.h, a_low.w);
  nn::bilinear_backward(dlogits, d_low);
  Tensor d_b2(a_b2.n, a_b2.c, a_b2.h, a_b2.w);
  proj.backward(a_b2, d_low, &d_b2);
  nn::relu_backward(a_b2, d_b2);
  Tensor d_b1(a_b1.n, a_b1.c, a_b1.h, a_b1.w);
  block2.backward(a_b1, d_b2, &d_b1);
  nn::relu_backward(a_b1, d_b1);
  block1.backward(x, d_b1, &dx_accum);
}

void Head::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  block1.collect(out, prefix + ".block1");
  block2.collect(out, prefix + ".block2");
  proj.collect(out, prefix + ".proj");
}

}  // namespace detail

// ---- DmlCsrNet

DmlCsrNet::DmlCsrNet(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  const int W = cfg_.base_width;
  stem_.configure(3, cfg_.stem_width(), 3, 2, 1, 1);
  s2_.configure(cfg_.stem_width(), W, 2, 1);
  s3_.configure(W, cfg_.c3_width(), 2, 1);
  s4_.configure(cfg_.c3_width(), cfg_.c4_width(), 2, 1);
  s5_.configure(cfg_.c4_width(), cfg_.c5_width(), 1, 2);  // dilated, keeps 1/16

  if (cfg_.use_ddgcn)
    ddgcn_.configure(cfg_);
  else
    base_ctx_.configure(cfg_.c5_width(), cfg_.context_width(), 3, 1, 1, 1);

  parse_head_.configure(cfg_.context_width() + W, cfg_.parse_head_width,
                        cfg_.num_classes);
  if (cfg_.with_edge_heads) {
    const int edge_in = W + cfg_.c3_width() + cfg_.c4_width();
    bin_head_.configure(edge_in, cfg_.edge_head_width, 2);
    cat_head_.configure(edge_in, cfg_.edge_head_width, cfg_.num_classes);
  }

  Rng rng(seed_stream(init_seed, 0x696e6974 /* "init" */));
  stem_.init(rng);
  s2_.init(rng);
  s3_.init(rng);
  s4_.init(rng);
  s5_.init(rng);
  if (cfg_.use_ddgcn)
    ddgcn_.init(rng);
  else
    base_ctx_.init(rng);
  parse_head_.init(rng);
  if (cfg_.with_edge_heads) {
    bin_head_.init(rng);
    cat_head_.init(rng);
  }

  build_param_list();
}

void DmlCsrNet::build_param_list() {
  all_state_.clear();
  stem_.collect(all_state_, "encoder.stem");
  s2_.collect(all_state_, "encoder.s2");
  s3_.collect(all_state_, "encoder.s3");
  s4_.collect(all_state_, "encoder.s4");
  s5_.collect(all_state_, "encoder.s5");
  if (cfg_.use_ddgcn)
    ddgcn_.collect(all_state_, "ddgcn");
  else
    base_ctx_.collect(all_state_, "base_ctx");
  parse_head_.collect(all_state_, "parse_head");
  if (cfg_.with_edge_heads) {
    bin_head_.collect(all_state_, "edge_binary");
    cat_head_.collect(all_state_, "edge_category");
  }

  all_bns_.clear();
  all_bns_.push_back(&stem_.bn);
  for (detail::ResidualBlock* b : {&s2_, &s3_, &s4_, &s5_}) {
    all_bns_.push_back(&b->a.bn);
    all_bns_.push_back(&b->b.bn);
    all_bns_.push_back(&b->skip.bn);
  }
  if (!cfg_.use_ddgcn) all_bns_.push_back(&base_ctx_.bn);
  std::vector<detail::Head*> heads{&parse_head_};
  if (cfg_.with_edge_heads) {
    heads.push_back(&bin_head_);
    heads.push_back(&cat_head_);
  }
  for (detail::Head* hd : heads) {
    all_bns_.push_back(&hd->block1.bn);
    all_bns_.push_back(&hd->block2.bn);
  }
}

NetworkOutputs DmlCsrNet::forward(const Tensor& images, RunMode mode, BnMode bn) {
  if (images.c != 3) throw std::invalid_argument("forward: expected 3-channel input");
  if (images.h % 16 != 0 || images.w % 16 != 0)
    throw std::invalid_argument("forward: input size must be divisible by 16");
  last_images_ = images;

  stem_.forward(images, c1_, bn);
  nn::relu_forward(c1_);
  s2_.forward(c1_, bn);
  s3_.forward(s2_.y, bn);
  s4_.forward(s3_.y, bn);
  s5_.forward(s4_.y, bn);

  if (cfg_.use_ddgcn) {
    ddgcn_.forward(s5_.y);
  } else {
    base_ctx_.forward(s5_.y, ctx_, bn);
    nn::relu_forward(ctx_);
  }
  const Tensor& ctx = cfg_.use_ddgcn ? ddgcn_.out : ctx_;

  nn::bilinear_forward(ctx, up_ctx_, s2_.y.h, s2_.y.w);
  nn::concat_channels({&up_ctx_, &s2_.y}, parse_in_);
  parse_head_.forward(parse_in_, images.h, images.w, bn);

  NetworkOutputs out;
  out.parsing_logits = parse_head_.logits;

  last_had_edges_ = false;
  if (mode == RunMode::Train && cfg_.with_edge_heads) {
    nn::bilinear_forward(s3_.y, up_c3_, s2_.y.h, s2_.y.w);
    nn::bilinear_forward(s4_.y, up_c4_, s2_.y.h, s2_.y.w);
    nn::concat_channels({&s2_.y, &up_c3_, &up_c4_}, edge_in_);
    bin_head_.forward(edge_in_, images.h, images.w, bn);
    cat_head_.forward(edge_in_, images.h, images.w, bn);
    out.binary_edge_logits = bin_head_.logits;
    out.category_edge_logits = cat_head_.logits;
    out.has_edges = true;
    last_had_edges_ = true;
  }
  return out;
}

void DmlCsrNet::backward(const Tensor& dparse, const Tensor* dbinary,
                         const Tensor* dcategory) {
  Tensor d_c2(s2_.y.n, s2_.y.c, s2_.y.h, s2_.y.w);
  Tensor d_c3(s3_.y.n, s3_.y.c, s3_.y.h, s3_.y.w);
  Tensor d_c4(s4_.y.n, s4_.y.c, s4_.y.h, s4_.y.w);
  Tensor d_c5(s5_.y.n, s5_.y.c, s5_.y.h, s5_.y.w);

  // parsing branch
  Tensor d_parse_in(parse_in_.n, parse_in_.c, parse_in_.h, parse_in_.w);
  parse_head_.backward(parse_in_, dparse, d_parse_in);
  Tensor d_up_ctx(up_ctx_.n, up_ctx_.c, up_ctx_.h, up_ctx_.w);
  nn::split_channels_accumulate(d_parse_in, {&d_up_ctx, &d_c2});
  const Tensor& ctx = cfg_.use_ddgcn ? ddgcn_.out : ctx_;
  Tensor d_ctx(ctx.n, ctx.c, ctx.h, ctx.w);
  nn::bilinear_backward(d_up_ctx, d_ctx);
  if (cfg_.use_ddgcn) {
    ddgcn_.backward(s5_.y, d_ctx, d_c5);
  } else {
    nn::relu_backward(ctx_, d_ctx);
    base_ctx_.backward(s5_.y, d_ctx, &d_c5);
  }

  // edge branch
  if (last_had_edges_ && (dbinary || dcategory)) {
    Tensor d_edge_in(edge_in_.n, edge_in_.c, edge_in_.h, edge_in_.w);
    if (dbinary) bin_head_.backward(edge_in_, *dbinary, d_edge_in);
    if (dcategory) cat_head_.backward(edge_in_, *dcategory, d_edge_in);
    Tensor d_up_c3(up_c3_.n, up_c3_.c, up_c3_.h, up_c3_.w);
    Tensor d_up_c4(up_c4_.n, up_c4_.c, up_c4_.h, up_c4_.w);
    nn::split_channels_accumulate(d_edge_in, {&d_c2, &d_up_c3, &d_up_c4});
    nn::bilinear_backward(d_up_c3, d_c3);
    nn::bilinear_backward(d_up_c4, d_c4);
  }

  // shared encoder, deepest first so junction gradients accumulate
  s5_.backward(s4_.y, d_c5, &d_c4);
  s4_.backward(s3_.y, d_c4, &d_c3);
  s3_.backward(s2_.y, d_c3, &d_c2);
  Tensor d_c1(c1_.n, c1_.c, c1_.h, c1_.w);
  s2_.backward(c1_, d_c2, &d_c1);
  nn::relu_backward(c1_, d_c1);
  stem_.backward(last_images_, d_c1, nullptr);
}

void DmlCsrNet::zero_grad() { nn::zero_grads(all_state_); }

std::vector<ParamRef> DmlCsrNet::parameters() {
  std::vector<ParamRef> out;
  for (const ParamRef& p : all_state_)
    if (p.grad) out.push_back(p);
  return out;
}

std::vector<ParamRef> DmlCsrNet::state() { return all_state_; }

std::size_t DmlCsrNet::parameter_count(RunMode mode) const {
  std::size_t total = 0;
  for (const ParamRef& p : all_state_) {
    if (!p.grad) continue;
    if (mode == RunMode::Infer &&
        (p.name.rfind("edge_binary", 0) == 0 || p.name.rfind("edge_category", 0) == 0))
      continue;
    total += p.data->size();
  }
  return total;
}

FeaturePyramid DmlCsrNet::encoder_forward(const Tensor& images, BnMode bn) {
  stem_.forward(images, c1_, bn);
  nn::relu_forward(c1_);
  s2_.forward(c1_, bn);
  s3_.forward(s2_.y, bn);
  s4_.forward(s3_.y, bn);
  s5_.forward(s4_.y, bn);
  FeaturePyramid p;
  p.c1 = c1_;
  p.c2 = s2_.y;
  p.c3 = s3_.y;
  p.c4 = s4_.y;
  p.c5 = s5_.y;
  return p;
}

Tensor DmlCsrNet::ddgcn_forward(const Tensor& c5) {
  if (!cfg_.use_ddgcn) throw std::runtime_error("ddgcn_forward: DDGCN disabled");
  ddgcn_.forward(c5);
  return ddgcn_.out;
}

std::vector<OpInfo> DmlCsrNet::ddgcn_ops() const {
  if (!cfg_.use_ddgcn) return {};
  return ddgcn_.ops();
}

void DmlCsrNet::begin_bn_accumulate() {
  for (nn::BatchNorm2d* bn : all_bns_) bn->begin_accumulate();
}

void DmlCsrNet::finalize_bn_accumulate() {
  for (nn::BatchNorm2d* bn : all_bns_) bn->finalize_accumulate();
}

}  // namespace dmlcsr::model
