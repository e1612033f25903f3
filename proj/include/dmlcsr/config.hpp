#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmlcsr/csr.hpp"
#include "dmlcsr/data.hpp"
#include "dmlcsr/losses.hpp"
#include "dmlcsr/model.hpp"

namespace dmlcsr::config {

// Flat dotted-key run configuration ("section.key = value" lines, '#'
// comments). Serialization round-trips exactly; CLI --set overrides apply
// "key=value" pairs on top.
struct RunConfig {
  // data
  int data_image_size = 96;
  int data_num_classes = 11;
  int data_train_count = 400;
  int data_val_count = 100;
  double data_noise_rate = 0.2;
  double data_shape_jitter = 0.07;
  double data_color_jitter = 0.06;
  double data_texture_noise_sigma = 0.025;
  // model
  int model_base_width = 32;
  int model_ddgcn_node_dim = 48;
  int model_ddgcn_feature_nodes = 48;
  int model_ddgcn_adj_kernel = 5;
  int model_parse_head_width = 48;
  int model_edge_head_width = 24;
  std::string model_context = "ddgcn";  // "ddgcn" | "conv"
  bool model_edge_heads = true;
  // loss
  double loss_lambda0 = 1.0, loss_lambda1 = 1.0, loss_lambda2 = 1.0;
  double loss_lambda3 = 4.0, loss_lambda4 = 1.0;
  double loss_alpha0 = 1.0, loss_alpha1 = 1.0, loss_alpha2 = 0.1;
  std::string loss_class_weights = "auto";  // csv or "auto" (thin lip classes at 2)
  // train
  int train_epochs_init = 30;
  int train_cycles = 5;
  int train_epochs_per_cycle = 3;
  int train_batch_size = 8;
  double train_lr = 0.01;
  double train_lr_csr = 0.0005;
  double train_lr_min = 1e-5;
  double train_momentum = 0.9;
  double train_weight_decay = 0.0005;
  std::uint64_t train_seed = 1;
  int train_threads = 0;  // 0 = hardware default
  bool train_augment = true;
  bool train_augment_csr = false;
  bool train_distill_gt = true;
  // eval
  std::string eval_groups = "2,3;4,5;6;7,8,9";  // brows, eyes, nose, mouth
  // io
  std::string io_out_dir = "runs/out";

  bool seed_was_set = false;  // not serialized; tracks explicit seed assignment

  static RunConfig preset(const std::string& name);  // "desk" | "paper"
  static RunConfig parse(const std::string& text);
  static RunConfig parse_file(const std::string& path);
  std::string serialize() const;
  void apply_override(const std::string& key_eq_value);
  void validate() const;

  model::ModelConfig model_config() const;
  data::SceneConfig scene_config() const;
  csr::TrainOptions train_options() const;
  losses::LossWeights loss_weights() const;
  std::vector<std::vector<int>> groups() const;

  bool operator==(const RunConfig& o) const { return serialize() == o.serialize(); }
};

std::vector<std::vector<int>> parse_groups(const std::string& spec);

}  // namespace dmlcsr::config
