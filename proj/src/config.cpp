#include "dmlcsr/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dmlcsr::config {

namespace {

enum class FType { Int, Double, Bool, String, U64 };

struct FieldDesc {
  const char* key;
  FType type;
  std::size_t offset;
};

#define F_OFF(member) offsetof(RunConfig, member)

const FieldDesc kFields[] = {
    {"data.image_size", FType::Int, F_OFF(data_image_size)},
    {"data.num_classes", FType::Int, F_OFF(data_num_classes)},
    {"data.train_count", FType::Int, F_OFF(data_train_count)},
    {"data.val_count", FType::Int, F_OFF(data_val_count)},
    {"data.noise_rate", FType::Double, F_OFF(data_noise_rate)},
    {"data.shape_jitter", FType::Double, F_OFF(data_shape_jitter)},
    {"data.color_jitter", FType::Double, F_OFF(data_color_jitter)},
    {"data.texture_noise_sigma", FType::Double, F_OFF(data_texture_noise_sigma)},
    {"model.base_width", FType::Int, F_OFF(model_base_width)},
    {"model.ddgcn_node_dim", FType::Int, F_OFF(model_ddgcn_node_dim)},
    {"model.ddgcn_feature_nodes", FType::Int, F_OFF(model_ddgcn_feature_nodes)},
    {"model.ddgcn_adj_kernel", FType::Int, F_OFF(model_ddgcn_adj_kernel)},
    {"model.parse_head_width", FType::Int, F_OFF(model_parse_head_width)},
    {"model.edge_head_width", FType::Int, F_OFF(model_edge_head_width)},
    {"model.context", FType::String, F_OFF(model_context)},
    {"model.edge_heads", FType::Bool, F_OFF(model_edge_heads)},
    {"loss.lambda0", FType::Double, F_OFF(loss_lambda0)},
    {"loss.lambda1", FType::Double, F_OFF(loss_lambda1)},
    {"loss.lambda2", FType::Double, F_OFF(loss_lambda2)},
    {"loss.lambda3", FType::Double, F_OFF(loss_lambda3)},
    {"loss.lambda4", FType::Double, F_OFF(loss_lambda4)},
    {"loss.alpha0", FType::Double, F_OFF(loss_alpha0)},
    {"loss.alpha1", FType::Double, F_OFF(loss_alpha1)},
    {"loss.alpha2", FType::Double, F_OFF(loss_alpha2)},
    {"loss.class_weights", FType::String, F_OFF(loss_class_weights)},
    {"train.epochs_init", FType::Int, F_OFF(train_epochs_init)},
    {"train.cycles", FType::Int, F_OFF(train_cycles)},
    {"train.epochs_per_cycle", FType::Int, F_OFF(train_epochs_per_cycle)},
    {"train.batch_size", FType::Int, F_OFF(train_batch_size)},
    {"train.lr", FType::Double, F_OFF(train_lr)},
    {"train.lr_csr", FType::Double, F_OFF(train_lr_csr)},
    {"train.lr_min", FType::Double, F_OFF(train_lr_min)},
    {"train.momentum", FType::Double, F_OFF(train_momentum)},
    {"train.weight_decay", FType::Double, F_OFF(train_weight_decay)},
    {"train.seed", FType::U64, F_OFF(train_seed)},
    {"train.threads", FType::Int, F_OFF(train_threads)},
    {"train.augment", FType::Bool, F_OFF(train_augment)},
    {"train.augment_csr", FType::Bool, F_OFF(train_augment_csr)},
    {"train.distill_gt", FType::Bool, F_OFF(train_distill_gt)},
    {"eval.groups", FType::String, F_OFF(eval_groups)},
    {"io.out_dir", FType::String, F_OFF(io_out_dir)},
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

void set_field(RunConfig& cfg, const FieldDesc& f, const std::string& value) {
  char* base = reinterpret_cast<char*>(&cfg);
  const std::string v = trim(value);
  try {
    switch (f.type) {
      case FType::Int:
        *reinterpret_cast<int*>(base + f.offset) = std::stoi(v);
        break;
      case FType::Double:
        *reinterpret_cast<double*>(base + f.offset) = std::stod(v);
        break;
      case FType::U64:
        *reinterpret_cast<std::uint64_t*>(base + f.offset) = std::stoull(v);
        break;
      case FType::Bool: {
        bool* p = reinterpret_cast<bool*>(base + f.offset);
        if (v == "true" || v == "1")
          *p = true;
        else if (v == "false" || v == "0")
          *p = false;
        else
          throw std::invalid_argument("bad bool");
        break;
      }
      case FType::String:
        *reinterpret_cast<std::string*>(base + f.offset) = v;
        break;
    }
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("config: bad value for ") + f.key + ": " + v);
  }
}

std::string get_field(const RunConfig& cfg, const FieldDesc& f) {
  const char* base = reinterpret_cast<const char*>(&cfg);
  char buf[64];
  switch (f.type) {
    case FType::Int:
      std::snprintf(buf, sizeof(buf), "%d", *reinterpret_cast<const int*>(base + f.offset));
      return buf;
    case FType::Double:
      std::snprintf(buf, sizeof(buf), "%.17g",
                    *reinterpret_cast<const double*>(base + f.offset));
      return buf;
    case FType::U64:
      std::snprintf(buf, sizeof(buf), "%llu",
                    static_cast<unsigned long long>(
                        *reinterpret_cast<const std::uint64_t*>(base + f.offset)));
      return buf;
    case FType::Bool:
      return *reinterpret_cast<const bool*>(base + f.offset) ? "true" : "false";
    case FType::String:
      return *reinterpret_cast<const std::string*>(base + f.offset);
  }
  return "";
}

}  // namespace

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig c;  // defaults are the desk preset
  if (name == "desk") return c;
  if (name == "paper") {
    c.train_epochs_init = 150;
    c.train_cycles = 5;
    c.train_epochs_per_cycle = 10;
    c.train_batch_size = 28;
    c.train_lr = 0.001;
    return c;
  }
  throw std::invalid_argument("unknown preset: " + name);
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: missing '=' at line " + std::to_string(lineno));
    cfg.apply_override(line);
  }
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const FieldDesc& f : kFields) {
    out += f.key;
    out += " = ";
    out += get_field(*this, f);
    out += "\n";
  }
  return out;
}

void RunConfig::apply_override(const std::string& key_eq_value) {
  const std::size_t eq = key_eq_value.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("config: override must be key=value: " + key_eq_value);
  const std::string key = trim(key_eq_value.substr(0, eq));
  const std::string value = key_eq_value.substr(eq + 1);
  for (const FieldDesc& f : kFields)
    if (key == f.key) {
      set_field(*this, f, value);
      if (key == "train.seed") seed_was_set = true;
      return;
    }
  throw std::invalid_argument("config: unknown key: " + key);
}

void RunConfig::validate() const {
  scene_config().validate();
  model_config().validate();
  loss_weights().validate(data_num_classes);
  if (data_train_count < 1 || data_val_count < 1)
    throw std::invalid_argument("config: dataset counts must be positive");
  if (train_batch_size < 1 || train_epochs_init < 0 || train_cycles < 0 ||
      train_epochs_per_cycle < 1)
    throw std::invalid_argument("config: bad schedule");
  if (data_noise_rate < 0 || data_noise_rate > 1)
    throw std::invalid_argument("config: noise rate must be in [0,1]");
  groups();  // throws on malformed group spec
}

model::ModelConfig RunConfig::model_config() const {
  model::ModelConfig m;
  m.num_classes = data_num_classes;
  m.base_width = model_base_width;
  m.ddgcn_node_dim = model_ddgcn_node_dim;
  m.ddgcn_feature_nodes = model_ddgcn_feature_nodes;
  m.ddgcn_adj_kernel = model_ddgcn_adj_kernel;
  m.parse_head_width = model_parse_head_width;
  m.edge_head_width = model_edge_head_width;
  if (model_context == "ddgcn")
    m.use_ddgcn = true;
  else if (model_context == "conv")
    m.use_ddgcn = false;
  else
    throw std::invalid_argument("config: model.context must be ddgcn or conv");
  m.with_edge_heads = model_edge_heads;
  return m;
}

data::SceneConfig RunConfig::scene_config() const {
  data::SceneConfig s;
  s.image_size = data_image_size;
  s.num_classes = data_num_classes;
  s.shape_jitter = static_cast<float>(data_shape_jitter);
  s.color_jitter = static_cast<float>(data_color_jitter);
  s.texture_noise_sigma = static_cast<float>(data_texture_noise_sigma);
  return s;
}

losses::LossWeights RunConfig::loss_weights() const {
  losses::LossWeights w = losses::LossWeights::defaults(data_num_classes);
  w.lambda0 = loss_lambda0;
  w.lambda1 = loss_lambda1;
  w.lambda2 = loss_lambda2;
  w.lambda3 = loss_lambda3;
  w.lambda4 = loss_lambda4;
  w.alpha0 = loss_alpha0;
  w.alpha1 = loss_alpha1;
  w.alpha2 = loss_alpha2;
  if (loss_class_weights != "auto") {
    w.class_weights.clear();
    std::istringstream ss(loss_class_weights);
    std::string tok;
    while (std::getline(ss, tok, ',')) w.class_weights.push_back(std::stod(trim(tok)));
  }
  return w;
}

csr::TrainOptions RunConfig::train_options() const {
  csr::TrainOptions t;
  t.epochs_init = train_epochs_init;
  t.cycles = train_cycles;
  t.epochs_per_cycle = train_epochs_per_cycle;
  t.batch_size = train_batch_size;
  t.lr = train_lr;
  t.lr_csr = train_lr_csr;
  t.lr_min = train_lr_min;
  t.momentum = train_momentum;
  t.weight_decay = train_weight_decay;
  t.augment = train_augment;
  t.augment_csr = train_augment_csr;
  t.distill_gt = train_distill_gt;
  t.seed = train_seed;
  t.loss = loss_weights();
  t.eval_groups = groups();
  return t;
}

std::vector<std::vector<int>> RunConfig::groups() const { return parse_groups(eval_groups); }

std::vector<std::vector<int>> parse_groups(const std::string& spec) {
  std::vector<std::vector<int>> out;
  if (trim(spec).empty()) return out;
  std::istringstream gs(spec);
  std::string group;
  while (std::getline(gs, group, ';')) {
    std::vector<int> g;
    std::istringstream cs(group);
    std::string tok;
    while (std::getline(cs, tok, ',')) {
      const std::string t = trim(tok);
      if (t.empty()) continue;
      g.push_back(std::stoi(t));
    }
    if (!g.empty()) out.push_back(g);
  }
  return out;
}

}  // namespace dmlcsr::config
