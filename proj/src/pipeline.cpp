#include "dmlcsr/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "dmlcsr/nn.hpp"
#include "dmlcsr/rng.hpp"

namespace dmlcsr::pipeline {

namespace {
constexpr std::uint64_t kTrainTag = 0x747261696e;  // "train"
constexpr std::uint64_t kValTag = 0x76616c;        // "val"
constexpr std::uint64_t kNoiseTag = 0x6e7a;        // "nz"

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << content;
}
}  // namespace

csr::Dataset build_train_dataset(const config::RunConfig& cfg) {
  const data::SceneConfig scene = cfg.scene_config();
  csr::Dataset ds;
  ds.num_classes = cfg.data_num_classes;
  ds.image_size = cfg.data_image_size;
  ds.samples.resize(cfg.data_train_count);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < cfg.data_train_count; ++i) {
    data::LabeledSample s =
        data::generate_sample(seed_stream(cfg.train_seed, kTrainTag, i), scene);
    if (cfg.data_noise_rate > 0)
      s.labels = data::inject_label_noise(s.labels, cfg.data_noise_rate,
                                          seed_stream(cfg.train_seed, kNoiseTag, i));
    ds.samples[i] = std::move(s);
  }
  return ds;
}

csr::Dataset build_val_dataset(const config::RunConfig& cfg) {
  const data::SceneConfig scene = cfg.scene_config();
  csr::Dataset ds;
  ds.num_classes = cfg.data_num_classes;
  ds.image_size = cfg.data_image_size;
  ds.samples.resize(cfg.data_val_count);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < cfg.data_val_count; ++i)
    ds.samples[i] = data::generate_sample(seed_stream(cfg.train_seed, kValTag, i), scene);
  return ds;
}

std::vector<ArmSpec> ablation_arms() {
  return {{"baseline", false, false, false},
          {"ddgcn", true, false, false},
          {"dml", true, true, false},
          {"csr", true, true, true}};
}

config::RunConfig arm_config(const config::RunConfig& base, const ArmSpec& arm) {
  config::RunConfig c = base;
  c.model_context = arm.ddgcn ? "ddgcn" : "conv";
  c.model_edge_heads = arm.edges;
  if (!arm.edges) {
    c.loss_lambda1 = 0;
    c.loss_lambda2 = 0;
    c.loss_lambda3 = 0;
    c.loss_lambda4 = 0;
  }
  if (!arm.csr) {
    // same total budget as the CSR arm, all of it plain multi-task training
    c.train_epochs_init = base.train_epochs_init +
                          base.train_cycles * base.train_epochs_per_cycle;
    c.train_cycles = 0;
  }
  return c;
}

TrainRunResult train_run(const config::RunConfig& cfg, const std::string& out_dir,
                         std::ostream* live) {
  cfg.validate();
  nn::set_threads(cfg.train_threads);
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  csr::Dataset train = build_train_dataset(cfg);
  csr::Dataset val = build_val_dataset(cfg);

  model::DmlCsrNet net(cfg.model_config(), cfg.train_seed);
  csr::TrainOptions opt = cfg.train_options();
  opt.out_dir = out_dir;

  TrainRunResult r;
  r.train = csr::run_training(net, train, val, opt, live);

  r.train.best.to_model(net);
  r.final_eval = csr::evaluate(net, val, cfg.train_batch_size, cfg.groups());

  if (!out_dir.empty()) {
    write_file(out_dir + "/config.txt", cfg.serialize());
    std::string log;
    for (const std::string& line : r.train.log_lines) log += line + "\n";
    write_file(out_dir + "/log.jsonl", log);
    write_file(out_dir + "/final_metrics.json", final_metrics_json(r.final_eval));
  }
  return r;
}

std::vector<ArmResult> run_ablation(const config::RunConfig& base,
                                    const std::string& out_dir, std::ostream* live) {
  std::vector<ArmResult> results;
  for (const ArmSpec& arm : ablation_arms()) {
    if (live) (*live) << "=== arm " << arm.name << " ===\n";
    const config::RunConfig cfg = arm_config(base, arm);
    const std::string arm_dir = out_dir.empty() ? "" : out_dir + "/" + arm.name;
    TrainRunResult r = train_run(cfg, arm_dir, live);
    results.push_back({arm.name, r.final_eval.mean_f1, r.final_eval.mean_iou,
                       r.final_eval.overall_f1});
  }
  if (!out_dir.empty()) {
    write_file(out_dir + "/report.json", ablation_report_json(results));
    write_file(out_dir + "/report.md", ablation_report_markdown(results));
  }
  return results;
}

std::string final_metrics_json(const csr::EvalResult& ev) {
  std::string s = "{\"mean_f1\":" + fmt_double(ev.mean_f1) +
                  ",\"mean_iou\":" + fmt_double(ev.mean_iou) +
                  ",\"overall_f1\":" + fmt_double(ev.overall_f1) + ",\"per_class_f1\":[";
  for (std::size_t j = 0; j < ev.per_class.f1.size(); ++j) {
    if (j) s += ",";
    s += fmt_double(ev.per_class.f1[j]);
  }
  s += "],\"absent\":[";
  for (std::size_t j = 0; j < ev.per_class.absent.size(); ++j) {
    if (j) s += ",";
    s += ev.per_class.absent[j] ? "true" : "false";
  }
  s += "]}\n";
  return s;
}

std::string ablation_report_json(const std::vector<ArmResult>& arms) {
  std::string s = "[";
  for (std::size_t i = 0; i < arms.size(); ++i) {
    if (i) s += ",";
    s += "{\"arm\":\"" + arms[i].name + "\",\"mean_f1\":" + fmt_double(arms[i].mean_f1) +
         ",\"mean_iou\":" + fmt_double(arms[i].mean_iou) +
         ",\"overall_f1\":" + fmt_double(arms[i].overall_f1) + "}";
  }
  s += "]\n";
  return s;
}

std::string ablation_report_markdown(const std::vector<ArmResult>& arms) {
  std::string s = "| arm | mean F1 | mIoU | overall F1 |\n|---|---|---|---|\n";
  for (const ArmResult& a : arms) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "| %s | %.4f | %.4f | %.4f |\n", a.name.c_str(),
                  a.mean_f1, a.mean_iou, a.overall_f1);
    s += buf;
  }
  return s;
}

}  // namespace dmlcsr::pipeline
