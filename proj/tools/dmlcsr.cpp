#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dmlcsr/checkpoint.hpp"
#include "dmlcsr/config.hpp"
#include "dmlcsr/csr.hpp"
#include "dmlcsr/data.hpp"
#include "dmlcsr/edge_labels.hpp"
#include "dmlcsr/metrics.hpp"
#include "dmlcsr/model.hpp"
#include "dmlcsr/nn.hpp"
#include "dmlcsr/pipeline.hpp"
#include "dmlcsr/png_io.hpp"
#include "dmlcsr/rng.hpp"

namespace fs = std::filesystem;
using namespace dmlcsr;

namespace {

// exit codes: 2 config/input, 3 divergence, 4 I/O
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

config::RunConfig load_config(const std::string& config_path, const std::string& preset,
                              const std::vector<std::string>& overrides) {
  config::RunConfig cfg = config_path.empty() ? config::RunConfig::preset(preset)
                                              : config::RunConfig::parse_file(config_path);
  for (const std::string& kv : overrides) cfg.apply_override(kv);
  if (!cfg.seed_was_set) {
    if (const char* env = std::getenv("DMLCSR_SEED")) {
      cfg.train_seed = std::strtoull(env, nullptr, 10);
      cfg.seed_was_set = true;
    }
  }
  cfg.validate();
  return cfg;
}

std::string zero_pad(int v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", width, v);
  return buf;
}

int cmd_generate_data(const std::string& out, int count, std::uint64_t seed,
                      double noise_rate, int image_size) {
  data::SceneConfig scene;
  scene.image_size = image_size;
  scene.validate();
  fs::create_directories(fs::path(out) / "images");
  fs::create_directories(fs::path(out) / "labels");
  std::ostringstream manifest;
  manifest << "index\timage\tlabel\tseed\n";
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = seed_stream(seed, 0x747261696e /* train */, i);
    data::LabeledSample sample = data::generate_sample(s, scene);
    if (noise_rate > 0)
      sample.labels = data::inject_label_noise(sample.labels, noise_rate,
                                               seed_stream(seed, 0x6e7a, i));
    const std::string img_rel = "images/" + zero_pad(i, 6) + ".png";
    const std::string lbl_rel = "labels/" + zero_pad(i, 6) + ".png";
    png_io::write_rgb8((fs::path(out) / img_rel).string(),
                       png_io::tensor_to_rgb8(sample.image));
    png_io::write_gray8((fs::path(out) / lbl_rel).string(), sample.labels);
    manifest << i << '\t' << img_rel << '\t' << lbl_rel << '\t' << s << '\n';
  }
  std::ofstream mf(fs::path(out) / "manifest.tsv");
  if (!mf) throw std::runtime_error("cannot write manifest");
  mf << manifest.str();
  std::cout << "wrote " << count << " samples to " << out << "\n";
  return 0;
}

csr::Dataset load_dataset_dir(const std::string& dir, int num_classes) {
  std::ifstream mf(fs::path(dir) / "manifest.tsv");
  if (!mf) throw std::invalid_argument("no manifest.tsv in " + dir);
  csr::Dataset ds;
  ds.num_classes = num_classes;
  std::string line;
  std::getline(mf, line);  // header
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string index, img, lbl;
    std::getline(ls, index, '\t');
    std::getline(ls, img, '\t');
    std::getline(ls, lbl, '\t');
    data::LabeledSample s;
    s.image = png_io::rgb8_to_tensor(png_io::read((fs::path(dir) / img).string()));
    s.labels = png_io::read_label_png((fs::path(dir) / lbl).string());
    for (std::uint8_t v : s.labels.v)
      if (v >= num_classes)
        throw std::invalid_argument("label value out of range in " + lbl);
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw std::invalid_argument("empty dataset in " + dir);
  ds.image_size = ds.samples.front().labels.h;
  return ds;
}

int cmd_edges(const std::string& labels_path, const std::string& out_prefix,
              int num_classes) {
  LabelMap labels = png_io::read_label_png(labels_path);
  int max_label = 0;
  for (std::uint8_t v : labels.v) max_label = std::max(max_label, static_cast<int>(v));
  if (num_classes <= max_label)
    throw std::invalid_argument("num_classes must exceed max label " +
                                std::to_string(max_label));
  edge_labels::EdgeLabels el = edge_labels::make_edge_labels(labels, num_classes);
  LabelMap bin = el.binary;
  for (std::uint8_t& v : bin.v) v = v ? 255 : 0;
  png_io::write_gray8(out_prefix + "_binary.png", bin);
  for (int j = 0; j < num_classes; ++j) {
    LabelMap ch = el.per_class[j];
    for (std::uint8_t& v : ch.v) v = v ? 255 : 0;
    png_io::write_gray8(out_prefix + "_class_" + zero_pad(j, 2) + ".png", ch);
  }
  std::cout << "binary edges: " << el.binary_count << " pixels\n";
  return 0;
}

int cmd_train(const config::RunConfig& cfg, const std::string& out, bool synth,
              const std::string& data_dir) {
  config::RunConfig run = cfg;
  if (!synth && data_dir.empty())
    throw std::invalid_argument("train: pass --synth or --data DIR");
  if (!data_dir.empty()) {
    // train from a generated-on-disk dataset
    nn::set_threads(run.train_threads);
    fs::create_directories(out);
    csr::Dataset all = load_dataset_dir(data_dir, run.data_num_classes);
    const int val_n = std::min<int>(run.data_val_count,
                                    static_cast<int>(all.samples.size()) / 5);
    csr::Dataset train = all, val = all;
    train.samples.assign(all.samples.begin(), all.samples.end() - val_n);
    val.samples.assign(all.samples.end() - val_n, all.samples.end());
    model::DmlCsrNet net(run.model_config(), run.train_seed);
    csr::TrainOptions opt = run.train_options();
    opt.out_dir = out;
    csr::TrainResult r = csr::run_training(net, train, val, opt, &std::cout);
    r.best.to_model(net);
    csr::EvalResult ev = csr::evaluate(net, val, run.train_batch_size, run.groups());
    std::ofstream(fs::path(out) / "final_metrics.json") << pipeline::final_metrics_json(ev);
    std::ofstream(fs::path(out) / "config.txt") << run.serialize();
    std::cout << "best val mean F1: " << r.best_val_mean_f1 << "\n";
    return 0;
  }
  pipeline::TrainRunResult r = pipeline::train_run(run, out, &std::cout);
  std::cout << "final val mean F1 " << r.final_eval.mean_f1 << ", mIoU "
            << r.final_eval.mean_iou << "\n";
  return 0;
}

int cmd_eval(const config::RunConfig& cfg, const std::string& ckpt_path,
             const std::string& data_dir, bool as_json) {
  nn::set_threads(cfg.train_threads);
  csr::WeightRecord rec = checkpoint::load(ckpt_path);
  model::DmlCsrNet net(cfg.model_config(), 0);
  rec.to_model_partial(net);
  csr::Dataset ds = data_dir.empty() ? pipeline::build_val_dataset(cfg)
                                     : load_dataset_dir(data_dir, cfg.data_num_classes);
  csr::EvalResult ev = csr::evaluate(net, ds, cfg.train_batch_size, cfg.groups());
  if (as_json) {
    std::cout << pipeline::final_metrics_json(ev);
    return 0;
  }
  std::printf("%-8s %10s %10s %s\n", "class", "F1", "IoU", "");
  metrics::PerClassF1 pc = ev.per_class;
  for (int j = 0; j < ev.cm.num_classes; ++j) {
    double tp = static_cast<double>(ev.cm.at(j, j));
    double denom = 0;
    for (int k = 0; k < ev.cm.num_classes; ++k)
      denom += static_cast<double>(ev.cm.at(j, k)) + ev.cm.at(k, j);
    denom -= tp;
    const double iou = denom > 0 ? tp / denom : 1.0;
    std::printf("%-8d %10.4f %10.4f %s\n", j, pc.f1[j], iou,
                pc.absent[j] ? "(absent)" : "");
  }
  std::printf("mean F1 (excl. background): %.4f\n", ev.mean_f1);
  std::printf("overall F1 (merged groups): %.4f\n", ev.overall_f1);
  std::printf("mean IoU: %.4f\n", ev.mean_iou);
  return 0;
}

int cmd_infer(const config::RunConfig& cfg, const std::string& ckpt_path,
              const std::string& image_path, const std::string& out_prefix) {
  nn::set_threads(cfg.train_threads);
  csr::WeightRecord rec = checkpoint::load(ckpt_path);
  model::ModelConfig mc = cfg.model_config();
  mc.with_edge_heads = false;  // only parsing-path weights are loaded
  model::DmlCsrNet net(mc, 0);
  rec.to_model_partial(net);

  Tensor image = png_io::rgb8_to_tensor(png_io::read(image_path));
  if (image.h % 16 != 0 || image.w % 16 != 0)
    throw std::invalid_argument("image size must be divisible by 16");
  model::NetworkOutputs out = net.forward(image, model::RunMode::Infer, model::BnMode::Eval);

  LabelMap pred(image.h, image.w);
  for (int p = 0; p < image.plane(); ++p) {
    int best = 0;
    float bv = out.parsing_logits.chan(0, 0)[p];
    for (int c = 1; c < out.parsing_logits.c; ++c) {
      const float v = out.parsing_logits.chan(0, c)[p];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    pred.v[p] = static_cast<std::uint8_t>(best);
  }
  png_io::write_gray8(out_prefix + "_index.png", pred);

  // overlay: 50/50 blend of the input with the palette color
  png_io::Image8 overlay = png_io::tensor_to_rgb8(image);
  png_io::Image8 colors = png_io::colorize(pred);
  for (std::size_t i = 0; i < overlay.pixels.size(); ++i)
    overlay.pixels[i] =
        static_cast<std::uint8_t>((overlay.pixels[i] + colors.pixels[i]) / 2);
  png_io::write_rgb8(out_prefix + "_overlay.png", overlay);
  std::cout << "wrote " << out_prefix << "_index.png and _overlay.png\n";
  return 0;
}

int cmd_ablate(const config::RunConfig& cfg, const std::string& out) {
  std::vector<pipeline::ArmResult> arms = pipeline::run_ablation(cfg, out, &std::cout);
  std::cout << pipeline::ablation_report_markdown(arms);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale decoupled multi-task face parsing with cyclical self-regulation"};
  app.require_subcommand(1);

  std::string config_path, preset = "desk", out_dir, data_dir, ckpt, image_path,
              labels_path, out_prefix;
  std::vector<std::string> overrides;
  bool synth = false, as_json = false;
  int count = 100, image_size = 96, num_classes = 11, threads = -1;
  std::uint64_t seed = 1;
  double noise_rate = 0.0;

  auto add_cfg_opts = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (dotted keys)");
    sub->add_option("--preset", preset, "desk|paper (ignored with --config)");
    sub->add_option("--set", overrides, "override, e.g. --set train.lr=0.001");
    sub->add_option("--threads", threads, "worker threads (0 = hardware)");
  };

  CLI::App* gen = app.add_subcommand("generate-data", "emit a synthetic dataset");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--count", count, "number of samples")->required();
  gen->add_option("--seed", seed, "base seed");
  gen->add_option("--noise-rate", noise_rate, "boundary label noise rate");
  gen->add_option("--image-size", image_size, "canvas size (divisible by 16)");

  CLI::App* edges = app.add_subcommand("edges", "emit edge pseudo-labels for a label map");
  edges->add_option("--labels", labels_path, "label PNG (8-bit class indices)")->required();
  edges->add_option("--out-prefix", out_prefix, "output path prefix")->required();
  edges->add_option("--num-classes", num_classes, "class count");

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_cfg_opts(train);
  train->add_option("--out", out_dir, "run directory");
  train->add_flag("--synth", synth, "generate the dataset in memory");
  train->add_option("--data", data_dir, "train from a generated dataset dir");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_cfg_opts(eval);
  eval->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  eval->add_option("--data", data_dir, "dataset dir (default: synthetic val split)");
  eval->add_flag("--json", as_json, "emit one JSON object");

  CLI::App* infer = app.add_subcommand("infer", "run decoupled inference on one image");
  add_cfg_opts(infer);
  infer->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  infer->add_option("--image", image_path, "input PNG")->required();
  infer->add_option("--out", out_prefix, "output prefix")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "run the four-arm ablation");
  add_cfg_opts(ablate);
  ablate->add_option("--out", out_dir, "report directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate_data(out_dir, count, seed, noise_rate, image_size);
    if (edges->parsed()) return cmd_edges(labels_path, out_prefix, num_classes);

    config::RunConfig cfg = load_config(config_path, preset, overrides);
    if (threads >= 0) cfg.train_threads = threads;
    if (train->parsed()) {
      if (out_dir.empty()) out_dir = cfg.io_out_dir;
      return cmd_train(cfg, out_dir, synth, data_dir);
    }
    if (eval->parsed()) return cmd_eval(cfg, ckpt, data_dir, as_json);
    if (infer->parsed()) return cmd_infer(cfg, ckpt, image_path, out_prefix);
    if (ablate->parsed()) {
      if (out_dir.empty()) out_dir = cfg.io_out_dir;
      return cmd_ablate(cfg, out_dir);
    }
  } catch (const csr::TrainDiverged& e) {
    std::cerr << "ERROR: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::invalid_argument& e) {
    std::cerr << "ERROR: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "ERROR: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
