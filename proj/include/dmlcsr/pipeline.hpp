#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dmlcsr/config.hpp"
#include "dmlcsr/csr.hpp"

namespace dmlcsr::pipeline {

// deterministic synthetic datasets; train labels carry boundary noise
csr::Dataset build_train_dataset(const config::RunConfig& cfg);
csr::Dataset build_val_dataset(const config::RunConfig& cfg);

struct ArmSpec {
  std::string name;  // "baseline", "ddgcn", "dml", "csr"
  bool ddgcn = false;
  bool edges = false;
  bool csr = false;
};

std::vector<ArmSpec> ablation_arms();

// arm configs share seeds and the total epoch budget: non-CSR arms train
// epochs_init + cycles*epochs_per_cycle plain epochs
config::RunConfig arm_config(const config::RunConfig& base, const ArmSpec& arm);

struct TrainRunResult {
  csr::TrainResult train;
  csr::EvalResult final_eval;
};

// end-to-end single training run; when out_dir is non-empty writes
// config.txt, log.jsonl, final_metrics.json and checkpoints there
TrainRunResult train_run(const config::RunConfig& cfg, const std::string& out_dir,
                         std::ostream* live = nullptr);

struct ArmResult {
  std::string name;
  double mean_f1 = 0, mean_iou = 0, overall_f1 = 0;
};

std::vector<ArmResult> run_ablation(const config::RunConfig& base,
                                    const std::string& out_dir,
                                    std::ostream* live = nullptr);

std::string final_metrics_json(const csr::EvalResult& ev);
std::string ablation_report_json(const std::vector<ArmResult>& arms);
std::string ablation_report_markdown(const std::vector<ArmResult>& arms);

}  // namespace dmlcsr::pipeline
