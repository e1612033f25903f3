#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dmlcsr/data.hpp"
#include "dmlcsr/losses.hpp"
#include "dmlcsr/metrics.hpp"
#include "dmlcsr/model.hpp"
#include "dmlcsr/tensor.hpp"

namespace dmlcsr::csr {

// Ordered, named collection of dense arrays: trainable parameters plus BN
// running statistics. The unit of self-ensemble arithmetic and checkpointing.
struct WeightEntry {
  std::string name;
  std::vector<int> shape;
  bool bn_stat = false;
  std::vector<float> values;
};

struct WeightRecord {
  std::vector<WeightEntry> entries;

  static WeightRecord from_model(model::DmlCsrNet& net);
  void to_model(model::DmlCsrNet& net) const;          // throws on name/shape mismatch
  // load only entries the (possibly smaller) model has; missing model arrays throw
  void to_model_partial(model::DmlCsrNet& net) const;
  bool same_layout(const WeightRecord& o) const;
};

// Eq-6 aggregation: M = k/(k+1) * best + 1/((k+1)N) * sum(models), applied
// elementwise to trainable arrays. BN statistics are copied from `best` and
// are expected to be re-estimated afterwards.
WeightRecord self_ensemble(const WeightRecord& best,
                           const std::vector<WeightRecord>& models, int k);

struct Dataset {
  std::vector<data::LabeledSample> samples;
  int num_classes = 0;
  int image_size = 0;
};

// Forwards the full dataset once collecting exact population statistics for
// every BN layer; trainable arrays are untouched.
void recalibrate_bn(WeightRecord& weights, model::DmlCsrNet& net, const Dataset& data,
                    int batch_size);

// Soft probability rasters of all three heads (teacher in evaluation mode).
losses::TeacherTargets distill_targets(model::DmlCsrNet& teacher, const Tensor& images);

struct EvalResult {
  double mean_f1 = 0, mean_iou = 0, overall_f1 = 0;
  metrics::PerClassF1 per_class;
  metrics::ConfusionMatrix cm;
};

EvalResult evaluate(model::DmlCsrNet& net, const Dataset& ds, int batch_size,
                    const std::vector<std::vector<int>>& groups);

// CSR bookkeeping across cycles.
struct CycleState {
  int k = 0;
  std::vector<WeightRecord> models_in_cycle;
  WeightRecord best;
  double best_metric = -1.0;
};

struct TrainOptions {
  int epochs_init = 30;
  int cycles = 5;           // K
  int epochs_per_cycle = 3; // N
  int batch_size = 8;
  double lr = 0.01;         // phase-1 base lr (poly decay, power 0.9)
  double lr_csr = 5e-4;     // phase-2 per-cycle cosine start
  double lr_min = 1e-5;     // cosine floor
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool augment = true;       // phase-1 rotation/scale augmentation
  bool augment_csr = false;  // phase 2 trains on un-augmented samples by default
  bool distill_gt = true;    // keep ground-truth dml term during phase 2
  std::uint64_t seed = 1;
  losses::LossWeights loss;
  std::string out_dir;       // checkpoints written here when non-empty
  std::vector<std::vector<int>> eval_groups;
};

struct TrainDiverged : std::runtime_error {
  explicit TrainDiverged(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainResult {
  WeightRecord best;
  double best_val_mean_f1 = 0;
  double phase1_val_mean_f1 = 0;  // metric of the phase-1 selection
  std::vector<std::string> log_lines;  // one JSON object per line
};

TrainResult run_training(model::DmlCsrNet& net, const Dataset& train, const Dataset& val,
                         const TrainOptions& opt, std::ostream* live_log = nullptr);

}  // namespace dmlcsr::csr
