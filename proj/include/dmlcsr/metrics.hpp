#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmlcsr/tensor.hpp"

namespace dmlcsr::metrics {

// Row = ground truth class, column = predicted class. Mergeable: matrices
// from disjoint pixel sets sum to the matrix of the union.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::int64_t> counts;  // num_classes * num_classes

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int nc)
      : num_classes(nc), counts(static_cast<std::size_t>(nc) * nc, 0) {}

  std::int64_t& at(int truth, int pred) {
    return counts[static_cast<std::size_t>(truth) * num_classes + pred];
  }
  std::int64_t at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth) * num_classes + pred];
  }
  std::int64_t total() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
};

void accumulate(ConfusionMatrix& cm, const LabelMap& predicted, const LabelMap& truth);

struct PerClassF1 {
  std::vector<double> f1;      // F1_j = 2TP/(2TP+FP+FN); 1.0 for absent classes
  std::vector<bool> absent;    // no truth and no prediction for the class
};

PerClassF1 per_class_f1(const ConfusionMatrix& cm);

// arithmetic mean of per-class F1 over classes 1..num_classes-1
double mean_f1(const ConfusionMatrix& cm);

// micro F1 over grouped TP/FP/FN after collapsing each group of foreground
// classes to a single class; pixels outside all groups are ignored
double overall_f1(const ConfusionMatrix& cm, const std::vector<std::vector<int>>& groups);

// mean over classes of TP/(TP+FP+FN); absent classes excluded from the mean
double mean_iou(const ConfusionMatrix& cm);

}  // namespace dmlcsr::metrics
