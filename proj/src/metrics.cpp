#include "dmlcsr/metrics.hpp"

#include <stdexcept>

namespace dmlcsr::metrics {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (std::int64_t c : counts) t += c;
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  if (num_classes != o.num_classes)
    throw std::invalid_argument("ConfusionMatrix: size mismatch in merge");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
  return *this;
}

void accumulate(ConfusionMatrix& cm, const LabelMap& predicted, const LabelMap& truth) {
  if (predicted.h != truth.h || predicted.w != truth.w)
    throw std::invalid_argument("accumulate: prediction/truth shape mismatch");
  const int nc = cm.num_classes;
  for (std::size_t i = 0; i < truth.v.size(); ++i) {
    const int g = truth.v[i], p = predicted.v[i];
    if (g >= nc || p >= nc)
      throw std::invalid_argument("accumulate: class index out of range");
    ++cm.counts[static_cast<std::size_t>(g) * nc + p];
  }
}

namespace {
struct Tally {
  std::int64_t tp = 0, fp = 0, fn = 0;
};

Tally tally_class(const ConfusionMatrix& cm, int j) {
  Tally t;
  t.tp = cm.at(j, j);
  for (int k = 0; k < cm.num_classes; ++k) {
    if (k == j) continue;
    t.fp += cm.at(k, j);
    t.fn += cm.at(j, k);
  }
  return t;
}
}  // namespace

PerClassF1 per_class_f1(const ConfusionMatrix& cm) {
  PerClassF1 out;
  out.f1.resize(cm.num_classes);
  out.absent.resize(cm.num_classes);
  for (int j = 0; j < cm.num_classes; ++j) {
    Tally t = tally_class(cm, j);
    if (t.tp + t.fp + t.fn == 0) {
      // no support and no predictions: 1.0 by convention, flagged
      out.f1[j] = 1.0;
      out.absent[j] = true;
    } else {
      out.f1[j] = 2.0 * static_cast<double>(t.tp) /
                  static_cast<double>(2 * t.tp + t.fp + t.fn);
      out.absent[j] = false;
    }
  }
  return out;
}

double mean_f1(const ConfusionMatrix& cm) {
  PerClassF1 pc = per_class_f1(cm);
  double s = 0.0;
  int count = 0;
  for (int j = 1; j < cm.num_classes; ++j) {
    s += pc.f1[j];
    ++count;
  }
  return count > 0 ? s / count : 0.0;
}

double overall_f1(const ConfusionMatrix& cm, const std::vector<std::vector<int>>& groups) {
  const int nc = cm.num_classes;
  std::vector<int> group_of(nc, -1);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (int j : groups[g]) {
      if (j <= 0 || j >= nc)
        throw std::invalid_argument("overall_f1: group member out of foreground range");
      if (group_of[j] != -1) throw std::invalid_argument("overall_f1: overlapping groups");
      group_of[j] = static_cast<int>(g);
    }
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (int g = 0; g < nc; ++g)
    for (int p = 0; p < nc; ++p) {
      const std::int64_t c = cm.at(g, p);
      if (c == 0) continue;
      const int gg = group_of[g], gp = group_of[p];
      if (gg == -1 && gp == -1) continue;
      if (gg != -1 && gg == gp)
        tp += c;
      else {
        if (gg != -1) fn += c;
        if (gp != -1) fp += c;
      }
    }
  const std::int64_t denom = 2 * tp + fp + fn;
  return denom > 0 ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom) : 1.0;
}

double mean_iou(const ConfusionMatrix& cm) {
  double s = 0.0;
  int count = 0;
  for (int j = 0; j < cm.num_classes; ++j) {
    Tally t = tally_class(cm, j);
    const std::int64_t denom = t.tp + t.fp + t.fn;
    if (denom == 0) continue;  // absent class
    s += static_cast<double>(t.tp) / static_cast<double>(denom);
    ++count;
  }
  return count > 0 ? s / count : 0.0;
}

}  // namespace dmlcsr::metrics
