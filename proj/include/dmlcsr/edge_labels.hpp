#pragma once

#include <cstdint>
#include <vector>

#include "dmlcsr/tensor.hpp"

namespace dmlcsr::edge_labels {

// Binary + per-class edge pseudo-labels generated from a label map, with the
// edge-pixel counts b_i / c_ij consumed by the attention losses.
struct EdgeLabels {
  LabelMap binary;                     // B: 1 iff a 4-neighbor differs
  std::vector<LabelMap> per_class;     // C_j: interior boundary of class-j mask
  std::int64_t binary_count = 0;       // b
  std::vector<std::int64_t> per_class_counts;  // c_j
};

// pixel p is 1 iff any in-bounds 4-neighbor carries a different label
LabelMap binary_edges(const LabelMap& labels);

// channel j marks p iff labels[p]==j and some 4-neighbor differs;
// channels are disjoint and OR to binary_edges(labels)
std::vector<LabelMap> category_edges(const LabelMap& labels, int num_classes);

EdgeLabels make_edge_labels(const LabelMap& labels, int num_classes);

// Optional edge thickening (config knob, not a paper claim): dilates each
// edge raster `extra` times with the 4-neighbor element. extra=0 is the
// 1-pixel default used everywhere.
LabelMap dilate4(const LabelMap& mask, int times);

}  // namespace dmlcsr::edge_labels
