#include "dmlcsr/edge_labels.hpp"

#include <stdexcept>

namespace dmlcsr::edge_labels {

LabelMap binary_edges(const LabelMap& labels) {
  const int h = labels.h, w = labels.w;
  LabelMap out(h, w);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* row = labels.v.data() + static_cast<std::size_t>(y) * w;
    const std::uint8_t* up = y > 0 ? row - w : nullptr;
    const std::uint8_t* dn = y + 1 < h ? row + w : nullptr;
    std::uint8_t* o = out.v.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      const std::uint8_t c = row[x];
      bool e = (x > 0 && row[x - 1] != c) || (x + 1 < w && row[x + 1] != c) ||
               (up && up[x] != c) || (dn && dn[x] != c);
      o[x] = e ? 1 : 0;
    }
  }
  return out;
}

std::vector<LabelMap> category_edges(const LabelMap& labels, int num_classes) {
  for (std::uint8_t l : labels.v)
    if (l >= num_classes)
      throw std::invalid_argument("category_edges: label value out of range");
  const int h = labels.h, w = labels.w;
  std::vector<LabelMap> out(num_classes, LabelMap(h, w));
  LabelMap bin = binary_edges(labels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (bin.at(y, x)) out[labels.at(y, x)].at(y, x) = 1;
  return out;
}

EdgeLabels make_edge_labels(const LabelMap& labels, int num_classes) {
  EdgeLabels e;
  e.binary = binary_edges(labels);
  e.per_class = category_edges(labels, num_classes);
  e.binary_count = 0;
  for (std::uint8_t b : e.binary.v) e.binary_count += b;
  e.per_class_counts.assign(num_classes, 0);
  for (int j = 0; j < num_classes; ++j)
    for (std::uint8_t b : e.per_class[j].v) e.per_class_counts[j] += b;
  return e;
}

LabelMap dilate4(const LabelMap& mask, int times) {
  LabelMap cur = mask;
  const int h = mask.h, w = mask.w;
  for (int t = 0; t < times; ++t) {
    LabelMap next = cur;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (cur.at(y, x)) continue;
        bool on = (x > 0 && cur.at(y, x - 1)) || (x + 1 < w && cur.at(y, x + 1)) ||
                  (y > 0 && cur.at(y - 1, x)) || (y + 1 < h && cur.at(y + 1, x));
        if (on) next.at(y, x) = 1;
      }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace dmlcsr::edge_labels
