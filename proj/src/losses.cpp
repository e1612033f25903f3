#include "dmlcsr/losses.hpp"

#include <omp.h>

#include "dmlcsr/edge_labels.hpp"

namespace dmlcsr::losses {

void LossWeights::validate(int num_classes) const {
  for (double v : {lambda0, lambda1, lambda2, lambda3, lambda4, alpha0, alpha1, alpha2})
    if (v < 0) throw std::invalid_argument("LossWeights: negative weight");
  if (static_cast<int>(class_weights.size()) != num_classes)
    throw std::invalid_argument("LossWeights: class_weights length != num_classes");
  for (double v : class_weights)
    if (v < 0) throw std::invalid_argument("LossWeights: negative class weight");
}

LossWeights LossWeights::defaults(int num_classes) {
  LossWeights w;
  w.class_weights.assign(num_classes, 1.0);
  for (int j : {7, 8, 9})
    if (j < num_classes) w.class_weights[j] = 2.0;
  return w;
}

EdgeBatch make_edge_batch(const LabelBatch& labels, int num_classes) {
  EdgeBatch e;
  e.n = labels.n;
  e.c = num_classes;
  e.h = labels.h;
  e.w = labels.w;
  const std::size_t plane = static_cast<std::size_t>(e.h) * e.w;
  e.binary.assign(static_cast<std::size_t>(e.n) * plane, 0);
  e.per_class.assign(static_cast<std::size_t>(e.n) * num_classes * plane, 0);
  e.binary_counts.assign(e.n, 0);
  e.class_counts.assign(static_cast<std::size_t>(e.n) * num_classes, 0);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < e.n; ++i) {
    LabelMap m(e.h, e.w);
    std::copy(labels.sample(i), labels.sample(i) + plane, m.v.begin());
    edge_labels::EdgeLabels el = edge_labels::make_edge_labels(m, num_classes);
    std::copy(el.binary.v.begin(), el.binary.v.end(),
              e.binary.begin() + static_cast<std::size_t>(i) * plane);
    e.binary_counts[i] = el.binary_count;
    for (int j = 0; j < num_classes; ++j) {
      std::copy(el.per_class[j].v.begin(), el.per_class[j].v.end(),
                e.per_class.begin() + (static_cast<std::size_t>(i) * num_classes + j) * plane);
      e.class_counts[static_cast<std::size_t>(i) * num_classes + j] =
          el.per_class_counts[j];
    }
  }
  return e;
}

CeResult ce_loss(const Tensor& logits, const LabelBatch& labels) {
  CeResult r;
  r.per_pixel.resize(logits.n, 1, logits.h, logits.w);
  r.loss = detail::softmax_ce<float>(logits.data(), logits.n, logits.c, logits.plane(),
                                     labels.v.data(), r.per_pixel.data(), nullptr, 0.0);
  return r;
}

double weighted_ce_edge_binary(const Tensor& logits2, const LabelBatch& edge01) {
  if (logits2.c != 2)
    throw std::invalid_argument("weighted_ce_edge_binary: expected 2 channels");
  return detail::weighted_two_class_ce<float>(logits2.data(), logits2.n,
                                              logits2.plane(), edge01.v.data(), nullptr,
                                              0.0);
}

double weighted_ce_edge_category(const Tensor& logitsC, const EdgeBatch& edges) {
  return detail::weighted_bce_category<float>(logitsC.data(), logitsC.n, logitsC.c,
                                              logitsC.plane(), edges.per_class.data(),
                                              nullptr, 0.0);
}

Tensor softmax(const Tensor& logits) {
  Tensor probs;
  probs.resize_like(logits);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < logits.n; ++i)
    detail::softmax_plane<float>(logits.sample(i), logits.c, logits.plane(),
                                 probs.sample(i));
  return probs;
}

double lovasz_softmax(const Tensor& probs, const LabelBatch& labels) {
  return detail::lovasz_softmax_probs<float>(probs.data(), probs.n, probs.c,
                                             probs.plane(), labels.v.data(), nullptr,
                                             0.0);
}

double edge_attention_binary(const Tensor& per_pixel_ce, const EdgeBatch& edges) {
  return detail::attention_binary_value<float>(per_pixel_ce.data(), per_pixel_ce.n,
                                               per_pixel_ce.plane(), edges.binary.data(),
                                               edges.binary_counts.data());
}

double edge_attention_category(const Tensor& per_pixel_ce, const EdgeBatch& edges,
                               const std::vector<double>& class_weights) {
  return detail::attention_category_value<float>(
      per_pixel_ce.data(), per_pixel_ce.n, edges.c, per_pixel_ce.plane(),
      edges.per_class.data(), edges.class_counts.data(), class_weights.data());
}

DmlBreakdown dml_loss(const Outputs& out, const LabelBatch& labels, const EdgeBatch& edges,
                      const LossWeights& w, Tensor* dparse, Tensor* dbinary,
                      Tensor* dcategory) {
  const Tensor& parse = *out.parse;
  const int n = parse.n, c = parse.c, hw = parse.plane();
  w.validate(c);

  DmlBreakdown b;
  Tensor per_pixel(n, 1, parse.h, parse.w);

  // parse CE (value + raster) and its gradient at weight lambda0/(NHW)
  b.ce = detail::softmax_ce<float>(parse.data(), n, c, hw, labels.v.data(),
                                   per_pixel.data(), dparse ? dparse->data() : nullptr,
                                   w.lambda0);

  // Lovász on softmax probabilities, chained back through softmax
  Tensor probs = softmax(parse);
  if (dparse && w.lambda0 > 0) {
    Tensor dprobs;
    dprobs.resize_like(probs);
    b.lovasz = detail::lovasz_softmax_probs<float>(probs.data(), n, c, hw,
                                                   labels.v.data(), dprobs.data(),
                                                   w.lambda0);
    detail::softmax_chain<float>(probs.data(), dprobs.data(), n, c, hw, dparse->data());
  } else {
    b.lovasz = detail::lovasz_softmax_probs<float>(probs.data(), n, c, hw,
                                                   labels.v.data(), nullptr, 0.0);
  }

  // dual edge attention terms share one weighted-CE gradient pass
  b.battn = detail::attention_binary_value<float>(per_pixel.data(), n, hw,
                                                  edges.binary.data(),
                                                  edges.binary_counts.data());
  b.cattn = detail::attention_category_value<float>(per_pixel.data(), n, c, hw,
                                                    edges.per_class.data(),
                                                    edges.class_counts.data(),
                                                    w.class_weights.data());
  if (dparse && (w.lambda3 > 0 || w.lambda4 > 0)) {
    std::vector<float> wmap(static_cast<std::size_t>(n) * hw, 0.0f);
    for (int i = 0; i < n; ++i) {
      float* row = wmap.data() + static_cast<std::size_t>(i) * hw;
      if (w.lambda3 > 0 && edges.binary_counts[i] > 0) {
        const float wi = static_cast<float>(
            w.lambda3 / (static_cast<double>(n) * edges.binary_counts[i]));
        const std::uint8_t* m = edges.binary.data() + static_cast<std::size_t>(i) * hw;
        for (int p = 0; p < hw; ++p)
          if (m[p]) row[p] += wi;
      }
      if (w.lambda4 > 0)
        for (int j = 0; j < c; ++j) {
          const std::int64_t cnt = edges.class_counts[static_cast<std::size_t>(i) * c + j];
          if (cnt <= 0) continue;
          const float wj = static_cast<float>(
              w.lambda4 * w.class_weights[j] / (static_cast<double>(n) * c * cnt));
          const std::uint8_t* m =
              edges.per_class.data() + (static_cast<std::size_t>(i) * c + j) * hw;
          for (int p = 0; p < hw; ++p)
            if (m[p]) row[p] += wj;
        }
    }
    detail::weighted_softmax_ce_grad<float>(parse.data(), n, c, hw, labels.v.data(),
                                            wmap.data(), dparse->data());
  }

  if (out.binary) {
    LabelBatch bl;
    bl.n = n;
    bl.h = parse.h;
    bl.w = parse.w;
    bl.v = edges.binary;
    b.bce = detail::weighted_two_class_ce<float>(out.binary->data(), n, hw, bl.v.data(),
                                                 dbinary ? dbinary->data() : nullptr,
                                                 w.lambda1);
  }
  if (out.category)
    b.cce = detail::weighted_bce_category<float>(out.category->data(), n, c, hw,
                                                 edges.per_class.data(),
                                                 dcategory ? dcategory->data() : nullptr,
                                                 w.lambda2);

  b.total = w.lambda0 * (b.ce + b.lovasz) + w.lambda1 * b.bce + w.lambda2 * b.cce +
            w.lambda3 * b.battn + w.lambda4 * b.cattn;
  return b;
}

CsrBreakdown csr_loss(const Outputs& student, const TeacherTargets& teacher,
                      const LossWeights& w, Tensor* dparse, Tensor* dbinary,
                      Tensor* dcategory) {
  const Tensor& parse = *student.parse;
  const bool has_bin = student.binary && teacher.binary_probs.n > 0;
  const bool has_cat = student.category && teacher.category_probs.n > 0;
  detail::CsrValues v = detail::csr_loss_t<float>(
      parse.data(), has_bin ? student.binary->data() : nullptr,
      has_cat ? student.category->data() : nullptr, teacher.parse_probs.data(),
      has_bin ? teacher.binary_probs.data() : nullptr,
      has_cat ? teacher.category_probs.data() : nullptr, parse.n, parse.c,
      parse.plane(), w.alpha0, w.alpha1, w.alpha2, dparse ? dparse->data() : nullptr,
      has_bin && dbinary ? dbinary->data() : nullptr,
      has_cat && dcategory ? dcategory->data() : nullptr);
  CsrBreakdown b;
  b.total = v.total;
  b.kl_parse = v.kl_parse;
  b.lovasz = v.lovasz;
  b.kl_binary = v.kl_binary;
  b.kl_category = v.kl_category;
  return b;
}

}  // namespace dmlcsr::losses
