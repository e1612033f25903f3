#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dmlcsr/tensor.hpp"

namespace dmlcsr::losses {

// lambda0..4 weight Eq-style DML terms, alpha0..2 the self-distillation terms,
// class_weights the per-class w_j of the category attention loss.
struct LossWeights {
  double lambda0 = 1.0, lambda1 = 1.0, lambda2 = 1.0, lambda3 = 4.0, lambda4 = 1.0;
  double alpha0 = 1.0, alpha1 = 1.0, alpha2 = 0.1;
  std::vector<double> class_weights;

  void validate(int num_classes) const;
  // w_j = 1 everywhere except the thin lip-band classes (7,8,9) at 2
  static LossWeights defaults(int num_classes);
};

// Binary + per-class edge masks for a label batch, with per-image counts.
struct EdgeBatch {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<std::uint8_t> binary;            // (n,h,w)
  std::vector<std::uint8_t> per_class;         // (n,c,h,w)
  std::vector<std::int64_t> binary_counts;     // b_i
  std::vector<std::int64_t> class_counts;      // c_ij, (n,c)
};

EdgeBatch make_edge_batch(const LabelBatch& labels, int num_classes);

// ---------------------------------------------------------------------------
// Templated loss kernels. Instantiated at float for training and at double by
// the finite-difference suite. All reductions accumulate in double and run in
// fixed order; gradients are scaled by `scale` and accumulated into `grad`.

namespace detail {

// tagged thread-local scratch so nested kernels never alias each other
template <class T, int Tag = 0>
T* scratch(std::size_t size) {
  static thread_local std::vector<T> buf;
  if (buf.size() < size) buf.resize(size);
  return buf.data();
}

// softmax over channels; probs is a caller-owned (c,hw) buffer
template <class T>
void softmax_plane(const T* logits, int c, int hw, T* probs) {
  T* maxv = scratch<T, 1>(static_cast<std::size_t>(hw) * 2);
  T* sum = maxv + hw;
  for (int p = 0; p < hw; ++p) maxv[p] = logits[p];
  for (int ch = 1; ch < c; ++ch) {
    const T* z = logits + static_cast<std::size_t>(ch) * hw;
    for (int p = 0; p < hw; ++p)
      if (z[p] > maxv[p]) maxv[p] = z[p];
  }
  std::fill(sum, sum + hw, T(0));
  for (int ch = 0; ch < c; ++ch) {
    const T* z = logits + static_cast<std::size_t>(ch) * hw;
    T* pr = probs + static_cast<std::size_t>(ch) * hw;
    for (int p = 0; p < hw; ++p) {
      pr[p] = std::exp(z[p] - maxv[p]);
      sum[p] += pr[p];
    }
  }
  for (int ch = 0; ch < c; ++ch) {
    T* pr = probs + static_cast<std::size_t>(ch) * hw;
    for (int p = 0; p < hw; ++p) pr[p] /= sum[p];
  }
}

// mean softmax cross-entropy; optional per-pixel raster and gradient
template <class T>
double softmax_ce(const T* logits, int n, int c, int hw, const std::uint8_t* labels,
                  T* per_pixel, T* grad, double scale) {
  for (std::size_t p = 0; p < static_cast<std::size_t>(n) * hw; ++p)
    if (labels[p] >= c) throw std::invalid_argument("softmax_ce: label out of range");
  const double inv = 1.0 / (static_cast<double>(n) * hw);
  std::vector<double> part(n, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const T* z = logits + static_cast<std::size_t>(i) * c * hw;
    const std::uint8_t* y = labels + static_cast<std::size_t>(i) * hw;
    T* probs = scratch<T, 0>(static_cast<std::size_t>(c) * hw);
    softmax_plane(z, c, hw, probs);
    double acc = 0.0;
    for (int p = 0; p < hw; ++p) {
      const T pr = probs[static_cast<std::size_t>(y[p]) * hw + p];
      const T ce = -std::log(std::max(pr, std::numeric_limits<T>::min()));
      if (per_pixel) per_pixel[static_cast<std::size_t>(i) * hw + p] = ce;
      acc += ce;
    }
    part[i] = acc;
    if (grad) {
      T* g = grad + static_cast<std::size_t>(i) * c * hw;
      const T s = static_cast<T>(scale * inv);
      for (int ch = 0; ch < c; ++ch) {
        const T* pr = probs + static_cast<std::size_t>(ch) * hw;
        T* gc = g + static_cast<std::size_t>(ch) * hw;
        for (int p = 0; p < hw; ++p)
          gc[p] += s * (pr[p] - (y[p] == ch ? T(1) : T(0)));
      }
    }
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += part[i];
  return total * inv;
}

// generic pixel-weighted softmax CE gradient: grad += w_p * (softmax - onehot).
// weights is an (n,hw) raster; used by the fused attention-loss backward.
template <class T>
void weighted_softmax_ce_grad(const T* logits, int n, int c, int hw,
                              const std::uint8_t* labels, const T* weights, T* grad) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const T* z = logits + static_cast<std::size_t>(i) * c * hw;
    const std::uint8_t* y = labels + static_cast<std::size_t>(i) * hw;
    const T* wp = weights + static_cast<std::size_t>(i) * hw;
    T* g = grad + static_cast<std::size_t>(i) * c * hw;
    T* probs = scratch<T, 0>(static_cast<std::size_t>(c) * hw);
    softmax_plane(z, c, hw, probs);
    for (int ch = 0; ch < c; ++ch) {
      const T* pr = probs + static_cast<std::size_t>(ch) * hw;
      T* gc = g + static_cast<std::size_t>(ch) * hw;
      for (int p = 0; p < hw; ++p)
        if (wp[p] != T(0)) gc[p] += wp[p] * (pr[p] - (y[p] == ch ? T(1) : T(0)));
    }
  }
}

// two-class softmax CE with the positive class weighted by the batch
// neg/pos ratio clamped to [1,100]; normalized by the total weight
template <class T>
double weighted_two_class_ce(const T* logits, int n, int hw, const std::uint8_t* labels,
                             T* grad, double scale) {
  const std::size_t total = static_cast<std::size_t>(n) * hw;
  std::int64_t pos = 0;
  for (std::size_t p = 0; p < total; ++p) pos += labels[p];
  const std::int64_t neg = static_cast<std::int64_t>(total) - pos;
  const double wpos =
      pos > 0 ? std::clamp(static_cast<double>(neg) / static_cast<double>(pos), 1.0, 100.0)
              : 1.0;
  const double wsum = static_cast<double>(neg) + wpos * static_cast<double>(pos);

  std::vector<double> part(n, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const T* z0 = logits + static_cast<std::size_t>(i) * 2 * hw;
    const T* z1 = z0 + hw;
    const std::uint8_t* y = labels + static_cast<std::size_t>(i) * hw;
    double acc = 0.0;
    for (int p = 0; p < hw; ++p) {
      // margin of the true class; ce = log(1+exp(-m))
      const T m = y[p] ? z1[p] - z0[p] : z0[p] - z1[p];
      const double ce = m > 0 ? std::log1p(std::exp(static_cast<double>(-m)))
                              : -static_cast<double>(m) +
                                    std::log1p(std::exp(static_cast<double>(m)));
      const double w = y[p] ? wpos : 1.0;
      acc += w * ce;
      if (grad) {
        // softmax of channel 1
        const double s1 = 1.0 / (1.0 + std::exp(static_cast<double>(z0[p] - z1[p])));
        const double g1 = w * (s1 - (y[p] ? 1.0 : 0.0)) * scale / wsum;
        T* g = grad + static_cast<std::size_t>(i) * 2 * hw;
        g[p] += static_cast<T>(-g1);
        g[static_cast<std::size_t>(hw) + p] += static_cast<T>(g1);
      }
    }
    part[i] = acc;
  }
  double loss = 0.0;
  for (int i = 0; i < n; ++i) loss += part[i];
  return loss / wsum;
}

// per-channel weighted binary CE with logits (category edge head);
// channel weights use the per-channel neg/pos ratio, mean over channels
template <class T>
double weighted_bce_category(const T* logits, int n, int c, int hw,
                             const std::uint8_t* labels, T* grad, double scale) {
  const std::size_t plane = static_cast<std::size_t>(hw);
  std::vector<double> loss_c(c, 0.0);
  std::vector<double> wpos(c), wsum(c);
  for (int ch = 0; ch < c; ++ch) {
    std::int64_t pos = 0;
    for (int i = 0; i < n; ++i) {
      const std::uint8_t* y = labels + (static_cast<std::size_t>(i) * c + ch) * plane;
      for (int p = 0; p < hw; ++p) pos += y[p];
    }
    const std::int64_t neg = static_cast<std::int64_t>(n) * hw - pos;
    wpos[ch] = pos > 0 ? std::clamp(static_cast<double>(neg) / static_cast<double>(pos),
                                    1.0, 100.0)
                       : 1.0;
    wsum[ch] = static_cast<double>(neg) + wpos[ch] * static_cast<double>(pos);
  }
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const T* z = logits + (static_cast<std::size_t>(i) * c + ch) * plane;
      const std::uint8_t* y = labels + (static_cast<std::size_t>(i) * c + ch) * plane;
      T* g = grad ? grad + (static_cast<std::size_t>(i) * c + ch) * plane : nullptr;
      for (int p = 0; p < hw; ++p) {
        const double zp = z[p];
        const double softplus =
            zp > 0 ? zp + std::log1p(std::exp(-zp)) : std::log1p(std::exp(zp));
        const double w = y[p] ? wpos[ch] : 1.0;
        acc += w * (softplus - (y[p] ? zp : 0.0));
        if (g) {
          const double s = 1.0 / (1.0 + std::exp(-zp));
          g[p] += static_cast<T>(w * (s - (y[p] ? 1.0 : 0.0)) * scale / (wsum[ch] * c));
        }
      }
    }
    loss_c[ch] = acc / wsum[ch];
  }
  double loss = 0.0;
  for (int ch = 0; ch < c; ++ch) loss += loss_c[ch];
  return loss / c;
}

// canonical error ordering: descending error, ascending index on ties
template <class T>
void sort_desc_with_index(const std::vector<T>& err, std::vector<std::uint32_t>& order);

template <>
inline void sort_desc_with_index<float>(const std::vector<float>& err,
                                        std::vector<std::uint32_t>& order) {
  const std::size_t m = err.size();
  std::vector<std::pair<std::uint32_t, std::uint32_t>> a(m), b(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::uint32_t u;
    static_assert(sizeof(float) == 4);
    std::memcpy(&u, &err[i], 4);
    u = (u & 0x80000000u) ? ~u : (u | 0x80000000u);  // order-preserving map
    a[i] = {~u, static_cast<std::uint32_t>(i)};      // flipped: ascending = err desc
  }
  std::array<std::uint32_t, 256> cnt;
  for (int pass = 0; pass < 4; ++pass) {
    cnt.fill(0);
    const int shift = pass * 8;
    for (auto& kv : a) ++cnt[(kv.first >> shift) & 0xff];
    std::uint32_t run = 0;
    for (int v = 0; v < 256; ++v) {
      const std::uint32_t c0 = cnt[v];
      cnt[v] = run;
      run += c0;
    }
    for (auto& kv : a) b[cnt[(kv.first >> shift) & 0xff]++] = kv;
    std::swap(a, b);
  }
  order.resize(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = a[i].second;
}

template <>
inline void sort_desc_with_index<double>(const std::vector<double>& err,
                                         std::vector<std::uint32_t>& order) {
  order.resize(err.size());
  for (std::size_t i = 0; i < err.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
  std::sort(order.begin(), order.end(), [&](std::uint32_t x, std::uint32_t y) {
    if (err[x] != err[y]) return err[x] > err[y];
    return x < y;
  });
}

// Lovász-softmax over batch-flattened pixels, mean over classes present in
// the ground truth. probs layout (n,c,hw); dprobs accumulated when non-null.
template <class T>
double lovasz_softmax_probs(const T* probs, int n, int c, int hw,
                            const std::uint8_t* labels, T* dprobs, double scale) {
  const std::size_t P = static_cast<std::size_t>(n) * hw;
  std::vector<char> present(c, 0);
  for (std::size_t p = 0; p < P; ++p) present[labels[p]] = 1;
  int n_present = 0;
  for (int j = 0; j < c; ++j) n_present += present[j];
  if (n_present == 0) return 0.0;
  const double inv = 1.0 / n_present;

  std::vector<double> loss_c(c, 0.0);
#pragma omp parallel for schedule(static)
  for (int j = 0; j < c; ++j) {
    if (!present[j]) continue;
    std::vector<T> err(P);
    std::vector<std::uint8_t> gt(P);
    std::int64_t total_gt = 0;
    for (int i = 0; i < n; ++i) {
      const T* pj = probs + (static_cast<std::size_t>(i) * c + j) * hw;
      const std::uint8_t* y = labels + static_cast<std::size_t>(i) * hw;
      for (int p = 0; p < hw; ++p) {
        const std::size_t q = static_cast<std::size_t>(i) * hw + p;
        gt[q] = (y[p] == j) ? 1 : 0;
        err[q] = gt[q] ? T(1) - pj[p] : pj[p];
        total_gt += gt[q];
      }
    }
    std::vector<std::uint32_t> order;
    sort_desc_with_index<T>(err, order);

    // discrete gradient of the Lovász extension of the Jaccard loss
    double acc = 0.0;
    double inter = static_cast<double>(total_gt);
    double uni = static_cast<double>(total_gt);
    double prev_jacc = 0.0;
    for (std::size_t r = 0; r < P; ++r) {
      const std::uint32_t q = order[r];
      if (gt[q])
        inter -= 1.0;
      else
        uni += 1.0;
      const double jacc = 1.0 - inter / uni;
      const double g = jacc - prev_jacc;
      prev_jacc = jacc;
      acc += static_cast<double>(err[q]) * g;
      if (dprobs) {
        const int i = static_cast<int>(q / hw), p = static_cast<int>(q % hw);
        const T sign = gt[q] ? T(-1) : T(1);
        dprobs[(static_cast<std::size_t>(i) * c + j) * hw + p] +=
            static_cast<T>(sign * g * scale * inv);
      }
    }
    loss_c[j] = acc;
  }
  double loss = 0.0;
  for (int j = 0; j < c; ++j) loss += loss_c[j];
  return loss * inv;
}

// chain rule through softmax: dlogits += s * (dprobs - sum_k dprobs_k s_k)
template <class T>
void softmax_chain(const T* probs, const T* dprobs, int n, int c, int hw, T* dlogits) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const T* pr = probs + static_cast<std::size_t>(i) * c * hw;
    const T* dp = dprobs + static_cast<std::size_t>(i) * c * hw;
    T* dz = dlogits + static_cast<std::size_t>(i) * c * hw;
    T* dot = scratch<T, 0>(hw);
    std::fill(dot, dot + hw, T(0));
    for (int ch = 0; ch < c; ++ch) {
      const T* prc = pr + static_cast<std::size_t>(ch) * hw;
      const T* dpc = dp + static_cast<std::size_t>(ch) * hw;
      for (int p = 0; p < hw; ++p) dot[p] += dpc[p] * prc[p];
    }
    for (int ch = 0; ch < c; ++ch) {
      const T* prc = pr + static_cast<std::size_t>(ch) * hw;
      const T* dpc = dp + static_cast<std::size_t>(ch) * hw;
      T* dzc = dz + static_cast<std::size_t>(ch) * hw;
      for (int p = 0; p < hw; ++p) dzc[p] += prc[p] * (dpc[p] - dot[p]);
    }
  }
}

// Eq. 3 value from a per-pixel CE raster; images with b_i = 0 contribute 0
template <class T>
double attention_binary_value(const T* per_pixel, int n, int hw,
                              const std::uint8_t* bmask, const std::int64_t* bcounts) {
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (bcounts[i] <= 0) continue;
    const T* ce = per_pixel + static_cast<std::size_t>(i) * hw;
    const std::uint8_t* m = bmask + static_cast<std::size_t>(i) * hw;
    double acc = 0.0;
    for (int p = 0; p < hw; ++p)
      if (m[p]) acc += ce[p];
    total += acc / static_cast<double>(bcounts[i]);
  }
  return total / n;
}

// Eq. 4 value; classes with c_ij = 0 are skipped per image
template <class T>
double attention_category_value(const T* per_pixel, int n, int c, int hw,
                                const std::uint8_t* cmask, const std::int64_t* ccounts,
                                const double* class_weights) {
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const T* ce = per_pixel + static_cast<std::size_t>(i) * hw;
    for (int j = 0; j < c; ++j) {
      const std::int64_t cnt = ccounts[static_cast<std::size_t>(i) * c + j];
      if (cnt <= 0) continue;
      const std::uint8_t* m = cmask + (static_cast<std::size_t>(i) * c + j) * hw;
      double acc = 0.0;
      for (int p = 0; p < hw; ++p)
        if (m[p]) acc += ce[p];
      total += class_weights[j] * acc / static_cast<double>(cnt);
    }
  }
  return total / (static_cast<double>(n) * c);
}

// attention losses as functions of the parse logits (value + gradient)
template <class T>
double attention_binary(const T* logits, int n, int c, int hw, const std::uint8_t* labels,
                        const std::uint8_t* bmask, const std::int64_t* bcounts, T* grad,
                        double scale) {
  std::vector<T> per_pixel(static_cast<std::size_t>(n) * hw);
  softmax_ce<T>(logits, n, c, hw, labels, per_pixel.data(), nullptr, 0.0);
  const double v = attention_binary_value<T>(per_pixel.data(), n, hw, bmask, bcounts);
  if (grad) {
    std::vector<T> w(static_cast<std::size_t>(n) * hw, T(0));
    for (int i = 0; i < n; ++i) {
      if (bcounts[i] <= 0) continue;
      const T wi = static_cast<T>(scale / (static_cast<double>(n) * bcounts[i]));
      const std::uint8_t* m = bmask + static_cast<std::size_t>(i) * hw;
      T* wi_row = w.data() + static_cast<std::size_t>(i) * hw;
      for (int p = 0; p < hw; ++p)
        if (m[p]) wi_row[p] = wi;
    }
    weighted_softmax_ce_grad<T>(logits, n, c, hw, labels, w.data(), grad);
  }
  return v;
}

template <class T>
double attention_category(const T* logits, int n, int c, int hw,
                          const std::uint8_t* labels, const std::uint8_t* cmask,
                          const std::int64_t* ccounts, const double* class_weights,
                          T* grad, double scale) {
  std::vector<T> per_pixel(static_cast<std::size_t>(n) * hw);
  softmax_ce<T>(logits, n, c, hw, labels, per_pixel.data(), nullptr, 0.0);
  const double v = attention_category_value<T>(per_pixel.data(), n, c, hw, cmask,
                                               ccounts, class_weights);
  if (grad) {
    std::vector<T> w(static_cast<std::size_t>(n) * hw, T(0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        const std::int64_t cnt = ccounts[static_cast<std::size_t>(i) * c + j];
        if (cnt <= 0) continue;
        const T wj = static_cast<T>(scale * class_weights[j] /
                                    (static_cast<double>(n) * c * cnt));
        const std::uint8_t* m = cmask + (static_cast<std::size_t>(i) * c + j) * hw;
        T* w_row = w.data() + static_cast<std::size_t>(i) * hw;
        for (int p = 0; p < hw; ++p)
          if (m[p]) w_row[p] += wj;  // channels are disjoint; at most one term
      }
    weighted_softmax_ce_grad<T>(logits, n, c, hw, labels, w.data(), grad);
  }
  return v;
}

// forward KL(teacher || softmax(student)) per pixel, mean-reduced
template <class T>
double kl_categorical(const T* student_logits, const T* teacher_probs, int n, int c,
                      int hw, T* grad, double scale) {
  const double inv = 1.0 / (static_cast<double>(n) * hw);
  std::vector<double> part(n, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const T* z = student_logits + static_cast<std::size_t>(i) * c * hw;
    const T* t = teacher_probs + static_cast<std::size_t>(i) * c * hw;
    T* probs = scratch<T, 0>(static_cast<std::size_t>(c) * hw);
    softmax_plane(z, c, hw, probs);
    double acc = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      const T* tc = t + static_cast<std::size_t>(ch) * hw;
      const T* sc = probs + static_cast<std::size_t>(ch) * hw;
      T* gc = grad ? grad + (static_cast<std::size_t>(i) * c + ch) * hw : nullptr;
      for (int p = 0; p < hw; ++p) {
        if (tc[p] > T(0))
          acc += static_cast<double>(tc[p]) *
                 (std::log(static_cast<double>(tc[p])) -
                  std::log(std::max(static_cast<double>(sc[p]), 1e-300)));
        if (gc) gc[p] += static_cast<T>((sc[p] - tc[p]) * scale * inv);
      }
    }
    part[i] = acc;
  }
  double loss = 0.0;
  for (int i = 0; i < n; ++i) loss += part[i];
  return loss * inv;
}

// forward KL between Bernoulli maps: teacher prob vs sigmoid(student logit)
template <class T>
double kl_bernoulli(const T* student_logits, const T* teacher_probs, int n, int c,
                    int hw, T* grad, double scale) {
  const std::size_t total = static_cast<std::size_t>(n) * c * hw;
  const double inv = 1.0 / static_cast<double>(total);
  std::vector<double> part(n, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const T* z = student_logits + static_cast<std::size_t>(i) * c * hw;
    const T* t = teacher_probs + static_cast<std::size_t>(i) * c * hw;
    T* g = grad ? grad + static_cast<std::size_t>(i) * c * hw : nullptr;
    double acc = 0.0;
    const std::size_t sz = static_cast<std::size_t>(c) * hw;
    for (std::size_t p = 0; p < sz; ++p) {
      const double zp = z[p], tp = t[p];
      // log s = -softplus(-z), log(1-s) = -softplus(z)
      const double sp_pos = zp > 0 ? zp + std::log1p(std::exp(-zp)) : std::log1p(std::exp(zp));
      const double sp_neg = sp_pos - zp;  // softplus(-z)
      if (tp > 0.0) acc += tp * (std::log(tp) + sp_neg);
      if (tp < 1.0) acc += (1.0 - tp) * (std::log(1.0 - tp) + sp_pos);
      if (g) {
        const double s = 1.0 / (1.0 + std::exp(-zp));
        g[p] += static_cast<T>((s - tp) * scale * inv);
      }
    }
    part[i] = acc;
  }
  double loss = 0.0;
  for (int i = 0; i < n; ++i) loss += part[i];
  return loss * inv;
}

template <class T>
void argmax_labels(const T* probs, int n, int c, int hw, std::uint8_t* out) {
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < hw; ++p) {
      int best = 0;
      T bv = probs[(static_cast<std::size_t>(i) * c) * hw + p];
      for (int ch = 1; ch < c; ++ch) {
        const T v = probs[(static_cast<std::size_t>(i) * c + ch) * hw + p];
        if (v > bv) {
          bv = v;
          best = ch;
        }
      }
      out[static_cast<std::size_t>(i) * hw + p] = static_cast<std::uint8_t>(best);
    }
}

struct CsrValues {
  double total = 0, kl_parse = 0, lovasz = 0, kl_binary = 0, kl_category = 0;
};

// alpha0*(KL_parse + lovasz vs teacher argmax) + alpha1*KL_bin + alpha2*KL_cat
template <class T>
CsrValues csr_loss_t(const T* parse_logits, const T* bin_logits, const T* cat_logits,
                     const T* t_parse, const T* t_bin, const T* t_cat, int n, int c,
                     int hw, double alpha0, double alpha1, double alpha2, T* dparse,
                     T* dbin, T* dcat) {
  CsrValues v;
  v.kl_parse = kl_categorical<T>(parse_logits, t_parse, n, c, hw, dparse, alpha0);

  std::vector<std::uint8_t> hard(static_cast<std::size_t>(n) * hw);
  argmax_labels<T>(t_parse, n, c, hw, hard.data());
  std::vector<T> probs(static_cast<std::size_t>(n) * c * hw);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i)
    softmax_plane(parse_logits + static_cast<std::size_t>(i) * c * hw, c, hw,
                  probs.data() + static_cast<std::size_t>(i) * c * hw);
  if (dparse) {
    std::vector<T> dprobs(probs.size(), T(0));
    v.lovasz = lovasz_softmax_probs<T>(probs.data(), n, c, hw, hard.data(),
                                       dprobs.data(), alpha0);
    softmax_chain<T>(probs.data(), dprobs.data(), n, c, hw, dparse);
  } else {
    v.lovasz =
        lovasz_softmax_probs<T>(probs.data(), n, c, hw, hard.data(), nullptr, 0.0);
  }

  if (bin_logits && t_bin)
    v.kl_binary = kl_categorical<T>(bin_logits, t_bin, n, 2, hw, dbin, alpha1);
  if (cat_logits && t_cat)
    v.kl_category = kl_bernoulli<T>(cat_logits, t_cat, n, c, hw, dcat, alpha2);
  v.total = alpha0 * (v.kl_parse + v.lovasz) + alpha1 * v.kl_binary +
            alpha2 * v.kl_category;
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// float-facing API used by the trainer and the CLI

struct CeResult {
  double loss = 0;
  Tensor per_pixel;  // (N,1,H,W)
};

CeResult ce_loss(const Tensor& logits, const LabelBatch& labels);

double weighted_ce_edge_binary(const Tensor& logits2, const LabelBatch& edge01);
double weighted_ce_edge_category(const Tensor& logitsC, const EdgeBatch& edges);

Tensor softmax(const Tensor& logits);
double lovasz_softmax(const Tensor& probs, const LabelBatch& labels);

double edge_attention_binary(const Tensor& per_pixel_ce, const EdgeBatch& edges);
double edge_attention_category(const Tensor& per_pixel_ce, const EdgeBatch& edges,
                               const std::vector<double>& class_weights);

struct DmlBreakdown {
  double total = 0, ce = 0, lovasz = 0, bce = 0, cce = 0, battn = 0, cattn = 0;
};

struct Outputs {  // logits bundle, mirrors model::NetworkOutputs without the dependency
  const Tensor* parse = nullptr;
  const Tensor* binary = nullptr;
  const Tensor* category = nullptr;
};

// Eq-5 style combined objective; Eq-2's L_MT is the lambda3=lambda4=0 case.
// Gradients accumulate into the provided tensors when non-null.
DmlBreakdown dml_loss(const Outputs& out, const LabelBatch& labels, const EdgeBatch& edges,
                      const LossWeights& w, Tensor* dparse, Tensor* dbinary,
                      Tensor* dcategory);

struct TeacherTargets {
  Tensor parse_probs;     // (N,C,H,W)
  Tensor binary_probs;    // (N,2,H,W)
  Tensor category_probs;  // (N,C,H,W), per-channel Bernoulli
};

struct CsrBreakdown {
  double total = 0, kl_parse = 0, lovasz = 0, kl_binary = 0, kl_category = 0;
};

CsrBreakdown csr_loss(const Outputs& student, const TeacherTargets& teacher,
                      const LossWeights& w, Tensor* dparse, Tensor* dbinary,
                      Tensor* dcategory);

}  // namespace dmlcsr::losses
