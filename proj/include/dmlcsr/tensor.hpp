#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmlcsr {

// Dense float32 NCHW tensor. All layer/loss code operates on this layout;
// matrices for the graph branches are viewed as (C, H*W) slices.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_) { resize(n_, c_, h_, w_); }

  void resize(int n_, int c_, int h_, int w_) {
    n = n_;
    c = c_;
    h = h_;
    w = w_;
    v.assign(static_cast<std::size_t>(n) * c * h * w, 0.0f);
  }
  void resize_like(const Tensor& o) { resize(o.n, o.c, o.h, o.w); }

  std::size_t size() const { return v.size(); }
  int plane() const { return h * w; }

  float* data() { return v.data(); }
  const float* data() const { return v.data(); }

  // pointer to channel c of sample i
  float* chan(int i, int ch) {
    return v.data() + (static_cast<std::size_t>(i) * c + ch) * plane();
  }
  const float* chan(int i, int ch) const {
    return v.data() + (static_cast<std::size_t>(i) * c + ch) * plane();
  }
  // pointer to sample i (c*h*w contiguous floats)
  float* sample(int i) { return v.data() + static_cast<std::size_t>(i) * c * plane(); }
  const float* sample(int i) const {
    return v.data() + static_cast<std::size_t>(i) * c * plane();
  }

  float& at(int i, int ch, int y, int x) {
    return v[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  float at(int i, int ch, int y, int x) const {
    return v[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }

  void zero() { std::fill(v.begin(), v.end(), 0.0f); }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Integer class-index raster, the ground truth / prediction surface.
struct LabelMap {
  int h = 0, w = 0;
  std::vector<std::uint8_t> v;

  LabelMap() = default;
  LabelMap(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, 0) {}

  std::uint8_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
  std::size_t size() const { return v.size(); }

  bool operator==(const LabelMap& o) const { return h == o.h && w == o.w && v == o.v; }
};

// Batch of label maps with shared dimensions, flat (N,H,W) uint8.
struct LabelBatch {
  int n = 0, h = 0, w = 0;
  std::vector<std::uint8_t> v;

  LabelBatch() = default;
  LabelBatch(int n_, int h_, int w_)
      : n(n_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * h_ * w_, 0) {}

  std::uint8_t* sample(int i) { return v.data() + static_cast<std::size_t>(i) * h * w; }
  const std::uint8_t* sample(int i) const {
    return v.data() + static_cast<std::size_t>(i) * h * w;
  }
  void set(int i, const LabelMap& m) {
    if (m.h != h || m.w != w) throw std::invalid_argument("LabelBatch: shape mismatch");
    std::copy(m.v.begin(), m.v.end(), sample(i));
  }
};

}  // namespace dmlcsr
