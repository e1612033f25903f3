#include "dmlcsr/nn.hpp"

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dmlcsr::nn {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

namespace {
int g_default_threads = 0;
thread_local std::vector<float> tl_col, tl_dcol;
}  // namespace

void set_threads(int n) {
  if (g_default_threads == 0) g_default_threads = omp_get_max_threads();
  omp_set_num_threads(n > 0 ? n : g_default_threads);
}

int max_threads() { return omp_get_max_threads(); }

// ---------------------------------------------------------------------------
// Conv2d

void Conv2d::configure(int in, int out, int ksize, int stride_, int pad_,
                       int dilation_, bool bias_) {
  in_ch = in;
  out_ch = out;
  k = ksize;
  stride = stride_;
  pad = pad_;
  dilation = dilation_;
  has_bias = bias_;
  weight.assign(static_cast<std::size_t>(out_ch) * in_ch * k * k, 0.0f);
  dweight.assign(weight.size(), 0.0f);
  if (has_bias) {
    bias.assign(out_ch, 0.0f);
    dbias.assign(out_ch, 0.0f);
  }
}

void Conv2d::init(Rng& rng) {
  const double std = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
  for (float& w : weight) w = static_cast<float>(rng.normal(0.0, std));
  std::fill(bias.begin(), bias.end(), 0.0f);
}

int Conv2d::out_dim(int in, int ksize, int stride, int pad, int dilation) {
  return (in + 2 * pad - dilation * (ksize - 1) - 1) / stride + 1;
}

namespace {

void im2col(const float* x, int ci, int ih, int iw, int k, int stride, int pad,
            int dil, int oh, int ow, float* col) {
  const std::size_t L = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < ci; ++c) {
    const float* xc = x + static_cast<std::size_t>(c) * ih * iw;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        float* crow = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * L;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky * dil;
          float* dst = crow + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= ih) {
            std::fill(dst, dst + ow, 0.0f);
            continue;
          }
          const float* srow = xc + static_cast<std::size_t>(iy) * iw;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx * dil;
            dst[ox] = (ix >= 0 && ix < iw) ? srow[ix] : 0.0f;
          }
        }
      }
  }
}

void col2im_add(const float* col, int ci, int ih, int iw, int k, int stride, int pad,
                int dil, int oh, int ow, float* dx) {
  const std::size_t L = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < ci; ++c) {
    float* xc = dx + static_cast<std::size_t>(c) * ih * iw;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const float* crow = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * L;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky * dil;
          if (iy < 0 || iy >= ih) continue;
          const float* src = crow + static_cast<std::size_t>(oy) * ow;
          float* drow = xc + static_cast<std::size_t>(iy) * iw;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx * dil;
            if (ix >= 0 && ix < iw) drow[ix] += src[ox];
          }
        }
      }
  }
}

}  // namespace

void Conv2d::forward(const Tensor& x, Tensor& y) const {
  if (x.c != in_ch)
    throw std::invalid_argument("Conv2d: input channel mismatch " + x.shape_str());
  const int oh = out_dim(x.h, k, stride, pad, dilation);
  const int ow = out_dim(x.w, k, stride, pad, dilation);
  y.resize(x.n, out_ch, oh, ow);
  const int K = in_ch * k * k;
  const std::size_t L = static_cast<std::size_t>(oh) * ow;
  const bool pointwise = (k == 1 && stride == 1 && pad == 0);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.n; ++i) {
    const float* src = x.sample(i);
    if (!pointwise) {
      tl_col.resize(static_cast<std::size_t>(K) * L);
      im2col(src, in_ch, x.h, x.w, k, stride, pad, dilation, oh, ow, tl_col.data());
      src = tl_col.data();
    }
    MapC W(weight.data(), out_ch, K);
    MapC C(src, K, static_cast<Eigen::Index>(L));
    MapM Y(y.sample(i), out_ch, static_cast<Eigen::Index>(L));
    Y.noalias() = W * C;
    if (has_bias)
      for (int c = 0; c < out_ch; ++c) {
        float* yc = y.chan(i, c);
        const float b = bias[c];
        for (std::size_t p = 0; p < L; ++p) yc[p] += b;
      }
  }
}

void Conv2d::backward(const Tensor& x, const Tensor& dy, Tensor* dx) {
  const int oh = dy.h, ow = dy.w;
  const int K = in_ch * k * k;
  const std::size_t L = static_cast<std::size_t>(oh) * ow;
  const bool pointwise = (k == 1 && stride == 1 && pad == 0);

  // per-sample weight-gradient partials, reduced in batch order afterwards
  std::vector<float> dwpart(static_cast<std::size_t>(x.n) * out_ch * K);
  std::vector<double> dbpart(has_bias ? static_cast<std::size_t>(x.n) * out_ch : 0);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.n; ++i) {
    const float* col = x.sample(i);
    if (!pointwise) {
      tl_col.resize(static_cast<std::size_t>(K) * L);
      im2col(x.sample(i), in_ch, x.h, x.w, k, stride, pad, dilation, oh, ow,
             tl_col.data());
      col = tl_col.data();
    }
    MapC dY(dy.sample(i), out_ch, static_cast<Eigen::Index>(L));
    MapC C(col, K, static_cast<Eigen::Index>(L));
    MapM dW(dwpart.data() + static_cast<std::size_t>(i) * out_ch * K, out_ch, K);
    dW.noalias() = dY * C.transpose();
    if (has_bias)
      for (int c = 0; c < out_ch; ++c) {
        double s = 0.0;
        const float* d = dy.chan(i, c);
        for (std::size_t p = 0; p < L; ++p) s += d[p];
        dbpart[static_cast<std::size_t>(i) * out_ch + c] = s;
      }
    if (dx) {
      MapC W(weight.data(), out_ch, K);
      if (pointwise) {
        MapM dX(dx->sample(i), K, static_cast<Eigen::Index>(L));
        dX.noalias() += W.transpose() * dY;
      } else {
        tl_dcol.resize(static_cast<std::size_t>(K) * L);
        MapM dC(tl_dcol.data(), K, static_cast<Eigen::Index>(L));
        dC.noalias() = W.transpose() * dY;
        col2im_add(tl_dcol.data(), in_ch, x.h, x.w, k, stride, pad, dilation, oh, ow,
                   dx->sample(i));
      }
    }
  }

  for (int i = 0; i < x.n; ++i) {
    const float* part = dwpart.data() + static_cast<std::size_t>(i) * out_ch * K;
    for (std::size_t j = 0; j < weight.size(); ++j) dweight[j] += part[j];
    if (has_bias)
      for (int c = 0; c < out_ch; ++c)
        dbias[c] += static_cast<float>(dbpart[static_cast<std::size_t>(i) * out_ch + c]);
  }
}

void Conv2d::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight, &dweight, {out_ch, in_ch, k, k}, false});
  if (has_bias) out.push_back({prefix + ".bias", &bias, &dbias, {out_ch}, false});
}

// ---------------------------------------------------------------------------
// BatchNorm2d

void BatchNorm2d::configure(int channels) {
  ch = channels;
  gamma.assign(ch, 1.0f);
  beta.assign(ch, 0.0f);
  dgamma.assign(ch, 0.0f);
  dbeta.assign(ch, 0.0f);
  running_mean.assign(ch, 0.0f);
  running_var.assign(ch, 1.0f);
  saved_mean.assign(ch, 0.0f);
  saved_istd.assign(ch, 0.0f);
}

void BatchNorm2d::forward(const Tensor& x, Tensor& y, BnMode mode) {
  if (x.c != ch) throw std::invalid_argument("BatchNorm2d: channel mismatch");
  y.resize_like(x);
  const int HW = x.plane();

  if (mode == BnMode::Eval) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < ch; ++c) {
        const float scale = gamma[c] / std::sqrt(running_var[c] + eps);
        const float shift = beta[c] - running_mean[c] * scale;
        const float* xs = x.chan(i, c);
        float* ys = y.chan(i, c);
        for (int p = 0; p < HW; ++p) ys[p] = xs[p] * scale + shift;
      }
    return;
  }

  // batch statistics via per-sample partials, reduced in batch order
  std::vector<double> part(static_cast<std::size_t>(x.n) * ch * 2, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < ch; ++c) {
      const float* xs = x.chan(i, c);
      double s = 0.0, s2 = 0.0;
      for (int p = 0; p < HW; ++p) {
        s += xs[p];
        s2 += static_cast<double>(xs[p]) * xs[p];
      }
      part[(static_cast<std::size_t>(i) * ch + c) * 2] = s;
      part[(static_cast<std::size_t>(i) * ch + c) * 2 + 1] = s2;
    }

  const double M = static_cast<double>(x.n) * HW;
  for (int c = 0; c < ch; ++c) {
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < x.n; ++i) {
      s += part[(static_cast<std::size_t>(i) * ch + c) * 2];
      s2 += part[(static_cast<std::size_t>(i) * ch + c) * 2 + 1];
    }
    const double mean = s / M;
    const double var = std::max(0.0, s2 / M - mean * mean);
    saved_mean[c] = static_cast<float>(mean);
    saved_istd[c] = static_cast<float>(1.0 / std::sqrt(var + eps));
    if (mode == BnMode::Train) {
      running_mean[c] = (1.0f - momentum) * running_mean[c] +
                        momentum * static_cast<float>(mean);
      running_var[c] = (1.0f - momentum) * running_var[c] +
                       momentum * static_cast<float>(var);
    } else {  // Accumulate
      acc_sum[c] += s;
      acc_sumsq[c] += s2;
    }
  }
  if (mode == BnMode::Accumulate) acc_count += static_cast<std::int64_t>(M);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < ch; ++c) {
      const float m = saved_mean[c], is = saved_istd[c], g = gamma[c], b = beta[c];
      const float* xs = x.chan(i, c);
      float* ys = y.chan(i, c);
      for (int p = 0; p < HW; ++p) ys[p] = (xs[p] - m) * is * g + b;
    }
}

void BatchNorm2d::backward(const Tensor& x, const Tensor& dy, Tensor* dx) {
  const int HW = x.plane();
  const double M = static_cast<double>(x.n) * HW;

  std::vector<double> part(static_cast<std::size_t>(x.n) * ch * 2, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < ch; ++c) {
      const float m = saved_mean[c], is = saved_istd[c];
      const float* xs = x.chan(i, c);
      const float* ds = dy.chan(i, c);
      double sdy = 0.0, sdyx = 0.0;
      for (int p = 0; p < HW; ++p) {
        sdy += ds[p];
        sdyx += static_cast<double>(ds[p]) * (xs[p] - m) * is;
      }
      part[(static_cast<std::size_t>(i) * ch + c) * 2] = sdy;
      part[(static_cast<std::size_t>(i) * ch + c) * 2 + 1] = sdyx;
    }

  std::vector<double> sum_dy(ch, 0.0), sum_dyx(ch, 0.0);
  for (int c = 0; c < ch; ++c) {
    for (int i = 0; i < x.n; ++i) {
      sum_dy[c] += part[(static_cast<std::size_t>(i) * ch + c) * 2];
      sum_dyx[c] += part[(static_cast<std::size_t>(i) * ch + c) * 2 + 1];
    }
    dbeta[c] += static_cast<float>(sum_dy[c]);
    dgamma[c] += static_cast<float>(sum_dyx[c]);
  }

  if (!dx) return;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < ch; ++c) {
      const float m = saved_mean[c], is = saved_istd[c], g = gamma[c];
      const float mean_dy = static_cast<float>(sum_dy[c] / M);
      const float mean_dyx = static_cast<float>(sum_dyx[c] / M);
      const float* xs = x.chan(i, c);
      const float* ds = dy.chan(i, c);
      float* o = dx->chan(i, c);
      for (int p = 0; p < HW; ++p) {
        const float xh = (xs[p] - m) * is;
        o[p] += g * is * (ds[p] - mean_dy - xh * mean_dyx);
      }
    }
}

void BatchNorm2d::begin_accumulate() {
  acc_sum.assign(ch, 0.0);
  acc_sumsq.assign(ch, 0.0);
  acc_count = 0;
}

void BatchNorm2d::finalize_accumulate() {
  if (acc_count == 0) throw std::runtime_error("BatchNorm2d: no accumulated batches");
  for (int c = 0; c < ch; ++c) {
    const double mean = acc_sum[c] / static_cast<double>(acc_count);
    const double var =
        std::max(0.0, acc_sumsq[c] / static_cast<double>(acc_count) - mean * mean);
    running_mean[c] = static_cast<float>(mean);
    running_var[c] = static_cast<float>(var);
  }
}

void BatchNorm2d::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  out.push_back({prefix + ".gamma", &gamma, &dgamma, {ch}, false});
  out.push_back({prefix + ".beta", &beta, &dbeta, {ch}, false});
  out.push_back({prefix + ".running_mean", &running_mean, nullptr, {ch}, true});
  out.push_back({prefix + ".running_var", &running_var, nullptr, {ch}, true});
}

// ---------------------------------------------------------------------------
// NodeConv1d

void NodeConv1d::configure(Axis a, int taps) {
  axis = a;
  k = taps;
  weight.assign(k, 0.0f);
  dweight.assign(k, 0.0f);
}

void NodeConv1d::init(Rng& rng) {
  const double std = std::sqrt(1.0 / k);
  for (float& w : weight) w = static_cast<float>(rng.normal(0.0, std));
}

void NodeConv1d::forward(const Tensor& x, Tensor& y) const {
  y.resize_like(x);
  const int C = x.c, L = x.plane(), r = k / 2;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.n; ++i) {
    const float* xs = x.sample(i);
    float* ys = y.sample(i);
    if (axis == Axis::Spatial) {
      for (int c = 0; c < C; ++c) {
        const float* row = xs + static_cast<std::size_t>(c) * L;
        float* orow = ys + static_cast<std::size_t>(c) * L;
        for (int l = 0; l < L; ++l) {
          float acc = 0.0f;
          for (int t = 0; t < k; ++t) {
            const int s = l + t - r;
            if (s >= 0 && s < L) acc += weight[t] * row[s];
          }
          orow[l] = acc;
        }
      }
    } else {
      for (int c = 0; c < C; ++c) {
        float* orow = ys + static_cast<std::size_t>(c) * L;
        std::fill(orow, orow + L, 0.0f);
        for (int t = 0; t < k; ++t) {
          const int s = c + t - r;
          if (s < 0 || s >= C) continue;
          const float wt = weight[t];
          const float* row = xs + static_cast<std::size_t>(s) * L;
          for (int l = 0; l < L; ++l) orow[l] += wt * row[l];
        }
      }
    }
  }
}

void NodeConv1d::backward(const Tensor& x, const Tensor& dy, Tensor* dx) {
  const int C = x.c, L = x.plane(), r = k / 2;
  std::vector<double> dwpart(static_cast<std::size_t>(x.n) * k, 0.0);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.n; ++i) {
    const float* xs = x.sample(i);
    const float* ds = dy.sample(i);
    double* dwp = dwpart.data() + static_cast<std::size_t>(i) * k;
    for (int c = 0; c < C; ++c) {
      const float* xrow;
      const float* drow = ds + static_cast<std::size_t>(c) * L;
      if (axis == Axis::Spatial) {
        xrow = xs + static_cast<std::size_t>(c) * L;
        for (int t = 0; t < k; ++t) {
          double acc = 0.0;
          const int off = t - r;
          const int lo = std::max(0, -off), hi = std::min(L, L - off);
          for (int l = lo; l < hi; ++l) acc += static_cast<double>(drow[l]) * xrow[l + off];
          dwp[t] += acc;
        }
        if (dx) {
          float* o = dx->sample(i) + static_cast<std::size_t>(c) * L;
          for (int l = 0; l < L; ++l) {
            float acc = 0.0f;
            for (int t = 0; t < k; ++t) {
              const int s = l - (t - r);
              if (s >= 0 && s < L) acc += weight[t] * drow[s];
            }
            o[l] += acc;
          }
        }
      } else {
        for (int t = 0; t < k; ++t) {
          const int s = c + t - r;
          if (s < 0 || s >= C) continue;
          xrow = xs + static_cast<std::size_t>(s) * L;
          double acc = 0.0;
          for (int l = 0; l < L; ++l) acc += static_cast<double>(drow[l]) * xrow[l];
          dwp[t] += acc;
        }
        if (dx) {
          float* o = dx->sample(i) + static_cast<std::size_t>(c) * L;
          for (int t = 0; t < k; ++t) {
            const int s = c - (t - r);
            if (s < 0 || s >= C) continue;
            const float wt = weight[t];
            const float* dr = ds + static_cast<std::size_t>(s) * L;
            for (int l = 0; l < L; ++l) o[l] += wt * dr[l];
          }
        }
      }
    }
  }

  for (int i = 0; i < x.n; ++i)
    for (int t = 0; t < k; ++t)
      dweight[t] += static_cast<float>(dwpart[static_cast<std::size_t>(i) * k + t]);
}

void NodeConv1d::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight, &dweight, {k}, false});
}

// ---------------------------------------------------------------------------
// ScaleScalar

void ScaleScalar::forward(const Tensor& x, Tensor& y) const {
  y.resize_like(x);
  const float s = value[0];
  const std::size_t total = x.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(total); ++p)
    y.v[p] = s * x.v[p];
}

void ScaleScalar::backward(const Tensor& x, const Tensor& dy, Tensor* dx) {
  std::vector<double> part(x.n, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.n; ++i) {
    const float* xs = x.sample(i);
    const float* ds = dy.sample(i);
    const std::size_t sz = static_cast<std::size_t>(x.c) * x.plane();
    double acc = 0.0;
    for (std::size_t p = 0; p < sz; ++p) acc += static_cast<double>(ds[p]) * xs[p];
    part[i] = acc;
    if (dx) {
      float* o = dx->sample(i);
      const float s = value[0];
      for (std::size_t p = 0; p < sz; ++p) o[p] += s * ds[p];
    }
  }
  double g = 0.0;
  for (int i = 0; i < x.n; ++i) g += part[i];
  grad[0] += static_cast<float>(g);
}

void ScaleScalar::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  out.push_back({prefix, &value, &grad, {1}, false});
}

// ---------------------------------------------------------------------------
// bilinear resize (align_corners=false)

namespace {
struct Lerp {
  int i0, i1;
  float w0, w1;
};

std::vector<Lerp> make_lerp(int in, int out) {
  std::vector<Lerp> t(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    s = std::min(std::max(s, 0.0), static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, in - 1);
    const float f = static_cast<float>(s - i0);
    t[o] = {i0, i1, 1.0f - f, f};
  }
  return t;
}
}  // namespace

void bilinear_forward(const Tensor& x, Tensor& y, int oh, int ow) {
  y.resize(x.n, x.c, oh, ow);
  if (oh == x.h && ow == x.w) {
    y.v = x.v;
    return;
  }
  const auto ly = make_lerp(x.h, oh), lx = make_lerp(x.w, ow);
  const int planes = x.n * x.c;
#pragma omp parallel for schedule(static)
  for (int pc = 0; pc < planes; ++pc) {
    const float* src = x.v.data() + static_cast<std::size_t>(pc) * x.plane();
    float* dst = y.v.data() + static_cast<std::size_t>(pc) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const Lerp& a = ly[oy];
      const float* r0 = src + static_cast<std::size_t>(a.i0) * x.w;
      const float* r1 = src + static_cast<std::size_t>(a.i1) * x.w;
      float* drow = dst + static_cast<std::size_t>(oy) * ow;
      for (int ox = 0; ox < ow; ++ox) {
        const Lerp& b = lx[ox];
        drow[ox] = a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) +
                   a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
      }
    }
  }
}

void bilinear_backward(const Tensor& dy, Tensor& dx_accum) {
  if (dy.h == dx_accum.h && dy.w == dx_accum.w) {
    accumulate(dx_accum, dy);
    return;
  }
  const auto ly = make_lerp(dx_accum.h, dy.h), lx = make_lerp(dx_accum.w, dy.w);
  const int planes = dy.n * dy.c;
#pragma omp parallel for schedule(static)
  for (int pc = 0; pc < planes; ++pc) {
    const float* src = dy.v.data() + static_cast<std::size_t>(pc) * dy.plane();
    float* dst = dx_accum.v.data() + static_cast<std::size_t>(pc) * dx_accum.plane();
    for (int oy = 0; oy < dy.h; ++oy) {
      const Lerp& a = ly[oy];
      float* r0 = dst + static_cast<std::size_t>(a.i0) * dx_accum.w;
      float* r1 = dst + static_cast<std::size_t>(a.i1) * dx_accum.w;
      const float* drow = src + static_cast<std::size_t>(oy) * dy.w;
      for (int ox = 0; ox < dy.w; ++ox) {
        const Lerp& b = lx[ox];
        const float g = drow[ox];
        r0[b.i0] += a.w0 * b.w0 * g;
        r0[b.i1] += a.w0 * b.w1 * g;
        r1[b.i0] += a.w1 * b.w0 * g;
        r1[b.i1] += a.w1 * b.w1 * g;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// elementwise

void relu_forward(Tensor& x) {
  const std::int64_t total = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < total; ++p)
    if (x.v[p] < 0.0f) x.v[p] = 0.0f;
}

void relu_backward(const Tensor& y_post, Tensor& dy) {
  const std::int64_t total = static_cast<std::int64_t>(dy.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < total; ++p)
    if (y_post.v[p] <= 0.0f) dy.v[p] = 0.0f;
}

void add_forward(const Tensor& a, const Tensor& b, Tensor& y) {
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
  y.resize_like(a);
  const std::int64_t total = static_cast<std::int64_t>(a.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < total; ++p) y.v[p] = a.v[p] + b.v[p];
}

void accumulate(Tensor& dst, const Tensor& src) {
  if (!dst.same_shape(src)) throw std::invalid_argument("accumulate: shape mismatch");
  const std::int64_t total = static_cast<std::int64_t>(dst.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < total; ++p) dst.v[p] += src.v[p];
}

void concat_channels(const std::vector<const Tensor*>& xs, Tensor& y) {
  int ctot = 0;
  for (const Tensor* t : xs) ctot += t->c;
  const Tensor& f = *xs.front();
  y.resize(f.n, ctot, f.h, f.w);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < f.n; ++i) {
    float* dst = y.sample(i);
    for (const Tensor* t : xs) {
      const std::size_t sz = static_cast<std::size_t>(t->c) * t->plane();
      std::copy(t->sample(i), t->sample(i) + sz, dst);
      dst += sz;
    }
  }
}

void split_channels_accumulate(const Tensor& dy, const std::vector<Tensor*>& dxs) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < dy.n; ++i) {
    const float* src = dy.sample(i);
    for (Tensor* t : dxs) {
      const std::size_t sz = static_cast<std::size_t>(t->c) * t->plane();
      float* dst = t->sample(i);
      for (std::size_t p = 0; p < sz; ++p) dst[p] += src[p];
      src += sz;
    }
  }
}

void zero_grads(const std::vector<ParamRef>& params) {
  for (const ParamRef& p : params)
    if (p.grad) std::fill(p.grad->begin(), p.grad->end(), 0.0f);
}

void Sgd::step(const std::vector<ParamRef>& params, double lr) {
  if (velocity.size() != params.size()) {
    velocity.clear();
    for (const ParamRef& p : params) velocity.emplace_back(p.data->size(), 0.0f);
  }
  for (std::size_t j = 0; j < params.size(); ++j) {
    const ParamRef& p = params[j];
    if (!p.grad) continue;
    std::vector<float>& v = velocity[j];
    const float mu = static_cast<float>(momentum);
    const float wd = static_cast<float>(weight_decay);
    const float step_lr = static_cast<float>(lr);
    for (std::size_t e = 0; e < v.size(); ++e) {
      const float g = (*p.grad)[e] + wd * (*p.data)[e];
      v[e] = mu * v[e] + g;
      (*p.data)[e] -= step_lr * v[e];
    }
  }
}

}  // namespace dmlcsr::nn
