#include "dmlcsr/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dmlcsr/edge_labels.hpp"
#include "dmlcsr/rng.hpp"

namespace dmlcsr::data {

SceneConfig::SceneConfig() {
  component_palette = {
      {0.10f, 0.12f, 0.16f},  // background
      {0.85f, 0.66f, 0.50f},  // skin
      {0.32f, 0.22f, 0.12f},  // left brow
      {0.30f, 0.20f, 0.10f},  // right brow
      {0.90f, 0.90f, 0.95f},  // left eye
      {0.88f, 0.88f, 0.92f},  // right eye
      {0.80f, 0.58f, 0.42f},  // nose
      {0.75f, 0.30f, 0.30f},  // upper lip
      {0.45f, 0.12f, 0.14f},  // inner mouth
      {0.70f, 0.25f, 0.28f},  // lower lip
      {0.20f, 0.14f, 0.08f},  // hair
  };
}

void SceneConfig::validate() const {
  if (image_size < 32 || image_size % 16 != 0)
    throw std::invalid_argument("SceneConfig: image_size must be >= 32 and divisible by 16");
  if (num_classes < 2)
    throw std::invalid_argument("SceneConfig: num_classes must be >= 2");
  if (static_cast<int>(component_palette.size()) < num_classes)
    throw std::invalid_argument("SceneConfig: palette smaller than num_classes");
  if (texture_noise_sigma < 0 || color_jitter < 0 || shape_jitter < 0)
    throw std::invalid_argument("SceneConfig: negative noise amplitude");
}

namespace {

void fill_ellipse(LabelMap& labels, double cx, double cy, double rx, double ry,
                  std::uint8_t cls) {
  if (rx <= 0 || ry <= 0) return;
  const int y0 = std::max(0, static_cast<int>(std::ceil(cy - ry)));
  const int y1 = std::min(labels.h - 1, static_cast<int>(std::floor(cy + ry)));
  for (int y = y0; y <= y1; ++y) {
    const double t = (y - cy) / ry;
    const double span = rx * std::sqrt(std::max(0.0, 1.0 - t * t));
    const int x0 = std::max(0, static_cast<int>(std::ceil(cx - span)));
    const int x1 = std::min(labels.w - 1, static_cast<int>(std::floor(cx + span)));
    for (int x = x0; x <= x1; ++x) labels.at(y, x) = cls;
  }
}

struct Jitter {
  Rng& rng;
  double amp;
  // jittered radius factor, clamped so components never vanish
  double rf() { return std::clamp(1.0 + rng.normal(0.0, amp), 0.7, 1.3); }
  // positional offset in pixels, sigma scaled by the canvas
  double off(double s) { return rng.normal(0.0, amp * 0.12 * s); }
};

}  // namespace

LabeledSample generate_sample(std::uint64_t seed, const SceneConfig& config) {
  config.validate();
  const int S = config.image_size;
  const int nc = config.num_classes;
  Rng rng(seed_stream(seed, 0x64617461  /* "data" */));
  Jitter j{rng, config.shape_jitter};

  LabeledSample out;
  out.labels = LabelMap(S, S);
  out.image.resize(1, 3, S, S);

  const double cx = 0.50 * S + j.off(S);
  const double cy = 0.54 * S + j.off(S);
  const double frx = 0.28 * S * j.rf();
  const double fry = 0.36 * S * j.rf();

  // hair first; the skin ellipse overwrites its center leaving arc + side bands
  if (nc > 10)
    fill_ellipse(out.labels, cx + j.off(S) * 0.3, cy - 0.10 * S + j.off(S) * 0.3,
                 frx * 1.32 * j.rf(), fry * 1.22 * j.rf(), 10);
  if (nc > 1) fill_ellipse(out.labels, cx, cy, frx, fry, 1);

  const double eye_dx = 0.115 * S * j.rf();
  const double eye_y = cy - 0.075 * S + j.off(S) * 0.4;
  const double brow_y = cy - 0.145 * S + j.off(S) * 0.4;
  if (nc > 2)
    fill_ellipse(out.labels, cx - eye_dx + j.off(S) * 0.2, brow_y,
                 0.062 * S * j.rf(), 0.020 * S * j.rf(), 2);
  if (nc > 3)
    fill_ellipse(out.labels, cx + eye_dx + j.off(S) * 0.2, brow_y,
                 0.062 * S * j.rf(), 0.020 * S * j.rf(), 3);
  if (nc > 4)
    fill_ellipse(out.labels, cx - eye_dx + j.off(S) * 0.2, eye_y,
                 0.048 * S * j.rf(), 0.030 * S * j.rf(), 4);
  if (nc > 5)
    fill_ellipse(out.labels, cx + eye_dx + j.off(S) * 0.2, eye_y,
                 0.048 * S * j.rf(), 0.030 * S * j.rf(), 5);
  if (nc > 6)
    fill_ellipse(out.labels, cx + j.off(S) * 0.2, cy + 0.04 * S + j.off(S) * 0.3,
                 0.035 * S * j.rf(), 0.065 * S * j.rf(), 6);

  const double mouth_y = cy + 0.175 * S + j.off(S) * 0.3;
  const double mouth_rx = 0.080 * S * j.rf();
  if (nc > 7)
    fill_ellipse(out.labels, cx, mouth_y - 0.030 * S, mouth_rx, 0.018 * S * j.rf(), 7);
  if (nc > 8)
    fill_ellipse(out.labels, cx, mouth_y, mouth_rx * 0.92, 0.014 * S * j.rf(), 8);
  if (nc > 9)
    fill_ellipse(out.labels, cx, mouth_y + 0.032 * S, mouth_rx * 0.97,
                 0.020 * S * j.rf(), 9);

  // per-sample color jitter, one offset per class and channel
  std::vector<std::array<float, 3>> colors(nc);
  for (int c = 0; c < nc; ++c)
    for (int ch = 0; ch < 3; ++ch)
      colors[c][ch] = config.component_palette[c][ch] +
                      static_cast<float>(rng.uniform(-config.color_jitter, config.color_jitter));

  float* r = out.image.chan(0, 0);
  float* g = out.image.chan(0, 1);
  float* b = out.image.chan(0, 2);
  const double sigma = config.texture_noise_sigma;
  for (int i = 0; i < S * S; ++i) {
    const auto& col = colors[out.labels.v[i]];
    r[i] = std::clamp(col[0] + static_cast<float>(rng.normal(0.0, sigma)), 0.0f, 1.0f);
    g[i] = std::clamp(col[1] + static_cast<float>(rng.normal(0.0, sigma)), 0.0f, 1.0f);
    b[i] = std::clamp(col[2] + static_cast<float>(rng.normal(0.0, sigma)), 0.0f, 1.0f);
  }
  return out;
}

LabelMap inject_label_noise(const LabelMap& labels, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0)
    throw std::invalid_argument("inject_label_noise: rate must be in [0,1]");
  // boundary band = edge pixels dilated twice (within 2px of a boundary)
  LabelMap band = edge_labels::dilate4(edge_labels::binary_edges(labels), 2);
  LabelMap out = labels;
  Rng rng(seed_stream(seed, 0x6e6f697365 /* "noise" */));
  const int h = labels.h, w = labels.w;
  std::vector<std::uint8_t> donors;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!band.at(y, x)) continue;
      if (rng.uniform01() >= rate) continue;
      const std::uint8_t own = labels.at(y, x);
      donors.clear();
      for (int rad = 1; rad <= 3 && donors.empty(); ++rad) {
        for (int dy = -rad; dy <= rad; ++dy)
          for (int dx = -rad; dx <= rad; ++dx) {
            if (std::max(std::abs(dy), std::abs(dx)) != rad) continue;
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const std::uint8_t c = labels.at(ny, nx);
            if (c != own && std::find(donors.begin(), donors.end(), c) == donors.end())
              donors.push_back(c);
          }
        std::sort(donors.begin(), donors.end());
      }
      if (!donors.empty())
        out.at(y, x) = donors[rng.uniform_int(static_cast<int>(donors.size()))];
    }
  return out;
}

LabeledSample augment_with_params(const LabeledSample& sample, double angle_deg,
                                  double scale) {
  const int h = sample.labels.h, w = sample.labels.w;
  const double a = angle_deg * 3.14159265358979323846 / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);

  LabeledSample out;
  out.labels = LabelMap(h, w);
  out.image.resize(1, 3, h, w);

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx, dy = y - cy;
      // inverse map: un-scale then rotate by -angle
      const double sx = (ca * dx + sa * dy) / scale + cx;
      const double sy = (-sa * dx + ca * dy) / scale + cy;

      // labels: nearest neighbor, background outside
      const long ny = std::lround(sy), nx = std::lround(sx);
      if (ny >= 0 && ny < h && nx >= 0 && nx < w)
        out.labels.at(y, x) = sample.labels.at(static_cast<int>(ny), static_cast<int>(nx));

      // image: bilinear, zero outside
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      for (int ch = 0; ch < 3; ++ch) {
        const float* src = sample.image.chan(0, ch);
        auto pix = [&](int yy, int xx) -> double {
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
          return src[static_cast<std::size_t>(yy) * w + xx];
        };
        const double val = (1 - fy) * ((1 - fx) * pix(y0, x0) + fx * pix(y0, x0 + 1)) +
                           fy * ((1 - fx) * pix(y0 + 1, x0) + fx * pix(y0 + 1, x0 + 1));
        out.image.chan(0, ch)[static_cast<std::size_t>(y) * w + x] =
            static_cast<float>(val);
      }
    }
  return out;
}

LabeledSample augment(const LabeledSample& sample, std::uint64_t seed) {
  Rng rng(seed_stream(seed, 0x617567 /* "aug" */));
  const double angle = rng.uniform(-30.0, 30.0);
  const double scale = rng.uniform(0.75, 1.25);
  return augment_with_params(sample, angle, scale);
}

}  // namespace dmlcsr::data
