#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dmlcsr/tensor.hpp"

namespace dmlcsr::data {

// Procedural face-layout scene. Class layout (Helen-style, 11 classes):
// 0 background, 1 skin, 2 left brow, 3 right brow, 4 left eye, 5 right eye,
// 6 nose, 7 upper lip, 8 inner mouth, 9 lower lip, 10 hair.
struct SceneConfig {
  int image_size = 96;   // square, >= 32, divisible by 16
  int num_classes = 11;  // class 0 reserved for background
  std::vector<std::array<float, 3>> component_palette;  // per-class nominal RGB
  float color_jitter = 0.06f;        // per-sample per-class color jitter amplitude
  float shape_jitter = 0.07f;        // fractional geometry perturbation
  float texture_noise_sigma = 0.025f;

  SceneConfig();
  void validate() const;  // throws std::invalid_argument
};

struct LabeledSample {
  Tensor image;     // (1,3,H,W), values in [0,1]
  LabelMap labels;  // H x W, values in [0, num_classes)
};

// Deterministic function of (seed, config). Emits a face-like layout with
// every class present (probability >= 0.99 per sample at default config).
LabeledSample generate_sample(std::uint64_t seed, const SceneConfig& config);

// Corrupts ~`rate` of boundary-band pixels (within 2px of a class boundary)
// by reassigning them to an adjacent region's class. Interior pixels
// untouched. Deterministic in (labels, rate, seed).
LabelMap inject_label_noise(const LabelMap& labels, double rate, std::uint64_t seed);

// Rotation with angle uniform in (-30, +30) degrees and isotropic scaling
// uniform in [0.75, 1.25] about the image center. Image bilinear, labels
// nearest-neighbor; out-of-frame regions become background / zero intensity.
LabeledSample augment(const LabeledSample& sample, std::uint64_t seed);

// Same warp with explicit parameters (angle in degrees).
LabeledSample augment_with_params(const LabeledSample& sample, double angle_deg,
                                  double scale);

}  // namespace dmlcsr::data
