#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dmlcsr/tensor.hpp"

namespace dmlcsr::png_io {

struct Image8 {
  int h = 0, w = 0, channels = 0;  // 1 (gray) or 3 (rgb)
  std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

void write_gray8(const std::string& path, const LabelMap& m);
void write_rgb8(const std::string& path, const Image8& img);
Image8 read(const std::string& path);  // palette/16-bit/alpha normalized to gray8/rgb8

// float [0,1] (1,3,H,W) tensor <-> 8-bit RGB
Image8 tensor_to_rgb8(const Tensor& image);
Tensor rgb8_to_tensor(const Image8& img);

LabelMap read_label_png(const std::string& path);  // requires single-channel 8-bit

// fixed 19-entry overlay palette (CelebAMask-HQ component ordering)
extern const std::array<std::array<std::uint8_t, 3>, 19> kPalette;
Image8 colorize(const LabelMap& labels);

}  // namespace dmlcsr::png_io
