#include "dmlcsr/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace dmlcsr::png_io {

namespace {

struct FileCloser {
  std::FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

void write_png(const std::string& path, int h, int w, int channels,
               const std::uint8_t* pixels) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("png: cannot open for writing: " + path);
  FileCloser closer{f};

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: write error for " + path);
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, w, h, 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = const_cast<png_bytep>(pixels + static_cast<std::size_t>(y) * w * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_gray8(const std::string& path, const LabelMap& m) {
  write_png(path, m.h, m.w, 1, m.v.data());
}

void write_rgb8(const std::string& path, const Image8& img) {
  if (img.channels != 3) throw std::invalid_argument("write_rgb8: expected 3 channels");
  write_png(path, img.h, img.w, 3, img.pixels.data());
}

Image8 read(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("png: cannot open: " + path);
  FileCloser closer{f};

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: read error for " + path);
  }
  png_init_io(png, f);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
      png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  Image8 img;
  img.h = static_cast<int>(png_get_image_height(png, info));
  img.w = static_cast<int>(png_get_image_width(png, info));
  img.channels = static_cast<int>(png_get_channels(png, info));
  if (img.channels != 1 && img.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: unsupported channel count in " + path);
  }
  img.pixels.resize(static_cast<std::size_t>(img.h) * img.w * img.channels);
  std::vector<png_bytep> rows(img.h);
  for (int y = 0; y < img.h; ++y)
    rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * img.w * img.channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

Image8 tensor_to_rgb8(const Tensor& image) {
  Image8 img;
  img.h = image.h;
  img.w = image.w;
  img.channels = 3;
  img.pixels.resize(static_cast<std::size_t>(img.h) * img.w * 3);
  const int hw = image.plane();
  for (int c = 0; c < 3; ++c) {
    const float* src = image.chan(0, c);
    for (int p = 0; p < hw; ++p) {
      const float v = std::clamp(src[p], 0.0f, 1.0f);
      img.pixels[static_cast<std::size_t>(p) * 3 + c] =
          static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
  return img;
}

Tensor rgb8_to_tensor(const Image8& img) {
  Tensor t(1, 3, img.h, img.w);
  const int hw = img.h * img.w;
  for (int p = 0; p < hw; ++p)
    for (int c = 0; c < 3; ++c) {
      const std::uint8_t v =
          img.channels == 3 ? img.pixels[static_cast<std::size_t>(p) * 3 + c]
                            : img.pixels[p];
      t.chan(0, c)[p] = static_cast<float>(v) / 255.0f;
    }
  return t;
}

LabelMap read_label_png(const std::string& path) {
  Image8 img = read(path);
  if (img.channels != 1)
    throw std::runtime_error("label PNG must be 8-bit single-channel: " + path);
  LabelMap m(img.h, img.w);
  m.v = img.pixels;
  return m;
}

const std::array<std::array<std::uint8_t, 3>, 19> kPalette = {{
    {0, 0, 0},       // background
    {204, 0, 0},     // face/skin
    {76, 153, 0},    // nose
    {204, 204, 0},   // glasses
    {51, 51, 255},   // left eye
    {204, 0, 204},   // right eye
    {0, 255, 255},   // left brow
    {255, 204, 204}, // right brow
    {102, 51, 0},    // left ear
    {255, 0, 0},     // right ear
    {102, 204, 0},   // inner mouth
    {255, 255, 0},   // upper lip
    {0, 0, 153},     // lower lip
    {0, 0, 204},     // hair
    {255, 51, 153},  // hat
    {0, 204, 204},   // earring
    {0, 51, 0},      // necklace
    {255, 153, 51},  // neck
    {0, 204, 0},     // cloth
}};

Image8 colorize(const LabelMap& labels) {
  Image8 img;
  img.h = labels.h;
  img.w = labels.w;
  img.channels = 3;
  img.pixels.resize(static_cast<std::size_t>(img.h) * img.w * 3);
  for (std::size_t p = 0; p < labels.v.size(); ++p) {
    const auto& col = kPalette[labels.v[p] % kPalette.size()];
    img.pixels[p * 3] = col[0];
    img.pixels[p * 3 + 1] = col[1];
    img.pixels[p * 3 + 2] = col[2];
  }
  return img;
}

}  // namespace dmlcsr::png_io
