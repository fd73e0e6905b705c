#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace objfield {

// Row-major H x W x C raster.
template <class T>
struct Image {
  int height = 0, width = 0, channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int h, int w, int c, T fill = T{})
      : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, fill) {}

  T& at(int i, int j, int c = 0) { return data[(static_cast<size_t>(i) * width + j) * channels + c]; }
  T at(int i, int j, int c = 0) const {
    return data[(static_cast<size_t>(i) * width + j) * channels + c];
  }
  size_t pixel_count() const { return static_cast<size_t>(height) * width; }
};

using ImageU8 = Image<uint8_t>;
using ImageU16 = Image<uint16_t>;
using ImageF = Image<float>;

// 8-bit PNG, 1 or 3 channels taken from the image itself.
void write_png8(const std::filesystem::path& path, const ImageU8& img);
// 16-bit grayscale PNG (instance label maps).
void write_png16(const std::filesystem::path& path, const ImageU16& img);

// Reads an 8-bit PNG; gray/palette/alpha inputs are expanded to RGB.
ImageU8 read_png_rgb8(const std::filesystem::path& path);
// Reads a PNG as single-channel 8-bit (RGB collapses to its first channel).
ImageU8 read_png_gray8(const std::filesystem::path& path);
// Reads a 16-bit grayscale PNG.
ImageU16 read_png_gray16(const std::filesystem::path& path);

// Raw float grid with a small header: magic, dims, channel count.
void write_float_grid(const std::filesystem::path& path, const ImageF& img);
ImageF read_float_grid(const std::filesystem::path& path);

// [0,1] floats to 8-bit with rounding.
ImageU8 quantize_to_u8(const ImageF& img);
ImageF dequantize_to_f(const ImageU8& img);

// Peak signal-to-noise ratio in dB between two same-shape [0,1] images.
double psnr(const ImageF& a, const ImageF& b);

// Nearest-neighbor resize for binary masks ingested at foreign resolutions.
ImageU8 resize_nearest(const ImageU8& img, int out_h, int out_w);

}  // namespace objfield
