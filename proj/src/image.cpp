#include "objfield/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "objfield/errors.hpp"

namespace objfield {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

void write_png_impl(const std::filesystem::path& path, const void* data, int h, int w,
                    int channels, int bit_depth) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw DataError("libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png write failed: " + path.string());
  }
  png_init_io(png, f.get());
  int color = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, w, h, bit_depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // in-memory is little-endian

  size_t stride = static_cast<size_t>(w) * channels * (bit_depth / 8);
  std::vector<png_bytep> rows(h);
  for (int i = 0; i < h; ++i)
    rows[i] = const_cast<png_bytep>(static_cast<const png_byte*>(data) + i * stride);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FilePtr file;

  explicit PngReader(const std::filesystem::path& path) : file(open_file(path, "rb")) {
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info = png_create_info_struct(png);
    if (!png || !info) throw DataError("libpng init failed");
  }
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

}  // namespace

void write_png8(const std::filesystem::path& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw InputDomainError("write_png8 expects 1 or 3 channels");
  write_png_impl(path, img.data.data(), img.height, img.width, img.channels, 8);
}

void write_png16(const std::filesystem::path& path, const ImageU16& img) {
  if (img.channels != 1) throw InputDomainError("write_png16 expects 1 channel");
  write_png_impl(path, img.data.data(), img.height, img.width, 1, 16);
}

ImageU8 read_png_rgb8(const std::filesystem::path& path) {
  PngReader r(path);
  if (setjmp(png_jmpbuf(r.png))) throw DataError("png read failed: " + path.string());
  png_init_io(r.png, r.file.get());
  png_read_info(r.png, r.info);
  png_set_expand(r.png);
  png_set_strip_16(r.png);
  png_set_strip_alpha(r.png);
  png_set_gray_to_rgb(r.png);
  png_read_update_info(r.png, r.info);
  int h = png_get_image_height(r.png, r.info);
  int w = png_get_image_width(r.png, r.info);
  ImageU8 img(h, w, 3);
  std::vector<png_bytep> rows(h);
  for (int i = 0; i < h; ++i) rows[i] = img.data.data() + static_cast<size_t>(i) * w * 3;
  png_read_image(r.png, rows.data());
  return img;
}

ImageU8 read_png_gray8(const std::filesystem::path& path) {
  ImageU8 rgb = read_png_rgb8(path);
  ImageU8 gray(rgb.height, rgb.width, 1);
  for (size_t p = 0; p < rgb.pixel_count(); ++p) gray.data[p] = rgb.data[p * 3];
  return gray;
}

ImageU16 read_png_gray16(const std::filesystem::path& path) {
  PngReader r(path);
  if (setjmp(png_jmpbuf(r.png))) throw DataError("png read failed: " + path.string());
  png_init_io(r.png, r.file.get());
  png_read_info(r.png, r.info);
  int depth = png_get_bit_depth(r.png, r.info);
  int color = png_get_color_type(r.png, r.info);
  if (depth != 16 || color != PNG_COLOR_TYPE_GRAY)
    throw DataError("expected 16-bit grayscale png: " + path.string());
  png_set_swap(r.png);
  png_read_update_info(r.png, r.info);
  int h = png_get_image_height(r.png, r.info);
  int w = png_get_image_width(r.png, r.info);
  ImageU16 img(h, w, 1);
  std::vector<png_bytep> rows(h);
  for (int i = 0; i < h; ++i)
    rows[i] = reinterpret_cast<png_bytep>(img.data.data() + static_cast<size_t>(i) * w);
  png_read_image(r.png, rows.data());
  return img;
}

namespace {
constexpr char kGridMagic[8] = {'O', 'F', 'G', 'R', 'I', 'D', 'F', '1'};
}

void write_float_grid(const std::filesystem::path& path, const ImageF& img) {
  FilePtr f = open_file(path, "wb");
  uint32_t dims[3] = {static_cast<uint32_t>(img.height), static_cast<uint32_t>(img.width),
                      static_cast<uint32_t>(img.channels)};
  if (std::fwrite(kGridMagic, 1, 8, f.get()) != 8 ||
      std::fwrite(dims, sizeof(uint32_t), 3, f.get()) != 3 ||
      std::fwrite(img.data.data(), sizeof(float), img.data.size(), f.get()) != img.data.size())
    throw DataError("short write: " + path.string());
}

ImageF read_float_grid(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  char magic[8];
  uint32_t dims[3];
  if (std::fread(magic, 1, 8, f.get()) != 8 || std::memcmp(magic, kGridMagic, 8) != 0)
    throw DataError("bad float-grid magic: " + path.string());
  if (std::fread(dims, sizeof(uint32_t), 3, f.get()) != 3)
    throw DataError("short float-grid header: " + path.string());
  ImageF img(dims[0], dims[1], dims[2]);
  if (std::fread(img.data.data(), sizeof(float), img.data.size(), f.get()) != img.data.size())
    throw DataError("short float-grid payload: " + path.string());
  return img;
}

ImageU8 quantize_to_u8(const ImageF& img) {
  ImageU8 out(img.height, img.width, img.channels);
  for (size_t i = 0; i < img.data.size(); ++i) {
    float v = img.data[i];
    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    out.data[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

ImageF dequantize_to_f(const ImageU8& img) {
  ImageF out(img.height, img.width, img.channels);
  for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] / 255.0f;
  return out;
}

double psnr(const ImageF& a, const ImageF& b) {
  if (a.data.size() != b.data.size()) throw InputDomainError("psnr: shape mismatch");
  double mse = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse <= 0) return 99.0;
  return 10.0 * std::log10(1.0 / mse);
}

ImageU8 resize_nearest(const ImageU8& img, int out_h, int out_w) {
  ImageU8 out(out_h, out_w, img.channels);
  for (int i = 0; i < out_h; ++i) {
    int si = std::min(img.height - 1, static_cast<int>((i + 0.5f) * img.height / out_h));
    for (int j = 0; j < out_w; ++j) {
      int sj = std::min(img.width - 1, static_cast<int>((j + 0.5f) * img.width / out_w));
      for (int c = 0; c < img.channels; ++c) out.at(i, j, c) = img.at(si, sj, c);
    }
  }
  return out;
}

}  // namespace objfield
