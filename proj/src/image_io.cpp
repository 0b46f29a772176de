#include "fisheyehdk/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace fhdk {

namespace {

struct PngImage {
  png_image img{};
  PngImage() {
    img.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&img); }
};

std::vector<std::uint8_t> read_raw(const std::string& path, png_uint_32 format, int& height,
                                   int& width) {
  PngImage p;
  if (!png_image_begin_read_from_file(&p.img, path.c_str())) {
    throw std::runtime_error("cannot read PNG '" + path + "': " + p.img.message);
  }
  p.img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(p.img));
  if (!png_image_finish_read(&p.img, nullptr, buf.data(), 0, nullptr)) {
    throw std::runtime_error("cannot decode PNG '" + path + "': " + p.img.message);
  }
  height = static_cast<int>(p.img.height);
  width = static_cast<int>(p.img.width);
  return buf;
}

void write_raw(const std::string& path, png_uint_32 format, const std::vector<std::uint8_t>& buf,
               int height, int width) {
  PngImage p;
  p.img.width = static_cast<png_uint_32>(width);
  p.img.height = static_cast<png_uint_32>(height);
  p.img.format = format;
  if (!png_image_write_to_file(&p.img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG '" + path + "': " + p.img.message);
  }
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Tensor read_png_image(const std::string& path) {
  PngImage probe;
  if (!png_image_begin_read_from_file(&probe.img, path.c_str())) {
    throw std::runtime_error("cannot read PNG '" + path + "': " + probe.img.message);
  }
  const bool gray = (probe.img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  int h = 0, w = 0;
  const auto buf = read_raw(path, gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB, h, w);
  const int c = gray ? 1 : 3;
  Tensor t({c, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        t[(static_cast<std::size_t>(ch) * h + y) * w + x] = buf[(static_cast<std::size_t>(y) * w + x) * c + ch] / 255.0;
  return t;
}

void write_png_image(const std::string& path, const Tensor& pixels) {
  if (pixels.rank() != 3 || (pixels.dim(0) != 1 && pixels.dim(0) != 3)) {
    throw std::invalid_argument("write_png_image: expected [1|3, H, W], got " + shape_string(pixels.shape()));
  }
  const int c = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(c) * h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        buf[(static_cast<std::size_t>(y) * w + x) * c + ch] = to_byte(pixels[(static_cast<std::size_t>(ch) * h + y) * w + x]);
  write_raw(path, c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB, buf, h, w);
}

std::vector<std::uint8_t> read_png_labels(const std::string& path, int& height, int& width) {
  return read_raw(path, PNG_FORMAT_GRAY, height, width);
}

void write_png_labels(const std::string& path, const std::vector<std::uint8_t>& labels, int height,
                      int width) {
  if (labels.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("write_png_labels: size mismatch");
  }
  write_raw(path, PNG_FORMAT_GRAY, labels, height, width);
}

void write_png_mask(const std::string& path, const std::vector<std::uint8_t>& mask, int height,
                    int width) {
  if (mask.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("write_png_mask: size mismatch");
  }
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed while writing '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 1,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row((width + 7) / 8);
  for (int y = 0; y < height; ++y) {
    std::fill(row.begin(), row.end(), 0);
    for (int x = 0; x < width; ++x) {
      if (mask[static_cast<std::size_t>(y) * width + x]) row[x / 8] |= static_cast<png_byte>(0x80 >> (x % 8));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> read_png_mask(const std::string& path, int& height, int& width) {
  auto gray = read_raw(path, PNG_FORMAT_GRAY, height, width);
  for (auto& v : gray) v = v >= 128 ? 1 : 0;
  return gray;
}

}  // namespace fhdk
