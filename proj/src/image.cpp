#include "usvtrack/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace usvtrack {

void validate_image(const ImageBuffer& img, const char* what) {
  if (img.height < ImageBuffer::kMinSide || img.width < ImageBuffer::kMinSide)
    throw std::invalid_argument(std::string(what) + ": image must be at least 8x8, got " +
                                std::to_string(img.height) + "x" + std::to_string(img.width));
  if (img.data.size() != static_cast<std::size_t>(img.height) * img.width * 3)
    throw std::invalid_argument(std::string(what) + ": data size does not match dimensions");
  for (double v : img.data)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument(std::string(what) + ": pixel value outside [0,1]");
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageBuffer load_image(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("load_image: cannot open " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw std::runtime_error("load_image: not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("load_image: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("load_image: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("load_image: corrupt PNG: " + path);
  }

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  // Normalize anything reasonable to 8-bit RGB.
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  std::vector<png_byte> rowbuf(static_cast<std::size_t>(w) * 3);
  ImageBuffer img(static_cast<int>(h), static_cast<int>(w));
  for (png_uint_32 r = 0; r < h; ++r) {
    png_read_row(png, rowbuf.data(), nullptr);
    for (png_uint_32 c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch)
        img.at(static_cast<int>(r), static_cast<int>(c), ch) = rowbuf[c * 3 + ch] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void save_image(const ImageBuffer& img, const std::string& path) {
  validate_image(img, "save_image");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("save_image: cannot open " + path + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("save_image: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("save_image: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("save_image: PNG write failed: " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> rowbuf(static_cast<std::size_t>(img.width) * 3);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        // round half-up onto 0..255
        double q = std::floor(img.at(r, c, ch) * 255.0 + 0.5);
        rowbuf[c * 3 + ch] = static_cast<png_byte>(q < 0 ? 0 : (q > 255 ? 255 : q));
      }
    png_write_row(png, rowbuf.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<double> to_luminance(const ImageBuffer& img) {
  std::vector<double> y(static_cast<std::size_t>(img.height) * img.width);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      y[static_cast<std::size_t>(r) * img.width + c] =
          255.0 * (0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2));
  return y;
}

ImageBuffer downscale(const ImageBuffer& img, int factor) {
  if (factor < 1 || img.height % factor || img.width % factor)
    throw std::invalid_argument("downscale: dimensions not divisible by factor " +
                                std::to_string(factor));
  if (factor == 1) return img;
  ImageBuffer out(img.height / factor, img.width / factor);
  const double inv = 1.0 / (factor * factor);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int dr = 0; dr < factor; ++dr)
          for (int dc = 0; dc < factor; ++dc)
            acc += img.at(r * factor + dr, c * factor + dc, ch);
        out.at(r, c, ch) = acc * inv;
      }
  return out;
}

}  // namespace usvtrack
