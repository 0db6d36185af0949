#pragma once

#include <string>
#include <vector>

namespace usvtrack {

// H x W x 3 raster, row-major interleaved RGB, values in [0,1]. This is the
// common currency between the simulator, the haze model, the nets and the
// metrics; everything that produces one is expected to keep it in range.
struct ImageBuffer {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // height*width*3

  ImageBuffer() = default;
  ImageBuffer(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

  static constexpr int kChannels = 3;
  static constexpr int kMinSide = 8;

  double& at(int row, int col, int ch) {
    return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
  }
  double at(int row, int col, int ch) const {
    return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const ImageBuffer& o) const {
    return height == o.height && width == o.width;
  }
};

// Throws std::invalid_argument when sides are below the 8 px minimum or any
// value falls outside [0,1].
void validate_image(const ImageBuffer& img, const char* what);

// 8-bit RGB PNG. Decode maps byte b to b/255; encode rounds half-up. Encoding
// then decoding 8-bit-quantized data is the identity.
ImageBuffer load_image(const std::string& path);
void save_image(const ImageBuffer& img, const std::string& path);

// BT.601 luma on the 0..255 scale, used by SSIM.
std::vector<double> to_luminance(const ImageBuffer& img);

// Mean-pools factor x factor blocks; requires dimensions divisible by factor.
ImageBuffer downscale(const ImageBuffer& img, int factor);

}  // namespace usvtrack
