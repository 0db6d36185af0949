#pragma once

#include <cmath>
#include <vector>

#include "usvtrack/image.hpp"
#include "usvtrack/rng.hpp"

namespace testutil {

inline usvtrack::ImageBuffer random_image(int h, int w, std::uint64_t seed) {
  usvtrack::Rng rng(seed);
  usvtrack::ImageBuffer img(h, w);
  for (auto& v : img.data) v = rng.uniform();
  return img;
}

inline usvtrack::ImageBuffer constant_image(int h, int w, double r, double g, double b) {
  usvtrack::ImageBuffer img(h, w);
  for (int row = 0; row < h; ++row)
    for (int col = 0; col < w; ++col) {
      img.at(row, col, 0) = r;
      img.at(row, col, 1) = g;
      img.at(row, col, 2) = b;
    }
  return img;
}

// ---- independent metric oracles (naive loops, no shared code with src/) ----

inline double oracle_mse(const usvtrack::ImageBuffer& a, const usvtrack::ImageBuffer& b,
                         double scale = 255.0) {
  double acc = 0.0;
  long n = 0;
  for (int r = 0; r < a.height; ++r)
    for (int c = 0; c < a.width; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const double d = scale * a.at(r, c, ch) - scale * b.at(r, c, ch);
        acc += d * d;
        ++n;
      }
  return acc / n;
}

inline double oracle_psnr(const usvtrack::ImageBuffer& a, const usvtrack::ImageBuffer& b,
                          double scale = 255.0) {
  return 10.0 * std::log10(scale * scale / oracle_mse(a, b, scale));
}

// direct sliding-window SSIM with an explicit (non-separated) 2D Gaussian
inline double oracle_ssim(const usvtrack::ImageBuffer& a, const usvtrack::ImageBuffer& b,
                          int window = 11, double sigma = 1.5, double k1 = 0.01,
                          double k2 = 0.03) {
  const int h = a.height, w = a.width;
  std::vector<double> ya(h * w), yb(h * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      ya[r * w + c] = 255.0 * (0.299 * a.at(r, c, 0) + 0.587 * a.at(r, c, 1) +
                               0.114 * a.at(r, c, 2));
      yb[r * w + c] = 255.0 * (0.299 * b.at(r, c, 0) + 0.587 * b.at(r, c, 1) +
                               0.114 * b.at(r, c, 2));
    }

  std::vector<double> g2(window * window);
  const int half = window / 2;
  double gsum = 0.0;
  for (int i = 0; i < window; ++i)
    for (int j = 0; j < window; ++j) {
      const double di = i - half, dj = j - half;
      g2[i * window + j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      gsum += g2[i * window + j];
    }
  for (auto& v : g2) v /= gsum;

  const double c1 = (k1 * 255.0) * (k1 * 255.0);
  const double c2 = (k2 * 255.0) * (k2 * 255.0);
  double acc = 0.0;
  int count = 0;
  for (int r = 0; r + window <= h; ++r)
    for (int c = 0; c + window <= w; ++c) {
      double mu_a = 0.0, mu_b = 0.0;
      for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) {
          mu_a += g2[i * window + j] * ya[(r + i) * w + c + j];
          mu_b += g2[i * window + j] * yb[(r + i) * w + c + j];
        }
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) {
          const double da = ya[(r + i) * w + c + j] - mu_a;
          const double db = yb[(r + i) * w + c + j] - mu_b;
          va += g2[i * window + j] * da * da;
          vb += g2[i * window + j] * db * db;
          cov += g2[i * window + j] * da * db;
        }
      acc += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
             ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
      ++count;
    }
  return acc / count;
}

}  // namespace testutil
