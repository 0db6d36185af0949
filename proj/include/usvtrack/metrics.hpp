#pragma once

#include <string>
#include <vector>

#include "usvtrack/image.hpp"

namespace usvtrack::metrics {

// PSNR reported for identical images instead of +inf, so reports stay finite.
inline constexpr double kPsnrCapDb = 100.0;

// Mean squared error over all pixels/channels, computed on the `scale` range
// (default 0..255 — the only scale under which PSNR and MSE columns of the
// usual 8-bit reports are mutually consistent).
double mse(const ImageBuffer& a, const ImageBuffer& b, double scale = 255.0);

// 10*log10(scale^2 / mse); requires mse > 0.
double psnr_from_mse(double mse_value, double scale = 255.0);

// PSNR in dB; returns `cap_db` when the images are identical (mse == 0).
double psnr(const ImageBuffer& a, const ImageBuffer& b, double scale = 255.0,
            double cap_db = kPsnrCapDb);

// Single-scale SSIM on BT.601 luminance with a Gaussian window. Local
// statistics are taken over every position where the full window fits
// (no padding); the result is the mean over those windows.
double ssim(const ImageBuffer& a, const ImageBuffer& b, int window = 11,
            double sigma = 1.5, double k1 = 0.01, double k2 = 0.03);

struct MetricsReport {
  std::string label;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double mse = 0.0;  // 0..255 scale
  int n_images = 0;

  // psnr_db derived from mse (capped when mse == 0), never set independently.
  static MetricsReport from_mse(const std::string& label, double mse_value,
                                double ssim_value, int n_images);
};

// CSV with header label,psnr,ssim,mse,n_images; psnr/ssim rendered with two
// decimals, mse with two decimals. Full precision goes to the JSON sibling.
void write_metrics_csv(const std::vector<MetricsReport>& rows, const std::string& path);
void write_metrics_json(const std::vector<MetricsReport>& rows, const std::string& path);
std::vector<MetricsReport> read_metrics_json(const std::string& path);

}  // namespace usvtrack::metrics
