#include "usvtrack/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace usvtrack::metrics {

namespace {

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(a.height) + "x" + std::to_string(a.width) +
                                " vs " + std::to_string(b.height) + "x" +
                                std::to_string(b.width) + ")");
}

}  // namespace

double mse(const ImageBuffer& a, const ImageBuffer& b, double scale) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = scale * a.data[i] - scale * b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

double psnr_from_mse(double mse_value, double scale) {
  if (!(mse_value > 0.0))
    throw std::invalid_argument("psnr_from_mse: mse must be > 0, got " +
                                std::to_string(mse_value));
  return 10.0 * std::log10(scale * scale / mse_value);
}

double psnr(const ImageBuffer& a, const ImageBuffer& b, double scale, double cap_db) {
  const double m = mse(a, b, scale);
  if (m == 0.0) return cap_db;
  return psnr_from_mse(m, scale);
}

double ssim(const ImageBuffer& a, const ImageBuffer& b, int window, double sigma,
            double k1, double k2) {
  require_same_shape(a, b, "ssim");
  if (window < 1 || window % 2 == 0)
    throw std::invalid_argument("ssim: window must be odd and positive");
  if (window > a.height || window > a.width)
    throw std::invalid_argument("ssim: window " + std::to_string(window) +
                                " exceeds image side " +
                                std::to_string(std::min(a.height, a.width)));

  const std::vector<double> ya = to_luminance(a);
  const std::vector<double> yb = to_luminance(b);
  const int h = a.height, w = a.width;

  // normalized 1D Gaussian; the 2D window is its outer product
  std::vector<double> g(window);
  const int half = window / 2;
  double gsum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - half;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    gsum += g[i];
  }
  for (double& v : g) v /= gsum;

  // separable pass: horizontal then vertical, valid region only
  const int vw = w - window + 1;
  const int vh = h - window + 1;
  auto hconv = [&](const std::vector<double>& src, std::vector<double>& dst) {
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < vw; ++c) {
        double s = 0.0;
        for (int i = 0; i < window; ++i) s += g[i] * src[static_cast<std::size_t>(r) * w + c + i];
        dst[static_cast<std::size_t>(r) * vw + c] = s;
      }
  };
  auto vconv = [&](const std::vector<double>& src, std::vector<double>& dst) {
    for (int r = 0; r < vh; ++r)
      for (int c = 0; c < vw; ++c) {
        double s = 0.0;
        for (int i = 0; i < window; ++i) s += g[i] * src[static_cast<std::size_t>(r + i) * vw + c];
        dst[static_cast<std::size_t>(r) * vw + c] = s;
      }
  };

  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = ya[i] * ya[i];
    bb[i] = yb[i] * yb[i];
    ab[i] = ya[i] * yb[i];
  }

  std::vector<double> tmp(static_cast<std::size_t>(h) * vw);
  std::vector<double> mu_a(static_cast<std::size_t>(vh) * vw), mu_b(mu_a.size()),
      e_aa(mu_a.size()), e_bb(mu_a.size()), e_ab(mu_a.size());
  hconv(ya, tmp); vconv(tmp, mu_a);
  hconv(yb, tmp); vconv(tmp, mu_b);
  hconv(aa, tmp); vconv(tmp, e_aa);
  hconv(bb, tmp); vconv(tmp, e_bb);
  hconv(ab, tmp); vconv(tmp, e_ab);

  const double c1 = (k1 * 255.0) * (k1 * 255.0);
  const double c2 = (k2 * 255.0) * (k2 * 255.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
           ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return acc / static_cast<double>(mu_a.size());
}

MetricsReport MetricsReport::from_mse(const std::string& label, double mse_value,
                                      double ssim_value, int n_images) {
  MetricsReport r;
  r.label = label;
  r.mse = mse_value;
  r.ssim = ssim_value;
  r.n_images = n_images;
  r.psnr_db = (mse_value > 0.0) ? psnr_from_mse(mse_value) : kPsnrCapDb;
  return r;
}

void write_metrics_csv(const std::vector<MetricsReport>& rows, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  std::fputs("label,psnr,ssim,mse,n_images\n", f);
  for (const auto& r : rows)
    std::fprintf(f, "%s,%.2f,%.2f,%.2f,%d\n", r.label.c_str(), r.psnr_db, r.ssim, r.mse,
                 r.n_images);
  std::fclose(f);
}

void write_metrics_json(const std::vector<MetricsReport>& rows, const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows)
    j.push_back({{"label", r.label},
                 {"psnr_db", r.psnr_db},
                 {"ssim", r.ssim},
                 {"mse", r.mse},
                 {"n_images", r.n_images}});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_metrics_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

std::vector<MetricsReport> read_metrics_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_metrics_json: cannot open " + path);
  nlohmann::json j;
  in >> j;
  std::vector<MetricsReport> rows;
  for (const auto& e : j) {
    MetricsReport r;
    r.label = e.at("label").get<std::string>();
    r.psnr_db = e.at("psnr_db").get<double>();
    r.ssim = e.at("ssim").get<double>();
    r.mse = e.at("mse").get<double>();
    r.n_images = e.at("n_images").get<int>();
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace usvtrack::metrics
