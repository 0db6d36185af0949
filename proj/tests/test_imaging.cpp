#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "usvtrack/image.hpp"
#include "usvtrack/metrics.hpp"

using namespace usvtrack;
namespace fs = std::filesystem;

TEST_CASE("mse basics") {
  const ImageBuffer a = testutil::random_image(16, 16, 11);
  CHECK(metrics::mse(a, a) == 0.0);

  ImageBuffer b = testutil::constant_image(16, 16, 0.5, 0.5, 0.5);
  ImageBuffer c = b;
  for (auto& v : c.data) v += 16.0 / 255.0;
  CHECK(metrics::mse(b, c) == doctest::Approx(256.0).epsilon(1e-9));

  ImageBuffer d = a;
  d.at(3, 4, 1) += 0.25;
  CHECK(metrics::mse(a, d) > 0.0);

  ImageBuffer wrong(16, 24);
  CHECK_THROWS(metrics::mse(a, wrong));
}

TEST_CASE("mse and psnr match naive oracles on random pairs") {
  for (int s = 0; s < 5; ++s) {
    const ImageBuffer a = testutil::random_image(16, 16, 100 + s);
    const ImageBuffer b = testutil::random_image(16, 16, 200 + s);
    const double m = metrics::mse(a, b);
    CHECK(m == doctest::Approx(testutil::oracle_mse(a, b)).epsilon(1e-9));
    CHECK(metrics::psnr(a, b) == doctest::Approx(testutil::oracle_psnr(a, b)).epsilon(1e-9));
    // symmetry
    CHECK(metrics::mse(b, a) == doctest::Approx(m).epsilon(1e-12));
  }
}

TEST_CASE("psnr closed forms") {
  // reported table pairs
  CHECK(metrics::psnr_from_mse(205.65) == doctest::Approx(24.99).epsilon(0.0005));
  CHECK(metrics::psnr_from_mse(253.84) == doctest::Approx(24.08).epsilon(0.0005));
  CHECK(metrics::psnr_from_mse(238.92) == doctest::Approx(24.34).epsilon(0.0005));
  // the inconsistent pair: recomputation lands at 23.29, far from the printed 23.92
  CHECK(metrics::psnr_from_mse(304.82) == doctest::Approx(23.29).epsilon(0.0005));
  CHECK(std::fabs(metrics::psnr_from_mse(304.82) - 23.92) > 0.5);

  CHECK_THROWS(metrics::psnr_from_mse(0.0));
  CHECK_THROWS(metrics::psnr_from_mse(-3.0));

  const ImageBuffer a = testutil::constant_image(16, 16, 0.5, 0.5, 0.5);
  ImageBuffer b = a;
  for (auto& v : b.data) v += 16.0 / 255.0;
  CHECK(metrics::psnr(a, b) == doctest::Approx(20.0 * std::log10(255.0 / 16.0)).epsilon(1e-9));
  CHECK(metrics::psnr(a, b) == doctest::Approx(24.05).epsilon(0.0005));
  CHECK(metrics::psnr(a, a) == 100.0);  // capped, not infinite
}

TEST_CASE("ssim identity, negatives, oracle agreement") {
  const ImageBuffer a = testutil::random_image(32, 32, 42);
  CHECK(metrics::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  ImageBuffer neg = a;
  for (auto& v : neg.data) v = 1.0 - v;
  CHECK(metrics::ssim(a, neg) < 0.5);

  for (int s = 0; s < 5; ++s) {
    const ImageBuffer x = testutil::random_image(32, 32, 300 + s);
    const ImageBuffer y = testutil::random_image(32, 32, 400 + s);
    const double v = metrics::ssim(x, y);
    CHECK(v == doctest::Approx(testutil::oracle_ssim(x, y)).epsilon(1e-6));
    CHECK(v == doctest::Approx(metrics::ssim(y, x)).epsilon(1e-12));
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }

  CHECK_THROWS(metrics::ssim(a, a, 10));                        // even window
  CHECK_THROWS(metrics::ssim(testutil::random_image(8, 8, 1),
                             testutil::random_image(8, 8, 1)));  // window > side
  CHECK_THROWS(metrics::ssim(a, testutil::random_image(32, 16, 9)));
}

TEST_CASE("png round-trip") {
  const fs::path dir = fs::temp_directory_path() / "usvtrack_imaging_test";
  fs::create_directories(dir);

  const ImageBuffer zeros = testutil::constant_image(16, 16, 0, 0, 0);
  const ImageBuffer ones = testutil::constant_image(16, 16, 1, 1, 1);
  save_image(zeros, (dir / "z.png").string());
  save_image(ones, (dir / "o.png").string());
  CHECK(metrics::mse(load_image((dir / "z.png").string()), zeros) == 0.0);
  CHECK(metrics::mse(load_image((dir / "o.png").string()), ones) == 0.0);

  const ImageBuffer rnd = testutil::random_image(24, 16, 77);
  save_image(rnd, (dir / "r.png").string());
  const ImageBuffer back = load_image((dir / "r.png").string());
  double max_err = 0.0;
  for (std::size_t i = 0; i < rnd.data.size(); ++i)
    max_err = std::max(max_err, std::fabs(rnd.data[i] - back.data[i]));
  CHECK(max_err <= 1.0 / 510.0);

  // save-load is the identity on already-quantized data
  save_image(back, (dir / "r2.png").string());
  CHECK(metrics::mse(load_image((dir / "r2.png").string()), back) == 0.0);

  CHECK_THROWS(load_image((dir / "missing.png").string()));
  std::ofstream bad(dir / "bad.png", std::ios::binary);
  bad << "not a png at all";
  bad.close();
  CHECK_THROWS(load_image((dir / "bad.png").string()));

  fs::remove_all(dir);
}

TEST_CASE("metrics report derives psnr from mse") {
  const auto r = metrics::MetricsReport::from_mse("x", 205.65, 0.9, 10);
  CHECK(r.psnr_db == metrics::psnr_from_mse(205.65));  // exact, same code path
  const auto zero = metrics::MetricsReport::from_mse("y", 0.0, 1.0, 3);
  CHECK(zero.psnr_db == 100.0);

  const fs::path dir = fs::temp_directory_path() / "usvtrack_report_test";
  fs::create_directories(dir);
  metrics::write_metrics_csv({r, zero}, (dir / "m.csv").string());
  metrics::write_metrics_json({r, zero}, (dir / "m.json").string());

  std::ifstream csv(dir / "m.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "label,psnr,ssim,mse,n_images");
  std::getline(csv, line);
  CHECK(line == "x,24.99,0.90,205.65,10");

  const auto rows = metrics::read_metrics_json((dir / "m.json").string());
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].psnr_db == r.psnr_db);  // full precision preserved
  CHECK(rows[0].mse == r.mse);
  fs::remove_all(dir);
}

TEST_CASE("downscale mean-pools exactly") {
  ImageBuffer big(16, 16);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c)
      for (int ch = 0; ch < 3; ++ch) big.at(r, c, ch) = ((r + c) % 2 == 0) ? 1.0 : 0.0;
  const ImageBuffer small = downscale(big, 2);
  CHECK(small.height == 8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) CHECK(small.at(r, c, 0) == 0.5);
  CHECK_THROWS(downscale(big, 3));
}

TEST_CASE("image validation") {
  CHECK_THROWS(validate_image(ImageBuffer(7, 16), "t"));
  ImageBuffer bad(8, 8);
  bad.data[5] = 1.5;
  CHECK_THROWS(validate_image(bad, "t"));
  validate_image(testutil::random_image(8, 8, 5), "t");  // no throw
}
