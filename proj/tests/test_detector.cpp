#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "usvtrack/dataset.hpp"
#include "usvtrack/detector.hpp"
#include "usvtrack/gan.hpp"

using namespace usvtrack;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

data::DatasetManifest boxed_dataset(const fs::path& dir, int n_frames, int side,
                                    std::uint64_t seed) {
  fs::create_directories(dir / "frames");
  data::DatasetManifest m;
  m.seed = seed;
  m.image_size = side;
  m.root_dir = dir.string();
  Rng rng(seed);
  for (int i = 0; i < n_frames; ++i) {
    ImageBuffer img = testutil::constant_image(side, side, 0.2, 0.3, 0.5);
    // paint a bright block so there is something to regress to
    const int bx = 2 + static_cast<int>(rng.below(side / 2));
    const int by = 2 + static_cast<int>(rng.below(side / 2));
    const int bs = 3 + static_cast<int>(rng.below(4));
    for (int r = by; r < std::min(side, by + bs); ++r)
      for (int c = bx; c < std::min(side, bx + bs); ++c) {
        img.at(r, c, 0) = 0.9;
        img.at(r, c, 1) = 0.25;
        img.at(r, c, 2) = 0.1;
      }
    data::FrameRecord f;
    f.frame_id = i;
    f.clear_path = "frames/c" + std::to_string(i) + ".png";
    f.hazy_path = f.clear_path;
    f.boxes.emplace_back(
        0, BoundingBox{(bx + bs * 0.5) / side, (by + bs * 0.5) / side,
                       static_cast<double>(bs) / side, static_cast<double>(bs) / side});
    f.is_train = (i % 2 == 0);
    save_image(img, m.resolve(f.clear_path));
    m.frames.push_back(f);
  }
  data::save_manifest(m, (dir / "manifest.json").string());
  return m;
}

bool same_file_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return !sa.empty() && sa == sb;
}

}  // namespace

TEST_CASE("net raw output shape and decode contracts") {
  det::GridSpec grid;
  grid.k = 8;
  grid.anchors_per_cell = 2;
  grid.num_classes = 6;
  grid.anchors = {{0.1, 0.1}, {0.3, 0.2}};
  det::DetectorNet net(4, grid, 64, 64);
  Rng rng(3);
  net.init(rng);

  nn::Tensor x = nn::image_to_tensor(testutil::random_image(64, 64, 5));
  nn::Tensor raw = net.forward(x, false);
  CHECK(raw.c == 2 * (5 + 6));
  CHECK(raw.h == 8);
  CHECK(raw.w == 8);

  const det::GridPredictions pred = det::decode(raw, 0, grid);
  CHECK(pred.boxes.size() == 8 * 8 * 2);
  for (std::size_t s = 0; s < pred.boxes.size(); ++s) {
    CHECK(pred.confidence[s] > 0.0);
    CHECK(pred.confidence[s] < 1.0);
    CHECK(pred.boxes[s].w > 0.0);
    CHECK(pred.boxes[s].h > 0.0);
    CHECK(pred.boxes[s].cx >= 0.0);
    CHECK(pred.boxes[s].cx <= 1.0);
    double psum = 0.0;
    for (int c = 0; c < 6; ++c) psum += pred.class_probs[s * 6 + c];
    CHECK(psum == Approx(1.0).epsilon(1e-9));
  }

  CHECK_THROWS(det::DetectorNet(4, grid, 48, 48));  // k mismatch
}

TEST_CASE("kmeans anchors are deterministic and find the two modes") {
  std::vector<std::array<double, 2>> sizes;
  Rng rng(4);
  for (int i = 0; i < 60; ++i) {
    if (i % 2 == 0)
      sizes.push_back({0.10 + 0.01 * rng.uniform(), 0.30 + 0.01 * rng.uniform()});
    else
      sizes.push_back({0.40 + 0.01 * rng.uniform(), 0.12 + 0.01 * rng.uniform()});
  }
  const auto a = det::kmeans_anchors(sizes, 2, 9);
  const auto b = det::kmeans_anchors(sizes, 2, 9);
  CHECK(a == b);
  REQUIRE(a.size() == 2);
  // one tall-narrow and one wide-flat mode, sorted by area
  CHECK(a[0][0] == Approx(0.105).epsilon(0.1));
  CHECK(a[0][1] == Approx(0.305).epsilon(0.1));
  CHECK(a[1][0] == Approx(0.405).epsilon(0.1));
  CHECK_THROWS(det::kmeans_anchors({}, 2, 1));
}

TEST_CASE("tiny detector training: bookkeeping, determinism, round-trip") {
  const fs::path dir = fs::temp_directory_path() / "usvtrack_det_tiny";
  fs::remove_all(dir);
  const data::DatasetManifest m = boxed_dataset(dir, 8, 16, 31);

  det::DetTrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.base_width = 2;
  cfg.num_classes = 2;
  cfg.seed = 5;

  det::DetectorCheckpoint a = det::train_detector(m, cfg);
  CHECK(a.history.size() == 1);
  CHECK(std::isfinite(a.history[0].loss));
  CHECK(a.grid.k == 2);  // 16 px side / 8

  det::DetectorCheckpoint b = det::train_detector(m, cfg);
  det::save_detector_checkpoint(a, (dir / "a.ckpt").string());
  det::save_detector_checkpoint(b, (dir / "b.ckpt").string());
  CHECK(same_file_bytes(dir / "a.ckpt", dir / "b.ckpt"));

  det::DetectorCheckpoint loaded = det::load_detector_checkpoint((dir / "a.ckpt").string());
  det::save_detector_checkpoint(loaded, (dir / "c.ckpt").string());
  CHECK(same_file_bytes(dir / "a.ckpt", dir / "c.ckpt"));

  // same image twice: identical detections
  const ImageBuffer probe = testutil::random_image(16, 16, 99);
  const auto d1 = det::detect(loaded, probe, 0.5, 0.0);
  const auto d2 = det::detect(loaded, probe, 0.5, 0.0);
  REQUIRE(d1.size() == d2.size());
  for (std::size_t i = 0; i < d1.size(); ++i) {
    CHECK(d1[i].confidence == d2[i].confidence);
    CHECK(d1[i].box.cx == d2[i].box.cx);
  }

  // integer-multiple inputs are pooled down; anything else is rejected
  (void)det::detect(loaded, testutil::random_image(32, 32, 1));
  CHECK_THROWS(det::detect(loaded, testutil::random_image(24, 24, 1)));

  fs::remove_all(dir);
}

TEST_CASE("unannotated dataset is rejected") {
  const fs::path dir = fs::temp_directory_path() / "usvtrack_det_unann";
  fs::remove_all(dir);
  fs::create_directories(dir / "frames");
  data::DatasetManifest m;
  m.root_dir = dir.string();
  for (int i = 0; i < 4; ++i) {
    data::FrameRecord f;
    f.frame_id = i;
    f.clear_path = "frames/c" + std::to_string(i) + ".png";
    f.hazy_path = f.clear_path;
    f.is_train = true;
    save_image(testutil::random_image(16, 16, i), m.resolve(f.clear_path));
    m.frames.push_back(f);
  }
  det::DetTrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_WITH_AS(det::train_detector(m, cfg), doctest::Contains("annotated"),
                       std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint kind mismatch is named") {
  const fs::path dir = fs::temp_directory_path() / "usvtrack_det_kind";
  fs::remove_all(dir);
  const data::DatasetManifest m = boxed_dataset(dir, 4, 16, 3);
  det::DetTrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.base_width = 2;
  cfg.num_classes = 2;
  det::DetectorCheckpoint ck = det::train_detector(m, cfg);
  det::save_detector_checkpoint(ck, (dir / "d.ckpt").string());
  CHECK_THROWS_WITH_AS(gan::load_gan_checkpoint((dir / "d.ckpt").string()),
                       doctest::Contains("detector"), std::runtime_error);
  fs::remove_all(dir);
}
