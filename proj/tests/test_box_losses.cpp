#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "usvtrack/box.hpp"
#include "usvtrack/detector.hpp"
#include "usvtrack/rng.hpp"

using namespace usvtrack;
using doctest::Approx;

namespace {

BoundingBox corners(double x1, double y1, double x2, double y2) {
  return BoundingBox::from_corners(x1, y1, x2, y2);
}

BoundingBox random_box(Rng& rng) {
  const double w = rng.uniform(0.05, 0.6);
  const double h = rng.uniform(0.05, 0.6);
  return {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), w, h};
}

// independent GIoU oracle written on the union form
double giou_oracle(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  const double inter = (iw > 0 && ih > 0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  const double cw = std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1());
  const double ch = std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1());
  const double ac = cw * ch;
  return inter / uni - (ac - uni) / ac;
}

}  // namespace

TEST_CASE("iou closed forms") {
  const BoundingBox a{0.5, 0.5, 0.2, 0.2};
  CHECK(iou(a, a) == Approx(1.0));
  CHECK(iou(corners(0, 0, 0.2, 0.2), corners(0.5, 0.5, 0.9, 0.9)) == 0.0);
  // corner boxes (0,0,2,2) and (1,0,3,2), scaled into the unit square by 1/4
  const BoundingBox p = corners(0.0, 0.0, 0.5, 0.5);
  const BoundingBox q = corners(0.25, 0.0, 0.75, 0.5);
  CHECK(iou(p, q) == Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(iou(q, p) == Approx(iou(p, q)).epsilon(1e-15));
}

TEST_CASE("box_loss closed forms and the enclosing-area identity") {
  const BoundingBox a{0.5, 0.5, 0.25, 0.3};
  CHECK(box_loss(a, a) == Approx(0.0));

  // corner boxes (0,0,1,1) and (2,0,3,1) scaled by 1/4: disjoint, gap of one width
  const BoundingBox p = corners(0.0, 0.0, 0.25, 0.25);
  const BoundingBox q = corners(0.5, 0.0, 0.75, 0.25);
  CHECK(box_loss(p, q) == Approx(4.0 / 3.0).epsilon(1e-12));

  Rng rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const BoundingBox x = random_box(rng);
    const BoundingBox y = random_box(rng);
    const double lhs = box_loss(x, y);
    const double rhs = 1.0 - giou_oracle(x, y);
    CHECK(std::fabs(lhs - rhs) <= 1e-12);
    CHECK(lhs >= 0.0);
    CHECK(lhs < 2.0);
  }
}

TEST_CASE("box_loss gradient matches finite differences") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const BoundingBox pred = random_box(rng);
    const BoundingBox truth = random_box(rng);
    double g[4];
    box_loss_grad(pred, truth, g);
    const double h = 1e-6;
    double fields[4] = {pred.cx, pred.cy, pred.w, pred.h};
    for (int k = 0; k < 4; ++k) {
      double lo[4] = {fields[0], fields[1], fields[2], fields[3]};
      double hi[4] = {fields[0], fields[1], fields[2], fields[3]};
      lo[k] -= h;
      hi[k] += h;
      const double f_lo = box_loss({lo[0], lo[1], lo[2], lo[3]}, truth);
      const double f_hi = box_loss({hi[0], hi[1], hi[2], hi[3]}, truth);
      const double fd = (f_hi - f_lo) / (2.0 * h);
      CHECK(g[k] == Approx(fd).epsilon(1e-4).scale(1.0));
    }
  }
}

TEST_CASE("nms") {
  CHECK(nms({}).empty());

  Detection d1{{0.5, 0.5, 0.2, 0.2}, 0, 0.9};
  Detection d2{{0.5, 0.5, 0.2, 0.2}, 0, 0.8};
  auto out = nms({d1, d2});
  REQUIRE(out.size() == 1);
  CHECK(out[0].confidence == Approx(0.9));

  Detection apart{{0.15, 0.15, 0.2, 0.2}, 0, 0.9};
  out = nms({d1, apart});
  CHECK(out.size() == 2);

  // same box, different class: both survive
  Detection other_cls = d2;
  other_cls.class_id = 1;
  out = nms({d1, other_cls});
  CHECK(out.size() == 2);

  // below the confidence floor
  Detection weak{{0.5, 0.5, 0.2, 0.2}, 0, 0.3};
  CHECK(nms({weak}).empty());
}

TEST_CASE("assign_targets conventions") {
  det::GridSpec grid;
  grid.k = 2;
  grid.anchors_per_cell = 2;
  grid.num_classes = 6;
  grid.anchors = {{0.3, 0.1}, {0.1, 0.3}};

  // center exactly on the shared boundary goes to the clamped lower-right cell
  auto a = det::assign_targets({{1, {0.5, 0.5, 0.3, 0.1}}}, grid);
  CHECK(a.positives() == 1);
  const int cell = 1 * 2 + 1;  // row 1, col 1
  CHECK(a.slots[a.index(cell, 0)].positive);  // anchor 0 has the matching shape
  CHECK(a.slots[a.index(cell, 0)].class_id == 1);
  CHECK_FALSE(a.slots[a.index(cell, 1)].positive);

  auto empty = det::assign_targets({}, grid);
  CHECK(empty.positives() == 0);

  // anchor preference follows shape IoU
  auto tall = det::assign_targets({{0, {0.2, 0.2, 0.1, 0.3}}}, grid);
  const int cell00 = 0;
  CHECK(tall.slots[tall.index(cell00, 1)].positive);

  // collision: larger area wins, the other is dropped
  auto clash = det::assign_targets(
      {{0, {0.2, 0.2, 0.3, 0.1}}, {2, {0.22, 0.21, 0.32, 0.12}}}, grid);
  CHECK(clash.positives() == 1);
  CHECK(clash.dropped == 1);
  CHECK(clash.slots[clash.index(cell00, 0)].class_id == 2);

  // deterministic: identical inputs, identical result
  auto again = det::assign_targets({{1, {0.5, 0.5, 0.3, 0.1}}}, grid);
  CHECK(again.slots.size() == a.slots.size());
  for (std::size_t i = 0; i < a.slots.size(); ++i)
    CHECK(again.slots[i].positive == a.slots[i].positive);

  CHECK_THROWS(det::assign_targets({{9, {0.5, 0.5, 0.1, 0.1}}}, grid));
}

TEST_CASE("clc_loss closed forms") {
  det::GridSpec grid;
  grid.k = 1;
  grid.anchors_per_cell = 1;
  grid.num_classes = 2;
  grid.anchors = {{0.3, 0.3}};

  auto none = det::assign_targets({}, grid);
  CHECK(det::clc_loss(none, {0.7, 0.3}) == 0.0);

  auto pos = det::assign_targets({{0, {0.5, 0.5, 0.3, 0.3}}}, grid);
  CHECK(det::clc_loss(pos, {1.0 - 1e-7, 1e-7}) == Approx(0.0).scale(1.0).epsilon(1e-5));
  CHECK(det::clc_loss(pos, {0.5, 0.5}) == Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("conf_loss closed forms") {
  det::GridSpec grid;
  grid.k = 1;
  grid.anchors_per_cell = 1;
  grid.num_classes = 2;
  grid.lambda_noobj = 0.5;
  grid.anchors = {{0.3, 0.3}};

  // single slot, positive: no negative term remains
  auto pos = det::assign_targets({{0, {0.5, 0.5, 0.3, 0.3}}}, grid);
  CHECK(det::conf_loss(pos, {0.5}) == Approx(std::log(2.0)).epsilon(1e-12));

  // single slot, negative
  auto neg = det::assign_targets({}, grid);
  CHECK(det::conf_loss(neg, {0.5}) == Approx(0.5 * std::log(2.0)).epsilon(1e-12));
  CHECK(det::conf_loss(neg, {1e-7}) == Approx(0.0).scale(1.0).epsilon(1e-5));
}

TEST_CASE("total_loss additivity and joint zero") {
  det::GridSpec grid;
  grid.k = 2;
  grid.anchors_per_cell = 2;
  grid.num_classes = 3;
  grid.anchors = {{0.25, 0.15}, {0.1, 0.3}};

  Rng rng(5);
  auto assign = det::assign_targets(
      {{0, {0.3, 0.3, 0.25, 0.15}}, {2, {0.7, 0.8, 0.1, 0.28}}}, grid);

  det::GridPredictions pred;
  pred.k = 2;
  pred.m = 2;
  pred.num_classes = 3;
  const int slots = 8;
  for (int s = 0; s < slots; ++s) {
    pred.boxes.push_back({rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                          rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)});
    pred.confidence.push_back(rng.uniform(0.05, 0.95));
    double z = 0.0;
    std::vector<double> p(3);
    for (auto& v : p) {
      v = rng.uniform(0.05, 1.0);
      z += v;
    }
    for (auto& v : p) pred.class_probs.push_back(v / z);
  }

  const double total = det::total_loss(assign, pred);
  const double parts = det::clc_loss(assign, pred.class_probs) +
                       det::conf_loss(assign, pred.confidence) +
                       det::box_loss_total(assign, pred.boxes);
  CHECK(std::fabs(total - parts) <= 1e-12);
  CHECK(total > 0.0);

  // empty scene with confident negatives: loss vanishes
  auto none = det::assign_targets({}, grid);
  det::GridPredictions quiet = pred;
  for (auto& c : quiet.confidence) c = 1e-7;
  CHECK(det::total_loss(none, quiet) == Approx(0.0).scale(1.0).epsilon(1e-4));
}
