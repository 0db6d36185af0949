#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "usvtrack/harness.hpp"
#include "usvtrack/servo.hpp"

using namespace usvtrack;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

// ideal perception: truth boxes become unit-confidence detections
servo::Perceiver truth_perceiver() {
  return [](const sim::RenderOutput& ro, int) {
    std::vector<Detection> dets;
    for (const auto& [cls, box] : ro.truth_boxes) dets.push_back({box, cls, 0.99});
    return dets;
  };
}

}  // namespace

TEST_CASE("visual_error convention") {
  Detection d;
  d.box = {0.5, 0.5, 0.1, 0.1};
  CHECK(servo::visual_error(d, 640, 480).ex == Approx(0.0));
  d.box.cx = 0.625;
  CHECK(servo::visual_error(d, 640, 480).ex == Approx(-80.0));
  d.box.cx = 0.25;
  CHECK(servo::visual_error(d, 128, 128).ex == Approx(32.0));
  d.box.cy = 0.25;
  CHECK(servo::visual_error(d, 128, 128).ey == Approx(32.0));
}

TEST_CASE("pid_step discretization") {
  const servo::PIDState zero;
  CHECK(servo::pid_step({1, 0.5, 0.1}, zero, 0.0, 1.0).u == Approx(0.0));
  CHECK(servo::pid_step({2, 0, 0}, zero, 1.0, 1.0, {500, 10}).u == Approx(2.0));

  // first call: rectangular integral includes the sample, derivative defined 0
  const auto r = servo::pid_step({1, 0.5, 0.1}, zero, 1.0, 1.0, {500, 10});
  CHECK(r.u == Approx(1.0 + 0.5 * 1.0 + 0.0).epsilon(1e-12));
  CHECK(r.state.initialized);
  CHECK(r.state.prev_error == Approx(1.0));

  // second call uses the difference quotient
  const auto r2 = servo::pid_step({1, 0.5, 0.1}, r.state, 2.0, 1.0, {500, 10});
  CHECK(r2.u == Approx(2.0 + 0.5 * 3.0 + 0.1 * 1.0).epsilon(1e-12));

  CHECK_THROWS(servo::pid_step({1, 0, 0}, zero, 1.0, 0.0));
  CHECK_THROWS(servo::pid_step({-1, 0, 0}, zero, 1.0, 1.0));
}

TEST_CASE("pid linearity, anti-windup and output clamp") {
  const servo::PIDGains g{0.02, 0.01, 0.05};
  const servo::PIDState zero;
  const servo::PIDLimits lim{500, 100};
  const double u1 = servo::pid_step(g, zero, 3.0, 0.1, lim).u;
  const double u2 = servo::pid_step(g, zero, 6.0, 0.1, lim).u;
  CHECK(u2 == Approx(2.0 * u1).epsilon(1e-12));

  // integral saturates
  servo::PIDState s;
  for (int i = 0; i < 20000; ++i) s = servo::pid_step({0, 1, 0}, s, 100.0, 0.1, {50, 1e9}).state;
  CHECK(s.integral == Approx(50.0));

  // output clamp flag
  const auto clamped = servo::pid_step({10, 0, 0}, zero, 100.0, 0.1, {500, 0.5});
  CHECK(clamped.u == Approx(0.5));
  CHECK(clamped.clamped);
}

TEST_CASE("select_target") {
  CHECK_FALSE(servo::select_target({}, 0, std::nullopt).has_value());

  Detection strong{{0.4, 0.5, 0.1, 0.1}, 2, 0.9};
  Detection weak{{0.6, 0.5, 0.1, 0.1}, 2, 0.6};
  Detection other{{0.5, 0.5, 0.4, 0.4}, 1, 0.99};
  auto sel = servo::select_target({weak, strong, other}, 2, std::nullopt);
  REQUIRE(sel.has_value());
  CHECK(sel->confidence == Approx(0.9));

  // equal confidence: previous-overlap wins
  Detection a{{0.3, 0.5, 0.1, 0.1}, 2, 0.8};
  Detection b{{0.7, 0.5, 0.1, 0.1}, 2, 0.8};
  auto prev = std::make_optional<Detection>({{0.31, 0.5, 0.1, 0.1}, 2, 0.8});
  sel = servo::select_target({a, b}, 2, prev);
  REQUIRE(sel.has_value());
  CHECK(sel->box.cx == Approx(0.3));

  // equal confidence, no previous: larger area wins
  Detection small{{0.3, 0.5, 0.05, 0.05}, 2, 0.8};
  Detection large{{0.7, 0.5, 0.2, 0.2}, 2, 0.8};
  sel = servo::select_target({small, large}, 2, std::nullopt);
  REQUIRE(sel.has_value());
  CHECK(sel->box.cx == Approx(0.7));
}

TEST_CASE("sign chain: target left of center turns the bow left") {
  sim::ScenarioConfig cfg;
  cfg.target_range_m = 150.0;
  cfg.bearing_deg = 8.0;  // CCW-positive, appears left of center
  const sim::Scenario sc = sim::make_scenario(cfg);

  const auto ro = sim::render(sc.usv, sc.targets, sc.camera, 1);
  REQUIRE(ro.truth_boxes.size() == 1);
  Detection d{ro.truth_boxes[0].second, ro.truth_boxes[0].first, 0.99};
  const auto ve = servo::visual_error(d, 64, 64);
  CHECK(ve.ex > 0.0);

  const auto pr = servo::pid_step({0.004, 0, 0}, {}, ve.ex, 0.1);
  CHECK(pr.u > 0.0);

  const sim::USVState next = sim::step_kinematics(sc.usv, pr.u, 0.0, 0.1);
  CHECK(next.heading > sc.usv.heading);  // turning toward the target
}

TEST_CASE("pure-P tracking converges monotonically with ideal perception") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    sim::ScenarioConfig cfg;
    cfg.target_range_m = 150.0;
    cfg.bearing_deg = 9.0;
    cfg.seed = seed;
    const sim::Scenario sc = sim::make_scenario(cfg);

    servo::EpisodeConfig ec;
    ec.gains = {0.004, 0.0, 0.0};
    ec.cruise_speed = 0.0;  // rotate only
    ec.stop.max_ticks = 300;
    ec.stop.proximity_height_frac = 0.9;  // never triggers here
    const auto log = servo::run_episode_with_perceiver(sc, truth_perceiver(), ec, seed);

    double prev = 1e18;
    bool reached_deadband = false;
    for (const auto& t : log.ticks) {
      REQUIRE(t.error.has_value());
      const double e = std::fabs(t.error->ex);
      if (!reached_deadband) CHECK(e <= prev + 1e-9);
      prev = e;
      if (e <= ec.deadband_px) reached_deadband = true;
    }
    CHECK(reached_deadband);
  }
}

TEST_CASE("stop conditions") {
  sim::ScenarioConfig cfg;
  cfg.target_range_m = 30.0;  // large apparent size right away
  const sim::Scenario sc = sim::make_scenario(cfg);

  servo::EpisodeConfig ec;
  ec.stop.proximity_height_frac = 0.2;
  auto log = servo::run_episode_with_perceiver(sc, truth_perceiver(), ec, 1);
  CHECK(log.stop_reason == servo::StopReason::proximity);
  CHECK(log.ticks.size() == 1);  // already at proximity at tick 0
  REQUIRE(log.ticks.back().stop.has_value());

  ec.stop.proximity_height_frac = 0.95;
  ec.stop.max_ticks = 1;
  log = servo::run_episode_with_perceiver(sc, truth_perceiver(), ec, 1);
  CHECK(log.stop_reason == servo::StopReason::max_ticks);
  CHECK(log.ticks.size() == 1);

  // no detections at all: hold, search, then give up as lost
  servo::Perceiver blind = [](const sim::RenderOutput&, int) {
    return std::vector<Detection>{};
  };
  ec.stop.max_ticks = 500;
  ec.stop.lost_patience = 20;
  log = servo::run_episode_with_perceiver(sc, blind, ec, 1);
  CHECK(log.stop_reason == servo::StopReason::lost);
  CHECK(log.ticks.size() == 40);  // exactly twice the patience
}

TEST_CASE("episode log is deterministic and serializes stably") {
  sim::ScenarioConfig cfg;
  cfg.target_range_m = 120.0;
  cfg.bearing_deg = 5.0;
  const sim::Scenario sc = sim::make_scenario(cfg);
  servo::EpisodeConfig ec;
  ec.stop.max_ticks = 60;
  ec.stop.proximity_height_frac = 0.9;

  const auto log1 = servo::run_episode_with_perceiver(sc, truth_perceiver(), ec, 7);
  const auto log2 = servo::run_episode_with_perceiver(sc, truth_perceiver(), ec, 7);
  REQUIRE(log1.ticks.size() == log2.ticks.size());

  const fs::path dir = fs::temp_directory_path() / "usvtrack_servo_log";
  fs::create_directories(dir);
  servo::write_episode_csv(log1, (dir / "a.csv").string());
  servo::write_episode_csv(log2, (dir / "b.csv").string());
  std::ifstream fa(dir / "a.csv"), fb(dir / "b.csv");
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK(sa.rfind("tick,x,y,heading,speed,det_conf,det_cx,det_h,ex,u,stop_reason\n", 0) == 0);

  const auto summary = harness::summarize_episode(log1);
  CHECK(summary.ticks == static_cast<int>(log1.ticks.size()));
  CHECK(summary.stop_reason == "max_ticks");
  fs::remove_all(dir);
}
