#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "usvtrack/box.hpp"
#include "usvtrack/detector.hpp"
#include "usvtrack/gan.hpp"
#include "usvtrack/sim.hpp"

namespace usvtrack::servo {

// Pixel error between the image center (desired feature) and the detection
// box center (observed feature); positive ex means the target sits left of
// center and the heading must increase.
struct VisualError {
  double ex = 0.0;  // px
  double ey = 0.0;  // px, logged but not actuated
};

VisualError visual_error(const Detection& det, int image_width, int image_height);

struct PIDGains {
  double kp = 0.004;   // rad/s per px
  double ki = 0.0004;  // rad/s per px*s
  double kd = 0.002;   // rad/s per px/s
};

struct PIDState {
  double integral = 0.0;    // px*s, clamped to +-integral_max
  double prev_error = 0.0;  // px
  bool initialized = false;
};

struct PIDLimits {
  double integral_max = 500.0;  // px*s
  double omega_max = 0.5;       // rad/s
};

struct PIDResult {
  double u = 0.0;  // rad/s
  PIDState state;
  bool clamped = false;  // output hit +-omega_max
};

// Rectangular integral including the current sample; derivative defined 0 on
// the first call.
PIDResult pid_step(const PIDGains& gains, const PIDState& state, double error_px, double dt,
                   const PIDLimits& limits = {});

// Highest-confidence detection of the target class; ties broken by IoU with
// the previous selection, then by larger box area.
std::optional<Detection> select_target(const std::vector<Detection>& dets, int target_class,
                                       const std::optional<Detection>& prev);

enum class StopReason { proximity, max_ticks, lost };
std::string stop_reason_name(StopReason r);

struct StopCondition {
  double proximity_height_frac = 0.35;  // detection box height / image height
  int max_ticks = 2000;
  int lost_patience = 50;  // ticks holding course before searching
};

struct TickRecord {
  int tick = 0;
  sim::USVState usv;  // state at the start of the tick
  std::optional<Detection> detection;
  std::optional<VisualError> error;
  double yaw_cmd = 0.0;
  double speed_cmd = 0.0;
  std::optional<StopReason> stop;  // set on the terminal record only
};

struct EpisodeLog {
  std::vector<TickRecord> ticks;
  StopReason stop_reason = StopReason::max_ticks;
};

struct EpisodeConfig {
  PIDGains gains;
  StopCondition stop;
  PIDLimits pid_limits;
  sim::KinematicLimits kin_limits;
  double dt = 0.1;
  double cruise_speed = 3.0;
  double min_approach_frac = 0.2;  // speed floor inside the slow-down ramp
  double deadband_px = 2.0;
  double search_omega = 0.25;  // rad/s rotate-in-place when the target is lost
  bool use_dehaze = true;
  std::string dump_frames_dir;  // when non-empty, per-tick PNG dumps
};

// Full perception pipeline per tick: render, haze, optional dehaze, detect,
// select, PID. Deterministic per seed.
EpisodeLog run_episode(const sim::Scenario& scenario, gan::GanCheckpoint* dehaze_ckpt,
                       det::DetectorCheckpoint& detector_ckpt, const EpisodeConfig& cfg,
                       std::uint64_t seed);

// Same control loop with an injected perception stage (used by control tests
// to bypass the trained models).
using Perceiver = std::function<std::vector<Detection>(const sim::RenderOutput&, int tick)>;
EpisodeLog run_episode_with_perceiver(const sim::Scenario& scenario, const Perceiver& perceive,
                                      const EpisodeConfig& cfg, std::uint64_t seed);

// CSV: tick,x,y,heading,speed,det_conf,det_cx,det_h,ex,u,stop_reason
void write_episode_csv(const EpisodeLog& log, const std::string& path);

}  // namespace usvtrack::servo
