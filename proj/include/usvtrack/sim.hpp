#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "usvtrack/box.hpp"
#include "usvtrack/haze.hpp"
#include "usvtrack/image.hpp"

namespace usvtrack::sim {

// Planar unicycle state. Heading is CCW from +x and kept in (-pi, pi].
struct USVState {
  double x = 0.0;       // m
  double y = 0.0;       // m
  double heading = 0.0; // rad
  double speed = 0.0;   // m/s
};

struct KinematicLimits {
  double omega_max = 0.5;  // rad/s
  double v_max = 5.0;      // m/s
};

double wrap_angle(double a);

// Euler step: commands are clamped to the limits, the new speed takes effect
// immediately, position integrates along the old heading.
USVState step_kinematics(const USVState& state, double yaw_rate, double speed_cmd,
                         double dt, const KinematicLimits& limits = {});

struct TargetVessel {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double hull_length = 20.0;  // m
  double hull_height = 10.0;  // m, waterline to top of superstructure
  int class_id = 0;
  std::array<double, 3> silhouette_color{0.5, 0.5, 0.5};
};

// Shape/color presets for the six vessel classes.
struct VesselClassPreset {
  const char* name;
  std::array<double, 3> color;
  double hull_length;
  double hull_height;
  double cabin_width_frac;   // superstructure width as fraction of hull
  double cabin_offset_frac;  // superstructure center offset, -0.5..0.5
  bool triangular_top;       // sail silhouette instead of a cabin block
};

inline constexpr int kNumVesselClasses = 6;
const VesselClassPreset& vessel_class(int class_id);

// Forward-mounted pinhole camera, level with the horizon.
struct CameraModel {
  int image_width = 64;
  int image_height = 64;
  double focal_px = 110.0;
  double mount_height = 3.0;   // m above the waterline
  double far_plane_m = 5000.0; // depth assigned to sky pixels

  int horizon_row() const { return image_height / 2; }
};

struct RenderOutput {
  ImageBuffer image;
  std::vector<double> depth;  // H*W slant range, m
  std::vector<std::pair<int, BoundingBox>> truth_boxes;  // (class_id, box)
};

// Deterministic per (inputs, seed): sky gradient, seeded wave texture,
// targets as billboards scaled by pinhole projection, z-buffered far to near.
// Targets behind the camera or fully occluded contribute no truth box.
RenderOutput render(const USVState& usv, const std::vector<TargetVessel>& targets,
                    const CameraModel& cam, std::uint64_t seed);

struct ScenarioConfig {
  double target_range_m = 200.0;
  double bearing_deg = 0.0;
  int class_id = 0;
  haze::Preset weather = haze::Preset::clear;
  std::uint64_t seed = 1;
  int image_size = 64;
};

struct Scenario {
  USVState usv;
  std::vector<TargetVessel> targets;
  CameraModel camera;
  haze::HazeParams haze_params;
  int target_class = 0;
  std::uint64_t seed = 1;
};

// Reproducible initial world for dataset generation and servo episodes.
Scenario make_scenario(const ScenarioConfig& cfg);

}  // namespace usvtrack::sim
