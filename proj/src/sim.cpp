#include "usvtrack/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "usvtrack/rng.hpp"

namespace usvtrack::sim {

namespace {

constexpr std::array<double, 3> kZenith{0.33, 0.52, 0.83};
constexpr std::array<double, 3> kSkyHorizon{0.74, 0.84, 0.93};
constexpr std::array<double, 3> kSeaNear{0.07, 0.17, 0.29};
constexpr std::array<double, 3> kSeaFar{0.27, 0.38, 0.49};

constexpr VesselClassPreset kClasses[kNumVesselClasses] = {
    {"cargo",   {0.52, 0.12, 0.09}, 26.0, 11.0, 0.38, 0.22, false},
    {"tanker",  {0.13, 0.12, 0.14}, 32.0, 10.0, 0.30, 0.32, false},
    {"fishing", {0.86, 0.56, 0.12}, 16.0, 8.0,  0.45, -0.10, false},
    {"patrol",  {0.38, 0.40, 0.43}, 20.0, 9.0,  0.55, 0.00, false},
    {"sail",    {0.88, 0.87, 0.84}, 14.0, 12.0, 0.70, 0.00, true},
    {"tug",     {0.10, 0.34, 0.17}, 15.0, 9.0,  0.50, -0.18, false},
};

struct WaveField {
  struct Component {
    double kx, ky, phase, amp;
  };
  std::array<Component, 4> comps;

  explicit WaveField(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x5ea));
    const double wavelengths[4] = {23.0, 11.0, 5.5, 2.6};
    const double amps[4] = {0.050, 0.034, 0.022, 0.012};
    for (int i = 0; i < 4; ++i) {
      const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double k = 2.0 * std::numbers::pi / wavelengths[i];
      comps[i] = {k * std::cos(dir), k * std::sin(dir),
                  rng.uniform(0.0, 2.0 * std::numbers::pi), amps[i]};
    }
  }

  double at(double wx, double wy) const {
    double v = 0.0;
    for (const auto& c : comps) v += c.amp * std::sin(c.kx * wx + c.ky * wy + c.phase);
    return v;
  }
};

inline std::array<double, 3> lerp3(const std::array<double, 3>& a,
                                   const std::array<double, 3>& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

}  // namespace

double wrap_angle(double a) {
  double r = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (r <= 0.0) r += 2.0 * std::numbers::pi;
  return r - std::numbers::pi;
}

USVState step_kinematics(const USVState& state, double yaw_rate, double speed_cmd,
                         double dt, const KinematicLimits& limits) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_kinematics: dt must be > 0");
  const double w = std::clamp(yaw_rate, -limits.omega_max, limits.omega_max);
  const double v = std::clamp(speed_cmd, 0.0, limits.v_max);
  USVState next;
  next.x = state.x + v * std::cos(state.heading) * dt;
  next.y = state.y + v * std::sin(state.heading) * dt;
  next.heading = wrap_angle(state.heading + w * dt);
  next.speed = v;
  return next;
}

const VesselClassPreset& vessel_class(int class_id) {
  if (class_id < 0 || class_id >= kNumVesselClasses)
    throw std::invalid_argument("vessel_class: class_id " + std::to_string(class_id) +
                                " outside [0," + std::to_string(kNumVesselClasses) + ")");
  return kClasses[class_id];
}

RenderOutput render(const USVState& usv, const std::vector<TargetVessel>& targets,
                    const CameraModel& cam, std::uint64_t seed) {
  const int w = cam.image_width, h = cam.image_height;
  if (w < ImageBuffer::kMinSide || h < ImageBuffer::kMinSide)
    throw std::invalid_argument("render: image size below minimum");
  if (!(cam.focal_px > 0.0)) throw std::invalid_argument("render: focal_px must be > 0");

  RenderOutput out;
  out.image = ImageBuffer(h, w);
  out.depth.assign(static_cast<std::size_t>(h) * w, cam.far_plane_m);

  const int horizon = cam.horizon_row();
  const double ch = std::cos(usv.heading), sh = std::sin(usv.heading);
  const WaveField waves(seed);

  // background: sky gradient above the horizon, wave-textured sea below
  for (int r = 0; r < h; ++r) {
    if (r < horizon) {
      const double t = horizon > 1 ? static_cast<double>(r) / (horizon - 1) : 0.0;
      const auto c = lerp3(kZenith, kSkyHorizon, t);
      for (int col = 0; col < w; ++col)
        for (int k = 0; k < 3; ++k) out.image.at(r, col, k) = c[k];
      continue;
    }
    const double v = r + 0.5 - h * 0.5;  // px below the optical axis
    const double ground = cam.mount_height * cam.focal_px / v;
    const double depth_row = ground * std::sqrt(1.0 + (v * v) / (cam.focal_px * cam.focal_px));
    const auto base = lerp3(kSeaNear, kSeaFar, ground / (ground + 150.0));
    for (int col = 0; col < w; ++col) {
      const double u = col + 0.5 - w * 0.5;  // px right of center
      const double lateral = -u / cam.focal_px * ground;  // +left in body frame
      const double wx = usv.x + ground * ch - lateral * sh;
      const double wy = usv.y + ground * sh + lateral * ch;
      const double shade = 1.0 + waves.at(wx, wy);
      for (int k = 0; k < 3; ++k)
        out.image.at(r, col, k) = std::clamp(base[k] * shade, 0.0, 1.0);
      out.depth[static_cast<std::size_t>(r) * w + col] =
          std::min(depth_row * std::sqrt(1.0 + (u * u) / (cam.focal_px * cam.focal_px)),
                   cam.far_plane_m);
    }
  }

  // far-to-near painter order with a depth test, so nearer hulls occlude
  std::vector<int> order(targets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  auto forward_of = [&](const TargetVessel& t) {
    return (t.x - usv.x) * ch + (t.y - usv.y) * sh;
  };
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return forward_of(targets[a]) > forward_of(targets[b]);
  });

  for (int idx : order) {
    const TargetVessel& tv = targets[idx];
    const double dx = tv.x - usv.x, dy = tv.y - usv.y;
    const double fwd = dx * ch + dy * sh;
    if (fwd <= 0.5) continue;  // behind or on top of the camera
    const double lat = -dx * sh + dy * ch;
    const double range = std::sqrt(dx * dx + dy * dy);

    // apparent width shrinks toward bow/stern views but never vanishes
    const double sight = std::atan2(dy, dx);
    const double aspect = std::fabs(std::sin(tv.heading - sight));
    const double eff_len = tv.hull_length * (0.25 + 0.75 * aspect);

    const double col_center = w * 0.5 - cam.focal_px * lat / fwd;
    const double row_base = h * 0.5 + cam.focal_px * cam.mount_height / fwd;
    const double px_h = cam.focal_px * tv.hull_height / fwd;
    const double px_w = cam.focal_px * eff_len / fwd;
    const double top = row_base - px_h;
    const double left = col_center - 0.5 * px_w;
    const double right = col_center + 0.5 * px_w;

    const VesselClassPreset& cls = vessel_class(tv.class_id);
    const double hull_top = row_base - 0.45 * px_h;
    const double cabin_center = col_center + cls.cabin_offset_frac * px_w;
    const double cabin_half = 0.5 * cls.cabin_width_frac * px_w;

    const int r0 = std::max(0, static_cast<int>(std::floor(top)));
    const int r1 = std::min(h - 1, static_cast<int>(std::ceil(row_base)));
    const int c0 = std::max(0, static_cast<int>(std::floor(left)));
    const int c1 = std::min(w - 1, static_cast<int>(std::ceil(right)));

    bool drawn = false;
    for (int r = r0; r <= r1; ++r) {
      const double rc = r + 0.5;
      if (rc < top || rc >= row_base) continue;
      const bool in_hull = rc >= hull_top;
      for (int c = c0; c <= c1; ++c) {
        const double cc = c + 0.5;
        if (cc < left || cc >= right) continue;
        if (!in_hull) {
          // superstructure band
          double half = cabin_half;
          if (cls.triangular_top) {
            const double frac = (rc - top) / std::max(1e-9, hull_top - top);
            half = cabin_half * frac;  // sail tapers toward the mast head
          }
          if (std::fabs(cc - cabin_center) > half) continue;
        }
        auto& d = out.depth[static_cast<std::size_t>(r) * w + c];
        if (range >= d) continue;
        d = range;
        const double shade = in_hull ? 1.0 : 1.18;
        for (int k = 0; k < 3; ++k)
          out.image.at(r, c, k) = std::clamp(tv.silhouette_color[k] * shade, 0.0, 1.0);
        drawn = true;
      }
    }
    if (!drawn) continue;

    // analytic billboard rect clipped to the frame, normalized
    const double bx1 = std::max(0.0, left) / w;
    const double bx2 = std::min(static_cast<double>(w), right) / w;
    const double by1 = std::max(0.0, top) / h;
    const double by2 = std::min(static_cast<double>(h), row_base) / h;
    if (bx2 > bx1 && by2 > by1)
      out.truth_boxes.emplace_back(tv.class_id, BoundingBox::from_corners(bx1, by1, bx2, by2));
  }

  return out;
}

Scenario make_scenario(const ScenarioConfig& cfg) {
  if (!(cfg.target_range_m > 1.0 && cfg.target_range_m < 2000.0))
    throw std::invalid_argument("make_scenario: target_range_m outside (1, 2000)");
  if (cfg.class_id < 0 || cfg.class_id >= kNumVesselClasses)
    throw std::invalid_argument("make_scenario: class_id " + std::to_string(cfg.class_id) +
                                " outside [0," + std::to_string(kNumVesselClasses) + ")");
  if (cfg.image_size < 16 || cfg.image_size % 8 != 0)
    throw std::invalid_argument("make_scenario: image_size must be >= 16 and divisible by 8");
  if (!(cfg.bearing_deg >= -180.0 && cfg.bearing_deg <= 180.0))
    throw std::invalid_argument("make_scenario: bearing_deg outside [-180, 180]");

  Scenario sc;
  sc.usv = USVState{};
  sc.camera.image_width = cfg.image_size;
  sc.camera.image_height = cfg.image_size;
  sc.camera.focal_px = cfg.image_size * (110.0 / 64.0);
  sc.seed = cfg.seed;
  sc.haze_params = haze::HazeParams::from_preset(cfg.weather);
  sc.target_class = cfg.class_id;

  const double bearing = cfg.bearing_deg * std::numbers::pi / 180.0;
  const VesselClassPreset& cls = vessel_class(cfg.class_id);
  TargetVessel tv;
  tv.x = cfg.target_range_m * std::cos(bearing);
  tv.y = cfg.target_range_m * std::sin(bearing);
  tv.heading = wrap_angle(bearing + std::numbers::pi / 2.0);  // broadside
  tv.hull_length = cls.hull_length;
  tv.hull_height = cls.hull_height;
  tv.class_id = cfg.class_id;
  tv.silhouette_color = cls.color;
  sc.targets.push_back(tv);
  return sc;
}

}  // namespace usvtrack::sim
