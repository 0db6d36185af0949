#include "usvtrack/servo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <stdexcept>

#include "usvtrack/haze.hpp"
#include "usvtrack/rng.hpp"

namespace usvtrack::servo {

VisualError visual_error(const Detection& det, int image_width, int image_height) {
  VisualError e;
  e.ex = image_width * 0.5 - det.box.cx * image_width;
  e.ey = image_height * 0.5 - det.box.cy * image_height;
  return e;
}

PIDResult pid_step(const PIDGains& gains, const PIDState& state, double error_px, double dt,
                   const PIDLimits& limits) {
  if (!(dt > 0.0)) throw std::invalid_argument("pid_step: dt must be > 0");
  if (gains.kp < 0.0 || gains.ki < 0.0 || gains.kd < 0.0)
    throw std::invalid_argument("pid_step: gains must be non-negative");

  PIDResult r;
  r.state = state;
  r.state.integral =
      std::clamp(state.integral + error_px * dt, -limits.integral_max, limits.integral_max);
  const double derivative = state.initialized ? (error_px - state.prev_error) / dt : 0.0;
  r.state.prev_error = error_px;
  r.state.initialized = true;

  const double u = gains.kp * error_px + gains.ki * r.state.integral + gains.kd * derivative;
  r.u = std::clamp(u, -limits.omega_max, limits.omega_max);
  r.clamped = (r.u != u);
  return r;
}

std::optional<Detection> select_target(const std::vector<Detection>& dets, int target_class,
                                       const std::optional<Detection>& prev) {
  std::optional<Detection> best;
  double best_iou_prev = -1.0;
  for (const auto& d : dets) {
    if (d.class_id != target_class) continue;
    if (!best) {
      best = d;
      best_iou_prev = prev ? iou(d.box, prev->box) : 0.0;
      continue;
    }
    if (d.confidence > best->confidence) {
      best = d;
      best_iou_prev = prev ? iou(d.box, prev->box) : 0.0;
    } else if (d.confidence == best->confidence) {
      const double ip = prev ? iou(d.box, prev->box) : 0.0;
      if (ip > best_iou_prev ||
          (ip == best_iou_prev && d.box.area() > best->box.area())) {
        best = d;
        best_iou_prev = ip;
      }
    }
  }
  return best;
}

std::string stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::proximity: return "proximity";
    case StopReason::max_ticks: return "max_ticks";
    case StopReason::lost: return "lost";
  }
  return "max_ticks";
}

namespace {

EpisodeLog run_loop(const sim::Scenario& scenario, const Perceiver& perceive,
                    const EpisodeConfig& cfg, std::uint64_t seed) {
  if (cfg.stop.max_ticks < 1) throw std::invalid_argument("run_episode: max_ticks must be >= 1");
  if (!(cfg.stop.proximity_height_frac > 0.0 && cfg.stop.proximity_height_frac < 1.0))
    throw std::invalid_argument("run_episode: proximity_height_frac outside (0,1)");

  EpisodeLog log;
  sim::USVState usv = scenario.usv;
  PIDState pid;
  std::optional<Detection> prev_sel;
  int lost_ticks = 0;
  double last_u = 0.0, last_speed = 0.0;
  double search_dir = 1.0;

  for (int tick = 0; tick < cfg.stop.max_ticks; ++tick) {
    sim::RenderOutput ro =
        sim::render(usv, scenario.targets, scenario.camera, mix_seed(seed, tick));
    std::vector<Detection> dets = perceive(ro, tick);
    std::optional<Detection> sel = select_target(dets, scenario.target_class, prev_sel);

    TickRecord rec;
    rec.tick = tick;
    rec.usv = usv;
    rec.detection = sel;

    if (sel) {
      prev_sel = sel;
      lost_ticks = 0;
      const VisualError ve =
          visual_error(*sel, scenario.camera.image_width, scenario.camera.image_height);
      rec.error = ve;
      const double e_ctrl = (std::fabs(ve.ex) <= cfg.deadband_px) ? 0.0 : ve.ex;
      PIDResult pr = pid_step(cfg.gains, pid, e_ctrl, cfg.dt, cfg.pid_limits);
      pid = pr.state;
      if (pr.clamped) std::clog << "run_episode: yaw command clamped at tick " << tick << "\n";
      rec.yaw_cmd = pr.u;
      if (ve.ex != 0.0) search_dir = (ve.ex > 0.0) ? 1.0 : -1.0;

      // cruise, ramping down linearly as the box height nears the stop size
      const double prox = cfg.stop.proximity_height_frac;
      const double ramp = (prox - sel->box.h) / (0.4 * prox);
      rec.speed_cmd =
          cfg.cruise_speed * std::clamp(ramp, cfg.min_approach_frac, 1.0);
      last_u = rec.yaw_cmd;
      last_speed = rec.speed_cmd;
    } else {
      ++lost_ticks;
      if (lost_ticks <= cfg.stop.lost_patience) {
        rec.yaw_cmd = last_u;  // hold course
        rec.speed_cmd = last_speed;
      } else {
        rec.yaw_cmd = cfg.search_omega * search_dir;  // rotate-in-place search
        rec.speed_cmd = 0.0;
      }
    }

    if (sel && sel->box.h >= cfg.stop.proximity_height_frac)
      rec.stop = StopReason::proximity;
    else if (lost_ticks >= 2 * cfg.stop.lost_patience)
      rec.stop = StopReason::lost;
    else if (tick == cfg.stop.max_ticks - 1)
      rec.stop = StopReason::max_ticks;

    log.ticks.push_back(rec);
    if (rec.stop) {
      log.stop_reason = *rec.stop;
      break;
    }
    usv = sim::step_kinematics(usv, rec.yaw_cmd, rec.speed_cmd, cfg.dt, cfg.kin_limits);
  }
  return log;
}

}  // namespace

EpisodeLog run_episode(const sim::Scenario& scenario, gan::GanCheckpoint* dehaze_ckpt,
                       det::DetectorCheckpoint& detector_ckpt, const EpisodeConfig& cfg,
                       std::uint64_t seed) {
  namespace fs = std::filesystem;
  const bool dump = !cfg.dump_frames_dir.empty();
  if (dump) fs::create_directories(cfg.dump_frames_dir);
  if (cfg.use_dehaze && !dehaze_ckpt)
    throw std::invalid_argument("run_episode: dehazing enabled but no checkpoint given");

  Perceiver perceive = [&](const sim::RenderOutput& ro, int tick) {
    ImageBuffer hazy = haze::apply_haze(ro.image, ro.depth, scenario.haze_params,
                                        mix_seed(mix_seed(seed, tick), 1));
    ImageBuffer processed =
        (cfg.use_dehaze && dehaze_ckpt) ? gan::dehaze(*dehaze_ckpt, hazy) : hazy;
    if (dump) {
      char name[64];
      std::snprintf(name, sizeof(name), "/t%05d_clear.png", tick);
      save_image(ro.image, cfg.dump_frames_dir + name);
      std::snprintf(name, sizeof(name), "/t%05d_hazy.png", tick);
      save_image(hazy, cfg.dump_frames_dir + name);
      if (cfg.use_dehaze) {
        std::snprintf(name, sizeof(name), "/t%05d_dehazed.png", tick);
        save_image(processed, cfg.dump_frames_dir + name);
      }
    }
    return det::detect(detector_ckpt, processed);
  };
  return run_loop(scenario, perceive, cfg, seed);
}

EpisodeLog run_episode_with_perceiver(const sim::Scenario& scenario, const Perceiver& perceive,
                                      const EpisodeConfig& cfg, std::uint64_t seed) {
  return run_loop(scenario, perceive, cfg, seed);
}

void write_episode_csv(const EpisodeLog& log, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_episode_csv: cannot open " + path);
  std::fputs("tick,x,y,heading,speed,det_conf,det_cx,det_h,ex,u,stop_reason\n", f);
  for (const auto& t : log.ticks) {
    std::fprintf(f, "%d,%.6f,%.6f,%.6f,%.6f,", t.tick, t.usv.x, t.usv.y, t.usv.heading,
                 t.speed_cmd);
    if (t.detection)
      std::fprintf(f, "%.6f,%.6f,%.6f,", t.detection->confidence, t.detection->box.cx,
                   t.detection->box.h);
    else
      std::fputs(",,,", f);
    if (t.error)
      std::fprintf(f, "%.6f,", t.error->ex);
    else
      std::fputs(",", f);
    std::fprintf(f, "%.6f,", t.yaw_cmd);
    std::fputs(t.stop ? stop_reason_name(*t.stop).c_str() : "", f);
    std::fputs("\n", f);
  }
  std::fclose(f);
}

}  // namespace usvtrack::servo
