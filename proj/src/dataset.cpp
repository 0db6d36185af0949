#include "usvtrack/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"
#include "usvtrack/rng.hpp"
#include "usvtrack/sim.hpp"

namespace usvtrack::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json haze_to_json(const haze::HazeParams& hp, std::uint64_t seed) {
  return json{{"beta", hp.beta},
              {"airlight", {hp.airlight[0], hp.airlight[1], hp.airlight[2]}},
              {"preset", haze::preset_to_string(hp.preset)},
              {"noise_amplitude", hp.noise_amplitude},
              {"seed", seed}};
}

void haze_from_json(const json& j, haze::HazeParams& hp, std::uint64_t& seed) {
  hp.beta = j.at("beta").get<double>();
  const auto& a = j.at("airlight");
  hp.airlight = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
  hp.preset = haze::preset_from_string(j.at("preset").get<std::string>());
  hp.noise_amplitude = j.at("noise_amplitude").get<double>();
  seed = j.at("seed").get<std::uint64_t>();
}

}  // namespace

void save_manifest(const DatasetManifest& m, const std::string& path) {
  json frames = json::array();
  for (const auto& f : m.frames) {
    json boxes = json::array();
    for (const auto& [cls, b] : f.boxes)
      boxes.push_back({{"class_id", cls}, {"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}});
    frames.push_back({{"frame_id", f.frame_id},
                      {"clear_path", f.clear_path},
                      {"hazy_path", f.hazy_path},
                      {"boxes", boxes},
                      {"haze", haze_to_json(f.haze_params, f.haze_seed)},
                      {"split", f.is_train ? "train" : "test"}});
  }
  json j{{"format_version", m.format_version},
         {"seed", m.seed},
         {"image_size", m.image_size},
         {"weather", m.weather},
         {"target_class", m.target_class},
         {"n_train", m.count(true)},
         {"n_test", m.count(false)},
         {"frames", frames}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_manifest: cannot open " + path);
  out << j.dump(1) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_manifest: cannot open " + path);
  json j;
  in >> j;
  DatasetManifest m;
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != 1)
    throw std::runtime_error("load_manifest: format version " +
                             std::to_string(m.format_version) + " unsupported (expected 1)");
  m.seed = j.at("seed").get<std::uint64_t>();
  m.image_size = j.at("image_size").get<int>();
  m.weather = j.at("weather").get<std::string>();
  m.target_class = j.at("target_class").get<int>();
  for (const auto& fj : j.at("frames")) {
    FrameRecord f;
    f.frame_id = fj.at("frame_id").get<int>();
    f.clear_path = fj.at("clear_path").get<std::string>();
    f.hazy_path = fj.at("hazy_path").get<std::string>();
    for (const auto& bj : fj.at("boxes"))
      f.boxes.emplace_back(bj.at("class_id").get<int>(),
                           BoundingBox{bj.at("cx").get<double>(), bj.at("cy").get<double>(),
                                       bj.at("w").get<double>(), bj.at("h").get<double>()});
    haze_from_json(fj.at("haze"), f.haze_params, f.haze_seed);
    f.is_train = fj.at("split").get<std::string>() == "train";
    m.frames.push_back(std::move(f));
  }
  m.root_dir = fs::path(path).parent_path().string();
  if (m.root_dir.empty()) m.root_dir = ".";
  return m;
}

DatasetManifest gen_dataset(const GenDatasetConfig& cfg) {
  if (cfg.n_frames < 2) throw std::invalid_argument("gen_dataset: n_frames must be >= 2");
  if (cfg.n_trajectories < 1 || cfg.n_frames % cfg.n_trajectories != 0)
    throw std::invalid_argument("gen_dataset: n_frames must divide evenly into trajectories");
  if (cfg.tick_hz % cfg.sample_fps != 0)
    throw std::invalid_argument("gen_dataset: tick_hz must be a multiple of sample_fps");
  if (!(cfg.approach_start_m > cfg.approach_end_m && cfg.approach_end_m > 1.0))
    throw std::invalid_argument("gen_dataset: approach range must satisfy start > end > 1");

  std::error_code ec;
  fs::create_directories(fs::path(cfg.out_dir) / "frames", ec);
  if (ec)
    throw std::runtime_error("gen_dataset: cannot create output dir " + cfg.out_dir + ": " +
                             ec.message());

  DatasetManifest m;
  m.seed = cfg.seed;
  m.image_size = cfg.image_size;
  m.weather = haze::preset_to_string(cfg.weather);
  m.target_class = cfg.class_id;
  m.root_dir = cfg.out_dir;

  const int frames_per_traj = cfg.n_frames / cfg.n_trajectories;
  const int ticks_per_frame = cfg.tick_hz / cfg.sample_fps;
  const double dt = 1.0 / cfg.tick_hz;
  int frame_id = 0;

  for (int traj = 0; traj < cfg.n_trajectories; ++traj) {
    sim::ScenarioConfig sc;
    sc.target_range_m = cfg.approach_start_m;
    sc.bearing_deg = cfg.bearing_deg;
    sc.class_id = cfg.class_id;
    sc.weather = cfg.weather;
    sc.image_size = cfg.image_size;
    sc.seed = mix_seed(cfg.seed, 0x77a0 + traj);
    sim::Scenario world = sim::make_scenario(sc);

    // seeded heading wobble keeps the target near but not at the image center
    Rng wob(mix_seed(sc.seed, 0x30b));
    const double a1 = 6.0 * std::numbers::pi / 180.0;
    const double a2 = 3.5 * std::numbers::pi / 180.0;
    const double t1 = wob.uniform(34.0, 48.0), t2 = wob.uniform(9.0, 17.0);
    const double p1 = wob.uniform(0.0, 2.0 * std::numbers::pi);
    const double p2 = wob.uniform(0.0, 2.0 * std::numbers::pi);

    const double duration = frames_per_traj * ticks_per_frame * dt;
    const double speed = (cfg.approach_start_m - cfg.approach_end_m) / duration;
    const sim::TargetVessel& tv = world.targets[0];
    sim::KinematicLimits limits{1.5, std::max(5.0, speed * 2.0)};

    sim::USVState usv = world.usv;
    for (int f = 0; f < frames_per_traj; ++f, ++frame_id) {
      for (int tick = 0; tick < ticks_per_frame; ++tick) {
        const double t = (f * ticks_per_frame + tick) * dt;
        const double bearing = std::atan2(tv.y - usv.y, tv.x - usv.x);
        const double wobble = a1 * std::sin(2.0 * std::numbers::pi * t / t1 + p1) +
                              a2 * std::sin(2.0 * std::numbers::pi * t / t2 + p2);
        const double desired = sim::wrap_angle(bearing + wobble);
        const double yaw_rate = sim::wrap_angle(desired - usv.heading) / dt;
        usv = sim::step_kinematics(usv, yaw_rate, speed, dt, limits);
      }

      const std::uint64_t frame_seed = mix_seed(cfg.seed, 0xf000 + frame_id);
      sim::RenderOutput ro = sim::render(usv, world.targets, world.camera, frame_seed);
      ImageBuffer hazy =
          haze::apply_haze(ro.image, ro.depth, world.haze_params, mix_seed(frame_seed, 1));

      char name[64];
      std::snprintf(name, sizeof(name), "frames/f%06d_clear.png", frame_id);
      const std::string clear_rel = name;
      std::snprintf(name, sizeof(name), "frames/f%06d_hazy.png", frame_id);
      const std::string hazy_rel = name;
      save_image(ro.image, m.resolve(clear_rel));
      save_image(hazy, m.resolve(hazy_rel));

      FrameRecord rec;
      rec.frame_id = frame_id;
      rec.clear_path = clear_rel;
      rec.hazy_path = hazy_rel;
      rec.boxes = ro.truth_boxes;
      rec.haze_params = world.haze_params;
      rec.haze_seed = mix_seed(frame_seed, 1);
      rec.is_train = (frame_id % 2 == 0);
      m.frames.push_back(std::move(rec));
    }
  }

  save_manifest(m, cfg.out_dir + "/manifest.json");
  return m;
}

}  // namespace usvtrack::data
