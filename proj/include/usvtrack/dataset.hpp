#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "usvtrack/box.hpp"
#include "usvtrack/haze.hpp"
#include "usvtrack/image.hpp"

namespace usvtrack::data {

struct FrameRecord {
  int frame_id = 0;
  std::string clear_path;  // relative to the manifest directory
  std::string hazy_path;
  std::vector<std::pair<int, BoundingBox>> boxes;  // (class_id, normalized box)
  haze::HazeParams haze_params;
  std::uint64_t haze_seed = 0;
  bool is_train = false;
};

struct DatasetManifest {
  int format_version = 1;
  std::uint64_t seed = 0;
  int image_size = 64;
  std::string weather = "fog_heavy";
  int target_class = 0;
  std::vector<FrameRecord> frames;
  std::string root_dir;  // resolved on load, not serialized

  int count(bool train) const {
    int n = 0;
    for (const auto& f : frames) n += (f.is_train == train) ? 1 : 0;
    return n;
  }
  std::vector<const FrameRecord*> split(bool train) const {
    std::vector<const FrameRecord*> out;
    for (const auto& f : frames)
      if (f.is_train == train) out.push_back(&f);
    return out;
  }
  std::string resolve(const std::string& rel) const { return root_dir + "/" + rel; }
};

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

struct GenDatasetConfig {
  std::string out_dir = "out/dataset";
  int n_frames = 600;
  int image_size = 64;
  haze::Preset weather = haze::Preset::fog_heavy;
  std::uint64_t seed = 1;
  int class_id = 0;
  double bearing_deg = 0.0;
  double approach_start_m = 200.0;
  double approach_end_m = 30.0;
  int tick_hz = 30;
  int sample_fps = 2;
  int n_trajectories = 1;
};

// Simulates approach trajectories at tick_hz, samples frames at sample_fps,
// renders clear/hazy pairs with truth boxes and writes PNGs plus the manifest
// (manifest.json under out_dir). Frames alternate train/test by index.
DatasetManifest gen_dataset(const GenDatasetConfig& cfg);

}  // namespace usvtrack::data
