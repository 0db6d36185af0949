#include "usvtrack/haze.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "usvtrack/rng.hpp"

namespace usvtrack::haze {

namespace {
// Airlight tints picked to read as fog (cold white) and sandstorm (warm tan).
constexpr std::array<double, 3> kFogAirlight{0.92, 0.94, 0.97};
constexpr std::array<double, 3> kSandAirlight{0.82, 0.66, 0.42};
constexpr double kSandNoise = 0.02;
}  // namespace

Preset preset_from_string(const std::string& name) {
  if (name == "clear") return Preset::clear;
  if (name == "fog_light") return Preset::fog_light;
  if (name == "fog_heavy") return Preset::fog_heavy;
  if (name == "sand_light") return Preset::sand_light;
  if (name == "sand_heavy") return Preset::sand_heavy;
  throw std::invalid_argument("unknown weather preset: " + name);
}

std::string preset_to_string(Preset p) {
  switch (p) {
    case Preset::clear: return "clear";
    case Preset::fog_light: return "fog_light";
    case Preset::fog_heavy: return "fog_heavy";
    case Preset::sand_light: return "sand_light";
    case Preset::sand_heavy: return "sand_heavy";
  }
  return "clear";
}

HazeParams HazeParams::from_preset(Preset p) {
  HazeParams hp;
  hp.preset = p;
  switch (p) {
    case Preset::clear:
      hp.beta = 0.0;
      break;
    case Preset::fog_light:
      hp.beta = 0.010;
      hp.airlight = kFogAirlight;
      break;
    case Preset::fog_heavy:
      hp.beta = 0.030;
      hp.airlight = kFogAirlight;
      break;
    case Preset::sand_light:
      hp.beta = 0.012;
      hp.airlight = kSandAirlight;
      hp.noise_amplitude = kSandNoise;
      break;
    case Preset::sand_heavy:
      hp.beta = 0.035;
      hp.airlight = kSandAirlight;
      hp.noise_amplitude = kSandNoise;
      break;
  }
  return hp;
}

double transmission(double depth_m, double beta) {
  if (depth_m < 0.0 || beta < 0.0)
    throw std::invalid_argument("transmission: depth and beta must be non-negative");
  return std::exp(-beta * depth_m);
}

ImageBuffer apply_haze(const ImageBuffer& clear, const std::vector<double>& depth,
                       const HazeParams& params, std::uint64_t seed) {
  const std::size_t n_px = static_cast<std::size_t>(clear.height) * clear.width;
  if (depth.size() != n_px)
    throw std::invalid_argument("apply_haze: depth map size does not match image");
  if (params.beta < 0.0) throw std::invalid_argument("apply_haze: beta must be >= 0");

  ImageBuffer out(clear.height, clear.width);
  for (std::size_t p = 0; p < n_px; ++p) {
    const double t = std::exp(-params.beta * depth[p]);
    for (int ch = 0; ch < 3; ++ch)
      out.data[p * 3 + ch] =
          clear.data[p * 3 + ch] * t + params.airlight[ch] * (1.0 - t);
  }

  if (params.noise_amplitude > 0.0) {
    Rng rng(mix_seed(seed, 0xda5e));
    for (double& v : out.data) v += params.noise_amplitude * (2.0 * rng.uniform() - 1.0);
  }
  for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace usvtrack::haze
