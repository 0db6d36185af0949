#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "usvtrack/image.hpp"

namespace usvtrack::haze {

enum class Preset { clear, fog_light, fog_heavy, sand_light, sand_heavy };

Preset preset_from_string(const std::string& name);
std::string preset_to_string(Preset p);

// Homogeneous scattering parameters: per-pixel degradation is
// I = J*t + A*(1-t) with t = exp(-beta * depth).
struct HazeParams {
  double beta = 0.0;                        // extinction coefficient, 1/m
  std::array<double, 3> airlight{1, 1, 1};  // ambient light color A, [0,1]
  Preset preset = Preset::clear;
  double noise_amplitude = 0.0;  // granular noise, sand presets only

  static HazeParams from_preset(Preset p);
};

// t = exp(-beta * depth), in (0,1].
double transmission(double depth_m, double beta);

// Applies the scattering model over a per-pixel depth map (meters, same H x W
// as the image). Sand presets add seeded uniform granular noise of the given
// amplitude. Output clamped to [0,1]; deterministic per seed.
ImageBuffer apply_haze(const ImageBuffer& clear, const std::vector<double>& depth,
                       const HazeParams& params, std::uint64_t seed);

}  // namespace usvtrack::haze
