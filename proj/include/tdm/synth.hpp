#pragma once

#include <string>

#include "tdm/data.hpp"

namespace tdm {

enum class SynthKind { TwoCircles, SCurve, HalfMoons };

SynthKind parse_synth_kind(const std::string& name);  // two_circles, s_curve, half_moons
std::string to_string(SynthKind k);

// 2-D point clouds. Noise is Gaussian with standard deviation `noise`,
// truncated at three standard deviations; for two_circles it is applied
// along the radius so every point stays within 3 * noise of its circle.
//   two_circles: alternate rows on radius 1 and 0.5, uniform angle
//   s_curve:     t ~ U(-3pi/2, 3pi/2), (sin t, sign(t) (cos t - 1))
//   half_moons:  (cos t, sin t) and (1 - cos t, 0.5 - sin t), t ~ U(0, pi)
Dataset make_synthetic(SynthKind kind, Index n, double noise, std::uint64_t seed);

}  // namespace tdm
