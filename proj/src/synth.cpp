#include "tdm/synth.hpp"

#include <cmath>
#include <numbers>

#include "tdm/error.hpp"

namespace tdm {

namespace {

double truncated_normal(double sd, Rng& rng) {
  if (sd == 0.0) return 0.0;
  std::normal_distribution<double> z(0.0, 1.0);
  double v = z(rng);
  while (std::abs(v) > 3.0) v = z(rng);
  return sd * v;
}

}  // namespace

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "two_circles") return SynthKind::TwoCircles;
  if (name == "s_curve") return SynthKind::SCurve;
  if (name == "half_moons") return SynthKind::HalfMoons;
  throw UsageError("unknown synthetic dataset '" + name + "'");
}

std::string to_string(SynthKind k) {
  switch (k) {
    case SynthKind::TwoCircles: return "two_circles";
    case SynthKind::SCurve: return "s_curve";
    case SynthKind::HalfMoons: return "half_moons";
  }
  return "unknown";
}

Dataset make_synthetic(SynthKind kind, Index n, double noise, std::uint64_t seed) {
  if (n < 10) throw UsageError("synthetic datasets need at least 10 points");
  if (!(noise >= 0.0)) throw UsageError("noise must be non-negative");
  Rng rng = make_rng(seed, 0);
  constexpr double pi = std::numbers::pi;
  Matrix x(n, 2);
  for (Index i = 0; i < n; ++i) {
    switch (kind) {
      case SynthKind::TwoCircles: {
        const double radius = (i % 2 == 0) ? 1.0 : 0.5;
        const double angle = std::uniform_real_distribution<double>(0.0, 2.0 * pi)(rng);
        const double r = radius + truncated_normal(noise, rng);
        x(i, 0) = r * std::cos(angle);
        x(i, 1) = r * std::sin(angle);
        break;
      }
      case SynthKind::SCurve: {
        const double t = std::uniform_real_distribution<double>(-1.5 * pi, 1.5 * pi)(rng);
        x(i, 0) = std::sin(t) + truncated_normal(noise, rng);
        x(i, 1) = (t < 0 ? -1.0 : 1.0) * (std::cos(t) - 1.0) + truncated_normal(noise, rng);
        break;
      }
      case SynthKind::HalfMoons: {
        const double t = std::uniform_real_distribution<double>(0.0, pi)(rng);
        if (i % 2 == 0) {
          x(i, 0) = std::cos(t);
          x(i, 1) = std::sin(t);
        } else {
          x(i, 0) = 1.0 - std::cos(t);
          x(i, 1) = 0.5 - std::sin(t);
        }
        x(i, 0) += truncated_normal(noise, rng);
        x(i, 1) += truncated_normal(noise, rng);
        break;
      }
    }
  }
  return Dataset(std::move(x), {"x", "y"});
}

}  // namespace tdm
