#pragma once

#include <string>

#include <json.hpp>

#include "tdm/inn.hpp"
#include "tdm/random.hpp"

namespace tdm {

struct CheckReport {
  std::string name;
  Index instances = 0;
  Index violations = 0;
  Index skipped = 0;
  double worst_gap = 0.0;  // largest signed violation margin seen (<= 0 is good)
  bool passed = true;
  nlohmann::json details = nlohmann::json::object();
};

nlohmann::json to_json(const CheckReport& report);

/// Assignment solver vs permutation enumeration, B in 2..6, D in {1, 2, 5}.
CheckReport check_lemma1(Index trials, Rng& rng);

/// (B + B') W(X1 u X3, X2 u X4) <= B W(X1, X2) + B' W(X3, X4) on random multisets.
CheckReport check_union_lemma(Index trials, Rng& rng);

/// Singleton batches: W2^2 equals the squared distance; Monte-Carlo check
/// that the expected batch-pair loss at size 2B is at most the one at B.
/// `trials` batch-pair draws per batch size.
CheckReport check_prop4(Index trials, Rng& rng);

/// Monte-Carlo lower bound E W(f#X1, f#X2) >= E W(f#X1, f#X) and upper bound
/// E W(f#X1, f#X2) <= 4 E W(f#X1, f#X) for a fixed random stack. `trials`
/// draws, N = 40, B = 4, paired 3-standard-error slack.
CheckReport check_prop2_prop3(Index trials, Rng& rng);

/// Analytic loss gradients (plan fixed, backprop through the stack) against
/// central finite differences with step h, for theta, X1 and X2. Only
/// coordinates with |analytic| > 1e-8 are compared; a coordinate whose probes
/// change the sign of any hidden SELU input is counted as a kink crossing
/// instead (the SELU derivative jumps at 0). Instances whose best and
/// second-best matchings are within 100 * h * max(1, max cost) are skipped.
inline constexpr double kGradientStep = 1e-6;
CheckReport check_gradients(const TransformStack& stack, const Matrix& x1, const Matrix& x2, double tol,
                            double h = kGradientStep);

/// Stack with every layer (output layers included) randomized, so the map is
/// far from the identity. Test and check helper.
TransformStack random_stack(Index dim, Index depth, Index width_multiplier, Rng& rng, double scale = 0.5);

/// Gap between the best and second-best assignment cost (brute force, B <= 8).
double assignment_margin(const Matrix& cost);

/// Names accepted by run_check: lemma1, union_lemma, prop4, prop2_prop3, gradients.
/// For "gradients", `trials` counts non-degenerate instances (B = 4, D = 5,
/// T = 2); fails if fewer are found within 10 * trials draws.
const std::vector<std::string>& check_names();
CheckReport run_check(const std::string& name, Index trials, std::uint64_t seed);

}  // namespace tdm
