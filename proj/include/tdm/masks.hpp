#pragma once

#include <optional>
#include <string>

#include "tdm/data.hpp"

namespace tdm {

enum class Mechanism { MCAR, MAR, MNARL, MNARQ };

std::string to_string(Mechanism m);
Mechanism parse_mechanism(const std::string& name);  // "mcar", "mar", "mnarl", "mnarq"

struct MaskSpec {
  Mechanism mechanism = Mechanism::MCAR;
  double rate = 0.3;
  std::uint64_t seed = 0;
  double observed_col_fraction = 0.3;  // MAR only
  double quantile_p = 25.0;            // MNARQ only, percent in (0, 50)
};

// What a generator produced, beyond the mask itself.
struct MaskResult {
  MissingMask mask;
  double achieved_rate = 0.0;
  std::vector<Index> observed_columns;  // MAR: fully observed by construction
  std::vector<Index> logistic_inputs;   // MNARL: columns feeding the logistic model
  std::optional<double> bias;           // line-searched logistic bias
  std::optional<double> candidate_prob; // MNARQ: q
};

MissingMask gen_mcar(Index n, Index d, double rate, Rng& rng);
MaskResult gen_mar(const Dataset& data, double rate, double observed_col_fraction, Rng& rng);
MaskResult gen_mnar_logistic(const Dataset& data, double rate, Rng& rng);
MaskResult gen_mnar_quantile(const Dataset& data, double rate, double p, Rng& rng);

// Dispatches on spec.mechanism with an RNG seeded from spec.seed.
MaskResult generate_mask(const Dataset& data, const MaskSpec& spec);

Dataset apply_mask(const Dataset& data, const MissingMask& mask);

// Linear-interpolated percentile (q in [0, 100]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

}  // namespace tdm

namespace tdm {

/// A random round(row_fraction * n) subset of rows each loses exactly one
/// uniformly chosen coordinate; the synthetic 2-D protocol.
MissingMask gen_row_mcar(Index n, Index d, double row_fraction, Rng& rng);

}  // namespace tdm
