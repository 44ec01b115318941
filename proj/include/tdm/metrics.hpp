#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "tdm/data.hpp"

namespace tdm {

// All metrics are meant to be evaluated in standardized space.
struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> w22;
  std::string w22_note;  // reason when w22 is absent
  Index n_missing = 0;
  double runtime_seconds = 0.0;
};

double mae(const Dataset& imputed, const Dataset& truth, const MissingMask& mask);
double rmse(const Dataset& imputed, const Dataset& truth, const MissingMask& mask);

inline constexpr Index kDefaultW22MaxRows = 3000;

/// Exact W2^2 between the two full empirical measures; nullopt above max_n rows.
std::optional<double> w22_metric(const Dataset& imputed, const Dataset& truth,
                                 Index max_n = kDefaultW22MaxRows);

MetricsReport evaluate(const Dataset& imputed, const Dataset& truth, const MissingMask& mask,
                       Index max_n = kDefaultW22MaxRows);

nlohmann::json to_json(const MetricsReport& report);

}  // namespace tdm
