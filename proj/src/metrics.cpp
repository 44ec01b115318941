#include "tdm/metrics.hpp"

#include <cmath>

#include "tdm/error.hpp"
#include "tdm/ot.hpp"

namespace tdm {

namespace {

void check_shapes(const Dataset& imputed, const Dataset& truth, const MissingMask& mask) {
  if (imputed.n_rows() != truth.n_rows() || imputed.n_cols() != truth.n_cols() ||
      mask.rows() != truth.n_rows() || mask.cols() != truth.n_cols()) {
    throw DataError("metrics: imputed, truth and mask shapes differ");
  }
}

template <typename F>
double masked_mean(const Dataset& imputed, const Dataset& truth, const MissingMask& mask, F&& f) {
  check_shapes(imputed, truth, mask);
  double sum = 0.0;
  Index count = 0;
  for (Index j = 0; j < truth.n_cols(); ++j) {
    for (Index i = 0; i < truth.n_rows(); ++i) {
      if (!mask.missing(i, j)) continue;
      sum += f(imputed.values(i, j) - truth.values(i, j));
      ++count;
    }
  }
  if (count == 0) throw DataError("metrics: mask has no missing cells");
  return sum / static_cast<double>(count);
}

}  // namespace

double mae(const Dataset& imputed, const Dataset& truth, const MissingMask& mask) {
  return masked_mean(imputed, truth, mask, [](double e) { return std::abs(e); });
}

double rmse(const Dataset& imputed, const Dataset& truth, const MissingMask& mask) {
  return std::sqrt(masked_mean(imputed, truth, mask, [](double e) { return e * e; }));
}

std::optional<double> w22_metric(const Dataset& imputed, const Dataset& truth, Index max_n) {
  if (imputed.n_rows() != truth.n_rows() || imputed.n_cols() != truth.n_cols()) {
    throw DataError("w22 metric: shape mismatch");
  }
  if (imputed.n_rows() > max_n) return std::nullopt;
  if (imputed.has_missing() || truth.has_missing()) throw DataError("w22 metric: NaN in input");
  return exact_ot_uniform(pairwise_sq_cost(imputed.values, truth.values)).distance;
}

MetricsReport evaluate(const Dataset& imputed, const Dataset& truth, const MissingMask& mask, Index max_n) {
  MetricsReport r;
  r.mae = mae(imputed, truth, mask);
  r.rmse = rmse(imputed, truth, mask);
  r.n_missing = mask.missing_count();
  r.w22 = w22_metric(imputed, truth, max_n);
  if (!r.w22) {
    r.w22_note = "skipped: " + std::to_string(truth.n_rows()) + " rows exceeds cutoff " + std::to_string(max_n);
  }
  return r;
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json j{{"mae", report.mae},
                   {"rmse", report.rmse},
                   {"n_missing", report.n_missing},
                   {"runtime_seconds", report.runtime_seconds}};
  if (report.w22) {
    j["w22"] = *report.w22;
  } else {
    j["w22"] = nullptr;
    j["w22_note"] = report.w22_note;
  }
  return j;
}

}  // namespace tdm
