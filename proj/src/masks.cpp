#include "tdm/masks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tdm/error.hpp"

namespace tdm {

namespace {

void check_rate(double rate) {
  if (!(rate > 0.0 && rate < 1.0)) throw UsageError("missing rate must lie in (0, 1)");
}

void require_complete(const Dataset& data) {
  if (data.has_missing()) throw DataError("mask generation needs fully observed data");
}

// Every column keeps at least one observed cell: flip one uniformly chosen
// masked cell back to observed in any column that came out fully masked.
void guard_columns(FlagMatrix& flags, Rng& rng) {
  const Index n = flags.rows();
  for (Index j = 0; j < flags.cols(); ++j) {
    if (n > 0 && flags.col(j).cast<Index>().sum() == n) {
      std::uniform_int_distribution<Index> pick(0, n - 1);
      flags(pick(rng), j) = 0;
    }
  }
}

std::vector<Index> random_subset(Index d, Index k, Rng& rng) {
  std::vector<Index> cols(static_cast<std::size_t>(d));
  std::iota(cols.begin(), cols.end(), Index{0});
  std::shuffle(cols.begin(), cols.end(), rng);
  cols.resize(static_cast<std::size_t>(k));
  std::sort(cols.begin(), cols.end());
  return cols;
}

std::vector<Index> complement(Index d, const std::vector<Index>& cols) {
  std::vector<Index> out;
  for (Index j = 0; j < d; ++j) {
    if (!std::binary_search(cols.begin(), cols.end(), j)) out.push_back(j);
  }
  return out;
}

Matrix gather_columns(const Matrix& m, const std::vector<Index>& cols) {
  Matrix out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = m.col(cols[k]);
  return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Index logistic_count(const Matrix& scores, const Matrix& uniforms, double bias) {
  Index count = 0;
  for (Index j = 0; j < scores.cols(); ++j) {
    for (Index i = 0; i < scores.rows(); ++i) {
      if (uniforms(i, j) < sigmoid(scores(i, j) + bias)) ++count;
    }
  }
  return count;
}

// Bisection on the logistic bias so that fixed_missing plus the logistic
// cells hits rate * total_cells. The realized count is monotone in the bias
// for fixed uniforms, so the bracket [-50, 50] either contains the target or
// the request is infeasible.
double search_bias(const Matrix& scores, const Matrix& uniforms, Index fixed_missing,
                   Index total_cells, double rate) {
  constexpr double kLo = -50.0, kHi = 50.0, kTol = 0.005;
  const auto achieved = [&](double b) {
    return static_cast<double>(fixed_missing + logistic_count(scores, uniforms, b)) /
           static_cast<double>(total_cells);
  };
  double lo = kLo, hi = kHi;
  if (achieved(lo) > rate + kTol || achieved(hi) < rate - kTol) {
    throw DataError("logistic bias line search failed to bracket the target rate");
  }
  double best = 0.0, best_gap = std::numeric_limits<double>::infinity();
  const double resolution = 0.5 / static_cast<double>(total_cells);
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = achieved(mid);
    if (std::abs(r - rate) < best_gap) {
      best_gap = std::abs(r - rate);
      best = mid;
    }
    if (best_gap <= resolution) break;
    if (r < rate) lo = mid; else hi = mid;
  }
  if (best_gap > kTol) throw DataError("logistic bias line search did not reach the target rate");
  return best;
}

Matrix draw_uniforms(Index n, Index m, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix out(n, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) out(i, j) = u(rng);
  return out;
}

Matrix draw_normals(Index n, Index m, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix out(n, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) out(i, j) = z(rng);
  return out;
}

// Fills flags for `targets` from the logistic model on `inputs` with the
// line-searched bias; returns the bias.
double logistic_fill(const Dataset& data, const std::vector<Index>& inputs,
                     const std::vector<Index>& targets, FlagMatrix& flags, double rate, Rng& rng) {
  const Dataset standardized = apply_standardization(data, fit_standardization(data));
  const Matrix x_in = gather_columns(standardized.values, inputs);
  const Matrix weights = draw_normals(static_cast<Index>(inputs.size()), static_cast<Index>(targets.size()), rng);
  const Matrix scores = x_in * weights;
  const Matrix uniforms = draw_uniforms(data.n_rows(), static_cast<Index>(targets.size()), rng);

  const Index fixed = flags.cast<Index>().sum();
  const double bias = search_bias(scores, uniforms, fixed, flags.size(), rate);
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const Index kk = static_cast<Index>(k);
    for (Index i = 0; i < data.n_rows(); ++i) {
      flags(i, targets[k]) = uniforms(i, kk) < sigmoid(scores(i, kk) + bias) ? 1 : 0;
    }
  }
  return bias;
}

}  // namespace

std::string to_string(Mechanism m) {
  switch (m) {
    case Mechanism::MCAR: return "mcar";
    case Mechanism::MAR: return "mar";
    case Mechanism::MNARL: return "mnarl";
    case Mechanism::MNARQ: return "mnarq";
  }
  return "unknown";
}

Mechanism parse_mechanism(const std::string& name) {
  if (name == "mcar") return Mechanism::MCAR;
  if (name == "mar") return Mechanism::MAR;
  if (name == "mnarl") return Mechanism::MNARL;
  if (name == "mnarq") return Mechanism::MNARQ;
  throw UsageError("unknown mechanism '" + name + "'");
}

MissingMask gen_mcar(Index n, Index d, double rate, Rng& rng) {
  check_rate(rate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FlagMatrix flags(n, d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < n; ++i) flags(i, j) = u(rng) < rate ? 1 : 0;
  guard_columns(flags, rng);
  return MissingMask(std::move(flags));
}

MaskResult gen_mar(const Dataset& data, double rate, double observed_col_fraction, Rng& rng) {
  check_rate(rate);
  require_complete(data);
  const Index d = data.n_cols();
  if (d < 2) throw DataError("MAR masks need at least two columns");
  if (!(observed_col_fraction > 0.0 && observed_col_fraction <= 1.0)) {
    throw UsageError("observed column fraction must lie in (0, 1]");
  }
  const Index n_obs = std::clamp<Index>(
      static_cast<Index>(std::ceil(observed_col_fraction * static_cast<double>(d) - 1e-12)), 1, d - 1);

  MaskResult res;
  res.observed_columns = random_subset(d, n_obs, rng);
  const std::vector<Index> targets = complement(d, res.observed_columns);
  FlagMatrix flags = FlagMatrix::Zero(data.n_rows(), d);
  res.bias = logistic_fill(data, res.observed_columns, targets, flags, rate, rng);
  guard_columns(flags, rng);
  res.mask = MissingMask(std::move(flags));
  res.achieved_rate = res.mask.missing_rate();
  return res;
}

MaskResult gen_mnar_logistic(const Dataset& data, double rate, Rng& rng) {
  check_rate(rate);
  require_complete(data);
  const Index d = data.n_cols();
  if (d < 2) throw DataError("MNAR logistic masks need at least two columns");
  const Index n_in = std::clamp<Index>(static_cast<Index>(std::ceil(0.3 * static_cast<double>(d) - 1e-12)), 1, d - 1);

  MaskResult res;
  res.logistic_inputs = random_subset(d, n_in, rng);
  const std::vector<Index> targets = complement(d, res.logistic_inputs);

  // The logistic inputs are themselves masked completely at random, which is
  // what makes the mechanism not-at-random.
  FlagMatrix flags = FlagMatrix::Zero(data.n_rows(), d);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Index j : res.logistic_inputs)
    for (Index i = 0; i < data.n_rows(); ++i) flags(i, j) = u(rng) < rate ? 1 : 0;

  res.bias = logistic_fill(data, res.logistic_inputs, targets, flags, rate, rng);
  guard_columns(flags, rng);
  res.mask = MissingMask(std::move(flags));
  res.achieved_rate = res.mask.missing_rate();
  return res;
}

MaskResult gen_mnar_quantile(const Dataset& data, double rate, double p, Rng& rng) {
  check_rate(rate);
  require_complete(data);
  if (!(p > 0.0 && p < 50.0)) throw UsageError("quantile p must lie in (0, 50)");
  const double tail_mass = 2.0 * p / 100.0;
  if (rate > tail_mass) {
    throw UsageError("rate " + format_double(rate) + " exceeds the tail mass " + format_double(tail_mass) +
                     " available at p = " + format_double(p));
  }
  const double q = std::min(1.0, rate / tail_mass);

  std::uniform_real_distribution<double> u(0.0, 1.0);
  FlagMatrix flags = FlagMatrix::Zero(data.n_rows(), data.n_cols());
  for (Index j = 0; j < data.n_cols(); ++j) {
    std::vector<double> col(data.values.col(j).data(), data.values.col(j).data() + data.n_rows());
    const double lo = percentile(col, p);
    const double hi = percentile(col, 100.0 - p);
    for (Index i = 0; i < data.n_rows(); ++i) {
      const double v = data.values(i, j);
      const bool candidate = v < lo || v > hi;
      const double draw = u(rng);
      if (candidate && draw < q) flags(i, j) = 1;
    }
  }
  guard_columns(flags, rng);

  MaskResult res;
  res.mask = MissingMask(std::move(flags));
  res.achieved_rate = res.mask.missing_rate();
  res.candidate_prob = q;
  return res;
}

MaskResult generate_mask(const Dataset& data, const MaskSpec& spec) {
  Rng rng = make_rng(spec.seed, 0);
  switch (spec.mechanism) {
    case Mechanism::MCAR: {
      MaskResult res;
      res.mask = gen_mcar(data.n_rows(), data.n_cols(), spec.rate, rng);
      res.achieved_rate = res.mask.missing_rate();
      return res;
    }
    case Mechanism::MAR: return gen_mar(data, spec.rate, spec.observed_col_fraction, rng);
    case Mechanism::MNARL: return gen_mnar_logistic(data, spec.rate, rng);
    case Mechanism::MNARQ: return gen_mnar_quantile(data, spec.rate, spec.quantile_p, rng);
  }
  throw UsageError("unknown mechanism");
}

Dataset apply_mask(const Dataset& data, const MissingMask& mask) {
  if (mask.rows() != data.n_rows() || mask.cols() != data.n_cols()) {
    throw DataError("mask shape does not match data");
  }
  Dataset out = data;
  for (Index j = 0; j < data.n_cols(); ++j)
    for (Index i = 0; i < data.n_rows(); ++i)
      if (mask.missing(i, j)) out.values(i, j) = std::numeric_limits<double>::quiet_NaN();
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace tdm

namespace tdm {

MissingMask gen_row_mcar(Index n, Index d, double row_fraction, Rng& rng) {
  if (!(row_fraction > 0.0 && row_fraction < 1.0)) throw UsageError("row fraction must lie in (0, 1)");
  if (d < 2) throw UsageError("single-cell row masking needs at least two columns");
  const Index k = static_cast<Index>(std::llround(row_fraction * static_cast<double>(n)));
  std::vector<Index> rows = random_subset(n, k, rng);
  std::uniform_int_distribution<Index> col(0, d - 1);
  FlagMatrix flags = FlagMatrix::Zero(n, d);
  for (Index i : rows) flags(i, col(rng)) = 1;
  guard_columns(flags, rng);
  return MissingMask(std::move(flags));
}

}  // namespace tdm
