#include "tdm/checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tdm/error.hpp"
#include "tdm/ot.hpp"

namespace tdm {

namespace {

constexpr double kExactTol = 1e-9;

Matrix normal_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = z(rng);
  return m;
}

Index uniform_index(Index lo, Index hi, Rng& rng) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

Index pick_dim(Rng& rng) {
  static constexpr Index dims[] = {1, 2, 5};
  return dims[uniform_index(0, 2, rng)];
}

double w2_equal(const Matrix& a, const Matrix& c) {
  return exact_ot_uniform(pairwise_sq_cost(a, c)).distance;
}

// Rows drawn i.i.d. uniformly with replacement.
Matrix sample_rows(const Matrix& x, Index b, Rng& rng) {
  Matrix out(b, x.cols());
  for (Index r = 0; r < b; ++r) out.row(r) = x.row(uniform_index(0, x.rows() - 1, rng));
  return out;
}

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  const double n = static_cast<double>(v.size());
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return m;
}

void record(CheckReport& r, double gap, double tol) {
  ++r.instances;
  r.worst_gap = r.instances == 1 ? gap : std::max(r.worst_gap, gap);
  if (gap > tol) ++r.violations;
}

void finish(CheckReport& r) { r.passed = r.violations == 0; }

// Extended-precision re-implementation of the stack and the batch loss. It
// is the finite-difference side of the gradient check and shares no code
// with the production forward pass.
using Real = long double;
using MatrixL = MatrixX<Real>;

struct Probe {
  Real loss = 0;
  std::vector<bool> signs;  // sign of every hidden SELU input
};

MatrixL oracle_mlp(const Mlp& net, const MatrixL& x, std::vector<bool>& signs) {
  MatrixL a = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const DenseLayer& layer = net.layers[l];
    MatrixL pre = a * layer.weight.cast<Real>().transpose();
    pre.rowwise() += layer.bias.cast<Real>().transpose();
    if (l + 1 < net.layers.size()) {
      for (Index k = 0; k < pre.size(); ++k) {
        Real& v = pre.data()[k];
        signs.push_back(v > 0);
        v = selu(v);
      }
    }
    a = std::move(pre);
  }
  return a;
}

MatrixL oracle_scale(const MatrixL& u, Real c) {
  return u.unaryExpr([c](Real v) { return std::exp(clamp_scale(v, c)); });
}

MatrixL oracle_stack(const TransformStack& stack, const Matrix& x, std::vector<bool>& signs) {
  MatrixL y = x.cast<Real>();
  for (const CouplingBlock& b : stack.blocks) {
    const Index rest = b.dim - b.split;
    const MatrixL xa = y.leftCols(b.split), xb = y.rightCols(rest);
    const Real c = b.clamp;
    const MatrixL y1 = xa.cwiseProduct(oracle_scale(oracle_mlp(b.g1, xb, signs), c)) + oracle_mlp(b.h1, xb, signs);
    const MatrixL y2 = xb.cwiseProduct(oracle_scale(oracle_mlp(b.g2, y1, signs), c)) + oracle_mlp(b.h2, y1, signs);
    y.leftCols(b.split) = y1;
    y.rightCols(rest) = y2;
  }
  return y;
}

Probe probe(const TransformStack& stack, const Matrix& x1, const Matrix& x2) {
  Probe p;
  const MatrixL z1 = oracle_stack(stack, x1, p.signs);
  const MatrixL z2 = oracle_stack(stack, x2, p.signs);
  const Index b = z1.rows();
  IndexList perm(static_cast<std::size_t>(b));
  std::iota(perm.begin(), perm.end(), Index{0});
  Real best = std::numeric_limits<Real>::infinity();
  do {
    Real total = 0;
    for (Index i = 0; i < b; ++i) total += (z1.row(i) - z2.row(perm[static_cast<std::size_t>(i)])).squaredNorm();
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  p.loss = best / static_cast<Real>(b);
  return p;
}

}  // namespace

nlohmann::json to_json(const CheckReport& report) {
  return {{"name", report.name},
          {"instances", report.instances},
          {"violations", report.violations},
          {"skipped", report.skipped},
          {"worst_gap", report.worst_gap},
          {"passed", report.passed},
          {"details", report.details}};
}

TransformStack random_stack(Index dim, Index depth, Index width_multiplier, Rng& rng, double scale) {
  TransformStack stack = init_stack(dim, depth, width_multiplier, rng);
  Vector theta = pack_parameters(stack);
  std::normal_distribution<double> z(0.0, scale);
  for (Index k = 0; k < theta.size(); ++k) theta(k) = z(rng);
  unpack_parameters(theta, stack);
  // Rescale each weight matrix by its fan-in so activations stay O(1).
  for (auto& block : stack.blocks)
    for (auto* net : {&block.g1, &block.h1, &block.g2, &block.h2})
      for (auto& layer : net->layers) layer.weight /= std::sqrt(static_cast<double>(layer.weight.cols()));
  return stack;
}

double assignment_margin(const Matrix& cost) {
  if (cost.rows() != cost.cols() || cost.rows() > 8) throw UsageError("assignment_margin needs a square cost, B <= 8");
  const Index b = cost.rows();
  if (b < 2) return std::numeric_limits<double>::infinity();
  IndexList perm(static_cast<std::size_t>(b));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = std::numeric_limits<double>::infinity(), second = best;
  do {
    double total = 0.0;
    for (Index i = 0; i < b; ++i) total += cost(i, perm[static_cast<std::size_t>(i)]);
    if (total < best) {
      second = best;
      best = total;
    } else if (total < second) {
      second = total;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return second - best;
}

CheckReport check_lemma1(Index trials, Rng& rng) {
  CheckReport r{"lemma1"};
  for (Index t = 0; t < trials; ++t) {
    const Index b = uniform_index(2, 6, rng);
    const Index d = pick_dim(rng);
    const Matrix cost = pairwise_sq_cost(normal_matrix(b, d, rng), normal_matrix(b, d, rng));
    record(r, std::abs(exact_ot_uniform(cost).distance - brute_force_ot(cost).distance), kExactTol);
  }
  finish(r);
  return r;
}

CheckReport check_union_lemma(Index trials, Rng& rng) {
  CheckReport r{"union_lemma"};
  for (Index t = 0; t < trials; ++t) {
    const Index b = uniform_index(1, 5, rng);
    const Index b2 = uniform_index(1, 5, rng);
    const Index d = pick_dim(rng);
    const Matrix x1 = normal_matrix(b, d, rng), x2 = normal_matrix(b, d, rng);
    const Matrix x3 = normal_matrix(b2, d, rng), x4 = normal_matrix(b2, d, rng);
    Matrix u13(b + b2, d), u24(b + b2, d);
    u13 << x1, x3;
    u24 << x2, x4;
    const double lhs = static_cast<double>(b + b2) * w2_equal(u13, u24);
    const double rhs = static_cast<double>(b) * w2_equal(x1, x2) + static_cast<double>(b2) * w2_equal(x3, x4);
    record(r, lhs - rhs, kExactTol);
  }
  finish(r);
  return r;
}

CheckReport check_prop4(Index trials, Rng& rng) {
  CheckReport r{"prop4"};
  if (trials <= 0) return r;

  // (a) singleton batches.
  {
    Matrix a(1, 2), c(1, 2);
    a << 0.0, 0.0;
    c << 3.0, 4.0;
    const double v = w2_equal(a, c);
    record(r, std::abs(v - 25.0), 0.0);
    r.details["singleton_3_4_5"] = v;
    const Index n_single = std::min<Index>(trials, 100);
    for (Index t = 0; t < n_single; ++t) {
      const Index d = pick_dim(rng);
      const Matrix x = normal_matrix(1, d, rng), y = normal_matrix(1, d, rng);
      const double direct = (x - y).squaredNorm();
      record(r, std::abs(w2_equal(x, y) - direct) - 1e-12 * std::max(1.0, direct), 0.0);
    }
  }

  // (b) batch-size monotonicity on a fixed 64-row dataset.
  const Matrix data = normal_matrix(64, 2, rng);
  nlohmann::json curve = nlohmann::json::array();
  for (Index b : {2, 4, 8}) {
    std::vector<double> small, large;
    for (Index t = 0; t < trials; ++t) {
      small.push_back(w2_equal(sample_rows(data, b, rng), sample_rows(data, b, rng)));
      large.push_back(w2_equal(sample_rows(data, 2 * b, rng), sample_rows(data, 2 * b, rng)));
    }
    const Moments ms = moments(small), ml = moments(large);
    const double slack = 3.0 * std::hypot(ms.se, ml.se);
    record(r, ml.mean - ms.mean - slack, 0.0);
    curve.push_back({{"B", b}, {"mean_B", ms.mean}, {"mean_2B", ml.mean}, {"slack", slack}});
  }
  r.details["monotonicity"] = curve;
  finish(r);
  return r;
}

CheckReport check_prop2_prop3(Index trials, Rng& rng) {
  CheckReport r{"prop2_prop3"};
  if (trials <= 0) return r;
  constexpr Index n = 40, b = 4, d = 2;
  const Matrix data = normal_matrix(n, d, rng);
  const TransformStack stack = random_stack(d, 2, 2, rng);
  const Matrix z = stack_forward(stack, data);

  std::vector<double> lower_gap, upper_gap, pair_loss, to_full;
  for (Index t = 0; t < trials; ++t) {
    const Matrix z1 = sample_rows(z, b, rng);
    const Matrix z2 = sample_rows(z, b, rng);
    const double pair = w2_equal(z1, z2);
    const double full = w22_exact(z1, z);
    pair_loss.push_back(pair);
    to_full.push_back(full);
    lower_gap.push_back(pair - full);
    upper_gap.push_back(4.0 * full - pair);
  }
  const Moments lo = moments(lower_gap), up = moments(upper_gap);
  // Each inequality holds when its paired difference is >= -3 SE.
  record(r, -(lo.mean + 3.0 * lo.se), 0.0);
  record(r, -(up.mean + 3.0 * up.se), 0.0);
  r.details = {{"mean_pair_loss", moments(pair_loss).mean},
               {"mean_loss_to_full", moments(to_full).mean},
               {"prop2_margin", lo.mean},
               {"prop2_se", lo.se},
               {"prop3_margin", up.mean},
               {"prop3_se", up.se}};
  finish(r);
  return r;
}

CheckReport check_gradients(const TransformStack& stack, const Matrix& x1, const Matrix& x2, double tol, double h) {
  CheckReport r{"gradients"};
  constexpr double kSmall = 1e-8;

  StackCache c1, c2;
  const Matrix z1 = stack_forward(stack, x1, &c1);
  const Matrix z2 = stack_forward(stack, x2, &c2);
  const Matrix cost = pairwise_sq_cost(z1, z2);
  const double scale = std::max(1.0, cost.cwiseAbs().maxCoeff());
  const double margin = assignment_margin(cost);
  r.details["assignment_margin"] = margin;
  // A probe of size h moves the cost by O(h); closer ties could switch matching.
  if (margin <= 100.0 * h * scale) {
    r.skipped = 1;
    r.details["reason"] = "optimal matching is not unique";
    return r;
  }

  const OtResult ot = exact_ot_uniform(cost);
  TransformStack grad = zeros_like(stack);
  const Matrix dx1 = stack_backward(stack, c1, ot_grad_supports(ot.plan, z1, z2), grad);
  const Matrix dx2 = stack_backward(stack, c2, ot_grad_supports(ot.plan.transpose(), z2, z1), grad);

  const std::vector<bool> base_signs = probe(stack, x1, x2).signs;
  Index kinks = 0;
  const auto compare = [&](double analytic, const Probe& plus, const Probe& minus) {
    if (std::abs(analytic) <= kSmall) return;
    if (plus.signs != base_signs || minus.signs != base_signs) {
      ++kinks;
      return;
    }
    const double numeric = static_cast<double>((plus.loss - minus.loss) / (2 * static_cast<Real>(h)));
    const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric));
    if (r.instances == 0 || rel > r.worst_gap) r.details["worst_analytic"] = analytic;
    record(r, rel, tol);
  };

  for (const auto* which : {&x1, &x2}) {
    const Matrix& dx = which == &x1 ? dx1 : dx2;
    Matrix xp = *which;
    for (Index i = 0; i < xp.rows(); ++i) {
      for (Index j = 0; j < xp.cols(); ++j) {
        const double orig = xp(i, j);
        xp(i, j) = orig + h;
        const Probe fp = which == &x1 ? probe(stack, xp, x2) : probe(stack, x1, xp);
        xp(i, j) = orig - h;
        const Probe fm = which == &x1 ? probe(stack, xp, x2) : probe(stack, x1, xp);
        xp(i, j) = orig;
        compare(dx(i, j), fp, fm);
      }
    }
  }

  const Vector g = pack_parameters(grad);
  Vector theta = pack_parameters(stack);
  TransformStack shifted = stack;
  for (Index k = 0; k < theta.size(); ++k) {
    const double orig = theta(k);
    theta(k) = orig + h;
    unpack_parameters(theta, shifted);
    const Probe fp = probe(shifted, x1, x2);
    theta(k) = orig - h;
    unpack_parameters(theta, shifted);
    const Probe fm = probe(shifted, x1, x2);
    theta(k) = orig;
    compare(g(k), fp, fm);
  }
  r.details["kink_crossings"] = kinks;
  finish(r);
  return r;
}

const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names{"lemma1", "union_lemma", "prop4", "prop2_prop3", "gradients"};
  return names;
}

CheckReport run_check(const std::string& name, Index trials, std::uint64_t seed) {
  Rng rng = make_rng(seed, 7);
  if (name == "lemma1") return check_lemma1(trials, rng);
  if (name == "union_lemma") return check_union_lemma(trials, rng);
  if (name == "prop4") return check_prop4(trials, rng);
  if (name == "prop2_prop3") return check_prop2_prop3(trials, rng);
  if (name == "gradients") {
    // `trials` non-degenerate instances, at most 10 * trials draws.
    CheckReport total{"gradients"};
    for (Index draw = 0; draw < 10 * trials && total.instances < trials; ++draw) {
      const TransformStack stack = random_stack(5, 2, 2, rng);
      const Matrix x1 = normal_matrix(4, 5, rng), x2 = normal_matrix(4, 5, rng);
      const CheckReport one = check_gradients(stack, x1, x2, 1e-4);
      total.skipped += one.skipped;
      if (one.skipped) continue;
      total.details["kink_crossings"] = total.details.value("kink_crossings", Index{0}) +
                                        one.details["kink_crossings"].get<Index>();
      if (total.instances == 0 || one.worst_gap > total.worst_gap) {
        total.worst_gap = one.worst_gap;
        total.details["worst_analytic"] = one.details["worst_analytic"];
      }
      total.instances += 1;
      total.violations += one.violations > 0 ? 1 : 0;
    }
    finish(total);
    if (total.instances < trials) total.passed = false;
    return total;
  }
  throw UsageError("unknown check '" + name + "'");
}

}  // namespace tdm
