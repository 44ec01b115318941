#include "tdm/imputer.hpp"

#include <cmath>
#include <numeric>

#include "tdm/error.hpp"
#include "tdm/metrics.hpp"

namespace tdm {

namespace {

Matrix gather_rows(const Matrix& m, const IndexList& idx) {
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Index>(r)) = m.row(idx[r]);
  return out;
}

// Adds the masked entries of a batch gradient to the imputation gradient.
// A row drawn into both batches receives both contributions.
void scatter_masked(const ImputerState& state, const IndexList& idx, const Matrix& d_x, Vector& grad) {
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (Index j = 0; j < d_x.cols(); ++j) {
      const Index slot = state.cell_slot(idx[r], j);
      if (slot >= 0) grad(slot) += d_x(static_cast<Index>(r), j);
    }
  }
}

Vector gather_imputations(const ImputerState& state) {
  Vector v(static_cast<Index>(state.missing_cells.size()));
  for (std::size_t k = 0; k < state.missing_cells.size(); ++k) {
    const auto [i, j] = state.missing_cells[k];
    v(static_cast<Index>(k)) = state.working.values(i, j);
  }
  return v;
}

void scatter_imputations(ImputerState& state, const Vector& v) {
  for (std::size_t k = 0; k < state.missing_cells.size(); ++k) {
    const auto [i, j] = state.missing_cells[k];
    state.working.values(i, j) = v(static_cast<Index>(k));
  }
}

}  // namespace

std::string to_string(ImputerMode m) {
  return m == ImputerMode::TDM ? "tdm" : "baseline";
}

Index effective_batch_size(Index n, Index requested) {
  if (n < 2) throw DataError("imputation needs at least two rows");
  if (requested < 1) throw UsageError("batch size must be at least 1");
  const int exponent = static_cast<int>(std::floor(std::log2(static_cast<double>(n) / 2.0)));
  const Index cap = Index{1} << std::max(exponent, 0);
  return std::max<Index>(1, std::min(requested, cap));
}

std::pair<IndexList, IndexList> sample_batch_pair(Index n, Index b, Rng& rng) {
  if (b > n) throw UsageError("batch size exceeds the number of rows");
  if (b < 1) throw UsageError("batch size must be at least 1");
  const auto draw = [&]() {
    IndexList pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), Index{0});
    for (Index k = 0; k < b; ++k) {
      std::uniform_int_distribution<Index> pick(k, n - 1);
      std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    pool.resize(static_cast<std::size_t>(b));
    return pool;
  };
  IndexList first = draw();
  IndexList second = draw();
  return {std::move(first), std::move(second)};
}

ImputerState make_state(const Dataset& problem, const TrainConfig& cfg) {
  if (cfg.iterations < 1) throw UsageError("iterations must be at least 1");
  if (cfg.mode == ImputerMode::TDM && problem.n_cols() < 2) {
    throw UsageError("TDM mode needs at least two features");
  }
  ImputerState state;
  state.mask = derive_mask(problem);
  Rng init_rng = make_rng(cfg.seed, 1);
  state.working = noisy_mean_init(problem, state.mask, init_rng);
  state.batch_rng = make_rng(cfg.seed, 2);
  state.batch_size = effective_batch_size(problem.n_rows(), cfg.batch_size);

  state.cell_slot = MatrixX<Index>::Constant(problem.n_rows(), problem.n_cols(), -1);
  for (Index j = 0; j < problem.n_cols(); ++j) {
    for (Index i = 0; i < problem.n_rows(); ++i) {
      if (state.mask.missing(i, j)) {
        state.cell_slot(i, j) = static_cast<Index>(state.missing_cells.size());
        state.missing_cells.emplace_back(i, j);
      }
    }
  }
  state.opt_imputed = RmsProp(static_cast<Index>(state.missing_cells.size()), cfg.lr, 0.99, 1e-8, "imputations");

  if (cfg.mode == ImputerMode::TDM) {
    Rng stack_rng = make_rng(cfg.seed, 3);
    state.stack = init_stack(problem.n_cols(), cfg.depth, cfg.width_multiplier, stack_rng, cfg.clamp);
    state.opt_theta = RmsProp(state.stack.param_count(), cfg.lr, 0.99, 1e-8, "theta");
  }
  if (cfg.solver == OtSolver::Sinkhorn) {
    SinkhornConfig sc;
    sc.epsilon = cfg.epsilon ? *cfg.epsilon : default_epsilon(state.working.values);
    sc.max_iters = cfg.sinkhorn_max_iters;
    sc.tol = cfg.sinkhorn_tol;
    state.sinkhorn = sc;
  } else if (cfg.solver == OtSolver::BruteForce) {
    throw UsageError("brute-force OT is a test oracle, not a training solver");
  }
  return state;
}

double train_step(ImputerState& state, const TrainConfig& cfg) {
  const bool transformed = cfg.mode == ImputerMode::TDM;
  const Index n = state.working.n_rows();
  const auto [idx1, idx2] = sample_batch_pair(n, state.batch_size, state.batch_rng);
  const Matrix x1 = gather_rows(state.working.values, idx1);
  const Matrix x2 = gather_rows(state.working.values, idx2);

  const Index b = x1.rows();
  Matrix z1 = x1, z2 = x2;
  StackCache cache;
  if (transformed) {
    Matrix both(2 * b, x1.cols());
    both << x1, x2;
    const Matrix z = stack_forward(state.stack, both, &cache);
    z1 = z.topRows(b);
    z2 = z.bottomRows(b);
  }

  const Matrix cost = pairwise_sq_cost(z1, z2);
  OtResult ot;
  if (state.sinkhorn) {
    const Vector uniform = Vector::Constant(b, 1.0 / static_cast<double>(b));
    ot = sinkhorn(cost, uniform, uniform, *state.sinkhorn);
  } else {
    ot = exact_ot_uniform(cost);
  }
  const double loss = ot.distance;
  if (!std::isfinite(loss)) {
    throw NumericalError("non-finite loss at iteration " + std::to_string(state.iteration));
  }

  // Envelope: the plan is a constant for differentiation.
  Matrix d_x1 = ot_grad_supports(ot.plan, z1, z2);
  Matrix d_x2 = ot_grad_supports(ot.plan.transpose(), z2, z1);

  TransformStack grad;
  if (transformed) {
    grad = zeros_like(state.stack);
    Matrix d_z(2 * b, x1.cols());
    d_z << d_x1, d_x2;
    const Matrix d_x = stack_backward(state.stack, cache, d_z, grad);
    d_x1 = d_x.topRows(b);
    d_x2 = d_x.bottomRows(b);
  }

  Vector imputed_grad = Vector::Zero(static_cast<Index>(state.missing_cells.size()));
  scatter_masked(state, idx1, d_x1, imputed_grad);
  scatter_masked(state, idx2, d_x2, imputed_grad);

  if (transformed && cfg.update_transform) {
    Vector theta = pack_parameters(state.stack);
    state.opt_theta.step(theta, pack_parameters(grad));
    unpack_parameters(theta, state.stack);
  }
  if (!state.missing_cells.empty()) {
    Vector imputations = gather_imputations(state);
    state.opt_imputed.step(imputations, imputed_grad);
    scatter_imputations(state, imputations);
  }
  ++state.iteration;
  return loss;
}

FitResult fit(const Dataset& problem, const TrainConfig& cfg, const FitOptions& options) {
  ImputerState state = make_state(problem, cfg);
  FitResult res;
  res.batch_size = state.batch_size;
  if (state.sinkhorn) res.epsilon = state.sinkhorn->epsilon;
  res.trace.loss_per_iter.reserve(static_cast<std::size_t>(cfg.iterations));
  for (Index it = 0; it < cfg.iterations; ++it) {
    res.trace.loss_per_iter.push_back(train_step(state, cfg));
    if (cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0) {
      if (options.truth && state.mask.missing_count() > 0) {
        res.trace.metric_checkpoints.push_back({state.iteration, mae(state.working, *options.truth, state.mask),
                                                rmse(state.working, *options.truth, state.mask)});
      }
      if (options.on_checkpoint) options.on_checkpoint(state);
    }
  }
  res.imputed = std::move(state.working);
  res.stack = std::move(state.stack);
  return res;
}

std::vector<Matrix> impute_transform_view(const ImputerState& state) {
  if (state.stack.blocks.empty()) return {};
  return stack_views(state.stack, state.working.values);
}

}  // namespace tdm
