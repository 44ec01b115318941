#pragma once

#include <functional>
#include <optional>

#include "tdm/data.hpp"
#include "tdm/inn.hpp"
#include "tdm/ot.hpp"
#include "tdm/rmsprop.hpp"

namespace tdm {

enum class ImputerMode { TDM, BaselineIdentity };

std::string to_string(ImputerMode m);

struct TrainConfig {
  Index batch_size = 512;
  Index iterations = 10000;
  double lr = 1e-2;
  Index depth = 3;             // T, coupling blocks
  Index width_multiplier = 2;  // K, hidden width = K * D
  double clamp = kDefaultClamp;
  OtSolver solver = OtSolver::ExactAssignment;
  std::optional<double> epsilon;  // Sinkhorn; defaults to the 5%-median rule
  Index sinkhorn_max_iters = 5000;
  double sinkhorn_tol = 1e-6;
  ImputerMode mode = ImputerMode::TDM;
  std::uint64_t seed = 0;
  Index checkpoint_every = 0;  // 0 disables
  bool update_transform = true;  // false freezes theta (imputations still move)
};

struct ImputerState {
  Dataset working;      // missing cells hold the current imputations
  MissingMask mask;
  TransformStack stack; // empty in baseline mode
  RmsProp opt_theta;
  RmsProp opt_imputed;
  Rng batch_rng;
  Index iteration = 0;
  Index batch_size = 0;
  std::optional<SinkhornConfig> sinkhorn;
  std::vector<std::pair<Index, Index>> missing_cells;  // column-major order
  MatrixX<Index> cell_slot;  // position in missing_cells, -1 when observed
};

struct MetricCheckpoint {
  Index iteration = 0;
  double mae = 0.0;
  double rmse = 0.0;
};

struct TrainTrace {
  std::vector<double> loss_per_iter;
  std::vector<MetricCheckpoint> metric_checkpoints;
};

struct FitResult {
  Dataset imputed;
  TransformStack stack;
  TrainTrace trace;
  Index batch_size = 0;
  std::optional<double> epsilon;
};

struct FitOptions {
  // Ground truth in the same (standardized) space as the problem; enables
  // metric checkpoints. Never used for training.
  const Dataset* truth = nullptr;
  std::function<void(const ImputerState&)> on_checkpoint;
};

/// min(requested, 2^floor(log2(N/2))), at least 1.
Index effective_batch_size(Index n, Index requested);

/// Two independent batches, each drawn uniformly without replacement.
std::pair<IndexList, IndexList> sample_batch_pair(Index n, Index b, Rng& rng);

/// Mask derivation, noisy-mean init and (TDM mode) stack init. Random
/// streams: init noise uses stream 1, batches stream 2, weights stream 3 of
/// cfg.seed, so TDM and baseline runs of one seed see the same batches.
ImputerState make_state(const Dataset& problem, const TrainConfig& cfg);

/// One joint update of imputations (and theta in TDM mode); returns the
/// batch-pair transport loss before the update.
double train_step(ImputerState& state, const TrainConfig& cfg);

FitResult fit(const Dataset& problem, const TrainConfig& cfg, const FitOptions& options = {});

/// Per-block transformed views of the current working data.
std::vector<Matrix> impute_transform_view(const ImputerState& state);

}  // namespace tdm
