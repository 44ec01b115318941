#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tdm/checks.hpp"
#include "tdm/data.hpp"
#include "tdm/error.hpp"
#include "tdm/imputer.hpp"
#include "tdm/masks.hpp"
#include "tdm/metrics.hpp"
#include "tdm/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tdm;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCheckFailed = 4;

constexpr const char* kRowMcar = "row_mcar";

std::string version_string() { return std::string("tdm ") + TDM_VERSION; }

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << bytes;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

// 64-bit FNV-1a, hex encoded.
std::string fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json digest_of(const fs::path& path) { return "fnv1a64:" + fnv1a(read_bytes(path)); }

// Tracks files written into one output directory for the manifest.
class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  void add(const std::string& key, const std::string& name) {
    entries_[key] = {{"path", name}, {"digest", digest_of(dir_ / name)}};
  }
  void text(const std::string& key, const std::string& name, const std::string& bytes) {
    write_bytes(dir_ / name, bytes);
    add(key, name);
  }
  void csv(const std::string& key, const std::string& name, const Dataset& data) {
    text(key, name, format_csv(data));
  }
  void write_manifest(json manifest) const {
    manifest["artifacts"] = entries_;
    write_bytes(dir_ / "manifest.json", manifest.dump(2) + "\n");
  }

 private:
  fs::path dir_;
  json entries_ = json::object();
};

json base_manifest(const std::string& command) {
  return {{"command", command}, {"version", version_string()}};
}

json input_hashes(const std::vector<std::string>& paths) {
  json j = json::object();
  for (const auto& p : paths) j[p] = digest_of(p);
  return j;
}

class Stopwatch {
 public:
  explicit Stopwatch(bool frozen) : frozen_(frozen), start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    if (frozen_) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool frozen_;
  std::chrono::steady_clock::time_point start_;
};

std::string format_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) out += ',';
    out += cells[k];
  }
  return out + "\n";
}

std::string fmt_index(Index v) { return std::to_string(v); }

unsigned worker_count(bool deterministic, std::size_t jobs) {
  if (deterministic) return 1;
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TDM_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    } catch (const std::exception&) {
      throw UsageError("TDM_THREADS must be a positive integer");
    }
  }
  return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(n, jobs)));
}

// ---------------------------------------------------------------- training

struct TrainFlags {
  std::string mode = "tdm";
  std::string solver = "exact";
  std::optional<double> epsilon;
  Index batch_size = 512;
  Index iters = 10000;
  double lr = 1e-2;
  Index depth = 3;
  Index width = 2;
  std::uint64_t seed = 0;
  Index checkpoint_every = 0;
  bool deterministic = false;

  TrainConfig config(ImputerMode m) const {
    TrainConfig cfg;
    cfg.batch_size = batch_size;
    cfg.iterations = iters;
    cfg.lr = lr;
    cfg.depth = depth;
    cfg.width_multiplier = width;
    cfg.solver = solver == "sinkhorn" ? OtSolver::Sinkhorn : OtSolver::ExactAssignment;
    cfg.epsilon = epsilon;
    cfg.mode = m;
    cfg.seed = seed;
    cfg.checkpoint_every = checkpoint_every;
    return cfg;
  }
  ImputerMode imputer_mode() const { return mode == "baseline" ? ImputerMode::BaselineIdentity : ImputerMode::TDM; }
};

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool with_mode) {
  if (with_mode) {
    cmd->add_option("--mode", f.mode, "tdm or baseline")->check(CLI::IsMember({"tdm", "baseline"}))->capture_default_str();
  }
  cmd->add_option("--solver", f.solver, "exact or sinkhorn")->check(CLI::IsMember({"exact", "sinkhorn"}))->capture_default_str();
  cmd->add_option("--epsilon", f.epsilon, "Sinkhorn regularization (default: 0.05 x median cost)")->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", f.batch_size, "requested batch size")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--iters", f.iters, "training iterations")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--lr", f.lr, "RMSprop learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--T", f.depth, "coupling blocks")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--K", f.width, "hidden width multiplier")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", f.seed, "random seed")->capture_default_str();
  cmd->add_flag("--deterministic", f.deterministic, "single thread, zeroed timings");
}

json config_json(const TrainConfig& cfg, Index effective_batch, std::optional<double> epsilon) {
  json j = {{"mode", to_string(cfg.mode)},
            {"solver", to_string(cfg.solver)},
            {"batch_size_requested", cfg.batch_size},
            {"batch_size", effective_batch},
            {"iterations", cfg.iterations},
            {"lr", cfg.lr},
            {"T", cfg.depth},
            {"K", cfg.width_multiplier},
            {"clamp", cfg.clamp},
            {"seed", cfg.seed},
            {"checkpoint_every", cfg.checkpoint_every}};
  if (cfg.solver == OtSolver::Sinkhorn) {
    j["epsilon"] = epsilon ? json(*epsilon) : json(nullptr);
    j["sinkhorn_max_iters"] = cfg.sinkhorn_max_iters;
    j["sinkhorn_tol"] = cfg.sinkhorn_tol;
  }
  return j;
}

json vector_json(const Vector& v) {
  json a = json::array();
  for (Index k = 0; k < v.size(); ++k) a.push_back(v(k));
  return a;
}

// Observed cells come back bit-identical; only missing cells are replaced.
Dataset merge_imputations(const Dataset& original, const Dataset& imputed) {
  Dataset out = original;
  for (Index k = 0; k < out.values.size(); ++k)
    if (std::isnan(out.values.data()[k])) out.values.data()[k] = imputed.values.data()[k];
  return out;
}

MetricsReport evaluate_raw(const Dataset& imputed, const Dataset& truth, const MissingMask& mask) {
  if (truth.has_missing()) throw DataError("ground truth contains missing values");
  const StandardizationParams params = fit_standardization(truth);
  return evaluate(apply_standardization(imputed, params), apply_standardization(truth, params), mask);
}

std::string trace_csv(const TrainTrace& trace) {
  std::string out = "iteration,loss\n";
  for (std::size_t k = 0; k < trace.loss_per_iter.size(); ++k)
    out += format_row({std::to_string(k + 1), format_double(trace.loss_per_iter[k])});
  return out;
}

std::string metric_trace_csv(const TrainTrace& trace) {
  std::string out = "iteration,mae,rmse\n";
  for (const auto& c : trace.metric_checkpoints)
    out += format_row({fmt_index(c.iteration), format_double(c.mae), format_double(c.rmse)});
  return out;
}

// Long format: block 0 is the standardized data, block t the output of t blocks.
std::string views_csv(const Matrix& data, const std::vector<Matrix>& views) {
  std::string out = "block,row";
  for (Index j = 0; j < data.cols(); ++j) out += ",z" + std::to_string(j + 1);
  out += "\n";
  const auto dump = [&](Index block, const Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i) {
      out += std::to_string(block) + "," + std::to_string(i);
      for (Index j = 0; j < m.cols(); ++j) out += "," + format_double(m(i, j));
      out += "\n";
    }
  };
  dump(0, data);
  for (std::size_t t = 0; t < views.size(); ++t) dump(static_cast<Index>(t + 1), views[t]);
  return out;
}

// ---------------------------------------------------------------- commands

struct SynthArgs {
  std::string kind = "two_circles";
  Index n = 500;
  double noise = 0.05;
  std::uint64_t seed = 0;
  std::string output_dir;
};

int cmd_synth(const SynthArgs& a) {
  const SynthKind kind = parse_synth_kind(a.kind);
  const Dataset data = make_synthetic(kind, a.n, a.noise, a.seed);
  Artifacts out(a.output_dir);
  out.csv("data", "data.csv", data);
  json m = base_manifest("synth");
  m["config"] = {{"kind", to_string(kind)}, {"n", a.n}, {"noise", a.noise}, {"seed", a.seed}};
  out.write_manifest(m);
  return 0;
}

struct MaskArgs {
  std::string input;
  std::string output_dir;
  std::string mechanism = "mcar";
  double rate = 0.3;
  std::uint64_t seed = 0;
  double p = 25.0;
  double observed_fraction = 0.3;
};

MaskResult make_mask(const Dataset& data, const std::string& mechanism, double rate, std::uint64_t seed,
                     double p, double observed_fraction) {
  if (data.has_missing()) throw DataError("masking needs a complete dataset");
  if (mechanism == kRowMcar) {
    Rng rng = make_rng(seed, 0);
    MaskResult r;
    r.mask = gen_row_mcar(data.n_rows(), data.n_cols(), rate, rng);
    r.achieved_rate = r.mask.missing_rate();
    return r;
  }
  MaskSpec spec;
  spec.mechanism = parse_mechanism(mechanism);
  spec.rate = rate;
  spec.seed = seed;
  spec.quantile_p = p;
  spec.observed_col_fraction = observed_fraction;
  return generate_mask(data, spec);
}

json mask_result_json(const MaskResult& r) {
  json j = {{"achieved_rate", r.achieved_rate},
            {"missing_cells", r.mask.missing_count()},
            {"observed_columns", r.observed_columns},
            {"logistic_inputs", r.logistic_inputs}};
  j["bias"] = r.bias ? json(*r.bias) : json(nullptr);
  j["candidate_prob"] = r.candidate_prob ? json(*r.candidate_prob) : json(nullptr);
  return j;
}

int cmd_mask(const MaskArgs& a) {
  const Dataset data = load_csv(a.input);
  const MaskResult r = make_mask(data, a.mechanism, a.rate, a.seed, a.p, a.observed_fraction);
  Artifacts out(a.output_dir);
  write_mask_csv(r.mask, out.path("mask.csv"));
  out.add("mask", "mask.csv");
  out.csv("masked", "masked.csv", apply_mask(data, r.mask));
  json m = base_manifest("mask");
  m["config"] = {{"mechanism", a.mechanism},
                 {"rate", a.rate},
                 {"seed", a.seed},
                 {"quantile_p", a.p},
                 {"observed_col_fraction", a.observed_fraction}};
  m["input_hashes"] = input_hashes({a.input});
  m["result"] = mask_result_json(r);
  out.write_manifest(m);
  return 0;
}

struct ImputeArgs {
  std::string input;
  std::string output_dir;
  std::optional<std::string> truth;
  TrainFlags train;
};

int cmd_impute(const ImputeArgs& a) {
  const Stopwatch clock(a.train.deterministic);
  const Dataset raw = load_csv(a.input);
  const auto [problem, params] = standardize(raw);
  const TrainConfig cfg = a.train.config(a.train.imputer_mode());
  Artifacts out(a.output_dir);

  std::optional<Dataset> truth_raw, truth_std;
  std::vector<std::string> inputs{a.input};
  if (a.truth) {
    truth_raw = load_csv(*a.truth);
    if (truth_raw->n_rows() != raw.n_rows() || truth_raw->n_cols() != raw.n_cols())
      throw DataError("truth and input shapes differ");
    truth_std = apply_standardization(*truth_raw, params);
    inputs.push_back(*a.truth);
  }

  FitOptions opts;
  if (truth_std) opts.truth = &*truth_std;
  json checkpoints = json::array();
  if (cfg.checkpoint_every > 0) {
    fs::create_directories(out.path("checkpoints"));
    opts.on_checkpoint = [&](const ImputerState& s) {
      char stem[64];
      std::snprintf(stem, sizeof stem, "checkpoints/iter_%07lld", static_cast<long long>(s.iteration));
      const std::string name(stem);
      out.csv(name + "_imputed", name + "_imputed.csv", merge_imputations(raw, destandardize(s.working, params)));
      json entry = {{"iteration", s.iteration}, {"imputed", name + "_imputed.csv"}};
      if (!s.stack.blocks.empty()) {
        out.text(name + "_stack", name + "_stack.json", stack_to_json(s.stack).dump() + "\n");
        entry["stack"] = name + "_stack.json";
      }
      checkpoints.push_back(entry);
    };
  }

  const FitResult result = fit(problem, cfg, opts);
  const Dataset imputed = merge_imputations(raw, destandardize(result.imputed, params));
  out.csv("imputed", "imputed.csv", imputed);
  out.text("trace", "trace.csv", trace_csv(result.trace));
  if (!result.trace.metric_checkpoints.empty())
    out.text("metric_trace", "metric_trace.csv", metric_trace_csv(result.trace));
  if (cfg.mode == ImputerMode::TDM) {
    out.text("stack", "stack.json", stack_to_json(result.stack).dump() + "\n");
    out.text("views", "views.csv", views_csv(result.imputed.values, stack_views(result.stack, result.imputed.values)));
  }

  json m = base_manifest("impute");
  m["config"] = config_json(cfg, result.batch_size, result.epsilon);
  m["config"]["deterministic"] = a.train.deterministic;
  m["standardization"] = {{"means", vector_json(params.means)}, {"stds", vector_json(params.stds)}};
  m["input_hashes"] = input_hashes(inputs);
  m["trace_path"] = "trace.csv";
  m["final_loss"] = result.trace.loss_per_iter.back();
  m["checkpoints"] = checkpoints;
  if (truth_raw) {
    const MissingMask mask = derive_mask(raw);
    MetricsReport report = evaluate_raw(imputed, *truth_raw, mask);
    report.runtime_seconds = clock.seconds();
    m["metrics"] = to_json(report);
  } else {
    m["metrics"] = nullptr;
  }
  m["runtime_seconds"] = clock.seconds();
  out.write_manifest(m);
  return 0;
}

struct EvalArgs {
  std::string imputed;
  std::string truth;
  std::string mask;
  std::optional<std::string> output_dir;
};

int cmd_eval(const EvalArgs& a) {
  const Dataset imputed = load_csv(a.imputed);
  const Dataset truth = load_csv(a.truth);
  const MissingMask mask = load_mask_csv(a.mask);
  if (imputed.has_missing()) throw DataError("imputed data still contains missing values");
  const json report = to_json(evaluate_raw(imputed, truth, mask));
  if (!a.output_dir) {
    std::cout << report.dump(2) << "\n";
    return 0;
  }
  Artifacts out(*a.output_dir);
  out.text("metrics", "metrics.json", report.dump(2) + "\n");
  json m = base_manifest("eval");
  m["input_hashes"] = input_hashes({a.imputed, a.truth, a.mask});
  m["metrics"] = report;
  out.write_manifest(m);
  return 0;
}

struct CheckArgs {
  std::string which = "all";
  std::optional<Index> trials;
  std::uint64_t seed = 0;
  std::optional<std::string> output_dir;
};

Index default_trials(const std::string& name) {
  if (name == "prop4" || name == "prop2_prop3") return 2000;
  if (name == "gradients") return 20;
  return 100;
}

int cmd_check(const CheckArgs& a) {
  std::vector<std::string> names;
  if (a.which == "all") {
    names = check_names();
  } else {
    const auto& known = check_names();
    if (std::find(known.begin(), known.end(), a.which) == known.end())
      throw UsageError("unknown check '" + a.which + "'");
    names.push_back(a.which);
  }
  std::string lines;
  bool all_passed = true;
  for (const auto& name : names) {
    const CheckReport r = run_check(name, a.trials ? *a.trials : default_trials(name), a.seed);
    all_passed = all_passed && r.passed;
    const std::string line = to_json(r).dump() + "\n";
    std::cout << line << std::flush;
    lines += line;
  }
  if (a.output_dir) {
    Artifacts out(*a.output_dir);
    out.text("reports", "checks.jsonl", lines);
    json m = base_manifest("check");
    m["config"] = {{"which", a.which}, {"seed", a.seed}};
    m["config"]["trials"] = a.trials ? json(*a.trials) : json("default");
    m["passed"] = all_passed;
    out.write_manifest(m);
  }
  return all_passed ? 0 : kExitCheckFailed;
}

struct ExperimentArgs {
  std::optional<std::string> input;
  std::optional<std::string> synth;
  Index synth_n = 500;
  double synth_noise = 0.05;
  std::string output_dir;
  std::vector<std::string> mechanisms{"mcar", "mar", "mnarl", "mnarq"};
  double rate = 0.3;
  Index seeds = 5;
  double p = 25.0;
  double observed_fraction = 0.3;
  TrainFlags train;
};

struct CellResult {
  std::string mechanism;
  std::uint64_t seed = 0;
  std::string method;
  MetricsReport report;
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Sample standard deviation; zero for fewer than two values.
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string results_csv(const std::vector<std::optional<std::vector<CellResult>>>& cells) {
  std::string out = "mechanism,seed,method,mae,rmse,w22,runtime_seconds\n";
  for (const auto& cell : cells) {
    if (!cell) continue;
    for (const auto& r : *cell) {
      out += format_row({r.mechanism, std::to_string(r.seed), r.method, format_double(r.report.mae),
                         format_double(r.report.rmse), r.report.w22 ? format_double(*r.report.w22) : "",
                         format_double(r.report.runtime_seconds)});
    }
  }
  return out;
}

std::string summary_csv(const std::vector<std::optional<std::vector<CellResult>>>& cells,
                        const std::vector<std::string>& mechanisms) {
  std::string out = "mechanism,method,runs,mae_mean,mae_std,rmse_mean,rmse_std,w22_mean,w22_std,mae_wins\n";
  for (const auto& mech : mechanisms) {
    for (const std::string method : {"tdm", "baseline"}) {
      std::vector<double> maes, rmses, w22s;
      Index wins = 0;
      for (const auto& cell : cells) {
        if (!cell || cell->front().mechanism != mech) continue;
        const CellResult* mine = nullptr;
        const CellResult* other = nullptr;
        for (const auto& r : *cell) (r.method == method ? mine : other) = &r;
        maes.push_back(mine->report.mae);
        rmses.push_back(mine->report.rmse);
        if (mine->report.w22) w22s.push_back(*mine->report.w22);
        if (mine->report.mae < other->report.mae) ++wins;
      }
      if (maes.empty()) continue;
      out += format_row({mech, method, std::to_string(maes.size()), format_double(mean_of(maes)),
                         format_double(std_of(maes)), format_double(mean_of(rmses)), format_double(std_of(rmses)),
                         w22s.empty() ? "" : format_double(mean_of(w22s)), w22s.empty() ? "" : format_double(std_of(w22s)),
                         fmt_index(wins)});
    }
  }
  return out;
}

int cmd_experiment(const ExperimentArgs& a) {
  if (a.input.has_value() == a.synth.has_value()) throw UsageError("give exactly one of --input and --synth");
  const Dataset truth = a.input ? load_csv(*a.input)
                                : make_synthetic(parse_synth_kind(*a.synth), a.synth_n, a.synth_noise, a.train.seed);
  if (truth.has_missing()) throw DataError("experiment input must be complete");
  for (const auto& mech : a.mechanisms)
    if (mech != kRowMcar) parse_mechanism(mech);

  struct Job {
    std::string mechanism;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& mech : a.mechanisms)
    for (Index s = 0; s < a.seeds; ++s) jobs.push_back({mech, a.train.seed + static_cast<std::uint64_t>(s)});

  std::vector<std::optional<std::vector<CellResult>>> cells(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  const auto worker = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (failure) return;
      }
      try {
        const Job& job = jobs[k];
        const MaskResult mask = make_mask(truth, job.mechanism, a.rate, job.seed, a.p, a.observed_fraction);
        const Dataset masked = apply_mask(truth, mask.mask);
        const auto [problem, params] = standardize(masked);
        std::vector<CellResult> rows;
        for (ImputerMode mode : {ImputerMode::TDM, ImputerMode::BaselineIdentity}) {
          TrainFlags flags = a.train;
          flags.seed = job.seed;
          flags.checkpoint_every = 0;
          const Stopwatch clock(a.train.deterministic);
          const FitResult fitted = fit(problem, flags.config(mode));
          const Dataset imputed = merge_imputations(masked, destandardize(fitted.imputed, params));
          CellResult row{job.mechanism, job.seed, to_string(mode), evaluate_raw(imputed, truth, mask.mask)};
          row.report.runtime_seconds = clock.seconds();
          rows.push_back(row);
        }
        cells[k] = std::move(rows);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  const unsigned n_workers = worker_count(a.train.deterministic, jobs.size());
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  Artifacts out(a.output_dir);
  out.text("results", "results.csv", results_csv(cells));
  if (failure) std::rethrow_exception(failure);
  out.text("summary", "summary.csv", summary_csv(cells, a.mechanisms));

  json m = base_manifest("experiment");
  const TrainConfig cfg = a.train.config(ImputerMode::TDM);
  m["config"] = config_json(cfg, effective_batch_size(truth.n_rows(), cfg.batch_size), cfg.epsilon);
  m["config"].erase("mode");
  m["config"].erase("checkpoint_every");
  m["config"]["deterministic"] = a.train.deterministic;
  m["config"]["mechanisms"] = a.mechanisms;
  m["config"]["rate"] = a.rate;
  m["config"]["seeds"] = a.seeds;
  m["config"]["quantile_p"] = a.p;
  m["config"]["observed_col_fraction"] = a.observed_fraction;
  if (a.input) {
    m["input_hashes"] = input_hashes({*a.input});
  } else {
    m["config"]["synth"] = {{"kind", *a.synth}, {"n", a.synth_n}, {"noise", a.synth_noise}, {"seed", a.train.seed}};
  }
  out.write_manifest(m);
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Transformed distribution matching for missing value imputation"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate a 2-D synthetic point cloud");
  c_synth->add_option("--kind", synth.kind, "two_circles, s_curve or half_moons")
      ->check(CLI::IsMember({"two_circles", "s_curve", "half_moons"}))
      ->capture_default_str();
  c_synth->add_option("--n", synth.n, "number of points")->capture_default_str();
  c_synth->add_option("--noise", synth.noise, "noise standard deviation")->capture_default_str();
  c_synth->add_option("--seed", synth.seed, "random seed")->capture_default_str();
  c_synth->add_option("--output-dir", synth.output_dir, "output directory")->required();

  MaskArgs mask;
  auto* c_mask = app.add_subcommand("mask", "draw a missingness mask for a complete CSV");
  c_mask->add_option("--input", mask.input, "complete data CSV")->required()->check(CLI::ExistingFile);
  c_mask->add_option("--output-dir", mask.output_dir, "output directory")->required();
  c_mask->add_option("--mechanism", mask.mechanism, "mcar, mar, mnarl, mnarq or row_mcar")
      ->check(CLI::IsMember({"mcar", "mar", "mnarl", "mnarq", kRowMcar}))
      ->capture_default_str();
  c_mask->add_option("--rate", mask.rate, "target missing rate (row fraction for row_mcar)")->capture_default_str();
  c_mask->add_option("--seed", mask.seed, "random seed")->capture_default_str();
  c_mask->add_option("--p", mask.p, "MNARQ tail percentile")->capture_default_str();
  c_mask->add_option("--observed-fraction", mask.observed_fraction, "MAR fully observed column fraction")
      ->capture_default_str();

  ImputeArgs impute;
  auto* c_impute = app.add_subcommand("impute", "fill the missing cells of a CSV");
  c_impute->add_option("--input", impute.input, "data CSV, empty or NaN cells are missing")
      ->required()
      ->check(CLI::ExistingFile);
  c_impute->add_option("--output-dir", impute.output_dir, "output directory")->required();
  c_impute->add_option("--truth", impute.truth, "complete CSV for metric checkpoints")->check(CLI::ExistingFile);
  c_impute->add_option("--checkpoint-every", impute.train.checkpoint_every, "checkpoint interval, 0 disables")
      ->capture_default_str();
  add_train_flags(c_impute, impute.train, true);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "score an imputation against the ground truth");
  c_eval->add_option("--imputed", eval.imputed, "imputed CSV")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--truth", eval.truth, "complete CSV")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--mask", eval.mask, "mask CSV")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--output-dir", eval.output_dir, "write metrics.json here instead of stdout");

  CheckArgs check;
  auto* c_check = app.add_subcommand("check", "run numerical property checks");
  c_check->add_option("which", check.which, "check name or all")->capture_default_str();
  c_check->add_option("--trials", check.trials, "trials per check")->check(CLI::NonNegativeNumber);
  c_check->add_option("--seed", check.seed, "random seed")->capture_default_str();
  c_check->add_option("--output-dir", check.output_dir, "also write checks.jsonl here");

  ExperimentArgs exp;
  auto* c_exp = app.add_subcommand("experiment", "mechanisms x seeds x {tdm, baseline} sweep");
  auto* in_opt = c_exp->add_option("--input", exp.input, "complete data CSV")->check(CLI::ExistingFile);
  c_exp->add_option("--synth", exp.synth, "synthetic dataset instead of --input")
      ->check(CLI::IsMember({"two_circles", "s_curve", "half_moons"}))
      ->excludes(in_opt);
  c_exp->add_option("--synth-n", exp.synth_n, "synthetic points")->capture_default_str();
  c_exp->add_option("--synth-noise", exp.synth_noise, "synthetic noise")->capture_default_str();
  c_exp->add_option("--output-dir", exp.output_dir, "output directory")->required();
  c_exp->add_option("--mechanism", exp.mechanisms, "comma separated mechanisms")
      ->delimiter(',')
      ->check(CLI::IsMember({"mcar", "mar", "mnarl", "mnarq", kRowMcar}))
      ->capture_default_str();
  c_exp->add_option("--rate", exp.rate, "target missing rate")->capture_default_str();
  c_exp->add_option("--seeds", exp.seeds, "seeds per mechanism, starting at --seed")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_exp->add_option("--p", exp.p, "MNARQ tail percentile")->capture_default_str();
  c_exp->add_option("--observed-fraction", exp.observed_fraction, "MAR fully observed column fraction")
      ->capture_default_str();
  add_train_flags(c_exp, exp.train, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  if (c_synth->parsed()) return cmd_synth(synth);
  if (c_mask->parsed()) return cmd_mask(mask);
  if (c_impute->parsed()) return cmd_impute(impute);
  if (c_eval->parsed()) return cmd_eval(eval);
  if (c_check->parsed()) return cmd_check(check);
  return cmd_experiment(exp);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
