#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tdm/random.hpp"
#include "tdm/types.hpp"

namespace tdm {

// Dense N x D table; NaN marks a missing cell.
struct Dataset {
  Matrix values;
  std::vector<std::string> col_names;  // empty, or exactly one per column

  Dataset() = default;
  explicit Dataset(Matrix v, std::vector<std::string> names = {});

  Index n_rows() const { return values.rows(); }
  Index n_cols() const { return values.cols(); }
  bool has_missing() const;
};

struct MissingMask {
  FlagMatrix flags;

  MissingMask() = default;
  explicit MissingMask(FlagMatrix f) : flags(std::move(f)) {}

  Index rows() const { return flags.rows(); }
  Index cols() const { return flags.cols(); }
  Index missing_count() const;
  double missing_rate() const;
  bool missing(Index i, Index j) const { return flags(i, j) != 0; }
};

struct StandardizationParams {
  Vector means;
  Vector stds;  // strictly positive
};

Dataset load_csv(const std::filesystem::path& path, bool has_header);
/// Header detected: the first line is a header if any of its cells is not numeric.
Dataset load_csv(const std::filesystem::path& path);
bool starts_with_header(const std::string& text);
Dataset parse_csv(const std::string& text, bool has_header);
void write_csv(const Dataset& data, const std::filesystem::path& path);
/// Always writes a header; unnamed columns become x1, x2, ...
std::string format_csv(const Dataset& data);

// Throws DataError if some column has no observed entry.
MissingMask derive_mask(const Dataset& data);

// Column statistics over observed entries, population std, sigma < 1e-12
// replaced by 1.
StandardizationParams fit_standardization(const Dataset& data);
std::pair<Dataset, StandardizationParams> standardize(const Dataset& data);
Dataset apply_standardization(const Dataset& data, const StandardizationParams& params);
Dataset destandardize(const Dataset& data, const StandardizationParams& params);

// Missing cells get the column nan-mean plus N(0, 0.1^2) noise. Draws are
// taken column-major over the missing cells.
Dataset noisy_mean_init(const Dataset& data, const MissingMask& mask, Rng& rng);

// Mask files: 0/1 integers, no header.
MissingMask load_mask_csv(const std::filesystem::path& path);
void write_mask_csv(const MissingMask& mask, const std::filesystem::path& path);

// Shortest decimal form that round-trips, never locale dependent.
std::string format_double(double v);

}  // namespace tdm
