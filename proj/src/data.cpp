#include "tdm/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "tdm/error.hpp"

namespace tdm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      return cells;
    }
    cells.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

double parse_cell(std::string_view cell, std::size_t line_no) {
  if (cell.empty() || cell == "NaN" || cell == "nan" || cell == "NA") return kNaN;
  std::string_view s = cell;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw DataError("line " + std::to_string(line_no) + ": non-numeric cell '" +
                    std::string(cell) + "'");
  }
  return v;
}

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

}  // namespace

Dataset::Dataset(Matrix v, std::vector<std::string> names)
    : values(std::move(v)), col_names(std::move(names)) {
  if (!col_names.empty() && static_cast<Index>(col_names.size()) != values.cols()) {
    throw DataError("column name count does not match column count");
  }
}

bool Dataset::has_missing() const { return values.hasNaN(); }

Index MissingMask::missing_count() const { return flags.cast<Index>().sum(); }

double MissingMask::missing_rate() const {
  return flags.size() == 0 ? 0.0 : static_cast<double>(missing_count()) / static_cast<double>(flags.size());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

Dataset parse_csv(const std::string& text, bool has_header) {
  std::istringstream in(text);
  std::vector<std::string> lines = read_lines(in);
  std::vector<std::string> names;
  std::size_t first = 0;
  if (has_header) {
    if (lines.empty()) throw DataError("missing header line");
    for (auto cell : split_commas(lines[0])) names.emplace_back(cell);
    first = 1;
  }
  if (lines.size() <= first) throw DataError("no data rows");

  const std::size_t n = lines.size() - first;
  const std::size_t d = split_commas(lines[first]).size();
  if (has_header && names.size() != d) {
    throw DataError("header has " + std::to_string(names.size()) + " columns, data has " +
                    std::to_string(d));
  }
  Matrix values(static_cast<Index>(n), static_cast<Index>(d));
  for (std::size_t r = 0; r < n; ++r) {
    const auto cells = split_commas(lines[first + r]);
    if (cells.size() != d) {
      throw DataError("ragged row at line " + std::to_string(first + r + 1) + ": expected " +
                      std::to_string(d) + " cells, got " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < d; ++c) {
      values(static_cast<Index>(r), static_cast<Index>(c)) = parse_cell(cells[c], first + r + 1);
    }
  }
  return Dataset(std::move(values), std::move(names));
}

bool starts_with_header(const std::string& text) {
  std::istringstream in(text);
  const std::vector<std::string> lines = read_lines(in);
  if (lines.empty()) return false;
  for (auto cell : split_commas(lines[0])) {
    if (cell.empty() || cell == "NaN" || cell == "nan" || cell == "NA") continue;
    if (cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) return true;
  }
  return false;
}

Dataset load_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), has_header);
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  return parse_csv(text, starts_with_header(text));
}

std::string format_csv(const Dataset& data) {
  std::string out;
  for (Index j = 0; j < data.n_cols(); ++j) {
    if (j) out += ',';
    out += data.col_names.empty() ? "x" + std::to_string(j + 1) : data.col_names[static_cast<std::size_t>(j)];
  }
  out += '\n';
  for (Index i = 0; i < data.n_rows(); ++i) {
    for (Index j = 0; j < data.n_cols(); ++j) {
      if (j) out += ',';
      out += format_double(data.values(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_csv(data);
  if (!out) throw DataError("write failed for " + path.string());
}

MissingMask derive_mask(const Dataset& data) {
  FlagMatrix flags = data.values.array().isNaN().cast<std::uint8_t>();
  for (Index j = 0; j < flags.cols(); ++j) {
    if (flags.rows() > 0 && flags.col(j).cast<Index>().sum() == flags.rows()) {
      throw DataError("column " + std::to_string(j) + " has no observed value");
    }
  }
  return MissingMask(std::move(flags));
}

StandardizationParams fit_standardization(const Dataset& data) {
  const Index d = data.n_cols();
  StandardizationParams p{Vector::Zero(d), Vector::Ones(d)};
  for (Index j = 0; j < d; ++j) {
    double sum = 0.0;
    Index count = 0;
    for (Index i = 0; i < data.n_rows(); ++i) {
      const double v = data.values(i, j);
      if (!std::isnan(v)) {
        sum += v;
        ++count;
      }
    }
    if (count == 0) throw DataError("column " + std::to_string(j) + " has no observed value");
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (Index i = 0; i < data.n_rows(); ++i) {
      const double v = data.values(i, j);
      if (!std::isnan(v)) ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(count));
    p.means(j) = mean;
    p.stds(j) = sd < 1e-12 ? 1.0 : sd;
  }
  return p;
}

Dataset apply_standardization(const Dataset& data, const StandardizationParams& params) {
  if (params.means.size() != data.n_cols() || params.stds.size() != data.n_cols()) {
    throw DataError("standardization parameters do not match column count");
  }
  Matrix out = (data.values.rowwise() - params.means.transpose()).array().rowwise() /
               params.stds.transpose().array();
  return Dataset(std::move(out), data.col_names);
}

std::pair<Dataset, StandardizationParams> standardize(const Dataset& data) {
  StandardizationParams params = fit_standardization(data);
  Dataset out = apply_standardization(data, params);
  return {std::move(out), std::move(params)};
}

Dataset destandardize(const Dataset& data, const StandardizationParams& params) {
  if (params.means.size() != data.n_cols() || params.stds.size() != data.n_cols()) {
    throw DataError("standardization parameters do not match column count");
  }
  Matrix out = (data.values.array().rowwise() * params.stds.transpose().array()).matrix().rowwise() +
               params.means.transpose();
  return Dataset(std::move(out), data.col_names);
}

Dataset noisy_mean_init(const Dataset& data, const MissingMask& mask, Rng& rng) {
  if (mask.rows() != data.n_rows() || mask.cols() != data.n_cols()) {
    throw DataError("mask shape does not match data");
  }
  std::normal_distribution<double> noise(0.0, 0.1);
  Dataset out = data;
  for (Index j = 0; j < data.n_cols(); ++j) {
    double sum = 0.0;
    Index count = 0;
    for (Index i = 0; i < data.n_rows(); ++i) {
      if (!mask.missing(i, j)) {
        sum += data.values(i, j);
        ++count;
      }
    }
    const double mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
    for (Index i = 0; i < data.n_rows(); ++i) {
      if (mask.missing(i, j)) out.values(i, j) = mean + noise(rng);
    }
  }
  return out;
}

MissingMask load_mask_csv(const std::filesystem::path& path) {
  const Dataset raw = load_csv(path, false);
  FlagMatrix flags(raw.n_rows(), raw.n_cols());
  for (Index i = 0; i < raw.n_rows(); ++i) {
    for (Index j = 0; j < raw.n_cols(); ++j) {
      const double v = raw.values(i, j);
      if (v != 0.0 && v != 1.0) throw DataError("mask cells must be 0 or 1");
      flags(i, j) = static_cast<std::uint8_t>(v);
    }
  }
  return MissingMask(std::move(flags));
}

void write_mask_csv(const MissingMask& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (Index i = 0; i < mask.rows(); ++i) {
    for (Index j = 0; j < mask.cols(); ++j) {
      if (j) out << ',';
      out << (mask.missing(i, j) ? '1' : '0');
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace tdm
