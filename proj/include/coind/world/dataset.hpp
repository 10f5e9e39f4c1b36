#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "coind/numkit/error.hpp"
#include "coind/numkit/matrix.hpp"
#include "coind/numkit/rng.hpp"
#include "coind/world/attribute_space.hpp"
#include "coind/world/gaussian_world.hpp"

namespace coind {

enum class Provenance { kRealTrain, kRealTest, kSynthetic };

inline std::string_view to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::kRealTrain: return "real-train";
    case Provenance::kRealTest: return "real-test";
    case Provenance::kSynthetic: return "synthetic";
  }
  return "unknown";
}

inline Provenance parse_provenance(std::string_view s) {
  if (s == "real-train") return Provenance::kRealTrain;
  if (s == "real-test") return Provenance::kRealTest;
  if (s == "synthetic") return Provenance::kSynthetic;
  throw FormatError("unknown provenance '" + std::string(s) + "'");
}

/// Observations with their full attribute tuples.
struct LabeledDataset {
  Matrix x;
  std::vector<AttributeTuple> labels;
  Provenance provenance = Provenance::kRealTrain;

  [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }

  void validate() const {
    if (x.rows() != labels.size()) throw ShapeError("LabeledDataset: row count != label count");
  }

  /// Rows at the given indices.
  [[nodiscard]] LabeledDataset subset(std::span<const std::size_t> rows) const {
    LabeledDataset out{Matrix(rows.size(), x.cols()), {}, provenance};
    out.labels.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto src = x.row(rows[r]);
      std::copy(src.begin(), src.end(), out.x.row(r).begin());
      out.labels.push_back(labels.at(rows[r]));
    }
    return out;
  }
};

/// Concatenates datasets with equal feature width; provenance of the first.
inline LabeledDataset concatenate(std::span<const LabeledDataset> parts) {
  if (parts.empty()) return {};
  std::vector<Matrix> xs;
  LabeledDataset out;
  out.provenance = parts.front().provenance;
  for (const auto& p : parts) {
    xs.push_back(p.x);
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  out.x = vstack(xs);
  return out;
}

/// m observations whose tuples are drawn uniformly from the training support.
inline LabeledDataset sample_dataset(const GaussianWorld& world, const AttributeSpace& space, std::size_t m, Rng& rng,
                                     Provenance provenance = Provenance::kRealTrain) {
  world.require_compatible(space);
  if (m == 0) throw ConfigError("sample_dataset: sample count must be positive");
  const auto& support = space.train_support();
  LabeledDataset out{Matrix(m, world.dim()), {}, provenance};
  out.labels.reserve(m);
  for (std::size_t r = 0; r < m; ++r) {
    const auto& t = support[rng.below(support.size())];
    const auto mu = world.mean_of(t);
    for (std::size_t k = 0; k < world.dim(); ++k) out.x(r, k) = mu[k] + world.sigma() * rng.normal();
    out.labels.push_back(t);
  }
  return out;
}

inline LabeledDataset sample_dataset(const GaussianWorld& world, const AttributeSpace& space, std::size_t m,
                                     std::uint64_t seed, Provenance provenance = Provenance::kRealTrain) {
  Rng rng(seed);
  return sample_dataset(world, space, m, rng, provenance);
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, std::size_t line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("line " + std::to_string(line_no) + ": cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

/// Header: x0..x{d-1}, one column per attribute name, provenance.
/// Values are written with max_digits10 so a write/read cycle is exact.
inline void write_dataset_csv(std::ostream& os, const LabeledDataset& ds, const AttributeSpace& space) {
  ds.validate();
  for (std::size_t k = 0; k < ds.x.cols(); ++k) os << "x" << k << ",";
  for (std::size_t i = 0; i < space.attribute_count(); ++i) os << space.name(i) << ",";
  os << "provenance\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (double v : ds.x.row(r)) os << v << ",";
    for (std::size_t i = 0; i < space.attribute_count(); ++i) os << space.label(i, ds.labels[r][i]) << ",";
    os << to_string(ds.provenance) << "\n";
  }
}

inline LabeledDataset read_dataset_csv(std::istream& is, const AttributeSpace& space) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("dataset CSV: missing header");
  const auto header = detail::split_csv_line(line);
  const std::size_t n = space.attribute_count();
  if (header.size() < n + 2 || header.back() != "provenance") throw FormatError("dataset CSV: malformed header");
  const std::size_t d = header.size() - n - 1;
  for (std::size_t k = 0; k < d; ++k) {
    if (header[k] != "x" + std::to_string(k)) throw FormatError("dataset CSV: expected column x" + std::to_string(k));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (header[d + i] != space.name(i)) throw FormatError("dataset CSV: expected attribute column " + space.name(i));
  }
  std::vector<double> values;
  LabeledDataset out;
  bool first = true;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError("dataset CSV line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " cells");
    }
    for (std::size_t k = 0; k < d; ++k) values.push_back(detail::parse_double(cells[k], line_no));
    AttributeTuple t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = space.code_of(i, std::string(cells[d + i]));
    out.labels.push_back(std::move(t));
    const auto prov = parse_provenance(cells.back());
    if (first) out.provenance = prov;
    else if (prov != out.provenance) throw FormatError("dataset CSV: mixed provenance");
    first = false;
  }
  out.x = Matrix(out.labels.size(), d, std::move(values));
  if (out.provenance == Provenance::kRealTrain) {
    for (const auto& t : out.labels) {
      if (!space.in_support(t)) throw FormatError("dataset CSV: real-train label outside the training support");
    }
  }
  return out;
}

}  // namespace coind
