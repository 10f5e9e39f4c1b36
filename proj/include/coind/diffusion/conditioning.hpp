#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "coind/numkit/error.hpp"
#include "coind/numkit/rng.hpp"
#include "coind/world/attribute_space.hpp"

namespace coind {

/// One-hot block per attribute, each with a trailing slot for the null token.
class ConditionEncoding {
 public:
  ConditionEncoding() = default;
  explicit ConditionEncoding(std::vector<std::size_t> value_counts) : counts_(std::move(value_counts)) {
    for (std::size_t c : counts_) {
      if (c == 0) throw ConfigError("ConditionEncoding: attribute with no values");
    }
  }

  [[nodiscard]] std::size_t arity() const noexcept { return counts_.size(); }
  [[nodiscard]] std::size_t width() const noexcept {
    return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}) + counts_.size();
  }
  [[nodiscard]] const std::vector<std::size_t>& value_counts() const noexcept { return counts_; }

  /// Writes the encoding into `out` (length width()).
  void encode(const ConditionVector& cond, std::span<double> out) const {
    if (cond.arity() != counts_.size()) throw ShapeError("ConditionEncoding: condition arity mismatch");
    if (out.size() != width()) throw ShapeError("ConditionEncoding: output width mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    std::size_t base = 0;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      const int v = cond.value(i);
      if (v != ConditionVector::kNull && (v < 0 || static_cast<std::size_t>(v) >= counts_[i])) {
        throw ConfigError("ConditionEncoding: value " + std::to_string(v) + " out of range for attribute " +
                          std::to_string(i));
      }
      out[base + (v == ConditionVector::kNull ? counts_[i] : static_cast<std::size_t>(v))] = 1.0;
      base += counts_[i] + 1;
    }
  }

  [[nodiscard]] std::vector<double> encode(const ConditionVector& cond) const {
    std::vector<double> out(width());
    encode(cond, out);
    return out;
  }

 private:
  std::vector<std::size_t> counts_;
};

/// Each slot independently replaced by the null token with probability p_uncond.
inline ConditionVector mask_conditions(const ConditionVector& cond, double p_uncond, Rng& rng) {
  if (!(p_uncond >= 0.0 && p_uncond < 1.0)) throw ConfigError("mask_conditions: p_uncond must be in [0,1)");
  ConditionVector out = cond;
  for (std::size_t i = 0; i < cond.arity(); ++i) {
    if (rng.bernoulli(p_uncond)) out.clear(i);
  }
  return out;
}

/// [tau, sin(w_k tau), cos(w_k tau)] for k < width/2, with tau in [0,1] and
/// frequencies spaced geometrically from 1 to 64.
inline void time_embedding(double tau, std::size_t width, std::span<double> out) {
  if (width % 2 != 0) throw ConfigError("time_embedding: width must be even");
  if (out.size() != width + 1) throw ShapeError("time_embedding: output width mismatch");
  out[0] = tau;
  const std::size_t half = width / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double w = half > 1 ? std::pow(64.0, static_cast<double>(k) / static_cast<double>(half - 1)) : 1.0;
    out[1 + k] = std::sin(w * tau);
    out[1 + half + k] = std::cos(w * tau);
  }
}

}  // namespace coind
