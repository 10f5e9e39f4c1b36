#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "coind/numkit/error.hpp"
#include "coind/numkit/matrix.hpp"

namespace coind {

/// gamma * s(x|C1) + s(x|C2) - gamma * s(x). gamma = 1 is the plain AND score.
inline std::vector<double> composed_and_score(std::span<const double> s_c1, std::span<const double> s_c2,
                                              std::span<const double> s_null, double gamma = 1.0) {
  if (s_c1.size() != s_c2.size() || s_c1.size() != s_null.size()) {
    throw ShapeError("composed_and_score: score dimensions differ");
  }
  if (!(gamma > 0.0)) throw ConfigError("composed_and_score: gamma must be positive");
  std::vector<double> out(s_c1.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = gamma * s_c1[k] + s_c2[k] - gamma * s_null[k];
  return out;
}

/// sum_i s(x|C_i) - (n - 1) s(x) for n attribute marginals.
inline std::vector<double> composed_and_score(const std::vector<std::vector<double>>& marginals,
                                              std::span<const double> s_null) {
  if (marginals.empty()) throw ConfigError("composed_and_score: no marginals");
  std::vector<double> out(s_null.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    double sum = 0.0;
    for (const auto& m : marginals) {
      if (m.size() != s_null.size()) throw ShapeError("composed_and_score: score dimensions differ");
      sum += m[k];
    }
    out[k] = sum - static_cast<double>(marginals.size() - 1) * s_null[k];
  }
  return out;
}

/// (1 - gamma) s(x) + gamma s(x|C).
inline std::vector<double> cfg_score(std::span<const double> s_cond, std::span<const double> s_uncond, double gamma) {
  if (s_cond.size() != s_uncond.size()) throw ShapeError("cfg_score: score dimensions differ");
  std::vector<double> out(s_cond.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (1.0 - gamma) * s_uncond[k] + gamma * s_cond[k];
  return out;
}

}  // namespace coind
