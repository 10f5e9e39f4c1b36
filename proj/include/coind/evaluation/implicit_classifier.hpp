#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "coind/diffusion/schedule.hpp"
#include "coind/diffusion/score_net.hpp"
#include "coind/numkit/error.hpp"
#include "coind/numkit/matrix.hpp"
#include "coind/numkit/rng.hpp"
#include "coind/world/attribute_space.hpp"

namespace coind {

struct ImplicitClassifierConfig {
  std::size_t timestep_count = 5;
  int t_lo = 300;
  int t_hi = 600;
  std::size_t eps_draws = 8;

  void validate(int num_timesteps) const {
    if (timestep_count < 1 || eps_draws < 1) throw ConfigError("implicit classifier: draw counts must be >= 1");
    if (t_lo < 1 || !(t_lo < t_hi) || t_hi > num_timesteps) {
      throw ConfigError("implicit classifier: need 1 <= t_lo < t_hi <= " + std::to_string(num_timesteps));
    }
  }
  [[nodiscard]] std::size_t draws() const noexcept { return timestep_count * eps_draws; }
};

/// Per-row probabilities over the candidate value assignments of `attributes`.
/// candidates[c][k] is the value of attributes[k] in candidate c (lexicographic).
struct ProbabilityTable {
  std::vector<std::size_t> attributes;
  std::vector<std::vector<int>> candidates;
  Matrix probs;  ///< rows x candidates
};

/// Value assignments of `attributes`, last attribute fastest.
inline std::vector<std::vector<int>> candidate_values(const std::vector<std::size_t>& value_counts,
                                                      const std::vector<std::size_t>& attributes) {
  std::vector<std::vector<int>> out{{}};
  for (std::size_t a : attributes) {
    std::vector<std::vector<int>> next;
    for (const auto& prefix : out) {
      for (int v = 0; v < static_cast<int>(value_counts.at(a)); ++v) {
        auto c = prefix;
        c.push_back(v);
        next.push_back(std::move(c));
      }
    }
    out = std::move(next);
  }
  return out;
}

/// Numerically stable softmax of -errors, written into `out`.
inline void softmax_negated(std::span<const double> errors, std::span<double> out) {
  const double lo = *std::min_element(errors.begin(), errors.end());
  double z = 0.0;
  for (std::size_t c = 0; c < errors.size(); ++c) {
    out[c] = std::exp(-(errors[c] - lo));
    z += out[c];
  }
  for (double& p : out) p /= z;
}

/// Mean denoising error per row and condition, estimated with the same
/// (t, eps) draws for every condition. Result is rows x conds.size().
template <EpsilonModel M>
Matrix expected_denoising_error(const M& model, const Matrix& x, const std::vector<ConditionVector>& conds,
                                const NoiseSchedule& schedule, const ImplicitClassifierConfig& config, Rng& rng) {
  config.validate(schedule.steps());
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const std::size_t k = config.draws();
  const std::size_t c_count = conds.size();

  // Draws for row r and draw q live at r * k + q.
  std::vector<int> ts(n * k);
  Matrix noise(n * k, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t a = 0; a < config.timestep_count; ++a) {
      const int t = config.t_lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(config.t_hi - config.t_lo + 1)));
      for (std::size_t b = 0; b < config.eps_draws; ++b) ts[r * k + a * config.eps_draws + b] = t;
    }
  }
  for (double& e : noise.flat()) e = rng.normal();

  Matrix err(n, c_count);
  constexpr std::size_t kChunk = 256;
  for (std::size_t r0 = 0; r0 < n; r0 += kChunk) {
    const std::size_t m = std::min(kChunk, n - r0);
    Matrix noised(m * k, d);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t q = 0; q < k; ++q) {
        const std::size_t row = (r0 + r) * k + q;
        const double ab = schedule.alpha_bar(ts[row]);
        const double sa = std::sqrt(ab);
        const double sb = std::sqrt(1.0 - ab);
        for (std::size_t j = 0; j < d; ++j) noised(r * k + q, j) = sa * x(r0 + r, j) + sb * noise(row, j);
      }
    }
    std::vector<Matrix> blocks(c_count, noised);
    std::vector<int> all_t;
    std::vector<ConditionVector> all_c;
    all_t.reserve(m * k * c_count);
    all_c.reserve(m * k * c_count);
    for (const auto& c : conds) {
      all_t.insert(all_t.end(), ts.begin() + static_cast<std::ptrdiff_t>(r0 * k),
                   ts.begin() + static_cast<std::ptrdiff_t>((r0 + m) * k));
      all_c.insert(all_c.end(), m * k, c);
    }
    const Matrix pred = model.predict_eps(vstack(blocks), all_t, all_c);
    for (std::size_t c = 0; c < c_count; ++c) {
      for (std::size_t r = 0; r < m; ++r) {
        double sum = 0.0;
        for (std::size_t q = 0; q < k; ++q) {
          const auto p = pred.row(c * m * k + r * k + q);
          const auto e = noise.row((r0 + r) * k + q);
          for (std::size_t j = 0; j < d; ++j) sum += (e[j] - p[j]) * (e[j] - p[j]);
        }
        err(r0 + r, c) = sum / static_cast<double>(k);
      }
    }
  }
  return err;
}

/// Implicit posterior p(C_attributes | x) from a conditional noise predictor:
/// softmax over candidates of the negated expected denoising error. Slots not
/// in `attributes` are left null.
template <EpsilonModel M>
ProbabilityTable implicit_class_probs(const M& model, const Matrix& x, const std::vector<std::size_t>& value_counts,
                                      const std::vector<std::size_t>& attributes, const NoiseSchedule& schedule,
                                      const ImplicitClassifierConfig& config, Rng& rng) {
  if (attributes.empty()) throw ConfigError("implicit_class_probs: no attributes requested");
  for (std::size_t a : attributes) {
    if (a >= value_counts.size()) throw ConfigError("implicit_class_probs: attribute index out of range");
  }
  ProbabilityTable table{attributes, candidate_values(value_counts, attributes), {}};
  const std::size_t c_count = table.candidates.size();
  table.probs = Matrix(x.rows(), c_count, 1.0);
  if (c_count == 1) return table;

  std::vector<ConditionVector> conds;
  for (const auto& cand : table.candidates) {
    ConditionVector c(value_counts.size());
    for (std::size_t k = 0; k < attributes.size(); ++k) c.set(attributes[k], cand[k]);
    conds.push_back(std::move(c));
  }
  const Matrix err = expected_denoising_error(model, x, conds, schedule, config, rng);
  for (std::size_t r = 0; r < x.rows(); ++r) softmax_negated(err.row(r), table.probs.row(r));
  return table;
}

/// Joint table over attributes (i, j) and both marginal tables, all estimated
/// from one set of shared (t, eps) draws.
struct PairTables {
  Matrix joint;       ///< rows x (|C_i| * |C_j|), j fastest
  Matrix marginal_i;  ///< rows x |C_i|
  Matrix marginal_j;  ///< rows x |C_j|
};

template <EpsilonModel M>
PairTables implicit_pair_tables(const M& model, const Matrix& x, const std::vector<std::size_t>& value_counts,
                                std::size_t i, std::size_t j, const NoiseSchedule& schedule,
                                const ImplicitClassifierConfig& config, Rng& rng) {
  const std::size_t n = value_counts.size();
  if (i >= n || j >= n || i == j) throw ConfigError("implicit_pair_tables: need two distinct attribute indices");
  const std::size_t vi = value_counts[i];
  const std::size_t vj = value_counts[j];
  std::vector<ConditionVector> conds;
  for (std::size_t a = 0; a < vi; ++a) {
    for (std::size_t b = 0; b < vj; ++b) {
      ConditionVector c(n);
      c.set(i, static_cast<int>(a));
      c.set(j, static_cast<int>(b));
      conds.push_back(std::move(c));
    }
  }
  for (std::size_t a = 0; a < vi; ++a) {
    ConditionVector c(n);
    c.set(i, static_cast<int>(a));
    conds.push_back(std::move(c));
  }
  for (std::size_t b = 0; b < vj; ++b) {
    ConditionVector c(n);
    c.set(j, static_cast<int>(b));
    conds.push_back(std::move(c));
  }
  const Matrix err = expected_denoising_error(model, x, conds, schedule, config, rng);
  PairTables out{Matrix(x.rows(), vi * vj), Matrix(x.rows(), vi), Matrix(x.rows(), vj)};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto e = err.row(r);
    softmax_negated(e.subspan(0, vi * vj), out.joint.row(r));
    softmax_negated(e.subspan(vi * vj, vi), out.marginal_i.row(r));
    softmax_negated(e.subspan(vi * vj + vi, vj), out.marginal_j.row(r));
  }
  return out;
}

/// Jensen-Shannon divergence in nats; inputs must be pmfs of equal length.
inline double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw ShapeError("js_divergence: pmfs must have equal nonzero length");
  double js = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double m = 0.5 * (p[k] + q[k]);
    if (p[k] > 0.0) js += 0.5 * p[k] * std::log(p[k] / m);
    if (q[k] > 0.0) js += 0.5 * q[k] * std::log(q[k] / m);
  }
  return std::max(js, 0.0);
}

/// JS divergence between a joint table (j fastest) and the outer product of its marginals.
inline double pair_independence_gap(std::span<const double> joint, std::span<const double> mi,
                                     std::span<const double> mj) {
  if (joint.size() != mi.size() * mj.size()) throw ShapeError("pair_independence_gap: table sizes disagree");
  std::vector<double> product(joint.size());
  for (std::size_t a = 0; a < mi.size(); ++a) {
    for (std::size_t b = 0; b < mj.size(); ++b) product[a * mj.size() + b] = mi[a] * mj[b];
  }
  return js_divergence(joint, product);
}

/// Mean over `eval_x` of the JS gap between the implicit joint of attributes
/// (i, j) and the product of the implicit marginals. In [0, ln 2].
template <EpsilonModel M>
double jsd_violation(const M& model, const Matrix& eval_x, const std::vector<std::size_t>& value_counts,
                     const NoiseSchedule& schedule, const ImplicitClassifierConfig& config, Rng& rng,
                     std::size_t i = 0, std::size_t j = 1) {
  if (value_counts.size() < 2) throw ConfigError("jsd_violation: need at least two attributes");
  if (eval_x.rows() == 0) throw ConfigError("jsd_violation: empty evaluation set");
  const PairTables tables = implicit_pair_tables(model, eval_x, value_counts, i, j, schedule, config, rng);
  double sum = 0.0;
  for (std::size_t r = 0; r < eval_x.rows(); ++r) {
    sum += pair_independence_gap(tables.joint.row(r), tables.marginal_i.row(r), tables.marginal_j.row(r));
  }
  return sum / static_cast<double>(eval_x.rows());
}

}  // namespace coind
