#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "coind/diffusion/schedule.hpp"
#include "coind/diffusion/score_net.hpp"
#include "coind/numkit/matrix.hpp"
#include "coind/numkit/rng.hpp"
#include "coind/world/attribute_space.hpp"

namespace coind {

enum class GuidanceMode {
  kJoint,        ///< eps(x | full tuple), optionally with classifier-free guidance scale gamma
  kComposition,  ///< AND-composition of the per-attribute marginals
};

/// What a sampler is asked to produce.
///
/// Composition with two attributes uses gamma*eps(c1) + eps(c2) - gamma*eps(null);
/// with n > 2 attributes gamma is ignored and sum_i eps(c_i) - (n-1) eps(null)
/// is used. Scores and eps differ by the same per-timestep factor, so mixing
/// is done directly on eps.
struct SamplingTarget {
  AttributeTuple tuple;
  GuidanceMode mode = GuidanceMode::kComposition;
  double gamma = 1.0;
};

/// Condition vectors and mixing weights realising `target`.
struct GuidanceTerms {
  std::vector<ConditionVector> conds;
  std::vector<double> weights;
};

inline GuidanceTerms guidance_terms(const SamplingTarget& target) {
  const std::size_t n = target.tuple.size();
  GuidanceTerms g;
  if (target.mode == GuidanceMode::kJoint) {
    g.conds.emplace_back(target.tuple);
    g.weights.push_back(target.gamma);
    if (target.gamma != 1.0) {
      g.conds.emplace_back(n);
      g.weights.push_back(1.0 - target.gamma);
    }
    return g;
  }
  if (n == 2) {
    g.conds = {ConditionVector::keep(target.tuple, {0}), ConditionVector::keep(target.tuple, {1}),
               ConditionVector(n)};
    g.weights = {target.gamma, 1.0, -target.gamma};
    return g;
  }
  for (std::size_t i = 0; i < n; ++i) {
    ConditionVector c(n);
    c.set(i, target.tuple[i]);
    g.conds.push_back(std::move(c));
    g.weights.push_back(1.0);
  }
  g.conds.emplace_back(n);
  g.weights.push_back(-static_cast<double>(n) + 1.0);
  return g;
}

/// Guided eps for every row of x_t at a common timestep (one batched model call).
template <EpsilonModel M>
Matrix guided_eps(const M& model, const Matrix& x_t, int t, const GuidanceTerms& terms) {
  const std::size_t b = x_t.rows();
  const std::size_t m = terms.conds.size();
  std::vector<Matrix> blocks(m, x_t);
  std::vector<int> ts(b * m, t);
  std::vector<ConditionVector> conds;
  conds.reserve(b * m);
  for (const auto& c : terms.conds) conds.insert(conds.end(), b, c);
  const Matrix pred = model.predict_eps(vstack(blocks), ts, conds);
  Matrix out(b, x_t.cols());
  for (std::size_t j = 0; j < m; ++j) {
    const double w = terms.weights[j];
    for (std::size_t r = 0; r < b; ++r) {
      for (std::size_t k = 0; k < x_t.cols(); ++k) out(r, k) += w * pred(j * b + r, k);
    }
  }
  return out;
}

/// Descending DDIM timesteps round(k T / n), k = n..1.
inline std::vector<int> ddim_timesteps(int total_steps, int num_steps) {
  if (num_steps < 1 || num_steps > total_steps) {
    throw ConfigError("ddim: num_steps must be in [1, " + std::to_string(total_steps) + "]");
  }
  std::vector<int> ts;
  for (int k = num_steps; k >= 1; --k) {
    ts.push_back(static_cast<int>(std::lround(static_cast<double>(k) * total_steps / num_steps)));
  }
  return ts;
}

/// Deterministic DDIM (eta = 0) from the given x_T down to t = 0.
template <EpsilonModel M>
Matrix ddim_sample(const M& model, const SamplingTarget& target, const NoiseSchedule& schedule, int num_steps,
                   Matrix x_init) {
  const auto ts = ddim_timesteps(schedule.steps(), num_steps);
  const GuidanceTerms terms = guidance_terms(target);
  Matrix x = std::move(x_init);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int t_next = i + 1 < ts.size() ? ts[i + 1] : 0;
    const double ab = schedule.alpha_bar(t);
    const double ab_next = schedule.alpha_bar(t_next);
    const Matrix eps = guided_eps(model, x, t, terms);
    const double sa = std::sqrt(ab);
    const double sb = std::sqrt(1.0 - ab);
    const double sa_next = std::sqrt(ab_next);
    const double sb_next = std::sqrt(1.0 - ab_next);
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double x0_hat = (x.flat()[k] - sb * eps.flat()[k]) / sa;
      x.flat()[k] = sa_next * x0_hat + sb_next * eps.flat()[k];
    }
  }
  require_finite(x, "ddim_sample output");
  return x;
}

/// `count` samples from x_T ~ N(0, I).
template <EpsilonModel M>
Matrix ddim_sample(const M& model, const SamplingTarget& target, const NoiseSchedule& schedule, int num_steps,
                   std::size_t count, std::size_t dim, Rng& rng) {
  return ddim_sample(model, target, schedule, num_steps, Matrix::standard_normal(count, dim, rng));
}

}  // namespace coind
