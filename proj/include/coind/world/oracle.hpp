#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "coind/numkit/error.hpp"
#include "coind/numkit/matrix.hpp"
#include "coind/world/attribute_space.hpp"
#include "coind/world/gaussian_world.hpp"

namespace coind {

/// Score of sum_k w_k N(x; mu_k, variance I), evaluated with log-sum-exp so
/// that far-away points (all likelihoods underflowing) stay finite.
inline std::vector<double> mixture_score(std::span<const double> x, const std::vector<std::vector<double>>& means,
                                         std::span<const double> weights, double variance) {
  if (means.empty()) throw ConfigError("mixture_score: no components");
  if (!(variance > 0.0)) throw ConfigError("mixture_score: variance must be positive");
  if (weights.size() != means.size()) throw ShapeError("mixture_score: one weight per component required");
  const std::size_t d = x.size();
  std::vector<double> logits(means.size());
  for (std::size_t k = 0; k < means.size(); ++k) {
    if (means[k].size() != d) throw ShapeError("mixture_score: component dimension mismatch");
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += (x[j] - means[k][j]) * (x[j] - means[k][j]);
    logits[k] = std::log(weights[k]) - 0.5 * sq / variance;
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - top);
    z += l;
  }
  std::vector<double> score(d, 0.0);
  for (std::size_t k = 0; k < means.size(); ++k) {
    const double r = logits[k] / z;
    for (std::size_t j = 0; j < d; ++j) score[j] += r * (means[k][j] - x[j]) / variance;
  }
  return score;
}

/// Equal-weight mixture of isotropic Gaussians with standard deviation sigma.
inline std::vector<double> oracle_mixture_score(std::span<const double> x,
                                                const std::vector<std::vector<double>>& components, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("oracle_mixture_score: sigma must be positive");
  const std::vector<double> w(components.size(), 1.0 / static_cast<double>(components.size()));
  return mixture_score(x, components, w, sigma * sigma);
}

/// Exact score of the training-distribution conditional p_train(X_t | observed
/// slots of `cond`) at noise level alpha_bar, where X_t = sqrt(ab) X + sqrt(1-ab) eps.
///
/// Training tuples are equally frequent, so the conditional is an equal-weight
/// mixture over the support tuples consistent with `cond`. alpha_bar = 1 gives
/// the clean-data score.
inline std::vector<double> oracle_conditional_score(const GaussianWorld& world, const AttributeSpace& space,
                                                    const ConditionVector& cond, std::span<const double> x,
                                                    double alpha_bar = 1.0) {
  if (cond.arity() != space.attribute_count()) throw ShapeError("oracle_conditional_score: condition arity mismatch");
  if (x.size() != world.dim()) throw ShapeError("oracle_conditional_score: point dimension mismatch");
  if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) throw ConfigError("oracle_conditional_score: alpha_bar outside (0,1]");
  std::vector<std::vector<double>> means;
  const double scale = std::sqrt(alpha_bar);
  for (const auto& t : space.train_support()) {
    if (!cond.consistent_with(t)) continue;
    auto mu = world.mean_of(t);
    for (double& v : mu) v *= scale;
    means.push_back(std::move(mu));
  }
  if (means.empty()) throw SupportError("oracle_conditional_score: no training tuple is consistent with the condition");
  const double variance = world.sigma() * world.sigma() * alpha_bar + (1.0 - alpha_bar);
  const std::vector<double> w(means.size(), 1.0 / static_cast<double>(means.size()));
  return mixture_score(x, means, w, variance);
}

/// Score of the true (full-support) conditional.
inline std::vector<double> true_conditional_score(const GaussianWorld& world, const AttributeSpace& space,
                                                  const ConditionVector& cond, std::span<const double> x,
                                                  double alpha_bar = 1.0) {
  return oracle_conditional_score(world, space.with_full_support(), cond, x, alpha_bar);
}

}  // namespace coind
