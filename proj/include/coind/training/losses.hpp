#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "coind/diffusion/schedule.hpp"
#include "coind/diffusion/score_net.hpp"
#include "coind/numkit/matrix.hpp"
#include "coind/numkit/rng.hpp"
#include "coind/world/attribute_space.hpp"

namespace coind {

/// How each sample's CI residual is weighted.
enum class CiWeighting {
  kUnweighted,    ///< plain eps-space residual
  kInverseNoise,  ///< residual / (1 - alpha_bar_t), i.e. score-space
};

/// Noised points with their timesteps and the noise that produced them.
struct NoisedDraw {
  Matrix x_t;
  std::vector<int> t;
  Matrix eps;
};

/// Per-row t ~ U{1..T}, eps ~ N(0, I), x_t = sqrt(ab) x0 + sqrt(1-ab) eps.
inline NoisedDraw draw_noised(const Matrix& x0, const NoiseSchedule& schedule, Rng& rng) {
  NoisedDraw d;
  d.t.resize(x0.rows());
  for (int& t : d.t) t = static_cast<int>(rng.between(1, schedule.steps()));
  d.eps = Matrix::standard_normal(x0.rows(), x0.cols(), rng);
  d.x_t = add_noise(x0, d.t, d.eps, schedule);
  return d;
}

/// Loss value plus its gradient w.r.t. the model predictions.
struct OutputLoss {
  double value = 0.0;
  Matrix output_grad;
};

/// mean_b ||eps_b - pred_b||^2 (summed over dimensions, averaged over rows).
inline OutputLoss score_loss_from_predictions(const Matrix& pred, const Matrix& eps) {
  require_same_shape(pred, eps, "score loss");
  if (pred.rows() == 0) throw ShapeError("score loss: empty batch");
  const double inv_b = 1.0 / static_cast<double>(pred.rows());
  OutputLoss out{0.0, Matrix(pred.rows(), pred.cols())};
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double diff = pred.flat()[k] - eps.flat()[k];
    out.value += diff * diff;
    out.output_grad.flat()[k] = 2.0 * diff * inv_b;
  }
  out.value *= inv_b;
  return out;
}

/// eps_ij - eps_i - eps_j + eps_null: zero iff the pair is conditionally independent.
inline std::vector<double> ci_residual_pairwise(std::span<const double> joint_ij, std::span<const double> marginal_i,
                                                std::span<const double> marginal_j,
                                                std::span<const double> unconditional) {
  std::vector<double> r(joint_ij.size());
  for (std::size_t k = 0; k < r.size(); ++k) {
    r[k] = joint_ij[k] - marginal_i[k] - marginal_j[k] + unconditional[k];
  }
  return r;
}

/// joint - uncond - sum_i (marginal_i - uncond), the mutual-independence residual.
inline std::vector<double> ci_residual_mutual(std::span<const double> joint,
                                              const std::vector<std::vector<double>>& marginals,
                                              std::span<const double> unconditional) {
  std::vector<double> r(joint.size());
  for (std::size_t k = 0; k < r.size(); ++k) {
    double sum = 0.0;
    for (const auto& m : marginals) sum += m[k] - unconditional[k];
    r[k] = joint[k] - unconditional[k] - sum;
  }
  return r;
}

/// Inputs for one pairwise-CI evaluation: a shared noised point per sample and
/// four condition vectors built from the unmasked label.
///
/// Stacked row layout (B = batch size): [c^i | c^j | c^{i,j} | c^null], each
/// block B rows, all blocks sharing x_t and t.
struct CiDraw {
  NoisedDraw noise;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  Matrix stacked_x;
  std::vector<int> stacked_t;
  std::vector<ConditionVector> stacked_conds;
  std::vector<double> weights;

  [[nodiscard]] std::size_t batch_size() const noexcept { return pairs.size(); }
};

inline CiDraw draw_ci(const Matrix& x0, std::span<const AttributeTuple> labels, const NoiseSchedule& schedule,
                      Rng& rng, CiWeighting weighting = CiWeighting::kUnweighted) {
  if (labels.size() != x0.rows()) throw ShapeError("draw_ci: one label per row required");
  if (labels.empty()) throw ShapeError("draw_ci: empty batch");
  const std::size_t n = labels.front().size();
  if (n < 2) throw ConfigError("pairwise CI loss needs at least two attributes");
  const std::size_t b = labels.size();
  CiDraw d;
  d.pairs.reserve(b);
  for (std::size_t r = 0; r < b; ++r) {
    const auto i = static_cast<std::size_t>(rng.below(n));
    auto j = static_cast<std::size_t>(rng.below(n - 1));
    if (j >= i) ++j;
    d.pairs.emplace_back(i, j);
  }
  d.noise = draw_noised(x0, schedule, rng);
  const Matrix blocks[4] = {d.noise.x_t, d.noise.x_t, d.noise.x_t, d.noise.x_t};
  d.stacked_x = vstack(blocks);
  d.stacked_t.reserve(4 * b);
  for (int k = 0; k < 4; ++k) d.stacked_t.insert(d.stacked_t.end(), d.noise.t.begin(), d.noise.t.end());
  d.stacked_conds.resize(4 * b);
  for (std::size_t r = 0; r < b; ++r) {
    const auto [i, j] = d.pairs[r];
    d.stacked_conds[r] = ConditionVector::keep(labels[r], {i});
    d.stacked_conds[b + r] = ConditionVector::keep(labels[r], {j});
    d.stacked_conds[2 * b + r] = ConditionVector::keep(labels[r], {i, j});
    d.stacked_conds[3 * b + r] = ConditionVector(n);
  }
  d.weights.assign(b, 1.0);
  if (weighting == CiWeighting::kInverseNoise) {
    for (std::size_t r = 0; r < b; ++r) d.weights[r] = 1.0 / (1.0 - schedule.alpha_bar(d.noise.t[r]));
  }
  return d;
}

/// mean_b w_b ||eps_i + eps_j - eps_ij - eps_null||^2 on stacked predictions.
inline OutputLoss ci_loss_from_predictions(const Matrix& stacked_pred, std::span<const double> weights) {
  const std::size_t b = weights.size();
  if (b == 0 || stacked_pred.rows() != 4 * b) throw ShapeError("CI loss: expected 4 x batch stacked predictions");
  const std::size_t d = stacked_pred.cols();
  const double inv_b = 1.0 / static_cast<double>(b);
  OutputLoss out{0.0, Matrix(4 * b, d)};
  for (std::size_t r = 0; r < b; ++r) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double res = stacked_pred(r, k) + stacked_pred(b + r, k) - stacked_pred(2 * b + r, k) -
                         stacked_pred(3 * b + r, k);
      sq += res * res;
      const double g = 2.0 * weights[r] * res * inv_b;
      out.output_grad(r, k) = g;
      out.output_grad(b + r, k) = g;
      out.output_grad(2 * b + r, k) = -g;
      out.output_grad(3 * b + r, k) = -g;
    }
    out.value += weights[r] * sq;
  }
  out.value *= inv_b;
  return out;
}

/// Loss value with gradients w.r.t. every network parameter.
struct LossWithGradients {
  double value = 0.0;
  std::vector<double> param_grads;
};

/// Denoising loss of `model` on (x0, already-masked conditions).
template <EpsilonModel M>
double loss_score_value(const M& model, const Matrix& x0, std::span<const ConditionVector> conds,
                        const NoiseSchedule& schedule, Rng& rng) {
  if (x0.rows() == 0) throw ShapeError("loss_score: empty batch");
  const NoisedDraw d = draw_noised(x0, schedule, rng);
  return score_loss_from_predictions(model.predict_eps(d.x_t, d.t, conds), d.eps).value;
}

inline LossWithGradients loss_score(const ScoreNet& model, const Matrix& x0, std::span<const ConditionVector> conds,
                                    const NoiseSchedule& schedule, Rng& rng) {
  if (x0.rows() == 0) throw ShapeError("loss_score: empty batch");
  const NoisedDraw d = draw_noised(x0, schedule, rng);
  ForwardTape tape;
  const Matrix pred = model.net().forward(model.build_input(d.x_t, d.t, conds), tape);
  const OutputLoss l = score_loss_from_predictions(pred, d.eps);
  return {l.value, model.net().backward(tape, l.output_grad).params};
}

/// Pairwise conditional-independence penalty on the unmasked labels.
template <EpsilonModel M>
double loss_ci_pairwise_value(const M& model, const Matrix& x0, std::span<const AttributeTuple> labels,
                              const NoiseSchedule& schedule, Rng& rng,
                              CiWeighting weighting = CiWeighting::kUnweighted) {
  const CiDraw d = draw_ci(x0, labels, schedule, rng, weighting);
  return ci_loss_from_predictions(model.predict_eps(d.stacked_x, d.stacked_t, d.stacked_conds), d.weights).value;
}

/// Same draws as loss_ci_pairwise_value; gradients flow through all four branches.
inline LossWithGradients loss_ci_pairwise(const ScoreNet& model, const Matrix& x0,
                                          std::span<const AttributeTuple> labels, const NoiseSchedule& schedule,
                                          Rng& rng, CiWeighting weighting = CiWeighting::kUnweighted) {
  const CiDraw d = draw_ci(x0, labels, schedule, rng, weighting);
  ForwardTape tape;
  const Matrix pred = model.net().forward(model.build_input(d.stacked_x, d.stacked_t, d.stacked_conds), tape);
  const OutputLoss l = ci_loss_from_predictions(pred, d.weights);
  return {l.value, model.net().backward(tape, l.output_grad).params};
}

}  // namespace coind
