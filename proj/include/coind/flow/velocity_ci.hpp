#pragma once

#include <concepts>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "coind/diffusion/score_net.hpp"
#include "coind/numkit/error.hpp"
#include "coind/numkit/matrix.hpp"
#include "coind/numkit/rng.hpp"
#include "coind/training/losses.hpp"
#include "coind/world/attribute_space.hpp"

namespace coind {

/// Anything that predicts a velocity for rows at continuous times in [0, 1].
template <typename M>
concept VelocityModel = requires(const M& m, const Matrix& x, std::span<const double> t,
                                 std::span<const ConditionVector> c) {
  { m.predict(x, t, c) } -> std::convertible_to<Matrix>;
};

/// Points on the linear path x_t = t x1 + (1 - t) x0 with their stacked CI inputs.
struct VelocityCiDraw {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> t;
  Matrix x_t;
  Matrix stacked_x;
  std::vector<double> stacked_t;
  std::vector<ConditionVector> stacked_conds;
};

inline VelocityCiDraw draw_velocity_ci(const Matrix& x1, std::span<const AttributeTuple> labels, Rng& rng) {
  if (labels.size() != x1.rows()) throw ShapeError("velocity_ci_loss: one label per row required");
  if (labels.empty()) throw ShapeError("velocity_ci_loss: empty batch");
  const std::size_t n = labels.front().size();
  if (n < 2) throw ConfigError("velocity_ci_loss: needs at least two attributes");
  const std::size_t b = labels.size();
  VelocityCiDraw d;
  for (std::size_t r = 0; r < b; ++r) {
    const auto i = static_cast<std::size_t>(rng.below(n));
    auto j = static_cast<std::size_t>(rng.below(n - 1));
    if (j >= i) ++j;
    d.pairs.emplace_back(i, j);
  }
  d.t.resize(b);
  for (double& t : d.t) t = rng.uniform();
  d.x_t = Matrix(b, x1.cols());
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t k = 0; k < x1.cols(); ++k) d.x_t(r, k) = d.t[r] * x1(r, k) + (1.0 - d.t[r]) * rng.normal();
  }
  const Matrix blocks[4] = {d.x_t, d.x_t, d.x_t, d.x_t};
  d.stacked_x = vstack(blocks);
  for (int k = 0; k < 4; ++k) d.stacked_t.insert(d.stacked_t.end(), d.t.begin(), d.t.end());
  d.stacked_conds.resize(4 * b);
  for (std::size_t r = 0; r < b; ++r) {
    const auto [i, j] = d.pairs[r];
    d.stacked_conds[r] = ConditionVector::keep(labels[r], {i});
    d.stacked_conds[b + r] = ConditionVector::keep(labels[r], {j});
    d.stacked_conds[2 * b + r] = ConditionVector::keep(labels[r], {i, j});
    d.stacked_conds[3 * b + r] = ConditionVector(n);
  }
  return d;
}

/// mean_b ||u(c^i) + u(c^j) - u(c^ij) - u(null)||^2 with t ~ U[0, 1], unweighted.
template <VelocityModel M>
double velocity_ci_loss_value(const M& model, const Matrix& x1, std::span<const AttributeTuple> labels, Rng& rng) {
  const VelocityCiDraw d = draw_velocity_ci(x1, labels, rng);
  const std::vector<double> w(labels.size(), 1.0);
  return ci_loss_from_predictions(model.predict(d.stacked_x, d.stacked_t, d.stacked_conds), w).value;
}

/// Same draws as velocity_ci_loss_value, with parameter gradients.
inline LossWithGradients velocity_ci_loss(const ConditionalNet& model, const Matrix& x1,
                                          std::span<const AttributeTuple> labels, Rng& rng) {
  const VelocityCiDraw d = draw_velocity_ci(x1, labels, rng);
  const std::vector<double> w(labels.size(), 1.0);
  ForwardTape tape;
  const Matrix pred = model.net().forward(model.build_input(d.stacked_x, d.stacked_t, d.stacked_conds), tape);
  const OutputLoss l = ci_loss_from_predictions(pred, w);
  return {l.value, model.net().backward(tape, l.output_grad).params};
}

}  // namespace coind
