#pragma once

#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "coind/diffusion/conditioning.hpp"
#include "coind/diffusion/schedule.hpp"
#include "coind/diffusion/score_net.hpp"
#include "coind/numkit/adam.hpp"
#include "coind/training/losses.hpp"
#include "coind/world/dataset.hpp"

namespace coind {

struct CoIndLossBreakdown {
  double l_score = 0.0;
  double l_ci = 0.0;
  double lambda = 0.0;
  double total = 0.0;
  /// Attribute pair drawn for the first sample of the batch.
  std::size_t pair_j = 0;
  std::size_t pair_k = 1;
};

struct StepOptions {
  double lambda = 0.0;
  double p_uncond = 0.3;
  CiWeighting weighting = CiWeighting::kUnweighted;
  /// With lambda = 0 the CI term carries no gradient; still evaluate it for logging.
  bool measure_ci_when_unused = true;
};

namespace detail {

inline std::vector<ConditionVector> masked_conditions(std::span<const AttributeTuple> labels, double p_uncond,
                                                      Rng& rng) {
  std::vector<ConditionVector> out;
  out.reserve(labels.size());
  for (const auto& t : labels) out.push_back(mask_conditions(ConditionVector(t), p_uncond, rng));
  return out;
}

inline void apply_update(ScoreNet& model, AdamState& optimizer, const std::vector<double>& grads) {
  const DenseNet& net = model.net();
  optimizer.step(model.net().parameters(), grads, [&net](std::size_t i) { return net.describe_parameter(i); });
}

}  // namespace detail

/// One classifier-free-guidance step (score term only). Reference trainer for
/// the lambda = 0 case of coind_train_step.
inline double cfg_train_step(ScoreNet& model, AdamState& optimizer, const Matrix& x0,
                             std::span<const AttributeTuple> labels, double p_uncond, const NoiseSchedule& schedule,
                             const Rng& step_rng) {
  Rng mask_rng = step_rng.split(1);
  Rng score_rng = step_rng.split(2);
  const auto conds = detail::masked_conditions(labels, p_uncond, mask_rng);
  const LossWithGradients score = loss_score(model, x0, conds, schedule, score_rng);
  detail::apply_update(model, optimizer, score.param_grads);
  return score.value;
}

/// One update on L_score + lambda * L_CI.
///
/// L_score uses masked conditions; L_CI uses condition subsets of the
/// unmasked labels with its own (t, eps) draws. Both terms share one forward
/// and one backward pass over the stacked batch.
inline CoIndLossBreakdown coind_train_step(ScoreNet& model, AdamState& optimizer, const Matrix& x0,
                                           std::span<const AttributeTuple> labels, const StepOptions& options,
                                           const NoiseSchedule& schedule, const Rng& step_rng) {
  if (!(options.lambda >= 0.0)) throw ConfigError("coind_train_step: lambda must be >= 0");
  Rng mask_rng = step_rng.split(1);
  Rng score_rng = step_rng.split(2);
  Rng ci_rng = step_rng.split(3);
  const auto conds = detail::masked_conditions(labels, options.p_uncond, mask_rng);

  CoIndLossBreakdown out;
  out.lambda = options.lambda;

  if (options.lambda == 0.0) {
    const LossWithGradients score = loss_score(model, x0, conds, schedule, score_rng);
    out.l_score = score.value;
    if (options.measure_ci_when_unused && labels.front().size() >= 2) {
      const CiDraw ci = draw_ci(x0, labels, schedule, ci_rng, options.weighting);
      out.l_ci = ci_loss_from_predictions(model.predict_eps(ci.stacked_x, ci.stacked_t, ci.stacked_conds), ci.weights)
                     .value;
      out.pair_j = ci.pairs.front().first;
      out.pair_k = ci.pairs.front().second;
    }
    out.total = out.l_score;
    detail::apply_update(model, optimizer, score.param_grads);
    return out;
  }

  const NoisedDraw noise = draw_noised(x0, schedule, score_rng);
  const CiDraw ci = draw_ci(x0, labels, schedule, ci_rng, options.weighting);
  const std::size_t b = x0.rows();
  const Matrix inputs[2] = {model.build_input(noise.x_t, noise.t, conds),
                            model.build_input(ci.stacked_x, ci.stacked_t, ci.stacked_conds)};
  ForwardTape tape;
  const Matrix pred = model.net().forward(vstack(inputs), tape);
  const OutputLoss score = score_loss_from_predictions(slice_rows(pred, 0, b), noise.eps);
  const OutputLoss ind = ci_loss_from_predictions(slice_rows(pred, b, 4 * b), ci.weights);

  Matrix grad(pred.rows(), pred.cols());
  std::copy(score.output_grad.flat().begin(), score.output_grad.flat().end(), grad.flat().begin());
  const auto tail = grad.flat().subspan(score.output_grad.size());
  for (std::size_t k = 0; k < tail.size(); ++k) tail[k] = options.lambda * ind.output_grad.flat()[k];

  out.l_score = score.value;
  out.l_ci = ind.value;
  out.total = out.l_score + options.lambda * out.l_ci;
  out.pair_j = ci.pairs.front().first;
  out.pair_k = ci.pairs.front().second;
  detail::apply_update(model, optimizer, model.net().backward(tape, grad).params);
  return out;
}

struct TrainerConfig {
  double lambda = 0.0;
  double p_uncond = 0.3;
  std::size_t batch_size = 256;
  std::size_t steps = 20000;
  AdamConfig adam;
  std::uint64_t seed = 0;
  CiWeighting weighting = CiWeighting::kUnweighted;
  /// Log cadence in steps; the CI term of a lambda = 0 run is only measured on log steps.
  std::size_t log_every = 100;
};

struct TrainingLogRow {
  std::size_t step = 0;
  double l_score = 0.0;
  double l_ci = 0.0;
  double total = 0.0;
};

/// Minibatch loop over a fixed dataset (Algorithm-1 style, sampling with replacement).
class Trainer {
 public:
  Trainer(ScoreNet& model, const LabeledDataset& data, NoiseSchedule schedule, TrainerConfig config)
      : model_(model), data_(data), schedule_(std::move(schedule)), config_(config),
        optimizer_(config.adam, model.net().parameter_count()), root_(config.seed) {
    data_.validate();
    if (data_.size() == 0) throw ConfigError("Trainer: empty training set");
    if (config_.batch_size == 0) throw ConfigError("Trainer: batch size must be positive");
    if (config_.log_every == 0) throw ConfigError("Trainer: log_every must be positive");
  }

  /// Continue from a restored optimizer state.
  void restore_optimizer(AdamState state) { optimizer_ = std::move(state); }

  [[nodiscard]] const AdamState& optimizer() const noexcept { return optimizer_; }
  [[nodiscard]] std::size_t steps_done() const noexcept { return step_; }
  [[nodiscard]] const std::vector<TrainingLogRow>& log() const noexcept { return log_; }
  [[nodiscard]] const std::vector<double>& total_history() const noexcept { return totals_; }

  CoIndLossBreakdown step() {
    const Rng step_rng = root_.split(step_);
    Rng batch_rng = step_rng.split(0);
    std::vector<std::size_t> rows(config_.batch_size);
    for (auto& r : rows) r = static_cast<std::size_t>(batch_rng.below(data_.size()));
    const LabeledDataset batch = data_.subset(rows);

    ++step_;
    const bool log_step = step_ % config_.log_every == 0 || step_ == 1;
    StepOptions opts{config_.lambda, config_.p_uncond, config_.weighting, log_step};
    const CoIndLossBreakdown b = coind_train_step(model_, optimizer_, batch.x, batch.labels, opts, schedule_, step_rng);
    totals_.push_back(b.total);
    if (log_step) log_.push_back({step_, b.l_score, b.l_ci, b.total});
    return b;
  }

  /// Runs the remaining steps; writes `step,l_score,l_ci,total` rows to `csv` if given.
  void run(std::ostream* csv = nullptr) {
    if (csv != nullptr) {
      *csv << "step,l_score,l_ci,total\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
    }
    std::size_t written = log_.size();
    while (step_ < config_.steps) {
      step();
      if (csv != nullptr && log_.size() > written) {
        const auto& r = log_.back();
        *csv << r.step << "," << r.l_score << "," << r.l_ci << "," << r.total << "\n";
        written = log_.size();
      }
    }
  }

 private:
  ScoreNet& model_;
  const LabeledDataset& data_;
  NoiseSchedule schedule_;
  TrainerConfig config_;
  AdamState optimizer_;
  Rng root_;
  std::size_t step_ = 0;
  std::vector<TrainingLogRow> log_;
  std::vector<double> totals_;
};

struct LambdaSuggestion {
  double rule_of_thumb = 0.0;       ///< L_score * 4000
  std::optional<double> ratio;      ///< L_score / L_CI, when a pilot L_CI is known
};

/// Lambda heuristics from a short vanilla pilot run.
inline LambdaSuggestion suggest_lambda(double pilot_l_score, std::optional<double> pilot_l_ci = std::nullopt) {
  if (!(pilot_l_score > 0.0)) throw ConfigError("suggest_lambda: pilot L_score must be positive");
  LambdaSuggestion s;
  s.rule_of_thumb = pilot_l_score * 4000.0;
  if (pilot_l_ci) {
    if (!(*pilot_l_ci > 0.0)) throw ConfigError("suggest_lambda: pilot L_CI must be positive");
    s.ratio = pilot_l_score / *pilot_l_ci;
  }
  return s;
}

}  // namespace coind
