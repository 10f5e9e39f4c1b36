#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "coind/numkit/error.hpp"

namespace coind {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Decoupled (AdamW-style) decay; 0 gives plain Adam.
  double weight_decay = 0.0;

  bool operator==(const AdamConfig&) const = default;
};

/// First/second moment accumulators for one flat parameter vector.
class AdamState {
 public:
  AdamState() = default;
  AdamState(AdamConfig config, std::size_t parameter_count)
      : config_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}
  AdamState(AdamConfig config, std::vector<double> m, std::vector<double> v, std::uint64_t step)
      : config_(config), m_(std::move(m)), v_(std::move(v)), step_(step) {
    if (m_.size() != v_.size()) throw ShapeError("AdamState: moment sizes differ");
  }

  [[nodiscard]] const AdamConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::uint64_t step_count() const noexcept { return step_; }
  [[nodiscard]] const std::vector<double>& first_moment() const noexcept { return m_; }
  [[nodiscard]] const std::vector<double>& second_moment() const noexcept { return v_; }

  /// Applies one bias-corrected update in place.
  ///
  /// `describe` maps a flat index to a tensor name for the error message raised
  /// on a non-finite gradient; the parameters are left untouched in that case.
  void step(std::span<double> params, std::span<const double> grads,
            const std::function<std::string(std::size_t)>& describe = {}) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw ShapeError("AdamState::step: expected " + std::to_string(m_.size()) + " parameters");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!std::isfinite(grads[i])) {
        std::ostringstream os;
        os << "adam_step: non-finite gradient " << grads[i] << " in "
           << (describe ? describe(i) : "parameter " + std::to_string(i)) << " at step " << step_ + 1;
        throw NumericError(os.str());
      }
    }
    ++step_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    const double lr = config_.learning_rate;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i];
      m_[i] = b1 * m_[i] + (1.0 - b1) * g;
      v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
      const double m_hat = m_[i] / c1;
      const double v_hat = v_[i] / c2;
      if (config_.weight_decay != 0.0) params[i] -= lr * config_.weight_decay * params[i];
      params[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t step_ = 0;
};

}  // namespace coind
