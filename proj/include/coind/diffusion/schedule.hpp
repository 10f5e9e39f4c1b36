#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "coind/numkit/error.hpp"
#include "coind/numkit/matrix.hpp"

namespace coind {

/// Cumulative signal coefficients alpha_bar_0..alpha_bar_T with alpha_bar_0 = 1.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  explicit NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
    if (alpha_bar_.size() < 2) throw ConfigError("NoiseSchedule: need at least one noising step");
    if (alpha_bar_.front() != 1.0) throw ConfigError("NoiseSchedule: alpha_bar_0 must be 1");
    for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
      if (!(alpha_bar_[t] > 0.0 && alpha_bar_[t] < alpha_bar_[t - 1])) {
        throw ConfigError("NoiseSchedule: alpha_bar must be strictly decreasing in (0,1] (violated at t=" +
                          std::to_string(t) + ")");
      }
    }
  }

  [[nodiscard]] int steps() const noexcept { return static_cast<int>(alpha_bar_.size()) - 1; }

  [[nodiscard]] double alpha_bar(int t) const {
    if (t < 0 || t > steps()) throw ConfigError("NoiseSchedule: timestep " + std::to_string(t) + " out of range");
    return alpha_bar_[static_cast<std::size_t>(t)];
  }

  [[nodiscard]] const std::vector<double>& values() const noexcept { return alpha_bar_; }

  /// Throws unless 1 <= t <= T.
  void require_noising_step(int t) const {
    if (t < 1 || t > steps()) {
      throw ConfigError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
    }
  }

 private:
  std::vector<double> alpha_bar_;
};

struct CosineScheduleParams {
  double offset = 0.008;
  double floor = 1e-5;
};

/// Cosine schedule g(t) = cos^2(((t/T + s)/(1+s)) pi/2) / cos^2((s/(1+s)) pi/2).
/// alpha_bar = floor + (1 - floor) g(t), so alpha_bar_0 = 1 and alpha_bar_T = floor.
inline NoiseSchedule cosine_alpha_bar(int steps, CosineScheduleParams params = {}) {
  if (steps < 1) throw ConfigError("cosine_alpha_bar: T must be >= 1");
  if (!(params.floor > 0.0 && params.floor < 1.0)) throw ConfigError("cosine_alpha_bar: floor must be in (0,1)");
  const double s = params.offset;
  const auto f = [&](double frac) {
    const double c = std::cos((frac + s) / (1.0 + s) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = f(0.0);
  std::vector<double> ab(static_cast<std::size_t>(steps) + 1);
  for (int t = 0; t <= steps; ++t) {
    const double g = t == steps ? 0.0 : f(static_cast<double>(t) / steps) / f0;
    ab[static_cast<std::size_t>(t)] = t == 0 ? 1.0 : params.floor + (1.0 - params.floor) * g;
  }
  return NoiseSchedule(std::move(ab));
}

/// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.
inline std::vector<double> add_noise(std::span<const double> x0, int t, std::span<const double> eps,
                                     const NoiseSchedule& schedule) {
  schedule.require_noising_step(t);
  if (x0.size() != eps.size()) throw ShapeError("add_noise: x0 and eps differ in dimension");
  const double ab = schedule.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  std::vector<double> out(x0.size());
  for (std::size_t k = 0; k < x0.size(); ++k) out[k] = a * x0[k] + b * eps[k];
  return out;
}

/// Row-wise add_noise with a timestep per row.
inline Matrix add_noise(const Matrix& x0, std::span<const int> t, const Matrix& eps, const NoiseSchedule& schedule) {
  require_same_shape(x0, eps, "add_noise");
  if (t.size() != x0.rows()) throw ShapeError("add_noise: one timestep per row required");
  Matrix out(x0.rows(), x0.cols());
  for (std::size_t r = 0; r < x0.rows(); ++r) {
    schedule.require_noising_step(t[r]);
    const double ab = schedule.alpha_bar(t[r]);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    for (std::size_t k = 0; k < x0.cols(); ++k) out(r, k) = a * x0(r, k) + b * eps(r, k);
  }
  return out;
}

/// s = -eps / sqrt(1 - ab_t).
inline std::vector<double> eps_to_score(std::span<const double> eps, int t, const NoiseSchedule& schedule) {
  schedule.require_noising_step(t);
  const double ab = schedule.alpha_bar(t);
  if (ab >= 1.0) throw NumericError("eps_to_score: score undefined at zero noise (alpha_bar = 1)");
  const double scale = -1.0 / std::sqrt(1.0 - ab);
  std::vector<double> out(eps.begin(), eps.end());
  for (double& v : out) v *= scale;
  return out;
}

/// eps = -sqrt(1 - ab_t) s.
inline std::vector<double> score_to_eps(std::span<const double> score, int t, const NoiseSchedule& schedule) {
  schedule.require_noising_step(t);
  const double scale = -std::sqrt(1.0 - schedule.alpha_bar(t));
  std::vector<double> out(score.begin(), score.end());
  for (double& v : out) v *= scale;
  return out;
}

}  // namespace coind
