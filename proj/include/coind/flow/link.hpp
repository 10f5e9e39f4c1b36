#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coind/numkit/error.hpp"
#include "coind/numkit/matrix.hpp"

namespace coind {

/// Time-dependent affine map between score and velocity for a Gaussian-source
/// path: s_t(x) = a(t) x + b(t) u_t(x).
struct AffineScoreVelocityLink {
  std::function<double(double)> a;
  std::function<double(double)> b;

  /// Path x_t = alpha(t) x1 + sigma(t) x0 with x0 ~ N(0, I), given alpha, sigma and
  /// their derivatives: s = (alpha u - alpha' x) / (sigma (alpha' sigma - alpha sigma')).
  static AffineScoreVelocityLink from_path(std::function<double(double)> alpha, std::function<double(double)> sigma,
                                           std::function<double(double)> d_alpha,
                                           std::function<double(double)> d_sigma) {
    auto denom = [=](double t) { return sigma(t) * (d_alpha(t) * sigma(t) - alpha(t) * d_sigma(t)); };
    return {[=](double t) { return -d_alpha(t) / denom(t); }, [=](double t) { return alpha(t) / denom(t); }};
  }

  /// alpha(t) = t, sigma(t) = 1 - t: a = -1/(1-t), b = t/(1-t).
  static AffineScoreVelocityLink linear() {
    return {[](double t) { return -1.0 / (1.0 - t); }, [](double t) { return t / (1.0 - t); }};
  }

  [[nodiscard]] double a_at(double t) const { return checked(a, t, "a"); }
  [[nodiscard]] double b_at(double t) const {
    const double v = checked(b, t, "b");
    if (v == 0.0) throw NumericError("AffineScoreVelocityLink: b(t) = 0 at t = " + std::to_string(t));
    return v;
  }

 private:
  static double checked(const std::function<double(double)>& f, double t, const char* name) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("AffineScoreVelocityLink: t must lie in (0, 1)");
    const double v = f(t);
    if (!std::isfinite(v)) throw NumericError(std::string("AffineScoreVelocityLink: non-finite ") + name + "(t)");
    return v;
  }
};

inline std::vector<double> score_from_velocity(std::span<const double> u, std::span<const double> x,
                                               const AffineScoreVelocityLink& link, double t) {
  if (u.size() != x.size()) throw ShapeError("score_from_velocity: u and x differ in size");
  const double a = link.a_at(t);
  const double b = link.b_at(t);
  std::vector<double> s(x.size());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = a * x[k] + b * u[k];
  return s;
}

inline std::vector<double> velocity_from_score(std::span<const double> s, std::span<const double> x,
                                               const AffineScoreVelocityLink& link, double t) {
  if (s.size() != x.size()) throw ShapeError("velocity_from_score: s and x differ in size");
  const double a = link.a_at(t);
  const double b = link.b_at(t);
  std::vector<double> u(x.size());
  for (std::size_t k = 0; k < u.size(); ++k) u[k] = (s[k] - a * x[k]) / b;
  return u;
}

}  // namespace coind
