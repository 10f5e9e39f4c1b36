#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "coind/numkit/error.hpp"
#include "coind/numkit/matrix.hpp"
#include "coind/numkit/rng.hpp"
#include "coind/world/attribute_space.hpp"

namespace coind {

/// Additive compositional generator: X = sum_i f_i(C_i) + sigma * N(0, I).
class GaussianWorld {
 public:
  /// `component_means[i][v]` is f_i(v), a vector of the data dimension.
  GaussianWorld(std::vector<std::vector<std::vector<double>>> component_means, double sigma)
      : means_(std::move(component_means)), sigma_(sigma) {
    if (!(sigma_ > 0.0)) throw ConfigError("GaussianWorld: sigma must be positive");
    if (means_.empty() || means_.front().empty()) throw ConfigError("GaussianWorld: no component means");
    dim_ = means_.front().front().size();
    if (dim_ == 0) throw ConfigError("GaussianWorld: zero data dimension");
    for (const auto& attr : means_) {
      if (attr.empty()) throw ConfigError("GaussianWorld: attribute without values");
      for (const auto& m : attr) {
        if (m.size() != dim_) throw ConfigError("GaussianWorld: inconsistent mean dimension");
      }
    }
  }

  /// f_1(-1,+1) = (-1,0),(+1,0); f_2(-1,+1) = (0,-1),(0,+1) in R^2.
  static GaussianWorld binary_2d(double sigma = 0.3) {
    return GaussianWorld({{{-1.0, 0.0}, {1.0, 0.0}}, {{0.0, -1.0}, {0.0, 1.0}}}, sigma);
  }

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] double sigma() const noexcept { return sigma_; }
  [[nodiscard]] std::size_t attribute_count() const noexcept { return means_.size(); }
  [[nodiscard]] const std::vector<std::vector<std::vector<double>>>& component_means() const noexcept {
    return means_;
  }

  /// sum_i f_i(t_i).
  [[nodiscard]] std::vector<double> mean_of(const AttributeTuple& t) const {
    if (t.size() != means_.size()) throw ShapeError("GaussianWorld::mean_of: tuple arity mismatch");
    std::vector<double> mu(dim_, 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto& f = means_[i].at(static_cast<std::size_t>(t[i]));
      for (std::size_t k = 0; k < dim_; ++k) mu[k] += f[k];
    }
    return mu;
  }

  /// Checks that the world and the attribute space describe the same attributes.
  void require_compatible(const AttributeSpace& space) const {
    if (space.attribute_count() != means_.size()) throw ConfigError("world/space attribute count mismatch");
    for (std::size_t i = 0; i < means_.size(); ++i) {
      if (space.value_count(i) != means_[i].size()) {
        throw ConfigError("world/space value count mismatch for attribute " + space.name(i));
      }
    }
  }

  /// `count` draws of the given tuple.
  [[nodiscard]] Matrix sample_tuple(const AttributeTuple& t, std::size_t count, Rng& rng) const {
    const auto mu = mean_of(t);
    Matrix x(count, dim_);
    for (std::size_t r = 0; r < count; ++r) {
      for (std::size_t k = 0; k < dim_; ++k) x(r, k) = mu[k] + sigma_ * rng.normal();
    }
    return x;
  }

 private:
  std::vector<std::vector<std::vector<double>>> means_;
  double sigma_;
  std::size_t dim_ = 0;
};

}  // namespace coind
