#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>

#include "coind/numkit/error.hpp"
#include "coind/numkit/matrix.hpp"
#include "coind/numkit/rng.hpp"

namespace coind {

struct LangevinConfig {
  std::size_t steps = 2000;
  double step_size = 1e-3;
  /// Abort once any chain leaves the ball of this radius.
  double divergence_bound = 1e6;
  /// false drops the sqrt(eta) noise term (deterministic gradient ascent).
  bool inject_noise = true;
};

/// x <- x + (eta/2) score(x) + sqrt(eta) eps, applied to every row (chain) of
/// `x_init`. `score_fn` maps a chains-by-dim matrix to scores of the same shape.
template <typename ScoreFn>
Matrix langevin_sample(ScoreFn&& score_fn, const LangevinConfig& config, Matrix x_init, Rng& rng) {
  if (!(config.step_size > 0.0)) throw ConfigError("langevin_sample: step size must be positive");
  const double half = 0.5 * config.step_size;
  const double noise = std::sqrt(config.step_size);
  const double bound_sq = config.divergence_bound * config.divergence_bound;
  Matrix x = std::move(x_init);
  for (std::size_t step = 0; step < config.steps; ++step) {
    const Matrix s = score_fn(static_cast<const Matrix&>(x));
    require_same_shape(s, x, "langevin_sample score");
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto row = x.row(r);
      const auto sr = s.row(r);
      for (std::size_t k = 0; k < row.size(); ++k) {
        row[k] += half * sr[k];
        if (config.inject_noise) row[k] += noise * rng.normal();
      }
      const double sq = squared_norm(row);
      if (!(sq <= bound_sq)) {
        std::ostringstream os;
        os << "langevin_sample: chain " << r << " diverged at step " << step + 1 << " (|x| = " << std::sqrt(sq)
           << ")";
        throw NumericError(os.str());
      }
    }
  }
  return x;
}

}  // namespace coind
