#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "coind/diffusion/score_net.hpp"
#include "coind/experiment/artifacts.hpp"
#include "coind/flow/link.hpp"
#include "coind/flow/velocity_ci.hpp"
#include "coind/numkit/dense_net.hpp"
#include "coind/sampling/compose.hpp"
#include "coind/sampling/langevin.hpp"
#include "coind/training/losses.hpp"
#include "coind/world/oracle.hpp"

namespace coind {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// eps = f(x, t) + sum_i g_i(x, t, c_i), with g_i(null) = 0: satisfies every CI
/// constraint exactly.
struct FactorizedEpsModel {
  [[nodiscard]] Matrix predict_eps(const Matrix& x, std::span<const int> t, std::span<const ConditionVector> c) const {
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t k = 0; k < x.cols(); ++k) {
        double v = std::sin(x(r, k) + 0.001 * t[r]);
        for (std::size_t i = 0; i < c[r].arity(); ++i) {
          if (!c[r].is_null(i)) v += (c[r].value(i) + 1.0) * std::cos(x(r, k) * static_cast<double>(i + 1 + k));
        }
        out(r, k) = v;
      }
    }
    return out;
  }
};

/// Same as FactorizedEpsModel with a continuous time input, for the velocity loss.
struct FactorizedVelocityModel {
  [[nodiscard]] Matrix predict(const Matrix& x, std::span<const double> t, std::span<const ConditionVector> c) const {
    std::vector<int> ti(t.size());
    for (std::size_t r = 0; r < t.size(); ++r) ti[r] = static_cast<int>(std::lround(1000.0 * t[r]));
    return FactorizedEpsModel{}.predict_eps(x, ti, c);
  }
};

namespace detail {

inline double max_relative_gradient_error(const DenseNet& net_in, Rng& rng) {
  DenseNet net = net_in;
  const Matrix input = Matrix::standard_normal(3, net.input_size(), rng);
  const Matrix weights = Matrix::standard_normal(3, net.output_size(), rng);
  const auto loss = [&](const DenseNet& n) {
    const Matrix out = n.forward(input);
    double v = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) v += weights.flat()[k] * out.flat()[k];
    return v;
  };
  ForwardTape tape;
  (void)net.forward(input, tape);
  const auto grads = net.backward(tape, weights);
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t i = 0; i < net.parameter_count(); ++i) {
    const double keep = net.parameters()[i];
    net.parameters()[i] = keep + h;
    const double up = loss(net);
    net.parameters()[i] = keep - h;
    const double down = loss(net);
    net.parameters()[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(grads.params[i]), 1e-8});
    worst = std::max(worst, std::abs(fd - grads.params[i]) / denom);
  }
  return worst;
}

}  // namespace detail

/// Fast self-checks of the core identities; used by `coind check`.
inline std::vector<CheckResult> run_invariant_checks(const std::filesystem::path& scratch_dir) {
  std::vector<CheckResult> out;
  const auto add = [&](std::string name, bool pass, const std::string& d) { out.push_back({std::move(name), pass, d}); };
  const auto fmt = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };

  {
    const GaussianWorld world = GaussianWorld::binary_2d(0.3);
    const AttributeSpace space = AttributeSpace::binary_orthogonal_2();
    const std::vector<double> target{1.0, 1.0};
    double worst = 0.0;
    for (int iy = 0; iy < 50; ++iy) {
      for (int ix = 0; ix < 50; ++ix) {
        const std::vector<double> x{-2.5 + 5.0 * ix / 49.0, -2.5 + 5.0 * iy / 49.0};
        const auto s1 = oracle_conditional_score(world, space, ConditionVector(AttributeTuple{1, 0}), x);
        const auto s2 = oracle_conditional_score(world, space, ConditionVector(AttributeTuple{0, 1}), x);
        const auto s0 = oracle_conditional_score(world, space, ConditionVector(AttributeTuple{0, 0}), x);
        const auto s = composed_and_score(s1, s2, s0, 1.0);
        for (std::size_t k = 0; k < 2; ++k) {
          worst = std::max(worst, std::abs(s[k] - (target[k] - x[k]) / 0.09));
        }
      }
    }
    add("composing the seen joint scores gives the Gaussian at mu_{+1,-1} + mu_{-1,+1} - mu_{-1,-1}", worst < 1e-10,
        "max abs error " + fmt(worst));
  }
  {
    Rng rng(7);
    const Matrix x = Matrix::standard_normal(16, 2, rng);
    std::vector<AttributeTuple> labels(16);
    for (auto& l : labels) l = {static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2))};
    const NoiseSchedule sched = cosine_alpha_bar(1000);
    const double l = loss_ci_pairwise_value(FactorizedEpsModel{}, x, labels, sched, rng);
    add("CI loss vanishes on a factorized model", std::abs(l) < 1e-20, "L_CI = " + fmt(l));
    const double lv = velocity_ci_loss_value(FactorizedVelocityModel{}, x, labels, rng);
    add("velocity CI loss vanishes on a factorized model", std::abs(lv) < 1e-20, "loss = " + fmt(lv));
  }
  {
    Rng rng(11);
    std::vector<double> joint(3), mi(3), mj(3), un(3);
    for (auto* v : {&joint, &mi, &mj, &un}) {
      for (double& e : *v) e = rng.normal();
    }
    const auto a = ci_residual_pairwise(joint, mi, mj, un);
    const std::vector<std::vector<double>> marg{mi, mj};
    const auto b = ci_residual_mutual(joint, marg, un);
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
    add("pairwise and mutual CI residuals agree for two attributes", worst < 1e-12, "max diff " + fmt(worst));
  }
  {
    Rng rng(13);
    double worst = 0.0;
    for (int n = 0; n < 10; ++n) {
      const DenseNet net({3, 5, 4, 2}, rng);
      worst = std::max(worst, detail::max_relative_gradient_error(net, rng));
    }
    add("dense net gradients match central differences", worst < 1e-4, "max rel error " + fmt(worst));
  }
  {
    Rng rng(17);
    const ScoreNet model(NetLayout{2, {2, 2}, 16}, {8, 8}, 1000, rng);
    std::filesystem::create_directories(scratch_dir);
    bool ok = true;
    std::string d;
    try {
      const auto h = checkpoint_roundtrip(model, scratch_dir / "roundtrip.ckpt");
      d = "hash " + std::to_string(h);
    } catch (const Error& e) {
      ok = false;
      d = e.what();
    }
    add("checkpoint roundtrip is bit-exact", ok, d);
  }
  {
    Rng rng(19);
    const auto link = AffineScoreVelocityLink::linear();
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const double t = 0.05 + 0.9 * rng.uniform();
      std::vector<double> x(2), uj(2), ui(2), uk(2), u0(2);
      for (auto* v : {&x, &uj, &ui, &uk, &u0}) {
        for (double& e : *v) e = rng.normal();
      }
      const auto sj = score_from_velocity(uj, x, link, t);
      const auto si = score_from_velocity(ui, x, link, t);
      const auto sk = score_from_velocity(uk, x, link, t);
      const auto s0 = score_from_velocity(u0, x, link, t);
      for (std::size_t k = 0; k < 2; ++k) {
        const double rs = sj[k] - si[k] - sk[k] + s0[k];
        const double rv = uj[k] - ui[k] - uk[k] + u0[k];
        worst = std::max(worst, std::abs(rs - link.b_at(t) * rv));
      }
    }
    add("score residual equals b_t times velocity residual", worst < 1e-12, "max abs error " + fmt(worst));
  }
  return out;
}

}  // namespace coind
