#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include "coind/diffusion.hpp"
#include "coind/experiment/invariants.hpp"
#include "coind/training.hpp"
#include "coind/world.hpp"

namespace coind {
namespace {

/// Factorized model plus a constant offset on the joint (both slots observed) branch.
struct JointOffsetModel {
  std::vector<double> v;
  [[nodiscard]] Matrix predict_eps(const Matrix& x, std::span<const int> t, std::span<const ConditionVector> c) const {
    Matrix out = FactorizedEpsModel{}.predict_eps(x, t, c);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (!c[r].is_null(0) && !c[r].is_null(1)) {
        for (std::size_t k = 0; k < x.cols(); ++k) out(r, k) += v[k];
      }
    }
    return out;
  }
};

struct ZeroModel {
  [[nodiscard]] Matrix predict_eps(const Matrix& x, std::span<const int>, std::span<const ConditionVector>) const {
    return Matrix(x.rows(), x.cols());
  }
};

/// Returns a fixed matrix regardless of input.
struct ReplayModel {
  Matrix out;
  [[nodiscard]] Matrix predict_eps(const Matrix&, std::span<const int>, std::span<const ConditionVector>) const {
    return out;
  }
};

struct Batch {
  Matrix x;
  std::vector<AttributeTuple> labels;
};

Batch make_batch(const AttributeSpace& space, std::size_t m, std::uint64_t seed) {
  const auto ds = sample_dataset(GaussianWorld::binary_2d(0.3), space, m, seed);
  return {ds.x, ds.labels};
}

ScoreNet tiny_net(std::uint64_t seed) {
  Rng rng(seed);
  return ScoreNet(NetLayout{2, {2, 2}, 4}, {6, 6}, 100, rng);
}

TEST(LossScore, PerfectPredictionGivesZero) {
  const auto sched = cosine_alpha_bar(1000);
  const Batch b = make_batch(AttributeSpace::binary_orthogonal_2(), 32, 1);
  const std::vector<ConditionVector> conds(32, ConditionVector(2));
  Rng rng(3);
  Rng replay = rng;
  const NoisedDraw d = draw_noised(b.x, sched, replay);
  EXPECT_EQ(loss_score_value(ReplayModel{d.eps}, b.x, conds, sched, rng), 0.0);
}

TEST(LossScore, ZeroPredictorExpectsDataDimension) {
  const auto sched = cosine_alpha_bar(1000);
  const Batch b = make_batch(AttributeSpace::binary_orthogonal_2(), 50000, 2);
  const std::vector<ConditionVector> conds(50000, ConditionVector(2));
  Rng rng(4);
  // E||eps||^2 = 2; sd of the batch mean is 2/sqrt(50000).
  EXPECT_NEAR(loss_score_value(ZeroModel{}, b.x, conds, sched, rng), 2.0, 0.04);
}

TEST(LossScore, MatchesStraightLineReplay) {
  const auto sched = cosine_alpha_bar(100);
  const ScoreNet net = tiny_net(5);
  const Batch b = make_batch(AttributeSpace::binary_orthogonal_2(), 16, 3);
  std::vector<ConditionVector> conds;
  for (const auto& l : b.labels) conds.push_back(ConditionVector::keep(l, {0}));
  Rng rng(8);
  Rng replay = rng;
  const double got = loss_score(net, b.x, conds, sched, rng).value;

  std::vector<int> t(16);
  for (int& v : t) v = static_cast<int>(replay.between(1, 100));
  const Matrix eps = Matrix::standard_normal(16, 2, replay);
  double expect = 0.0;
  for (std::size_t r = 0; r < 16; ++r) {
    const double ab = sched.alpha_bar(t[r]);
    Matrix xt(1, 2);
    for (std::size_t k = 0; k < 2; ++k) xt(0, k) = std::sqrt(ab) * b.x(r, k) + std::sqrt(1.0 - ab) * eps(r, k);
    const std::vector<int> tr{t[r]};
    const std::vector<ConditionVector> cr{conds[r]};
    const Matrix p = net.predict_eps(xt, tr, cr);
    for (std::size_t k = 0; k < 2; ++k) expect += (p(0, k) - eps(r, k)) * (p(0, k) - eps(r, k));
  }
  EXPECT_NEAR(got, expect / 16.0, 1e-13);
}

TEST(LossCi, FactorizedModelGivesZero) {
  const auto sched = cosine_alpha_bar(1000);
  const Batch b = make_batch(AttributeSpace::binary_full_2(), 64, 4);
  Rng rng(9);
  EXPECT_LT(loss_ci_pairwise_value(FactorizedEpsModel{}, b.x, b.labels, sched, rng), 1e-24);
}

TEST(LossCi, JointOffsetGivesSquaredNorm) {
  const auto sched = cosine_alpha_bar(1000);
  const Batch b = make_batch(AttributeSpace::binary_full_2(), 64, 5);
  const std::vector<double> v{0.3, -1.25};
  Rng rng(10);
  EXPECT_NEAR(loss_ci_pairwise_value(JointOffsetModel{v}, b.x, b.labels, sched, rng), 0.09 + 1.5625, 1e-12);
}

TEST(LossCi, OracleVanishesOnFullSupportOnly) {
  const auto sched = cosine_alpha_bar(1000);
  const auto world = GaussianWorld::binary_2d(0.3);
  const OracleEpsModel full(world, AttributeSpace::binary_full_2(), sched);
  const OracleEpsModel orth(world, AttributeSpace::binary_orthogonal_2(), sched);
  const Batch b = make_batch(AttributeSpace::binary_orthogonal_2(), 256, 6);
  Rng r1(11);
  Rng r2(11);
  EXPECT_LT(loss_ci_pairwise_value(full, b.x, b.labels, sched, r1), 1e-20);
  EXPECT_GT(loss_ci_pairwise_value(orth, b.x, b.labels, sched, r2), 1e-3);
}

TEST(LossCi, NeedsTwoAttributes) {
  const auto sched = cosine_alpha_bar(10);
  const Matrix x(2, 2);
  const std::vector<AttributeTuple> labels{{0}, {1}};
  Rng rng(1);
  EXPECT_THROW((void)draw_ci(x, labels, sched, rng), ConfigError);
}

TEST(LossCi, PairwiseAndMutualResidualsAgree) {
  Rng rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> joint(3), mi(3), mj(3), un(3);
    for (auto* v : {&joint, &mi, &mj, &un}) {
      for (double& e : *v) e = 10.0 * rng.normal();
    }
    const auto a = ci_residual_pairwise(joint, mi, mj, un);
    const auto b = ci_residual_mutual(joint, {mi, mj}, un);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
  }
}

TEST(LossCi, SwappingAttributeRolesLeavesLossUnchanged) {
  const auto sched = cosine_alpha_bar(100);
  const ScoreNet net = tiny_net(13);
  // Input layout: x (2) | time embedding (5) | block c1 (3) | block c2 (3).
  DenseNet swapped = net.net();
  const std::size_t base = 2 + 5;
  auto w = swapped.weight(0);
  for (std::size_t k = 0; k < 3; ++k) w.row(base + k).swap(w.row(base + 3 + k));
  const ScoreNet mirror(ConditionalNet(net.body().layout(), swapped), 100);

  const Batch b = make_batch(AttributeSpace::binary_full_2(), 64, 7);
  std::vector<AttributeTuple> flipped;
  for (const auto& l : b.labels) flipped.push_back({l[1], l[0]});
  Rng r1(14);
  Rng r2(14);
  const double a = loss_ci_pairwise_value(net, b.x, b.labels, sched, r1);
  const double c = loss_ci_pairwise_value(mirror, b.x, flipped, sched, r2);
  EXPECT_NEAR(a, c, 1e-12 * std::max(1.0, a));
}

TEST(LossProperties, BothTermsNonNegative) {
  const auto sched = cosine_alpha_bar(100);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const ScoreNet net = tiny_net(s);
    const Batch b = make_batch(AttributeSpace::binary_orthogonal_2(), 8, s);
    std::vector<ConditionVector> conds;
    for (const auto& l : b.labels) conds.emplace_back(l);
    Rng rng(s);
    EXPECT_GE(loss_score(net, b.x, conds, sched, rng).value, 0.0);
    EXPECT_GE(loss_ci_pairwise(net, b.x, b.labels, sched, rng).value, 0.0);
  }
}

TEST(LossGradients, CompositeMatchesFiniteDifferences) {
  const auto sched = cosine_alpha_bar(100);
  const double lambda = 3.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ScoreNet net = tiny_net(100 + seed);
    const Batch b = make_batch(AttributeSpace::binary_orthogonal_2(), 6, seed);
    Rng mask(seed);
    std::vector<ConditionVector> conds;
    for (const auto& l : b.labels) conds.push_back(mask_conditions(ConditionVector(l), 0.3, mask));
    const Rng rs(200 + seed);
    const Rng rc(300 + seed);
    const auto composite = [&](const ScoreNet& m) {
      Rng a = rs;
      Rng c = rc;
      return loss_score_value(m, b.x, conds, sched, a) + lambda * loss_ci_pairwise_value(m, b.x, b.labels, sched, c);
    };
    Rng a = rs;
    Rng c = rc;
    const auto gs = loss_score(net, b.x, conds, sched, a);
    const auto gc = loss_ci_pairwise(net, b.x, b.labels, sched, c);
    double worst = 0.0;
    const double h = 1e-5;
    for (std::size_t i = 0; i < net.net().parameter_count(); ++i) {
      const double analytic = gs.param_grads[i] + lambda * gc.param_grads[i];
      const double keep = net.net().parameters()[i];
      net.net().parameters()[i] = keep + h;
      const double up = composite(net);
      net.net().parameters()[i] = keep - h;
      const double down = composite(net);
      net.net().parameters()[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-8}));
    }
    EXPECT_LT(worst, 1e-4) << "seed " << seed;
  }
}

TEST(TrainStep, CombinedPassEqualsSeparateLosses) {
  const auto sched = cosine_alpha_bar(100);
  const Batch b = make_batch(AttributeSpace::binary_orthogonal_2(), 16, 8);
  ScoreNet net = tiny_net(21);
  ScoreNet ref = net;
  AdamState opt(AdamConfig{}, net.net().parameter_count());
  AdamState ref_opt = opt;
  const Rng step_rng(31);
  const StepOptions o{2.5, 0.3, CiWeighting::kUnweighted, true};
  const auto bd = coind_train_step(net, opt, b.x, b.labels, o, sched, step_rng);

  Rng mask = step_rng.split(1);
  Rng rs = step_rng.split(2);
  Rng rc = step_rng.split(3);
  std::vector<ConditionVector> conds;
  for (const auto& l : b.labels) conds.push_back(mask_conditions(ConditionVector(l), 0.3, mask));
  const auto gs = loss_score(ref, b.x, conds, sched, rs);
  const auto gc = loss_ci_pairwise(ref, b.x, b.labels, sched, rc);
  EXPECT_NEAR(bd.l_score, gs.value, 1e-12);
  EXPECT_NEAR(bd.l_ci, gc.value, 1e-12);
  EXPECT_NEAR(bd.total, gs.value + 2.5 * gc.value, 1e-12);
  std::vector<double> g(gs.param_grads.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = gs.param_grads[i] + 2.5 * gc.param_grads[i];
  ref_opt.step(ref.net().parameters(), g);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(net.net().parameters()[i], ref.net().parameters()[i], 1e-9);
}

TEST(TrainStep, LambdaZeroTotalIsScoreLoss) {
  const auto sched = cosine_alpha_bar(100);
  const Batch b = make_batch(AttributeSpace::binary_orthogonal_2(), 16, 9);
  ScoreNet net = tiny_net(22);
  AdamState opt(AdamConfig{}, net.net().parameter_count());
  const auto bd = coind_train_step(net, opt, b.x, b.labels, StepOptions{}, sched, Rng(1));
  EXPECT_EQ(bd.total, bd.l_score);
  EXPECT_GT(bd.l_ci, 0.0);
  EXPECT_THROW((void)coind_train_step(net, opt, b.x, b.labels, StepOptions{-1.0}, sched, Rng(1)), ConfigError);
}

TEST(TrainStep, ParametersDifferFromVanillaIffLambdaPositive) {
  const auto sched = cosine_alpha_bar(100);
  const Batch b = make_batch(AttributeSpace::binary_orthogonal_2(), 16, 10);
  const auto after = [&](double lambda) {
    ScoreNet net = tiny_net(23);
    AdamState opt(AdamConfig{}, net.net().parameter_count());
    (void)coind_train_step(net, opt, b.x, b.labels, StepOptions{lambda}, sched, Rng(2));
    return std::vector<double>(net.net().parameters().begin(), net.net().parameters().end());
  };
  const auto vanilla = after(0.0);
  EXPECT_EQ(after(0.0), vanilla);
  EXPECT_NE(after(1.0), vanilla);
}

TEST(TrainStep, LambdaZeroTrajectoryIsBitIdenticalToGuidanceOnlyTrainer) {
  const auto sched = cosine_alpha_bar(100);
  const auto data = sample_dataset(GaussianWorld::binary_2d(0.3), AttributeSpace::binary_orthogonal_2(), 500, 3);
  TrainerConfig cfg;
  cfg.steps = 200;
  cfg.batch_size = 32;
  cfg.seed = 17;
  cfg.log_every = 7;
  ScoreNet a = tiny_net(40);
  Trainer(a, data, sched, cfg).run();

  ScoreNet b = tiny_net(40);
  AdamState opt(cfg.adam, b.net().parameter_count());
  const Rng root(cfg.seed);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const Rng step_rng = root.split(s);
    Rng batch_rng = step_rng.split(0);
    std::vector<std::size_t> rows(cfg.batch_size);
    for (auto& r : rows) r = static_cast<std::size_t>(batch_rng.below(data.size()));
    const auto batch = data.subset(rows);
    (void)cfg_train_step(b, opt, batch.x, batch.labels, cfg.p_uncond, sched, step_rng);
  }
  const auto pa = a.net().parameters();
  const auto pb = b.net().parameters();
  ASSERT_EQ(pa.size(), pb.size());
  EXPECT_EQ(std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(double)), 0);
}

TEST(Trainer, DeterministicPerSeed) {
  const auto sched = cosine_alpha_bar(100);
  const auto data = sample_dataset(GaussianWorld::binary_2d(0.3), AttributeSpace::binary_orthogonal_2(), 300, 4);
  TrainerConfig cfg;
  cfg.lambda = 5.0;
  cfg.steps = 60;
  cfg.batch_size = 16;
  cfg.seed = 3;
  ScoreNet a = tiny_net(41);
  ScoreNet b = tiny_net(41);
  Trainer(a, data, sched, cfg).run();
  Trainer(b, data, sched, cfg).run();
  EXPECT_EQ(std::memcmp(a.net().parameters().data(), b.net().parameters().data(),
                        a.net().parameter_count() * sizeof(double)),
            0);
}

TEST(Trainer, LossDropsByHalfOverTwoThousandSteps) {
  const auto sched = cosine_alpha_bar(1000);
  const auto data = sample_dataset(GaussianWorld::binary_2d(0.3), AttributeSpace::binary_orthogonal_2(), 5000, 5);
  Rng rng(6);
  ScoreNet net(NetLayout{2, {2, 2}, 16}, {32, 32}, 1000, rng);
  TrainerConfig cfg;
  cfg.lambda = 10.0;
  cfg.steps = 2000;
  cfg.batch_size = 128;
  cfg.seed = 7;
  Trainer trainer(net, data, sched, cfg);
  std::ostringstream csv;
  trainer.run(&csv);
  const auto& h = trainer.total_history();
  ASSERT_EQ(h.size(), 2000u);
  const double first = std::accumulate(h.begin(), h.begin() + 100, 0.0) / 100.0;
  const double last = std::accumulate(h.end() - 100, h.end(), 0.0) / 100.0;
  EXPECT_LT(last, 0.5 * first) << "first " << first << " last " << last;
  EXPECT_EQ(csv.str().rfind("step,l_score,l_ci,total\n", 0), 0u);
  for (const auto& row : trainer.log()) EXPECT_NEAR(row.total, row.l_score + 10.0 * row.l_ci, 1e-12);
}

TEST(SuggestLambda, RulesOfThumb) {
  EXPECT_NEAR(suggest_lambda(0.025).rule_of_thumb, 100.0, 1e-12);
  EXPECT_EQ(suggest_lambda(1.0).rule_of_thumb, 4000.0);
  const auto s = suggest_lambda(0.5, 0.05);
  ASSERT_TRUE(s.ratio.has_value());
  EXPECT_NEAR(*s.ratio, 10.0, 1e-12);
  EXPECT_THROW((void)suggest_lambda(0.0), ConfigError);
  EXPECT_THROW((void)suggest_lambda(-1.0), ConfigError);
}

}  // namespace
}  // namespace coind
