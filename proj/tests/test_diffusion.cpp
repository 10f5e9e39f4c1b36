#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "coind/diffusion.hpp"
#include "coind/world.hpp"

namespace coind {
namespace {

double cosine_g(double t, double T, double s) {
  const double c = std::cos((t / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
  const double c0 = std::cos(s / (1.0 + s) * std::numbers::pi / 2.0);
  return (c * c) / (c0 * c0);
}

TEST(CosineSchedule, Boundaries) {
  const auto s = cosine_alpha_bar(1000);
  EXPECT_EQ(s.steps(), 1000);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1000), 1e-5);
}

TEST(CosineSchedule, MidpointMatchesFormula) {
  const auto s = cosine_alpha_bar(1000);
  const double g = cosine_g(500.0, 1000.0, 0.008);
  EXPECT_NEAR(s.alpha_bar(500), 1e-5 + (1.0 - 1e-5) * g, 1e-15);
}

TEST(CosineSchedule, StrictlyDecreasingInUnitInterval) {
  for (int T : {1, 2, 10, 1000, 4000}) {
    const auto s = cosine_alpha_bar(T);
    for (int t = 1; t <= T; ++t) {
      EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
      EXPECT_GT(s.alpha_bar(t), 0.0);
    }
  }
}

TEST(CosineSchedule, ZeroStepsIsConfigError) {
  EXPECT_THROW((void)cosine_alpha_bar(0), ConfigError);
  EXPECT_THROW(NoiseSchedule({1.0, 0.5, 0.5}), ConfigError);
  EXPECT_THROW((void)cosine_alpha_bar(10).alpha_bar(11), ConfigError);
}

TEST(AddNoise, ZeroEpsScalesInput) {
  const auto s = cosine_alpha_bar(100);
  const std::vector<double> x0{0.7, -1.2};
  const std::vector<double> eps{0.0, 0.0};
  const auto xt = add_noise(x0, 40, eps, s);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(xt[k], std::sqrt(s.alpha_bar(40)) * x0[k]);
}

TEST(AddNoise, NearUnitAlphaBarKeepsInput) {
  const NoiseSchedule s({1.0, 1.0 - 1e-16});
  const auto xt = add_noise(std::vector<double>{1.0, 2.0}, 1, std::vector<double>{0.5, -0.5}, s);
  EXPECT_NEAR(xt[0], 1.0, 1e-7);
  EXPECT_NEAR(xt[1], 2.0, 1e-7);
  EXPECT_THROW((void)add_noise(std::vector<double>{1.0}, 0, std::vector<double>{0.0}, s), ConfigError);
}

TEST(AddNoise, MatchesFormulaAndIsLinear) {
  const auto s = cosine_alpha_bar(1000);
  Rng rng(6);
  const Matrix x0 = Matrix::standard_normal(8, 3, rng);
  const Matrix e = Matrix::standard_normal(8, 3, rng);
  std::vector<int> t(8);
  for (int& v : t) v = static_cast<int>(rng.between(1, 1000));
  const Matrix xt = add_noise(x0, t, e, s);
  for (std::size_t r = 0; r < 8; ++r) {
    const double ab = s.alpha_bar(t[r]);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_NEAR(xt(r, k), std::sqrt(ab) * x0(r, k) + std::sqrt(1.0 - ab) * e(r, k), 1e-15);
    }
  }
  const Matrix doubled = add_noise(2.0 * x0, t, 2.0 * e, s);
  for (std::size_t k = 0; k < xt.size(); ++k) EXPECT_NEAR(doubled.flat()[k], 2.0 * xt.flat()[k], 1e-14);
  EXPECT_THROW((void)add_noise(x0, std::vector<int>(3, 1), e, s), ShapeError);
}

TEST(EpsScore, ZeroAndRoundtrip) {
  const auto s = cosine_alpha_bar(1000);
  const auto z = eps_to_score(std::vector<double>{0.0, 0.0}, 10, s);
  EXPECT_EQ(z[0], 0.0);
  const std::vector<double> score{1.5, -0.25};
  const auto back = eps_to_score(score_to_eps(score, 321, s), 321, s);
  EXPECT_NEAR(back[0], score[0], 1e-14);
  EXPECT_NEAR(back[1], score[1], 1e-14);
}

TEST(EpsScore, ZeroNoiseStepIsRejected) {
  const auto s = cosine_alpha_bar(10);
  EXPECT_THROW((void)eps_to_score(std::vector<double>{1.0}, 0, s), ConfigError);
  EXPECT_THROW((void)eps_to_score(std::vector<double>{1.0}, 11, s), ConfigError);
}

TEST(EpsScore, OracleEpsConvertsToNoisedGaussianScore) {
  const auto world = GaussianWorld::binary_2d(0.3);
  const auto space = AttributeSpace::binary_orthogonal_2();
  const auto sched = cosine_alpha_bar(1000);
  const OracleEpsModel oracle(world, space, sched);
  const std::vector<int> t{250};
  const std::vector<ConditionVector> c{ConditionVector(AttributeTuple{1, 0})};
  const Matrix x = Matrix::from_rows({{0.3, -0.8}});
  const Matrix eps = oracle.predict_eps(x, t, c);
  const auto s = eps_to_score(eps.row(0), 250, sched);
  const double ab = sched.alpha_bar(250);
  const double var = 0.09 * ab + 1.0 - ab;
  EXPECT_NEAR(s[0], (std::sqrt(ab) * 1.0 - 0.3) / var, 1e-12);
  EXPECT_NEAR(s[1], (std::sqrt(ab) * -1.0 + 0.8) / var, 1e-12);
}

TEST(Conditioning, EncodingHasOneHotPerBlock) {
  const ConditionEncoding enc({2, 3});
  EXPECT_EQ(enc.width(), 7u);
  ConditionVector c(2);
  c.set(1, 2);
  const auto v = enc.encode(c);
  EXPECT_EQ(v, (std::vector<double>{0, 0, 1, 0, 0, 1, 0}));
  const auto full = enc.encode(ConditionVector(AttributeTuple{1, 0}));
  EXPECT_EQ(full, (std::vector<double>{0, 1, 0, 1, 0, 0, 0}));
  EXPECT_THROW((void)enc.encode(ConditionVector(AttributeTuple{2, 0})), ConfigError);
  EXPECT_THROW((void)enc.encode(ConditionVector(3)), ShapeError);
}

TEST(Conditioning, MaskRates) {
  Rng rng(12);
  const ConditionVector c(AttributeTuple{1, 0});
  for (int i = 0; i < 100; ++i) EXPECT_EQ(mask_conditions(c, 0.0, rng).slots(), c.slots());
  EXPECT_TRUE(mask_conditions(c, std::nextafter(1.0, 0.0), rng).all_null());
  std::size_t nulls = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto m = mask_conditions(c, 0.3, rng);
    nulls += m.is_null(0) ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(nulls) / n, 0.3, 0.01);
  EXPECT_THROW((void)mask_conditions(c, 1.0, rng), ConfigError);
}

TEST(Conditioning, TimeEmbeddingValues) {
  std::vector<double> out(17);
  time_embedding(0.25, 16, out);
  EXPECT_EQ(out[0], 0.25);
  EXPECT_NEAR(out[1], std::sin(0.25), 1e-15);
  EXPECT_NEAR(out[9], std::cos(0.25), 1e-15);
  EXPECT_NEAR(out[8], std::sin(64.0 * 0.25), 1e-12);
  EXPECT_THROW(time_embedding(0.1, 15, std::span<double>(out.data(), 16)), ConfigError);
}

TEST(ScoreNet, PureFunctionAndAcceptsAllNull) {
  Rng rng(10);
  const ScoreNet net(NetLayout{2, {2, 2}, 16}, {16, 16}, 1000, rng);
  const Matrix x = Matrix::standard_normal(4, 2, rng);
  const std::vector<int> t{1, 10, 500, 1000};
  const std::vector<ConditionVector> c{ConditionVector(2), ConditionVector(AttributeTuple{0, 1}),
                                       ConditionVector::keep({1, 1}, {0}), ConditionVector(2)};
  const Matrix a = net.predict_eps(x, t, c);
  const Matrix b = net.predict_eps(x, t, c);
  EXPECT_EQ(a.values(), b.values());
  EXPECT_EQ(a.cols(), 2u);
}

TEST(ScoreNet, CheckpointRoundtripGivesIdenticalOutputs) {
  Rng rng(14);
  const ScoreNet net(NetLayout{2, {2, 3}, 8}, {12, 12}, 200, rng);
  const ScoreNet back = ScoreNet::from_checkpoint(deserialize_checkpoint(serialize_checkpoint(net.to_checkpoint())));
  const Matrix x = Matrix::standard_normal(5, 2, rng);
  const std::vector<int> t{1, 2, 3, 100, 200};
  const std::vector<ConditionVector> c(5, ConditionVector(AttributeTuple{1, 2}));
  EXPECT_EQ(net.predict_eps(x, t, c).values(), back.predict_eps(x, t, c).values());
  EXPECT_EQ(back.num_timesteps(), 200);
}

}  // namespace
}  // namespace coind
