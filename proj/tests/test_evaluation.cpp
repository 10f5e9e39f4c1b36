#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "coind/diffusion.hpp"
#include "coind/evaluation.hpp"
#include "coind/world.hpp"

namespace coind {
namespace {

struct BlindModel {
  Matrix predict_eps(const Matrix& x, std::span<const int>, std::span<const ConditionVector>) const {
    return Matrix(x.rows(), x.cols(), 0.25);
  }
};

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

TEST(ImplicitClassifier, ConditionBlindModelGivesUniformTable) {
  const auto sched = cosine_alpha_bar(1000);
  Rng rng(1);
  const Matrix x = Matrix::standard_normal(6, 2, rng);
  const auto table = implicit_class_probs(BlindModel{}, x, {2, 2}, {0, 1}, sched, {}, rng);
  ASSERT_EQ(table.candidates.size(), 4u);
  for (double p : table.probs.values()) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(ImplicitClassifier, TwoCandidatesFollowLogisticOfErrorGap) {
  for (double gap : {-3.0, -0.5, 0.0, 0.7, 4.0}) {
    const std::vector<double> err{1.3, 1.3 + gap};
    std::vector<double> p(2);
    softmax_negated(err, p);
    EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-gap)), 1e-14);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-15);
  }
  std::vector<double> p(3);
  softmax_negated(std::vector<double>{1e4, 1e4 + 1.0, 2e4}, p);
  EXPECT_TRUE(std::isfinite(p[0]) && p[2] == 0.0);
}

TEST(ImplicitClassifier, CandidatesAreLexicographicLastFastest) {
  const auto c = candidate_values({2, 3}, {0, 1});
  ASSERT_EQ(c.size(), 6u);
  EXPECT_EQ(c[1], (std::vector<int>{0, 1}));
  EXPECT_EQ(c[3], (std::vector<int>{1, 0}));
  EXPECT_EQ(candidate_values({2, 3}, {1}).size(), 3u);
}

TEST(ImplicitClassifier, OracleArgmaxAtClusterMeanIsThatCluster) {
  const auto world = GaussianWorld::binary_2d(0.3);
  const auto space = AttributeSpace::binary_full_2();
  const auto sched = cosine_alpha_bar(1000);
  const OracleEpsModel oracle(world, space, sched);
  Rng rng(2);
  for (const auto& t : space.all_tuples()) {
    const Matrix x = Matrix::row_vector(world.mean_of(t));
    const auto table = implicit_class_probs(oracle, x, {2, 2}, {0, 1}, sched, {}, rng);
    const auto& best = table.candidates[argmax(table.probs.row(0))];
    EXPECT_EQ(AttributeTuple(best.begin(), best.end()), t);
  }
}

TEST(ImplicitClassifier, TablesAreNormalized) {
  const auto world = GaussianWorld::binary_2d(0.3);
  const auto space = AttributeSpace::binary_full_2();
  const auto sched = cosine_alpha_bar(1000);
  const OracleEpsModel oracle(world, space, sched);
  Rng rng(3);
  const Matrix x = Matrix::standard_normal(50, 2, rng);
  const auto tabs = implicit_pair_tables(oracle, x, {2, 2}, 0, 1, sched, {}, rng);
  for (const Matrix* m : {&tabs.joint, &tabs.marginal_i, &tabs.marginal_j}) {
    for (std::size_t r = 0; r < m->rows(); ++r) {
      double s = 0.0;
      for (double p : m->row(r)) {
        EXPECT_GE(p, 0.0);
        s += p;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(ImplicitClassifier, ConfigValidation) {
  const auto sched = cosine_alpha_bar(100);
  Rng rng(4);
  const Matrix x(1, 2, 0.0);
  ImplicitClassifierConfig cfg;
  EXPECT_THROW((void)implicit_class_probs(BlindModel{}, x, {2, 2}, {0}, sched, cfg, rng), ConfigError);
  cfg.t_lo = 10;
  cfg.t_hi = 90;
  EXPECT_NO_THROW((void)implicit_class_probs(BlindModel{}, x, {2, 2}, {0}, sched, cfg, rng));
  EXPECT_THROW((void)implicit_class_probs(BlindModel{}, x, {2, 2}, {}, sched, cfg, rng), ConfigError);
  EXPECT_THROW((void)implicit_pair_tables(BlindModel{}, x, {2, 2}, 1, 1, sched, cfg, rng), ConfigError);
  EXPECT_THROW((void)jsd_violation(BlindModel{}, Matrix(0, 2), {2, 2}, sched, cfg, rng), ConfigError);
}

TEST(Jsd, ProductTableHasZeroGap) {
  const std::vector<double> mi{0.2, 0.8};
  const std::vector<double> mj{0.6, 0.1, 0.3};
  std::vector<double> joint;
  for (double a : mi)
    for (double b : mj) joint.push_back(a * b);
  EXPECT_NEAR(pair_independence_gap(joint, mi, mj), 0.0, 1e-15);
}

TEST(Jsd, PointMassAgainstUniformMatchesEnumeration) {
  const std::vector<double> p{1.0, 0.0, 0.0, 0.0};
  const std::vector<double> q(4, 0.25);
  const double kl_p = std::log(1.0 / 0.625);
  const double kl_q = 0.25 * std::log(0.25 / 0.625) + 0.75 * std::log(0.25 / 0.125);
  EXPECT_NEAR(js_divergence(p, q), 0.5 * kl_p + 0.5 * kl_q, 1e-14);
  EXPECT_NEAR(js_divergence(p, std::vector<double>{0, 1, 0, 0}), std::log(2.0), 1e-15);
  EXPECT_EQ(js_divergence(q, q), 0.0);
  EXPECT_THROW((void)js_divergence(p, std::vector<double>{1.0}), ShapeError);
}

TEST(Jsd, BoundedBySymmetricLn2) {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> p(5);
    std::vector<double> q(5);
    double sp = 0.0;
    double sq = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
      p[k] = rng.bernoulli(0.3) ? 0.0 : rng.uniform();
      q[k] = rng.uniform();
      sp += p[k];
      sq += q[k];
    }
    if (sp == 0.0) continue;
    for (auto& v : p) v /= sp;
    for (auto& v : q) v /= sq;
    const double d = js_divergence(p, q);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, std::log(2.0) + 1e-15);
    EXPECT_NEAR(d, js_divergence(q, p), 1e-15);
  }
}

TEST(Jsd, BlindModelHasNoViolation) {
  const auto sched = cosine_alpha_bar(1000);
  Rng rng(6);
  const Matrix x = Matrix::standard_normal(20, 2, rng);
  EXPECT_NEAR(jsd_violation(BlindModel{}, x, {2, 2}, sched, {}, rng), 0.0, 1e-15);
}

ClassifierConfig quick_classifier(std::uint64_t seed) {
  ClassifierConfig c;
  c.steps = 600;
  c.seed = seed;
  return c;
}

TEST(Classifier, SeparableDataIsLearned) {
  Rng rng(7);
  const std::size_t n = 1000;
  Matrix x(n, 2);
  std::vector<int> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = rng.bernoulli(0.5) ? 1 : 0;
    x(r, 0) = (y[r] == 1 ? 3.0 : -3.0) + rng.normal();
    x(r, 1) = rng.normal();
  }
  const Classifier clf = train_classifier(x, y, 2, quick_classifier(1));
  const auto pred = clf.predict(x);
  std::size_t ok = 0;
  for (std::size_t r = 0; r < n; ++r) ok += pred[r] == y[r] ? 1 : 0;
  EXPECT_GE(static_cast<double>(ok) / n, 0.99);
  const Matrix p = clf.predict_proba(x);
  for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(p(r, 0) + p(r, 1), 1.0, 1e-12);
}

TEST(Classifier, ShuffledLabelsStayAtChance) {
  Rng rng(8);
  const Matrix x = Matrix::standard_normal(1000, 2, rng);
  std::vector<int> y(1000);
  for (int& v : y) v = rng.bernoulli(0.5) ? 1 : 0;
  const Classifier clf = train_classifier(x, y, 2, quick_classifier(2));
  const Matrix xt = Matrix::standard_normal(4000, 2, rng);
  const auto pred = clf.predict(xt);
  std::size_t ok = 0;
  for (int p : pred) ok += p == (rng.bernoulli(0.5) ? 1 : 0) ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(ok) / 4000.0, 0.5, 0.05);
}

TEST(Classifier, RejectsBadInputAndUntrainedUse) {
  const Matrix x(4, 2, 0.0);
  EXPECT_THROW((void)train_classifier(x, std::vector<int>{1, 1, 1, 1}, 2, {}), ConfigError);
  EXPECT_THROW((void)train_classifier(x, std::vector<int>{0, 1, 0, 1}, 1, {}), ConfigError);
  EXPECT_THROW((void)train_classifier(x, std::vector<int>{0, 1, 0, 2}, 2, {}), ConfigError);
  EXPECT_THROW((void)train_classifier(x, std::vector<int>{0, 1}, 2, {}), ShapeError);
  const Classifier untrained;
  EXPECT_THROW((void)untrained.predict(x), StateError);
  EXPECT_THROW((void)AttributePredictors{}.predict(x), StateError);
}

LabeledDataset grid_labels(const std::vector<AttributeTuple>& labels) {
  return LabeledDataset{Matrix(labels.size(), 2, 0.0), labels, Provenance::kRealTest};
}

TEST(GroupMetrics, PerfectPredictions) {
  const auto space = AttributeSpace::binary_full_2();
  const auto test = grid_labels({{0, 0}, {0, 1}, {1, 0}, {1, 1}, {1, 1}});
  const auto m = group_metrics(std::vector<int>{0, 0, 1, 1, 1}, test, 0, space);
  EXPECT_EQ(m.test_accuracy, 1.0);
  EXPECT_EQ(m.balanced_accuracy, 1.0);
  EXPECT_EQ(m.worst_group_accuracy, 1.0);
  EXPECT_EQ(m.group_size.at({1, 1}), 2u);
}

TEST(GroupMetrics, OneFailingGroup) {
  const auto space = AttributeSpace::binary_full_2();
  const auto test = grid_labels({{0, 0}, {0, 1}, {1, 0}, {1, 1}, {1, 1}, {0, 0}});
  const auto m = group_metrics(std::vector<int>{0, 0, 1, 0, 0, 0}, test, 0, space);
  EXPECT_EQ(m.worst_group_accuracy, 0.0);
  EXPECT_DOUBLE_EQ(m.balanced_accuracy, 0.75);
  EXPECT_DOUBLE_EQ(m.test_accuracy, 4.0 / 6.0);
}

TEST(GroupMetrics, RandomPredictionsMatchEnumeration) {
  const auto space = AttributeSpace::binary_full_2();
  Rng rng(9);
  std::vector<AttributeTuple> labels;
  std::vector<int> pred;
  for (int r = 0; r < 300; ++r) {
    labels.push_back({static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2))});
    pred.push_back(static_cast<int>(rng.below(2)));
  }
  const auto m = group_metrics(pred, grid_labels(labels), 1, space);
  std::map<AttributeTuple, std::pair<int, int>> tally;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    auto& [hit, total] = tally[labels[r]];
    hit += pred[r] == labels[r][1] ? 1 : 0;
    ++total;
  }
  double worst = 1.0;
  double sum = 0.0;
  for (const auto& [t, ht] : tally) {
    const double acc = static_cast<double>(ht.first) / ht.second;
    EXPECT_DOUBLE_EQ(m.group_accuracy.at(t), acc);
    worst = std::min(worst, acc);
    sum += acc;
  }
  EXPECT_DOUBLE_EQ(m.worst_group_accuracy, worst);
  EXPECT_NEAR(m.balanced_accuracy, sum / static_cast<double>(tally.size()), 1e-15);
}

TEST(GroupMetrics, EmptyGroupsAreExcluded) {
  const auto space = AttributeSpace::binary_full_2();
  const auto m = group_metrics(std::vector<int>{0, 1}, grid_labels({{0, 0}, {1, 0}}), 0, space);
  EXPECT_EQ(m.excluded_groups.size(), 2u);
  EXPECT_EQ(m.balanced_accuracy, 1.0);
  EXPECT_THROW((void)group_metrics(std::vector<int>{0}, grid_labels({{0, 0}, {1, 0}}), 0, space), ShapeError);
}

TEST(ImplicitGenerativeClassifier, FullSupportOracleIsNearBayes) {
  const auto world = GaussianWorld::binary_2d(0.3);
  const auto space = AttributeSpace::binary_full_2();
  const auto sched = cosine_alpha_bar(1000);
  const OracleEpsModel oracle(world, space, sched);
  const auto test = sample_dataset(world, space, 400, 11, Provenance::kRealTest);
  Rng rng(12);
  const auto m = implicit_generative_classifier_metrics(oracle, test, 0, space, sched, {}, rng);
  EXPECT_GE(m.balanced_accuracy, 0.97);
  EXPECT_GE(m.worst_group_accuracy, 0.93);
}

TEST(ImplicitGenerativeClassifier, BlindModelIsAtChance) {
  const auto world = GaussianWorld::binary_2d(0.3);
  const auto space = AttributeSpace::binary_full_2();
  const auto sched = cosine_alpha_bar(1000);
  const auto test = sample_dataset(world, space, 400, 13, Provenance::kRealTest);
  Rng rng(14);
  const auto m = implicit_generative_classifier_metrics(BlindModel{}, test, 0, space, sched, {}, rng);
  EXPECT_DOUBLE_EQ(m.balanced_accuracy, 0.5);
  EXPECT_EQ(m.worst_group_accuracy, 0.0);
}

TEST(ImplicitGenerativeClassifier, ArgmaxIsStableAcrossSeeds) {
  const auto world = GaussianWorld::binary_2d(0.3);
  const auto space = AttributeSpace::binary_full_2();
  const auto sched = cosine_alpha_bar(1000);
  const OracleEpsModel oracle(world, space, sched);
  const auto data = sample_dataset(world, space, 200, 15, Provenance::kRealTest);
  std::vector<std::vector<std::size_t>> votes(data.size(), std::vector<std::size_t>(4, 0));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const auto table = implicit_class_probs(oracle, data.x, {2, 2}, {0, 1}, sched, {}, rng);
    for (std::size_t r = 0; r < data.size(); ++r) ++votes[r][argmax(table.probs.row(r))];
  }
  std::size_t agree = 0;
  for (const auto& v : votes) agree += *std::max_element(v.begin(), v.end());
  EXPECT_GE(static_cast<double>(agree) / (10.0 * data.size()), 0.95);
}

class ConformityFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ClassifierConfig c;
    c.steps = 600;
    c.seed = 21;
    predictors_ = new AttributePredictors(
        train_attribute_predictors(GaussianWorld::binary_2d(0.3), AttributeSpace::binary_orthogonal_2(), 4000, c));
  }
  static void TearDownTestSuite() {
    delete predictors_;
    predictors_ = nullptr;
  }
  static AttributePredictors* predictors_;
};

AttributePredictors* ConformityFixture::predictors_ = nullptr;

TEST_F(ConformityFixture, MeanEmittersConformFully) {
  const auto world = GaussianWorld::binary_2d(0.3);
  const auto space = AttributeSpace::binary_orthogonal_2();
  auto gen = [&](const AttributeTuple& t, std::size_t n) {
    Matrix x(n, 2);
    const auto mu = world.mean_of(t);
    for (std::size_t r = 0; r < n; ++r) std::copy(mu.begin(), mu.end(), x.row(r).begin());
    return x;
  };
  const auto rep = conformity_score(gen, *predictors_, space.with_full_support().all_tuples(), 50, space);
  EXPECT_EQ(rep.cs_all, 1.0);
  EXPECT_EQ(rep.cs_unseen, 1.0);
  EXPECT_EQ(rep.per_tuple.size(), 4u);
}

TEST_F(ConformityFixture, GeneratorIgnoringSecondAttributeScoresHalf) {
  const auto world = GaussianWorld::binary_2d(0.3);
  const auto space = AttributeSpace::binary_orthogonal_2();
  Rng rng(22);
  auto gen = [&](const AttributeTuple& t, std::size_t n) {
    Matrix x(n, 2);
    for (std::size_t r = 0; r < n; ++r) {
      const auto mu = world.mean_of({t[0], static_cast<int>(rng.below(2))});
      std::copy(mu.begin(), mu.end(), x.row(r).begin());
    }
    return x;
  };
  const auto rep = conformity_score(gen, *predictors_, space.with_full_support().all_tuples(), 2000, space);
  EXPECT_NEAR(rep.cs_all, 0.5, 0.03);
  EXPECT_NEAR(rep.cs_unseen, 0.5, 0.05);
  EXPECT_THROW((void)conformity_score(gen, *predictors_, {}, 10, space), ConfigError);
}

TEST(GaussianW2, IdenticalCloudsGiveZero) {
  Rng rng(31);
  const Matrix a = Matrix::standard_normal(500, 2, rng);
  EXPECT_NEAR(gaussian_w2(a, a).distance, 0.0, 1e-6);
}

TEST(GaussianW2, PointMassesGiveTheirDistance) {
  const Matrix a(10, 2, 0.0);
  Matrix b(10, 2, 0.0);
  for (std::size_t r = 0; r < 10; ++r) {
    b(r, 0) = 3.0;
    b(r, 1) = 4.0;
  }
  const auto res = gaussian_w2(a, b);
  EXPECT_TRUE(res.regularized);
  EXPECT_NEAR(res.distance, 5.0, 1e-6);
}

TEST(GaussianW2, ShiftedUnitGaussians) {
  Rng rng(32);
  const Matrix a = Matrix::standard_normal(20000, 2, rng);
  Matrix b = Matrix::standard_normal(20000, 2, rng);
  for (std::size_t r = 0; r < b.rows(); ++r) b(r, 0) += 2.0;
  EXPECT_NEAR(gaussian_w2(a, b).distance, 2.0, 0.05);
}

TEST(GaussianW2, ScaledGaussiansMatchClosedForm) {
  Rng rng(33);
  Matrix a = Matrix::standard_normal(20000, 2, rng);
  Matrix b = Matrix::standard_normal(20000, 2, rng);
  for (double& v : b.flat()) v *= 2.0;
  EXPECT_NEAR(gaussian_w2(a, b).distance, std::sqrt(2.0), 0.05);
  EXPECT_THROW((void)gaussian_w2(Matrix(1, 2), a), ConfigError);
  EXPECT_THROW((void)gaussian_w2(Matrix(3, 3), a), ShapeError);
}

}  // namespace
}  // namespace coind
