#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "coind/diffusion/schedule.hpp"
#include "coind/diffusion/score_net.hpp"
#include "coind/evaluation/classifier.hpp"
#include "coind/evaluation/implicit_classifier.hpp"
#include "coind/numkit/error.hpp"
#include "coind/numkit/matrix.hpp"
#include "coind/world/attribute_space.hpp"
#include "coind/world/dataset.hpp"

namespace coind {

/// Accuracy broken down by attribute tuple.
struct GroupMetrics {
  std::map<AttributeTuple, double> group_accuracy;
  std::map<AttributeTuple, std::size_t> group_size;
  std::vector<AttributeTuple> excluded_groups;  ///< tuples with no test rows
  double test_accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double worst_group_accuracy = 0.0;
};

/// Groups are all tuples of `space`; a prediction is correct when it equals the
/// row's value of `target_attribute`.
inline GroupMetrics group_metrics(std::span<const int> predictions, const LabeledDataset& test,
                                  std::size_t target_attribute, const AttributeSpace& space) {
  test.validate();
  if (predictions.size() != test.size()) throw ShapeError("group_metrics: one prediction per test row required");
  if (test.size() == 0) throw ConfigError("group_metrics: empty test set");
  std::map<AttributeTuple, std::size_t> hits;
  GroupMetrics m;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < test.size(); ++r) {
    const auto& t = test.labels[r];
    const bool ok = predictions[r] == t.at(target_attribute);
    ++m.group_size[t];
    hits[t] += ok ? 1 : 0;
    correct += ok ? 1 : 0;
  }
  m.test_accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  double sum = 0.0;
  m.worst_group_accuracy = 1.0;
  for (const auto& t : space.all_tuples()) {
    const auto it = m.group_size.find(t);
    if (it == m.group_size.end()) {
      m.excluded_groups.push_back(t);
      continue;
    }
    const double acc = static_cast<double>(hits[t]) / static_cast<double>(it->second);
    m.group_accuracy[t] = acc;
    sum += acc;
    m.worst_group_accuracy = std::min(m.worst_group_accuracy, acc);
  }
  if (m.group_accuracy.empty()) throw ConfigError("group_metrics: no test row belongs to a known group");
  m.balanced_accuracy = sum / static_cast<double>(m.group_accuracy.size());
  return m;
}

inline GroupMetrics group_metrics(const Classifier& classifier, const LabeledDataset& test,
                                  std::size_t target_attribute, const AttributeSpace& space) {
  const auto pred = classifier.predict(test.x);
  return group_metrics(pred, test, target_attribute, space);
}

/// Classifies every test row by the argmax of the implicit posterior over the
/// target attribute.
template <EpsilonModel M>
GroupMetrics implicit_generative_classifier_metrics(const M& model, const LabeledDataset& test,
                                                    std::size_t target_attribute, const AttributeSpace& space,
                                                    const NoiseSchedule& schedule,
                                                    const ImplicitClassifierConfig& config, Rng& rng) {
  const ProbabilityTable table =
      implicit_class_probs(model, test.x, space.value_counts(), {target_attribute}, schedule, config, rng);
  std::vector<int> pred(test.size());
  for (std::size_t r = 0; r < test.size(); ++r) {
    const auto row = table.probs.row(r);
    pred[r] = table.candidates[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())][0];
  }
  return group_metrics(pred, test, target_attribute, space);
}

struct ConformityReport {
  double cs_all = 0.0;     ///< over every requested tuple
  double cs_unseen = std::numeric_limits<double>::quiet_NaN();  ///< tuples outside the training support
  std::map<AttributeTuple, double> per_tuple;
};

/// Fraction of generated rows whose predicted tuple matches the requested one.
inline double conformity_fraction(const Matrix& samples, const AttributeTuple& requested,
                                  const AttributePredictors& predictors) {
  if (samples.rows() == 0) throw ConfigError("conformity: no samples");
  const auto pred = predictors.predict(samples);
  std::size_t hit = 0;
  for (const auto& p : pred) hit += p == requested ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(samples.rows());
}

/// Conformity over `trials`, asking `generator(tuple, count)` for
/// `samples_per_tuple` rows per tuple.
template <typename Generator>
ConformityReport conformity_score(Generator&& generator, const AttributePredictors& predictors,
                                  const std::vector<AttributeTuple>& trials, std::size_t samples_per_tuple,
                                  const AttributeSpace& space) {
  if (trials.empty()) throw ConfigError("conformity_score: no trial tuples");
  if (predictors.attribute_count() != space.attribute_count()) {
    throw StateError("conformity_score: predictors are not trained for this attribute space");
  }
  ConformityReport rep;
  double all = 0.0;
  double unseen = 0.0;
  std::size_t unseen_count = 0;
  for (const auto& t : trials) {
    const Matrix x = generator(t, samples_per_tuple);
    const double cs = conformity_fraction(x, t, predictors);
    rep.per_tuple[t] = cs;
    all += cs;
    if (!space.in_support(t)) {
      unseen += cs;
      ++unseen_count;
    }
  }
  rep.cs_all = all / static_cast<double>(trials.size());
  if (unseen_count > 0) rep.cs_unseen = unseen / static_cast<double>(unseen_count);
  return rep;
}

struct W2Result {
  double distance = 0.0;
  bool regularized = false;  ///< a covariance was singular and got 1e-8 I added
};

namespace detail {

inline Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline void moments(const Matrix& x, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
  const auto m = as_eigen(x);
  mean = m.colwise().mean().transpose();
  const Eigen::MatrixXd centered = m.rowwise() - mean.transpose();
  cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

}  // namespace detail

/// 2-Wasserstein distance between Gaussians moment-matched to the two clouds.
inline W2Result gaussian_w2(const Matrix& a, const Matrix& b) {
  if (a.rows() < 2 || b.rows() < 2) throw ConfigError("gaussian_w2: each cloud needs at least two samples");
  if (a.cols() != b.cols()) throw ShapeError("gaussian_w2: clouds differ in dimension");
  Eigen::VectorXd ma;
  Eigen::VectorXd mb;
  Eigen::MatrixXd ca;
  Eigen::MatrixXd cb;
  detail::moments(a, ma, ca);
  detail::moments(b, mb, cb);
  W2Result res;
  const auto eye = Eigen::MatrixXd::Identity(ca.rows(), ca.cols());
  for (Eigen::MatrixXd* c : {&ca, &cb}) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*c, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 1e-12) {
      *c += 1e-8 * eye;
      res.regularized = true;
    }
  }
  const Eigen::MatrixXd ra = detail::sqrt_psd(ca);
  const Eigen::MatrixXd cross = detail::sqrt_psd(ra * cb * ra);
  const double sq = (ma - mb).squaredNorm() + (ca + cb - 2.0 * cross).trace();
  res.distance = std::sqrt(std::max(sq, 0.0));
  return res;
}

}  // namespace coind
