#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "coind/numkit/adam.hpp"
#include "coind/numkit/dense_net.hpp"
#include "coind/numkit/error.hpp"
#include "coind/numkit/matrix.hpp"
#include "coind/numkit/rng.hpp"
#include "coind/world/dataset.hpp"
#include "coind/world/gaussian_world.hpp"

namespace coind {

struct ClassifierConfig {
  std::vector<std::size_t> hidden{32, 32};
  std::size_t steps = 1500;
  std::size_t batch_size = 256;
  double learning_rate = 3e-3;
  std::uint64_t seed = 0;
};

/// Dense softmax classifier over feature rows.
class Classifier {
 public:
  Classifier() = default;
  Classifier(DenseNet net, std::size_t classes) : net_(std::move(net)), classes_(classes) {}

  [[nodiscard]] bool trained() const noexcept { return classes_ > 0; }
  [[nodiscard]] std::size_t classes() const noexcept { return classes_; }
  [[nodiscard]] const DenseNet& net() const noexcept { return net_; }

  [[nodiscard]] Matrix predict_proba(const Matrix& x) const {
    require_trained();
    Matrix p = net_.forward(x);
    for (std::size_t r = 0; r < p.rows(); ++r) softmax_row(p.row(r));
    return p;
  }

  [[nodiscard]] std::vector<int> predict(const Matrix& x) const {
    require_trained();
    const Matrix logits = net_.forward(x);
    std::vector<int> out(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const auto row = logits.row(r);
      out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
  }

  static void softmax_row(std::span<double> row) {
    const double hi = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) {
      v = std::exp(v - hi);
      z += v;
    }
    for (double& v : row) v /= z;
  }

 private:
  void require_trained() const {
    if (!trained()) throw StateError("Classifier: used before training");
  }

  DenseNet net_;
  std::size_t classes_ = 0;
};

/// Minimises mean cross-entropy with Adam on minibatches drawn with replacement.
inline Classifier train_classifier(const Matrix& x, std::span<const int> y, std::size_t classes,
                                   const ClassifierConfig& config) {
  if (x.rows() != y.size() || x.rows() == 0) throw ShapeError("train_classifier: need one label per nonempty row");
  if (classes < 2) throw ConfigError("train_classifier: need at least two classes");
  std::set<int> seen;
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ConfigError("train_classifier: label " + std::to_string(label) + " out of range");
    }
    seen.insert(label);
  }
  if (seen.size() < 2) throw ConfigError("train_classifier: training labels contain a single class");

  Rng root(config.seed);
  Rng init = root.split(1);
  Rng batches = root.split(2);
  std::vector<std::size_t> sizes{x.cols()};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(classes);
  DenseNet net(sizes, init);
  AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  AdamState opt(adam, net.parameter_count());

  const std::size_t b = std::min(config.batch_size, x.rows());
  Matrix xb(b, x.cols());
  std::vector<int> yb(b);
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (std::size_t r = 0; r < b; ++r) {
      const std::size_t src = batches.below(x.rows());
      std::copy(x.row(src).begin(), x.row(src).end(), xb.row(r).begin());
      yb[r] = y[src];
    }
    ForwardTape tape;
    Matrix grad = net.forward(xb, tape);
    for (std::size_t r = 0; r < b; ++r) {
      auto row = grad.row(r);
      Classifier::softmax_row(row);
      row[static_cast<std::size_t>(yb[r])] -= 1.0;
      for (double& g : row) g /= static_cast<double>(b);
    }
    const auto grads = net.backward(tape, grad);
    opt.step(net.parameters(), grads.params, [&](std::size_t i) { return net.describe_parameter(i); });
  }
  return Classifier(std::move(net), classes);
}

/// Column `attribute` of the dataset's labels.
inline std::vector<int> attribute_column(const LabeledDataset& data, std::size_t attribute) {
  std::vector<int> y(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) y[r] = data.labels[r].at(attribute);
  return y;
}

/// Classifier for one attribute trained on a (typically synthetic) labeled dataset.
inline Classifier train_downstream_classifier(const LabeledDataset& data, std::size_t target_attribute,
                                              std::size_t value_count, const ClassifierConfig& config) {
  data.validate();
  return train_classifier(data.x, attribute_column(data, target_attribute), value_count, config);
}

/// One classifier per attribute, used to read the attributes of generated samples.
class AttributePredictors {
 public:
  AttributePredictors() = default;
  explicit AttributePredictors(std::vector<Classifier> per_attribute) : per_attribute_(std::move(per_attribute)) {}

  [[nodiscard]] std::size_t attribute_count() const noexcept { return per_attribute_.size(); }
  [[nodiscard]] const Classifier& at(std::size_t i) const { return per_attribute_.at(i); }

  /// Predicted tuple per row.
  [[nodiscard]] std::vector<AttributeTuple> predict(const Matrix& x) const {
    if (per_attribute_.empty()) throw StateError("AttributePredictors: no predictors trained");
    std::vector<AttributeTuple> out(x.rows(), AttributeTuple(per_attribute_.size()));
    for (std::size_t a = 0; a < per_attribute_.size(); ++a) {
      const auto y = per_attribute_[a].predict(x);
      for (std::size_t r = 0; r < x.rows(); ++r) out[r][a] = y[r];
    }
    return out;
  }

 private:
  std::vector<Classifier> per_attribute_;
};

/// Predictors fitted on `samples` draws from the full-support world.
inline AttributePredictors train_attribute_predictors(const GaussianWorld& world, const AttributeSpace& space,
                                                      std::size_t samples, const ClassifierConfig& config) {
  Rng rng(config.seed);
  const LabeledDataset data = sample_dataset(world, space.with_full_support(), samples, rng, Provenance::kRealTrain);
  std::vector<Classifier> per;
  for (std::size_t a = 0; a < space.attribute_count(); ++a) {
    ClassifierConfig c = config;
    c.seed = config.seed + 1 + a;
    per.push_back(train_downstream_classifier(data, a, space.value_count(a), c));
  }
  return AttributePredictors(std::move(per));
}

}  // namespace coind
