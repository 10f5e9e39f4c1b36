#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "coind/numkit/error.hpp"
#include "coind/numkit/matrix.hpp"
#include "coind/numkit/rng.hpp"

namespace coind {

enum class Activation { kSilu, kIdentity };

namespace detail {

inline double sigmoid(double z) noexcept { return 1.0 / (1.0 + std::exp(-z)); }

inline double activate(Activation a, double z) noexcept {
  return a == Activation::kSilu ? z * sigmoid(z) : z;
}

inline double activate_grad(Activation a, double z) noexcept {
  if (a == Activation::kIdentity) return 1.0;
  const double s = sigmoid(z);
  return s * (1.0 + z * (1.0 - s));
}

}  // namespace detail

/// Activations recorded by a taped forward pass, consumed by backward.
struct ForwardTape {
  std::vector<Matrix> inputs;          // input to each layer
  std::vector<Matrix> preactivations;  // z = a W + b for each layer
  std::size_t parameter_count = 0;

  [[nodiscard]] bool empty() const noexcept { return inputs.empty(); }
};

/// Gradients of a scalar loss w.r.t. every parameter (flat, same layout as
/// DenseNet::parameters()) and w.r.t. the network input.
struct ParameterGradients {
  std::vector<double> params;
  Matrix input;
};

/// Fully connected network: SiLU on hidden layers, identity on the output.
///
/// All parameters live in a single flat buffer. Layer l stores its weight as
/// an (in x out) row-major block followed by its bias of length out.
class DenseNet {
 public:
  DenseNet() = default;

  /// Weights ~ N(0, 1/fan_in); biases zero.
  DenseNet(std::vector<std::size_t> layer_sizes, Rng& rng) : sizes_(std::move(layer_sizes)) {
    layout();
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      for (std::size_t k = 0; k < sizes_[l] * sizes_[l + 1]; ++k) params_[weight_offset_[l] + k] = scale * rng.normal();
    }
  }

  /// Network with explicit flat parameters (e.g. loaded from a checkpoint).
  DenseNet(std::vector<std::size_t> layer_sizes, std::vector<double> params) : sizes_(std::move(layer_sizes)) {
    layout();
    if (params.size() != params_.size()) {
      throw ShapeError("DenseNet: expected " + std::to_string(params_.size()) + " parameters, got " +
                       std::to_string(params.size()));
    }
    params_ = std::move(params);
  }

  [[nodiscard]] const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
  [[nodiscard]] std::size_t layer_count() const noexcept { return sizes_.empty() ? 0 : sizes_.size() - 1; }
  [[nodiscard]] std::size_t input_size() const noexcept { return sizes_.front(); }
  [[nodiscard]] std::size_t output_size() const noexcept { return sizes_.back(); }
  [[nodiscard]] std::size_t parameter_count() const noexcept { return params_.size(); }

  [[nodiscard]] std::span<double> parameters() noexcept { return params_; }
  [[nodiscard]] std::span<const double> parameters() const noexcept { return params_; }

  [[nodiscard]] Activation activation(std::size_t layer) const noexcept {
    return layer + 1 == layer_count() ? Activation::kIdentity : Activation::kSilu;
  }

  [[nodiscard]] ConstRowMajorMap weight(std::size_t layer) const {
    return {params_.data() + weight_offset_[layer], static_cast<Eigen::Index>(sizes_[layer]),
            static_cast<Eigen::Index>(sizes_[layer + 1])};
  }
  [[nodiscard]] RowMajorMap weight(std::size_t layer) {
    return {params_.data() + weight_offset_[layer], static_cast<Eigen::Index>(sizes_[layer]),
            static_cast<Eigen::Index>(sizes_[layer + 1])};
  }
  [[nodiscard]] std::span<const double> bias(std::size_t layer) const {
    return {params_.data() + bias_offset_[layer], sizes_[layer + 1]};
  }
  [[nodiscard]] std::span<double> bias(std::size_t layer) {
    return {params_.data() + bias_offset_[layer], sizes_[layer + 1]};
  }

  /// Human-readable name of the tensor holding flat parameter `index`.
  [[nodiscard]] std::string describe_parameter(std::size_t index) const {
    for (std::size_t l = 0; l < layer_count(); ++l) {
      if (index >= weight_offset_[l] && index < bias_offset_[l]) {
        const std::size_t k = index - weight_offset_[l];
        std::ostringstream os;
        os << "layer " << l << " weight[" << k / sizes_[l + 1] << "," << k % sizes_[l + 1] << "]";
        return os.str();
      }
      if (index >= bias_offset_[l] && index < bias_offset_[l] + sizes_[l + 1]) {
        return "layer " + std::to_string(l) + " bias[" + std::to_string(index - bias_offset_[l]) + "]";
      }
    }
    return "parameter " + std::to_string(index);
  }

  [[nodiscard]] Matrix forward(const Matrix& input) const { return run(input, nullptr); }

  /// Forward pass that records what backward needs into `tape`.
  [[nodiscard]] Matrix forward(const Matrix& input, ForwardTape& tape) const { return run(input, &tape); }

  /// Reverse pass for a loss whose gradient w.r.t. the output is `output_grad`.
  [[nodiscard]] ParameterGradients backward(const ForwardTape& tape, const Matrix& output_grad) const {
    if (tape.empty() || tape.parameter_count != params_.size() || tape.inputs.size() != layer_count()) {
      throw StateError("DenseNet::backward: no matching forward tape recorded");
    }
    const std::size_t batch = tape.inputs.front().rows();
    if (output_grad.rows() != batch || output_grad.cols() != output_size()) {
      throw ShapeError("DenseNet::backward: loss gradient shape does not match output");
    }
    ParameterGradients grads{std::vector<double>(params_.size(), 0.0), Matrix()};
    Matrix upstream = output_grad;
    for (std::size_t l = layer_count(); l-- > 0;) {
      const Matrix& z = tape.preactivations[l];
      const Activation act = activation(l);
      Matrix dz = upstream;
      if (act != Activation::kIdentity) {
        for (std::size_t k = 0; k < dz.size(); ++k) dz.flat()[k] *= detail::activate_grad(act, z.flat()[k]);
      }
      RowMajorMap dw(grads.params.data() + weight_offset_[l], static_cast<Eigen::Index>(sizes_[l]),
                     static_cast<Eigen::Index>(sizes_[l + 1]));
      dw.noalias() = as_eigen(tape.inputs[l]).transpose() * as_eigen(dz);
      Eigen::Map<Eigen::RowVectorXd> db(grads.params.data() + bias_offset_[l],
                                        static_cast<Eigen::Index>(sizes_[l + 1]));
      db = as_eigen(dz).colwise().sum();
      Matrix next(batch, sizes_[l]);
      as_eigen(next).noalias() = as_eigen(dz) * weight(l).transpose();
      upstream = std::move(next);
    }
    grads.input = std::move(upstream);
    return grads;
  }

 private:
  void layout() {
    if (sizes_.size() < 2) throw ShapeError("DenseNet: need at least input and output sizes");
    std::size_t offset = 0;
    weight_offset_.clear();
    bias_offset_.clear();
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] == 0 || sizes_[l + 1] == 0) throw ShapeError("DenseNet: zero-width layer");
      weight_offset_.push_back(offset);
      offset += sizes_[l] * sizes_[l + 1];
      bias_offset_.push_back(offset);
      offset += sizes_[l + 1];
    }
    params_.assign(offset, 0.0);
  }

  Matrix run(const Matrix& input, ForwardTape* tape) const {
    if (input.cols() != input_size()) {
      throw ShapeError("DenseNet::forward: input has " + std::to_string(input.cols()) + " columns, expected " +
                       std::to_string(input_size()));
    }
    if (tape != nullptr) {
      tape->inputs.clear();
      tape->preactivations.clear();
      tape->parameter_count = params_.size();
    }
    Matrix a = input;
    for (std::size_t l = 0; l < layer_count(); ++l) {
      Matrix z(a.rows(), sizes_[l + 1]);
      auto zm = as_eigen(z);
      zm.noalias() = as_eigen(a) * weight(l);
      const auto b = bias(l);
      for (std::size_t r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
      }
      Matrix out = z;
      const Activation act = activation(l);
      if (act != Activation::kIdentity) {
        for (double& v : out.flat()) v = detail::activate(act, v);
      }
      if (tape != nullptr) {
        tape->inputs.push_back(std::move(a));
        tape->preactivations.push_back(std::move(z));
      }
      a = std::move(out);
    }
    require_finite(a, "DenseNet::forward output");
    return a;
  }

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::vector<double> params_;
};

}  // namespace coind
