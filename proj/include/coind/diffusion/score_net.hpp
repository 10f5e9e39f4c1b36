#pragma once

#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "coind/diffusion/conditioning.hpp"
#include "coind/diffusion/schedule.hpp"
#include "coind/numkit/checkpoint.hpp"
#include "coind/numkit/dense_net.hpp"
#include "coind/numkit/matrix.hpp"
#include "coind/world/attribute_space.hpp"
#include "coind/world/gaussian_world.hpp"
#include "coind/world/oracle.hpp"

namespace coind {

/// Anything that predicts the noise of a batch of noised points.
template <typename M>
concept EpsilonModel = requires(const M& m, const Matrix& x, std::span<const int> t,
                                std::span<const ConditionVector> c) {
  { m.predict_eps(x, t, c) } -> std::convertible_to<Matrix>;
};

struct NetLayout {
  std::size_t data_dim = 2;
  std::vector<std::size_t> value_counts;
  std::size_t time_embedding_width = 16;

  [[nodiscard]] std::size_t input_width() const {
    return data_dim + time_embedding_width + 1 + ConditionEncoding(value_counts).width();
  }
  bool operator==(const NetLayout&) const = default;
};

/// Dense network over [x | time embedding | condition encoding] with a
/// continuous time input tau in [0, 1]. Output width equals the data dimension.
class ConditionalNet {
 public:
  ConditionalNet() = default;
  ConditionalNet(NetLayout layout, const std::vector<std::size_t>& hidden, Rng& rng)
      : layout_(std::move(layout)), encoding_(layout_.value_counts), net_(sizes(layout_, hidden), rng) {}
  ConditionalNet(NetLayout layout, DenseNet net)
      : layout_(std::move(layout)), encoding_(layout_.value_counts), net_(std::move(net)) {
    if (net_.input_size() != layout_.input_width() || net_.output_size() != layout_.data_dim) {
      throw ShapeError("ConditionalNet: network sizes do not match the layout");
    }
  }

  [[nodiscard]] const NetLayout& layout() const noexcept { return layout_; }
  [[nodiscard]] const DenseNet& net() const noexcept { return net_; }
  [[nodiscard]] DenseNet& net() noexcept { return net_; }
  [[nodiscard]] const ConditionEncoding& encoding() const noexcept { return encoding_; }

  [[nodiscard]] Matrix build_input(const Matrix& x, std::span<const double> tau,
                                   std::span<const ConditionVector> conds) const {
    if (x.cols() != layout_.data_dim) throw ShapeError("ConditionalNet: data dimension mismatch");
    if (tau.size() != x.rows() || conds.size() != x.rows()) {
      throw ShapeError("ConditionalNet: need one time and one condition per row");
    }
    const std::size_t te = layout_.time_embedding_width + 1;
    Matrix in(x.rows(), layout_.input_width());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto row = in.row(r);
      const auto xr = x.row(r);
      std::copy(xr.begin(), xr.end(), row.begin());
      time_embedding(tau[r], layout_.time_embedding_width, row.subspan(layout_.data_dim, te));
      encoding_.encode(conds[r], row.subspan(layout_.data_dim + te));
    }
    return in;
  }

  [[nodiscard]] Matrix predict(const Matrix& x, std::span<const double> tau,
                               std::span<const ConditionVector> conds) const {
    return net_.forward(build_input(x, tau, conds));
  }

 private:
  static std::vector<std::size_t> sizes(const NetLayout& layout, const std::vector<std::size_t>& hidden) {
    std::vector<std::size_t> s{layout.input_width()};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(layout.data_dim);
    return s;
  }

  NetLayout layout_;
  ConditionEncoding encoding_;
  DenseNet net_;
};

/// Conditional noise predictor eps_theta(x_t, t, c) over integer timesteps.
class ScoreNet {
 public:
  ScoreNet() = default;
  ScoreNet(NetLayout layout, const std::vector<std::size_t>& hidden, int num_timesteps, Rng& rng)
      : body_(std::move(layout), hidden, rng), steps_(num_timesteps) {
    if (steps_ < 1) throw ConfigError("ScoreNet: num_timesteps must be >= 1");
  }
  ScoreNet(ConditionalNet body, int num_timesteps) : body_(std::move(body)), steps_(num_timesteps) {
    if (steps_ < 1) throw ConfigError("ScoreNet: num_timesteps must be >= 1");
  }

  [[nodiscard]] const ConditionalNet& body() const noexcept { return body_; }
  [[nodiscard]] ConditionalNet& body() noexcept { return body_; }
  [[nodiscard]] const DenseNet& net() const noexcept { return body_.net(); }
  [[nodiscard]] DenseNet& net() noexcept { return body_.net(); }
  [[nodiscard]] int num_timesteps() const noexcept { return steps_; }
  [[nodiscard]] std::size_t data_dim() const noexcept { return body_.layout().data_dim; }

  [[nodiscard]] std::vector<double> time_fractions(std::span<const int> t) const {
    std::vector<double> tau(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) tau[i] = static_cast<double>(t[i]) / steps_;
    return tau;
  }

  [[nodiscard]] Matrix build_input(const Matrix& x_t, std::span<const int> t,
                                   std::span<const ConditionVector> conds) const {
    return body_.build_input(x_t, time_fractions(t), conds);
  }

  [[nodiscard]] Matrix predict_eps(const Matrix& x_t, std::span<const int> t,
                                   std::span<const ConditionVector> conds) const {
    return net().forward(build_input(x_t, t, conds));
  }

  /// Checkpoint with layout metadata; the optimizer section is filled by the caller if needed.
  [[nodiscard]] Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.layer_sizes = net().layer_sizes();
    const auto p = net().parameters();
    ck.params.assign(p.begin(), p.end());
    const auto& l = body_.layout();
    ck.metadata["model.kind"] = "score_net";
    ck.metadata["model.data_dim"] = std::to_string(l.data_dim);
    ck.metadata["model.time_embedding_width"] = std::to_string(l.time_embedding_width);
    ck.metadata["model.num_timesteps"] = std::to_string(steps_);
    std::string counts;
    for (std::size_t i = 0; i < l.value_counts.size(); ++i) {
      counts += (i ? "," : "") + std::to_string(l.value_counts[i]);
    }
    ck.metadata["model.value_counts"] = counts;
    return ck;
  }

  static ScoreNet from_checkpoint(const Checkpoint& ck) {
    const auto get = [&](const std::string& key) -> const std::string& {
      const auto it = ck.metadata.find(key);
      if (it == ck.metadata.end()) throw FormatError("checkpoint: missing metadata '" + key + "'");
      return it->second;
    };
    if (get("model.kind") != "score_net") throw FormatError("checkpoint: not a score_net checkpoint");
    NetLayout layout;
    try {
      layout.data_dim = std::stoul(get("model.data_dim"));
      layout.time_embedding_width = std::stoul(get("model.time_embedding_width"));
      const std::string& counts = get("model.value_counts");
      std::size_t start = 0;
      while (start <= counts.size()) {
        const auto comma = counts.find(',', start);
        layout.value_counts.push_back(std::stoul(counts.substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      const int steps = std::stoi(get("model.num_timesteps"));
      return ScoreNet(ConditionalNet(layout, DenseNet(ck.layer_sizes, ck.params)), steps);
    } catch (const std::logic_error&) {
      throw FormatError("checkpoint: malformed model metadata");
    }
  }

 private:
  ConditionalNet body_;
  int steps_ = 1000;
};

/// Exact noise predictor of the training (or true) distribution of a Gaussian
/// world: eps = -sqrt(1 - ab_t) * score of the noised conditional.
class OracleEpsModel {
 public:
  OracleEpsModel(GaussianWorld world, AttributeSpace space, NoiseSchedule schedule)
      : world_(std::move(world)), space_(std::move(space)), schedule_(std::move(schedule)) {}

  [[nodiscard]] Matrix predict_eps(const Matrix& x_t, std::span<const int> t,
                                   std::span<const ConditionVector> conds) const {
    if (t.size() != x_t.rows() || conds.size() != x_t.rows()) throw ShapeError("OracleEpsModel: row count mismatch");
    Matrix out(x_t.rows(), x_t.cols());
    for (std::size_t r = 0; r < x_t.rows(); ++r) {
      const double ab = schedule_.alpha_bar(t[r]);
      const auto s = oracle_conditional_score(world_, space_, conds[r], x_t.row(r), ab);
      const double scale = -std::sqrt(1.0 - ab);
      for (std::size_t k = 0; k < s.size(); ++k) out(r, k) = scale * s[k];
    }
    return out;
  }

  [[nodiscard]] const AttributeSpace& space() const noexcept { return space_; }
  [[nodiscard]] const GaussianWorld& world() const noexcept { return world_; }

 private:
  GaussianWorld world_;
  AttributeSpace space_;
  NoiseSchedule schedule_;
};

}  // namespace coind
