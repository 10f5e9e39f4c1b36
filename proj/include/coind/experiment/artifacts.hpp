#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "coind/experiment/config.hpp"
#include "coind/experiment/pipeline.hpp"
#include "coind/numkit/checkpoint.hpp"
#include "coind/sampling/compose.hpp"
#include "coind/world/dataset.hpp"
#include "coind/world/oracle.hpp"

namespace coind {

namespace fs = std::filesystem;

namespace detail {

inline Json number_or_null(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }

inline std::string tuple_key(const AttributeSpace& space, const AttributeTuple& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) s += (i ? "_" : "") + space.label(i, t[i]);
  return s;
}

inline Json groups_json(const GroupMetrics& g, const AttributeSpace& space) {
  Json groups = Json::object();
  for (const auto& [t, a] : g.group_accuracy) {
    groups[tuple_key(space, t)] = {{"accuracy", a}, {"count", g.group_size.at(t)}};
  }
  Json excluded = Json::array();
  for (const auto& t : g.excluded_groups) excluded.push_back(tuple_key(space, t));
  return {{"test_acc", g.test_accuracy},
          {"balanced_acc", g.balanced_accuracy},
          {"wga", g.worst_group_accuracy},
          {"groups", groups},
          {"excluded_groups", excluded}};
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_dataset(const fs::path& path, const LabeledDataset& data, const AttributeSpace& space) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_dataset_csv(out, data, space);
}

inline LabeledDataset read_dataset(const fs::path& path, const AttributeSpace& space) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  return read_dataset_csv(in, space);
}

}  // namespace detail

inline Json report_to_json(const ExperimentReport& r, const AttributeSpace& full_space) {
  Json arms = Json::object();
  for (const auto& name : r.arm_order) {
    const ArmMetrics& m = r.arms.at(name);
    Json a{{"lambda", m.lambda},
           {"final_l_score", detail::number_or_null(m.final_l_score)},
           {"final_l_ci", detail::number_or_null(m.final_l_ci)},
           {"jsd", detail::number_or_null(m.jsd)},
           {"full_evaluation", m.full_evaluation}};
    if (m.full_evaluation) {
      Json per = Json::object();
      for (const auto& [t, v] : m.cs.per_tuple) per[detail::tuple_key(full_space, t)] = v;
      a["cs"] = {{"cs_all", m.cs.cs_all}, {"cs_unseen", detail::number_or_null(m.cs.cs_unseen)}, {"per_tuple", per}};
      a["w2_unseen"] = detail::number_or_null(m.w2_unseen);
      a["w2_regularized"] = m.w2_regularized;
      a["downstream"] = detail::groups_json(m.downstream, full_space);
      a["implicit"] = detail::groups_json(m.implicit, full_space);
    }
    arms[name] = a;
  }
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << r.config_hash;
  return {{"config_hash", hash.str()},
          {"arms", arms},
          {"real_full_support_classifier", detail::groups_json(r.real_reference, full_space)}};
}

/// Flat `arm,metric,value` rows.
inline std::string report_to_csv(const ExperimentReport& r) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "arm,metric,value\n";
  const auto row = [&](const std::string& arm, const std::string& metric, double v) {
    os << arm << "," << metric << ",";
    if (std::isnan(v)) os << "nan";
    else os << v;
    os << "\n";
  };
  for (const auto& name : r.arm_order) {
    const ArmMetrics& m = r.arms.at(name);
    row(name, "lambda", m.lambda);
    row(name, "final_l_score", m.final_l_score);
    row(name, "final_l_ci", m.final_l_ci);
    row(name, "jsd", m.jsd);
    if (!m.full_evaluation) continue;
    row(name, "cs_all", m.cs.cs_all);
    row(name, "cs_unseen", m.cs.cs_unseen);
    row(name, "w2_unseen", m.w2_unseen);
    row(name, "test_acc", m.downstream.test_accuracy);
    row(name, "balanced_acc", m.downstream.balanced_accuracy);
    row(name, "wga", m.downstream.worst_group_accuracy);
    row(name, "implicit_test_acc", m.implicit.test_accuracy);
    row(name, "implicit_balanced_acc", m.implicit.balanced_accuracy);
    row(name, "implicit_wga", m.implicit.worst_group_accuracy);
  }
  row("real_full_support", "test_acc", r.real_reference.test_accuracy);
  row("real_full_support", "balanced_acc", r.real_reference.balanced_accuracy);
  row("real_full_support", "wga", r.real_reference.worst_group_accuracy);
  return os.str();
}

/// Checkpoint of a trained arm tagged with its provenance.
inline Checkpoint arm_checkpoint(const TrainedArm& arm, const RunConfig& cfg) {
  Checkpoint ck = arm.model.to_checkpoint();
  ck.config_hash = config_hash(cfg);
  ck.metadata["run.arm"] = arm.name;
  std::ostringstream lam;
  lam << std::setprecision(std::numeric_limits<double>::max_digits10) << arm.lambda;
  ck.metadata["run.lambda"] = lam.str();
  ck.metadata["run.support"] = arm.space.train_support().size() == arm.space.all_tuples().size() ? "full" : "partial";
  return ck;
}

/// Model loaded from a checkpoint, remembering which arm produced it.
struct LoadedModel {
  ScoreNet model;
  std::string source_arm;
  std::uint64_t config_hash = 0;
};

inline LoadedModel load_arm_model(const fs::path& path) {
  const Checkpoint ck = load_checkpoint(path.string());
  const auto it = ck.metadata.find("run.arm");
  return {ScoreNet::from_checkpoint(ck), it == ck.metadata.end() ? "unknown" : it->second, ck.config_hash};
}

/// Writes the model to `path`, reads it back, and checks the parameters are
/// bit-identical. Returns the checkpoint's content hash.
inline std::uint64_t checkpoint_roundtrip(const ScoreNet& model, const fs::path& path) {
  const Checkpoint ck = model.to_checkpoint();
  save_checkpoint(ck, path.string());
  const ScoreNet back = ScoreNet::from_checkpoint(load_checkpoint(path.string()));
  const auto a = model.net().parameters();
  const auto b = back.net().parameters();
  if (a.size() != b.size() || !std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
        return std::memcmp(&x, &y, sizeof(double)) == 0;
      })) {
    throw StateError("checkpoint_roundtrip: parameters differ after reload");
  }
  return fnv1a64(serialize_checkpoint(ck));
}

/// Train, sample and evaluate the vanilla (lambda = 0) and CoInD arms under
/// shared seeds, plus an optional vanilla arm on full support. Writes every
/// artifact under `cfg.output_dir`; on a numeric failure leaves a FAILED
/// marker next to the partial artifacts and rethrows.
inline ExperimentReport run_experiment(const RunConfig& cfg) {
  validate_run_config(cfg);
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);
  fs::remove(out / "FAILED");
  detail::write_text(out / "config.json", to_json(cfg).dump(2) + "\n");

  ExperimentReport report;
  report.config_hash = config_hash(cfg);
  try {
    const AttributeSpace train_space = cfg.train_space();
    const AttributeSpace full_space = cfg.full_space();
    const GaussianWorld world = cfg.make_world();
    const LabeledDataset train =
        sample_dataset(world, train_space, cfg.trainer.train_samples, derive_seed(cfg.seed, stage::kTrainData));
    detail::write_dataset(out / "train.csv", train, train_space);
    const EvaluationContext ctx = make_evaluation_context(cfg);
    report.real_reference = ctx.real_reference;

    struct ArmPlan {
      std::string name;
      double lambda;
      bool full_support;
    };
    std::vector<ArmPlan> plan{{"vanilla", 0.0, false}, {"coind", cfg.trainer.lambda, false}};
    if (cfg.evaluation.full_support_reference && cfg.support.mode != SupportMode::kFull) {
      plan.push_back({"full_vanilla", 0.0, true});
    }
    for (const auto& p : plan) {
      const fs::path dir = out / p.name;
      fs::create_directories(dir);
      const AttributeSpace& space = p.full_support ? full_space : train_space;
      const LabeledDataset full_train =
          p.full_support ? sample_dataset(world, full_space, cfg.trainer.train_samples,
                                          derive_seed(cfg.seed, stage::kFullData))
                         : LabeledDataset{};
      std::ofstream loss(dir / "loss.csv");
      const TrainedArm arm = train_arm(cfg, p.name, p.lambda, p.full_support ? full_train : train, space, &loss);
      save_checkpoint(arm_checkpoint(arm, cfg), (dir / "model.ckpt").string());

      ArmSamples samples;
      const ArmMetrics m = evaluate_model(arm.model, arm.lambda, arm.log, cfg, ctx, !p.full_support, &samples);
      for (const auto& [t, x] : samples.per_tuple) {
        const LabeledDataset ds{x, std::vector<AttributeTuple>(x.rows(), t), Provenance::kSynthetic};
        detail::write_dataset(dir / ("samples_" + detail::tuple_key(full_space, t) + ".csv"), ds, full_space);
      }
      if (samples.synthetic.size() > 0) detail::write_dataset(dir / "synthetic.csv", samples.synthetic, full_space);
      report.arm_order.push_back(p.name);
      report.arms[p.name] = m;
    }
    check_report_invariants(report);
    detail::write_text(out / "metrics.json", report_to_json(report, full_space).dump(2) + "\n");
    detail::write_text(out / "metrics.csv", report_to_csv(report));
  } catch (const NumericError& e) {
    detail::write_text(out / "FAILED", std::string("numeric failure: ") + e.what() + "\n");
    throw;
  }
  return report;
}

struct PlotExportOptions {
  std::size_t grid_w = 64;
  std::size_t grid_h = 64;
  double extent = 2.5;  ///< grid covers [-extent, extent]^2
  /// Noise level of the learned-score grids; t = 1 is the nearly clean score.
  int timestep = 1;
};

/// Writes plots/panel_{train,true,vanilla,coind}.csv (x0,x1,<attributes>) and
/// plots/grid_{oracle,vanilla,coind}.csv with composed scores on a regular grid
/// for the target composition (the first unseen tuple, else the last tuple).
inline void export_plot_data(const fs::path& run_dir, const PlotExportOptions& opt = {}) {
  for (const char* required : {"config.json", "train.csv", "metrics.json", "vanilla/model.ckpt", "coind/model.ckpt"}) {
    if (!fs::exists(run_dir / required)) {
      throw StateError("export_plot_data: incomplete run directory, missing " + std::string(required));
    }
  }
  if (opt.grid_w == 0 || opt.grid_h == 0) throw ConfigError("export_plot_data: grid must be nonempty");
  if (!(opt.extent > 0.0)) throw ConfigError("export_plot_data: extent must be positive");
  RunConfig cfg = parse_run_config(detail::read_text(run_dir / "config.json"));
  const GaussianWorld world = cfg.make_world();
  if (world.dim() != 2) throw ConfigError("export_plot_data: plots need a two-dimensional world");
  const AttributeSpace train_space = cfg.train_space();
  const AttributeSpace full_space = cfg.full_space();
  const NoiseSchedule schedule = cfg.make_schedule();
  const fs::path plots = run_dir / "plots";
  fs::create_directories(plots);

  const LabeledDataset train = detail::read_dataset(run_dir / "train.csv", train_space);
  detail::write_dataset(plots / "panel_train.csv", train, train_space);
  const LabeledDataset truth =
      sample_dataset(world, full_space, train.size(), derive_seed(cfg.seed, stage::kFullData), Provenance::kRealTest);
  detail::write_dataset(plots / "panel_true.csv", truth, full_space);
  for (const char* arm : {"vanilla", "coind"}) {
    std::vector<LabeledDataset> parts;
    for (const auto& t : full_space.all_tuples()) {
      const fs::path f = run_dir / arm / ("samples_" + detail::tuple_key(full_space, t) + ".csv");
      if (!fs::exists(f)) throw StateError("export_plot_data: missing " + f.string());
      parts.push_back(detail::read_dataset(f, full_space));
    }
    detail::write_dataset(plots / ("panel_" + std::string(arm) + ".csv"), concatenate(parts), full_space);
  }

  const auto unseen = train_space.unseen_tuples();
  const AttributeTuple target = unseen.empty() ? full_space.all_tuples().back() : unseen.front();
  Matrix grid(opt.grid_w * opt.grid_h, 2);
  for (std::size_t iy = 0; iy < opt.grid_h; ++iy) {
    for (std::size_t ix = 0; ix < opt.grid_w; ++ix) {
      const auto coord = [&](std::size_t i, std::size_t n) {
        return n == 1 ? 0.0 : -opt.extent + 2.0 * opt.extent * static_cast<double>(i) / static_cast<double>(n - 1);
      };
      grid(iy * opt.grid_w + ix, 0) = coord(ix, opt.grid_w);
      grid(iy * opt.grid_w + ix, 1) = coord(iy, opt.grid_h);
    }
  }
  const auto write_grid = [&](const std::string& name, const Matrix& scores, const std::vector<double>* logp) {
    std::ofstream os(plots / name);
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << "x0,x1,score0,score1" << (logp ? ",log_density" : "") << "\n";
    for (std::size_t r = 0; r < grid.rows(); ++r) {
      os << grid(r, 0) << "," << grid(r, 1) << "," << scores(r, 0) << "," << scores(r, 1);
      if (logp) os << "," << (*logp)[r];
      os << "\n";
    }
  };

  const auto mu = world.mean_of(target);
  const double var = world.sigma() * world.sigma();
  Matrix oracle(grid.rows(), 2);
  std::vector<double> logp(grid.rows());
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    const auto s = oracle_mixture_score(grid.row(r), {mu}, world.sigma());
    oracle(r, 0) = s[0];
    oracle(r, 1) = s[1];
    const double dx = grid(r, 0) - mu[0];
    const double dy = grid(r, 1) - mu[1];
    logp[r] = -0.5 * (dx * dx + dy * dy) / var - std::log(2.0 * std::numbers::pi * var);
  }
  write_grid("grid_oracle.csv", oracle, &logp);

  const GuidanceTerms terms = guidance_terms({target, GuidanceMode::kComposition, cfg.sampler.gamma});
  const double scale = -1.0 / std::sqrt(1.0 - schedule.alpha_bar(opt.timestep));
  for (const char* arm : {"vanilla", "coind"}) {
    const LoadedModel loaded = load_arm_model(run_dir / arm / "model.ckpt");
    Matrix scores = guided_eps(loaded.model, grid, opt.timestep, terms);
    for (double& v : scores.flat()) v *= scale;
    write_grid("grid_" + std::string(arm) + ".csv", scores, nullptr);
  }
}

}  // namespace coind
