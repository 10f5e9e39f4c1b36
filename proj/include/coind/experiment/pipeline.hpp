#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "coind/diffusion/schedule.hpp"
#include "coind/diffusion/score_net.hpp"
#include "coind/evaluation/classifier.hpp"
#include "coind/evaluation/implicit_classifier.hpp"
#include "coind/evaluation/metrics.hpp"
#include "coind/experiment/config.hpp"
#include "coind/sampling/ddim.hpp"
#include "coind/training/trainer.hpp"
#include "coind/world/dataset.hpp"

namespace coind {

/// Independent, reproducible seed for a named pipeline stage.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stage) { return Rng(seed).split(stage).key(); }

namespace stage {
inline constexpr std::uint64_t kTrainData = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kTrainer = 3;
inline constexpr std::uint64_t kFullData = 4;
inline constexpr std::uint64_t kPredictors = 10;
inline constexpr std::uint64_t kJsdSet = 11;
inline constexpr std::uint64_t kTestSet = 12;
inline constexpr std::uint64_t kImplicitSet = 13;
inline constexpr std::uint64_t kOracleCloud = 14;
inline constexpr std::uint64_t kRealReference = 15;
inline constexpr std::uint64_t kJsd = 20;
inline constexpr std::uint64_t kConformity = 21;
inline constexpr std::uint64_t kSynthetic = 22;
inline constexpr std::uint64_t kDownstream = 23;
inline constexpr std::uint64_t kImplicit = 24;
}  // namespace stage

struct TrainedArm {
  std::string name;
  double lambda = 0.0;
  AttributeSpace space;
  ScoreNet model;
  std::vector<TrainingLogRow> log;
};

inline ScoreNet init_model(const RunConfig& cfg, const AttributeSpace& space) {
  Rng init(derive_seed(cfg.seed, stage::kInit));
  return ScoreNet(NetLayout{cfg.world.attributes.front().means.front().size(), space.value_counts(),
                            cfg.model.time_embedding_width},
                  cfg.model.hidden, cfg.schedule.steps, init);
}

inline TrainerConfig trainer_config(const RunConfig& cfg, double lambda) {
  TrainerConfig tc;
  tc.lambda = lambda;
  tc.p_uncond = cfg.trainer.p_uncond;
  tc.batch_size = cfg.trainer.batch_size;
  tc.steps = cfg.trainer.steps;
  tc.adam.learning_rate = cfg.trainer.learning_rate;
  tc.seed = derive_seed(cfg.seed, stage::kTrainer);
  tc.weighting = cfg.trainer.weighting;
  tc.log_every = cfg.trainer.log_every;
  return tc;
}

/// Trains one arm from the shared initialisation and trainer seed.
inline TrainedArm train_arm(const RunConfig& cfg, const std::string& name, double lambda,
                            const LabeledDataset& data, const AttributeSpace& space,
                            std::ostream* loss_csv = nullptr) {
  TrainedArm arm{name, lambda, space, init_model(cfg, space), {}};
  Trainer trainer(arm.model, data, cfg.make_schedule(), trainer_config(cfg, lambda));
  trainer.run(loss_csv);
  arm.log = trainer.log();
  return arm;
}

/// Composed-score DDIM samples for one tuple.
template <EpsilonModel M>
Matrix generate_tuple(const M& model, const RunConfig& cfg, const NoiseSchedule& schedule, const AttributeTuple& tuple,
                      std::size_t count, Rng& rng) {
  const SamplingTarget target{tuple, GuidanceMode::kComposition, cfg.sampler.gamma};
  return ddim_sample(model, target, schedule, cfg.sampler.steps, count, cfg.make_world().dim(), rng);
}

/// `total` labeled samples spread evenly over every tuple of `space`.
template <EpsilonModel M>
LabeledDataset synthetic_dataset(const M& model, const RunConfig& cfg, const NoiseSchedule& schedule,
                                 const AttributeSpace& space, std::size_t total, Rng& rng) {
  const auto tuples = space.all_tuples();
  std::vector<LabeledDataset> parts;
  for (std::size_t k = 0; k < tuples.size(); ++k) {
    const std::size_t count = total / tuples.size() + (k < total % tuples.size() ? 1 : 0);
    if (count == 0) continue;
    LabeledDataset part{generate_tuple(model, cfg, schedule, tuples[k], count, rng),
                        std::vector<AttributeTuple>(count, tuples[k]), Provenance::kSynthetic};
    parts.push_back(std::move(part));
  }
  return concatenate(parts);
}

/// Arm-independent evaluation inputs, drawn once per experiment.
struct EvaluationContext {
  GaussianWorld world;
  AttributeSpace full_space;
  AttributeSpace train_space;
  NoiseSchedule schedule;
  AttributePredictors predictors;
  Matrix jsd_x;
  LabeledDataset test;
  LabeledDataset implicit_test;
  std::map<AttributeTuple, Matrix> oracle_clouds;  ///< true samples of each unseen tuple
  GroupMetrics real_reference;                     ///< classifier trained on real full-support data
};

inline EvaluationContext make_evaluation_context(const RunConfig& cfg) {
  const auto& e = cfg.evaluation;
  EvaluationContext ctx{cfg.make_world(), cfg.full_space(), cfg.train_space(), cfg.make_schedule(), {}, {}, {}, {},
                        {}, {}};
  ClassifierConfig pc = e.classifier;
  pc.seed = derive_seed(cfg.seed, stage::kPredictors);
  ctx.predictors = train_attribute_predictors(ctx.world, ctx.full_space, e.predictor_samples, pc);

  Rng jsd_rng(derive_seed(cfg.seed, stage::kJsdSet));
  ctx.jsd_x = sample_dataset(ctx.world, e.jsd_true_distribution ? ctx.full_space : ctx.train_space, e.jsd_samples,
                             jsd_rng, Provenance::kRealTest)
                  .x;
  Rng test_rng(derive_seed(cfg.seed, stage::kTestSet));
  ctx.test = sample_dataset(ctx.world, ctx.full_space, e.test_samples, test_rng, Provenance::kRealTest);
  Rng implicit_rng(derive_seed(cfg.seed, stage::kImplicitSet));
  ctx.implicit_test =
      sample_dataset(ctx.world, ctx.full_space, e.implicit_test_samples, implicit_rng, Provenance::kRealTest);

  Rng cloud_rng(derive_seed(cfg.seed, stage::kOracleCloud));
  for (const auto& t : ctx.train_space.unseen_tuples()) {
    LabeledDataset one = sample_dataset(ctx.world, ctx.full_space.with_support({t}), e.cs_samples_per_tuple,
                                        cloud_rng, Provenance::kRealTest);
    ctx.oracle_clouds.emplace(t, std::move(one.x));
  }

  Rng ref_rng(derive_seed(cfg.seed, stage::kRealReference));
  const LabeledDataset real_full =
      sample_dataset(ctx.world, ctx.full_space, e.synthetic_samples, ref_rng, Provenance::kRealTrain);
  ClassifierConfig rc = e.classifier;
  rc.seed = derive_seed(cfg.seed, stage::kDownstream);
  const Classifier ref = train_downstream_classifier(real_full, e.target_attribute,
                                                     ctx.full_space.value_count(e.target_attribute), rc);
  ctx.real_reference = group_metrics(ref, ctx.test, e.target_attribute, ctx.full_space);
  return ctx;
}

struct ArmMetrics {
  double lambda = 0.0;
  double final_l_score = std::numeric_limits<double>::quiet_NaN();
  double final_l_ci = std::numeric_limits<double>::quiet_NaN();
  double jsd = std::numeric_limits<double>::quiet_NaN();
  bool full_evaluation = false;  ///< false: only losses and JSD were computed
  ConformityReport cs;
  double w2_unseen = std::numeric_limits<double>::quiet_NaN();
  bool w2_regularized = false;
  GroupMetrics downstream;
  GroupMetrics implicit;
};

/// Generated data kept for persistence.
struct ArmSamples {
  std::map<AttributeTuple, Matrix> per_tuple;
  LabeledDataset synthetic;
};

/// Evaluates a trained model. Every arm sees the same evaluation draws.
template <EpsilonModel M>
ArmMetrics evaluate_model(const M& model, double lambda, const std::vector<TrainingLogRow>& log,
                          const RunConfig& cfg, const EvaluationContext& ctx, bool full, ArmSamples* samples) {
  const auto& e = cfg.evaluation;
  ArmMetrics m;
  m.lambda = lambda;
  if (!log.empty()) {
    m.final_l_score = log.back().l_score;
    m.final_l_ci = log.back().l_ci;
  }
  const auto counts = ctx.full_space.value_counts();
  if (counts.size() >= 2) {
    Rng jsd_rng(derive_seed(cfg.seed, stage::kJsd));
    m.jsd = jsd_violation(model, ctx.jsd_x, counts, ctx.schedule, e.implicit, jsd_rng);
  }
  if (!full) return m;
  m.full_evaluation = true;

  Rng cs_rng(derive_seed(cfg.seed, stage::kConformity));
  std::map<AttributeTuple, Matrix> generated;
  auto generator = [&](const AttributeTuple& t, std::size_t count) {
    Matrix x = generate_tuple(model, cfg, ctx.schedule, t, count, cs_rng);
    generated[t] = x;
    return x;
  };
  m.cs = conformity_score(generator, ctx.predictors, ctx.full_space.all_tuples(), e.cs_samples_per_tuple,
                          ctx.train_space);
  if (!ctx.oracle_clouds.empty()) {
    double sum = 0.0;
    for (const auto& [t, cloud] : ctx.oracle_clouds) {
      const W2Result w = gaussian_w2(generated.at(t), cloud);
      sum += w.distance;
      m.w2_regularized = m.w2_regularized || w.regularized;
    }
    m.w2_unseen = sum / static_cast<double>(ctx.oracle_clouds.size());
  }

  Rng syn_rng(derive_seed(cfg.seed, stage::kSynthetic));
  LabeledDataset synthetic = synthetic_dataset(model, cfg, ctx.schedule, ctx.full_space, e.synthetic_samples, syn_rng);
  ClassifierConfig dc = e.classifier;
  dc.seed = derive_seed(cfg.seed, stage::kDownstream);
  const Classifier clf = train_downstream_classifier(synthetic, e.target_attribute,
                                                     ctx.full_space.value_count(e.target_attribute), dc);
  m.downstream = group_metrics(clf, ctx.test, e.target_attribute, ctx.full_space);

  Rng imp_rng(derive_seed(cfg.seed, stage::kImplicit));
  m.implicit = implicit_generative_classifier_metrics(model, ctx.implicit_test, e.target_attribute, ctx.full_space,
                                                      ctx.schedule, e.implicit, imp_rng);
  if (samples != nullptr) {
    samples->per_tuple = std::move(generated);
    samples->synthetic = std::move(synthetic);
  }
  return m;
}

struct ExperimentReport {
  std::uint64_t config_hash = 0;
  std::vector<std::string> arm_order;
  std::map<std::string, ArmMetrics> arms;
  GroupMetrics real_reference;
};

namespace detail {

inline void check_unit(double v, const std::string& what) {
  if (std::isnan(v)) return;
  if (!(v >= 0.0 && v <= 1.0)) throw StateError("invariant breach: " + what + " = " + std::to_string(v));
}

inline void check_groups(const GroupMetrics& g, const std::string& what) {
  check_unit(g.test_accuracy, what + ".test_acc");
  check_unit(g.balanced_accuracy, what + ".balanced_acc");
  check_unit(g.worst_group_accuracy, what + ".wga");
  for (const auto& [t, a] : g.group_accuracy) {
    check_unit(a, what + ".group");
    if (g.worst_group_accuracy > a + 1e-12) throw StateError("invariant breach: " + what + " worst > group");
  }
  if (g.worst_group_accuracy > g.balanced_accuracy + 1e-12) {
    throw StateError("invariant breach: " + what + " worst > balanced");
  }
}

}  // namespace detail

/// Throws StateError when a metric leaves its admissible range.
inline void check_report_invariants(const ExperimentReport& r) {
  detail::check_groups(r.real_reference, "real_reference");
  for (const auto& [name, m] : r.arms) {
    if (!std::isnan(m.jsd) && !(m.jsd >= 0.0 && m.jsd <= std::log(2.0) + 1e-9)) {
      throw StateError("invariant breach: " + name + ".jsd = " + std::to_string(m.jsd));
    }
    if (!m.full_evaluation) continue;
    detail::check_unit(m.cs.cs_all, name + ".cs_all");
    detail::check_unit(m.cs.cs_unseen, name + ".cs_unseen");
    detail::check_groups(m.downstream, name + ".downstream");
    detail::check_groups(m.implicit, name + ".implicit");
  }
}

}  // namespace coind
