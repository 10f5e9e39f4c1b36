#pragma once

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "coind/diffusion/schedule.hpp"
#include "coind/evaluation/classifier.hpp"
#include "coind/evaluation/implicit_classifier.hpp"
#include "coind/numkit/checkpoint.hpp"
#include "coind/numkit/error.hpp"
#include "coind/training/losses.hpp"
#include "coind/world/attribute_space.hpp"
#include "coind/world/gaussian_world.hpp"

namespace coind {

using Json = nlohmann::json;

struct AttributeSpec {
  std::string name;
  std::vector<std::string> values;
  std::vector<std::vector<double>> means;  ///< one offset per value
};

struct WorldSpec {
  std::vector<AttributeSpec> attributes;
  double sigma = 0.3;
};

enum class SupportMode { kFull, kOrthogonal, kCustom };

struct SupportSpec {
  SupportMode mode = SupportMode::kOrthogonal;
  std::vector<std::vector<std::string>> tuples;  ///< label tuples, custom mode only
};

struct ModelSpec {
  std::vector<std::size_t> hidden{64, 64, 64};
  std::size_t time_embedding_width = 16;
};

struct ScheduleSpec {
  int steps = 1000;
  double offset = 0.008;
  double floor = 1e-5;
};

struct TrainerSpec {
  double lambda = 100.0;
  double p_uncond = 0.3;
  std::size_t steps = 20000;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  CiWeighting weighting = CiWeighting::kUnweighted;
  std::size_t log_every = 100;
  std::size_t train_samples = 30000;
};

struct SamplerSpec {
  double gamma = 0.46;
  int steps = 250;
};

struct EvaluationSpec {
  ImplicitClassifierConfig implicit;
  std::size_t synthetic_samples = 20000;
  std::size_t cs_samples_per_tuple = 1000;
  std::size_t predictor_samples = 10000;
  std::size_t jsd_samples = 512;
  bool jsd_true_distribution = true;
  std::size_t test_samples = 4000;
  std::size_t implicit_test_samples = 2000;
  std::size_t target_attribute = 0;
  bool full_support_reference = true;
  ClassifierConfig classifier;
};

/// Everything one paired vanilla / CoInD experiment needs.
struct RunConfig {
  WorldSpec world;
  SupportSpec support;
  ModelSpec model;
  ScheduleSpec schedule;
  TrainerSpec trainer;
  SamplerSpec sampler;
  EvaluationSpec evaluation;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";

  [[nodiscard]] GaussianWorld make_world() const {
    std::vector<std::vector<std::vector<double>>> means;
    for (const auto& a : world.attributes) means.push_back(a.means);
    return GaussianWorld(std::move(means), world.sigma);
  }

  [[nodiscard]] AttributeSpace full_space() const {
    std::vector<std::vector<std::string>> labels;
    std::vector<std::string> names;
    for (const auto& a : world.attributes) {
      labels.push_back(a.values);
      names.push_back(a.name);
    }
    AttributeSpace probe(labels, {AttributeTuple(labels.size(), 0)}, names);
    return probe.with_full_support();
  }

  /// The attribute space with the configured training support.
  [[nodiscard]] AttributeSpace train_space() const {
    const AttributeSpace full = full_space();
    switch (support.mode) {
      case SupportMode::kFull:
        return full;
      case SupportMode::kOrthogonal: {
        AttributeTuple last(full.attribute_count());
        for (std::size_t i = 0; i < last.size(); ++i) last[i] = static_cast<int>(full.value_count(i)) - 1;
        std::vector<AttributeTuple> keep;
        for (auto& t : full.all_tuples()) {
          if (t != last) keep.push_back(std::move(t));
        }
        return full.with_support(std::move(keep));
      }
      case SupportMode::kCustom: {
        std::vector<AttributeTuple> keep;
        for (const auto& labels : support.tuples) {
          if (labels.size() != full.attribute_count()) throw ConfigError("support.tuples: tuple arity mismatch");
          AttributeTuple t(labels.size());
          for (std::size_t i = 0; i < labels.size(); ++i) t[i] = full.code_of(i, labels[i]);
          keep.push_back(std::move(t));
        }
        return full.with_support(std::move(keep));
      }
    }
    throw ConfigError("unknown support mode");
  }

  [[nodiscard]] NoiseSchedule make_schedule() const {
    return cosine_alpha_bar(schedule.steps, CosineScheduleParams{schedule.offset, schedule.floor});
  }
};

inline RunConfig default_run_config() {
  RunConfig c;
  c.world.attributes = {{"c1", {"-1", "+1"}, {{-1.0, 0.0}, {1.0, 0.0}}}, {"c2", {"-1", "+1"}, {{0.0, -1.0}, {0.0, 1.0}}}};
  return c;
}

namespace detail {

/// Maps every object key path ("a.b[2].c") of a JSON text to its 1-based line.
class KeyLines {
 public:
  explicit KeyLines(std::string_view text) { scan(text); }

  [[nodiscard]] int line_of(const std::string& path) const {
    const auto it = lines_.find(path);
    return it == lines_.end() ? 0 : it->second;
  }

 private:
  struct Frame {
    bool object;
    std::string path;
    std::string key;
    std::size_t index = 0;
    bool expect_key = true;
  };

  static std::string join(const Frame& f) {
    if (f.object) return f.path.empty() ? f.key : f.path + "." + f.key;
    return f.path + "[" + std::to_string(f.index) + "]";
  }

  void scan(std::string_view s) {
    int line = 1;
    std::vector<Frame> stack;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const char c = s[i];
      if (c == '\n') {
        ++line;
      } else if (c == '"') {
        std::string str;
        for (++i; i < s.size() && s[i] != '"'; ++i) {
          if (s[i] == '\\' && i + 1 < s.size()) ++i;
          str += s[i];
        }
        if (!stack.empty() && stack.back().object && stack.back().expect_key) {
          stack.back().key = str;
          stack.back().expect_key = false;
          lines_.emplace(join(stack.back()), line);
        }
      } else if (c == '{' || c == '[') {
        const std::string path = stack.empty() ? "" : join(stack.back());
        stack.push_back({c == '{', path, {}, 0, true});
      } else if (c == '}' || c == ']') {
        if (!stack.empty()) stack.pop_back();
      } else if (c == ',' && !stack.empty()) {
        if (stack.back().object) stack.back().expect_key = true;
        else ++stack.back().index;
      }
    }
  }

  std::map<std::string, int> lines_;
};

/// Reads fields of one JSON object, applying defaults and rejecting unknown keys.
class ObjectReader {
 public:
  ObjectReader(const Json& obj, std::string path, const KeyLines* lines)
      : obj_(obj), path_(std::move(path)), lines_(lines) {
    if (!obj_.is_object()) fail(path_, "expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(child(key), "has the wrong type");
    }
  }

  /// Sub-object reader; a missing key yields an empty object so defaults apply.
  ObjectReader object(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    static const Json kEmpty = Json::object();
    return ObjectReader(it == obj_.end() ? kEmpty : *it, child(key), lines_);
  }

  [[nodiscard]] bool has(const std::string& key) const { return obj_.contains(key); }
  [[nodiscard]] const Json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  void finish() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.count(item.key())) fail(child(item.key()), "is not a known key");
    }
  }

  [[nodiscard]] std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void fail(const std::string& path, const std::string& what) const {
    std::string msg = "config: '" + path + "' " + what;
    if (lines_ != nullptr) {
      if (const int line = lines_->line_of(path); line > 0) msg += " (line " + std::to_string(line) + ")";
    }
    throw ConfigError(msg);
  }

 private:
  const Json& obj_;
  std::string path_;
  const KeyLines* lines_;
  std::set<std::string> seen_;
};

inline std::string to_string(SupportMode m) {
  switch (m) {
    case SupportMode::kFull: return "full";
    case SupportMode::kOrthogonal: return "orthogonal";
    case SupportMode::kCustom: return "custom";
  }
  return "?";
}

inline std::string to_string(CiWeighting w) {
  return w == CiWeighting::kInverseNoise ? "inverse_noise" : "unweighted";
}

}  // namespace detail

/// Checks cross-field invariants; throws ConfigError naming the field.
inline void validate_run_config(const RunConfig& c) {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  require(c.world.attributes.size() >= 1, "world.attributes must not be empty");
  require(c.world.sigma > 0.0, "world.sigma must be positive");
  std::set<std::string> names;
  for (const auto& a : c.world.attributes) {
    require(!a.name.empty() && names.insert(a.name).second, "world.attributes names must be unique and nonempty");
    require(a.values.size() >= 1 && a.values.size() == a.means.size(),
            "world.attributes[" + a.name + "] needs one mean per value");
    require(std::set<std::string>(a.values.begin(), a.values.end()).size() == a.values.size(),
            "world.attributes[" + a.name + "] values must be distinct");
  }
  const GaussianWorld world = c.make_world();
  const AttributeSpace space = c.train_space();
  world.require_compatible(space);
  require(c.support.mode == SupportMode::kCustom || c.support.tuples.empty(),
          "support.tuples is only allowed with mode 'custom'");
  require(!c.model.hidden.empty(), "model.hidden must list at least one layer");
  for (std::size_t h : c.model.hidden) require(h > 0, "model.hidden sizes must be positive");
  require(c.model.time_embedding_width > 0 && c.model.time_embedding_width % 2 == 0,
          "model.time_embedding_width must be positive and even");
  require(c.schedule.steps >= 2, "schedule.steps must be at least 2");
  require(c.schedule.offset > 0.0, "schedule.offset must be positive");
  require(c.schedule.floor > 0.0 && c.schedule.floor < 1.0, "schedule.floor must lie in (0, 1)");
  require(c.trainer.lambda >= 0.0, "trainer.lambda must be non-negative");
  require(c.trainer.p_uncond >= 0.0 && c.trainer.p_uncond < 1.0, "trainer.p_uncond must lie in [0, 1)");
  require(c.trainer.steps > 0 && c.trainer.batch_size > 0 && c.trainer.log_every > 0 && c.trainer.train_samples > 0,
          "trainer counts must be positive");
  require(c.trainer.learning_rate > 0.0, "trainer.learning_rate must be positive");
  require(c.sampler.gamma > 0.0, "sampler.gamma must be positive");
  require(c.sampler.steps >= 1 && c.sampler.steps <= c.schedule.steps, "sampler.steps must lie in [1, schedule.steps]");
  c.evaluation.implicit.validate(c.schedule.steps);
  const auto& e = c.evaluation;
  require(e.synthetic_samples > 0 && e.cs_samples_per_tuple >= 2 && e.predictor_samples > 0 && e.jsd_samples > 0 &&
              e.test_samples > 0 && e.implicit_test_samples > 0,
          "evaluation counts must be positive (cs_samples_per_tuple >= 2)");
  require(e.target_attribute < c.world.attributes.size(), "evaluation.target_attribute out of range");
  require(e.classifier.steps > 0 && e.classifier.batch_size > 0 && e.classifier.learning_rate > 0.0,
          "evaluation.classifier settings must be positive");
  require(!c.output_dir.empty(), "output_dir must not be empty");
}

/// Parses a config document; missing fields take defaults, unknown keys and
/// invalid values are ConfigErrors naming the key path (and line when known).
inline RunConfig parse_run_config(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i) line += text[i] == '\n' ? 1 : 0;
    throw ConfigError("config: parse error at line " + std::to_string(line) + ": " + e.what());
  }
  const detail::KeyLines lines(text);
  RunConfig c = default_run_config();
  detail::ObjectReader root(doc, "", &lines);

  {
    auto w = root.object("world");
    w.get("sigma", c.world.sigma);
    if (w.has("attributes")) {
      const Json& attrs = w.raw("attributes");
      if (!attrs.is_array()) w.fail("world.attributes", "must be an array");
      c.world.attributes.clear();
      for (std::size_t i = 0; i < attrs.size(); ++i) {
        detail::ObjectReader a(attrs[i], "world.attributes[" + std::to_string(i) + "]", &lines);
        AttributeSpec spec;
        a.get("name", spec.name);
        a.get("values", spec.values);
        a.get("means", spec.means);
        a.finish();
        c.world.attributes.push_back(std::move(spec));
      }
    }
    w.finish();
  }
  {
    auto s = root.object("support");
    std::string mode = detail::to_string(c.support.mode);
    s.get("mode", mode);
    if (mode == "full") c.support.mode = SupportMode::kFull;
    else if (mode == "orthogonal") c.support.mode = SupportMode::kOrthogonal;
    else if (mode == "custom") c.support.mode = SupportMode::kCustom;
    else s.fail("support.mode", "must be one of full, orthogonal, custom");
    s.get("tuples", c.support.tuples);
    if (c.support.mode == SupportMode::kCustom && c.support.tuples.empty()) {
      s.fail("support.tuples", "must list at least one tuple in custom mode");
    }
    s.finish();
  }
  {
    auto m = root.object("model");
    m.get("hidden", c.model.hidden);
    m.get("time_embedding_width", c.model.time_embedding_width);
    m.finish();
  }
  {
    auto s = root.object("schedule");
    s.get("steps", c.schedule.steps);
    s.get("offset", c.schedule.offset);
    s.get("floor", c.schedule.floor);
    s.finish();
  }
  {
    auto t = root.object("trainer");
    t.get("lambda", c.trainer.lambda);
    t.get("p_uncond", c.trainer.p_uncond);
    t.get("steps", c.trainer.steps);
    t.get("batch_size", c.trainer.batch_size);
    t.get("learning_rate", c.trainer.learning_rate);
    std::string weighting = detail::to_string(c.trainer.weighting);
    t.get("weighting", weighting);
    if (weighting == "unweighted") c.trainer.weighting = CiWeighting::kUnweighted;
    else if (weighting == "inverse_noise") c.trainer.weighting = CiWeighting::kInverseNoise;
    else t.fail("trainer.weighting", "must be 'unweighted' or 'inverse_noise'");
    t.get("log_every", c.trainer.log_every);
    t.get("train_samples", c.trainer.train_samples);
    t.finish();
  }
  {
    auto s = root.object("sampler");
    std::string method = "ddim";
    s.get("method", method);
    if (method != "ddim") s.fail("sampler.method", "must be 'ddim'");
    s.get("gamma", c.sampler.gamma);
    s.get("steps", c.sampler.steps);
    s.finish();
  }
  {
    auto e = root.object("evaluation");
    {
      auto ic = e.object("implicit");
      ic.get("timesteps", c.evaluation.implicit.timestep_count);
      ic.get("t_lo", c.evaluation.implicit.t_lo);
      ic.get("t_hi", c.evaluation.implicit.t_hi);
      ic.get("eps_draws", c.evaluation.implicit.eps_draws);
      ic.finish();
    }
    e.get("synthetic_samples", c.evaluation.synthetic_samples);
    e.get("cs_samples_per_tuple", c.evaluation.cs_samples_per_tuple);
    e.get("predictor_samples", c.evaluation.predictor_samples);
    e.get("jsd_samples", c.evaluation.jsd_samples);
    e.get("jsd_true_distribution", c.evaluation.jsd_true_distribution);
    e.get("test_samples", c.evaluation.test_samples);
    e.get("implicit_test_samples", c.evaluation.implicit_test_samples);
    e.get("target_attribute", c.evaluation.target_attribute);
    e.get("full_support_reference", c.evaluation.full_support_reference);
    {
      auto cl = e.object("classifier");
      cl.get("hidden", c.evaluation.classifier.hidden);
      cl.get("steps", c.evaluation.classifier.steps);
      cl.get("batch_size", c.evaluation.classifier.batch_size);
      cl.get("learning_rate", c.evaluation.classifier.learning_rate);
      cl.finish();
    }
    e.finish();
  }
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  root.finish();

  try {
    validate_run_config(c);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

/// Fully resolved config with every field present; keys are emitted sorted.
inline Json to_json(const RunConfig& c) {
  Json j;
  Json attrs = Json::array();
  for (const auto& a : c.world.attributes) attrs.push_back({{"name", a.name}, {"values", a.values}, {"means", a.means}});
  j["world"] = {{"sigma", c.world.sigma}, {"attributes", attrs}};
  j["support"] = {{"mode", detail::to_string(c.support.mode)}, {"tuples", c.support.tuples}};
  j["model"] = {{"hidden", c.model.hidden}, {"time_embedding_width", c.model.time_embedding_width}};
  j["schedule"] = {{"steps", c.schedule.steps}, {"offset", c.schedule.offset}, {"floor", c.schedule.floor}};
  j["trainer"] = {{"lambda", c.trainer.lambda},
                  {"p_uncond", c.trainer.p_uncond},
                  {"steps", c.trainer.steps},
                  {"batch_size", c.trainer.batch_size},
                  {"learning_rate", c.trainer.learning_rate},
                  {"weighting", detail::to_string(c.trainer.weighting)},
                  {"log_every", c.trainer.log_every},
                  {"train_samples", c.trainer.train_samples}};
  j["sampler"] = {{"method", "ddim"}, {"gamma", c.sampler.gamma}, {"steps", c.sampler.steps}};
  const auto& e = c.evaluation;
  j["evaluation"] = {{"implicit",
                      {{"timesteps", e.implicit.timestep_count},
                       {"t_lo", e.implicit.t_lo},
                       {"t_hi", e.implicit.t_hi},
                       {"eps_draws", e.implicit.eps_draws}}},
                     {"synthetic_samples", e.synthetic_samples},
                     {"cs_samples_per_tuple", e.cs_samples_per_tuple},
                     {"predictor_samples", e.predictor_samples},
                     {"jsd_samples", e.jsd_samples},
                     {"jsd_true_distribution", e.jsd_true_distribution},
                     {"test_samples", e.test_samples},
                     {"implicit_test_samples", e.implicit_test_samples},
                     {"target_attribute", e.target_attribute},
                     {"full_support_reference", e.full_support_reference},
                     {"classifier",
                      {{"hidden", e.classifier.hidden},
                       {"steps", e.classifier.steps},
                       {"batch_size", e.classifier.batch_size},
                       {"learning_rate", e.classifier.learning_rate}}}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

/// FNV-1a of the canonical document without output_dir, so relocating a run
/// keeps its hash.
inline std::uint64_t config_hash(const RunConfig& c) {
  Json j = to_json(c);
  j.erase("output_dir");
  return fnv1a64(j.dump());
}

}  // namespace coind
