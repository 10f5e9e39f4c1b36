// Command-line front end: run, eval, sample, export-plots, check.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coind/coind.hpp"

namespace {

enum ExitCode : int { kOk = 0, kUsage = 1, kConfig = 2, kNumeric = 3, kAcceptance = 4 };

namespace fs = std::filesystem;

coind::RunConfig config_from_run_dir(const fs::path& run_dir) {
  return coind::parse_run_config(coind::detail::read_text(run_dir / "config.json"));
}

coind::AttributeTuple parse_tuple(const std::string& text, const coind::AttributeSpace& space) {
  coind::AttributeTuple t;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (t.size() >= space.attribute_count()) throw coind::ConfigError("--tuple has too many values");
    t.push_back(space.code_of(t.size(), item));
  }
  if (t.size() != space.attribute_count()) throw coind::ConfigError("--tuple needs one value per attribute");
  return t;
}

void print_summary(const coind::ExperimentReport& r) {
  std::cout << std::setprecision(4);
  for (const auto& name : r.arm_order) {
    const auto& m = r.arms.at(name);
    std::cout << name << ": lambda=" << m.lambda << " jsd=" << m.jsd;
    if (m.full_evaluation) {
      std::cout << " cs_all=" << m.cs.cs_all << " cs_unseen=" << m.cs.cs_unseen << " w2_unseen=" << m.w2_unseen
                << " wga=" << m.downstream.worst_group_accuracy
                << " balanced=" << m.downstream.balanced_accuracy
                << " implicit_wga=" << m.implicit.worst_group_accuracy;
    }
    std::cout << "\n";
  }
  std::cout << "real_full_support: balanced=" << r.real_reference.balanced_accuracy
            << " wga=" << r.real_reference.worst_group_accuracy << "\n";
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out) {
  coind::RunConfig cfg = coind::load_run_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.output_dir = out;
  coind::validate_run_config(cfg);
  const auto report = coind::run_experiment(cfg);
  print_summary(report);
  std::cout << "artifacts: " << cfg.output_dir << "\n";
  return kOk;
}

int cmd_eval(const fs::path& run_dir, std::optional<std::uint64_t> seed) {
  coind::RunConfig cfg = config_from_run_dir(run_dir);
  if (seed) cfg.seed = *seed;
  const coind::EvaluationContext ctx = coind::make_evaluation_context(cfg);
  coind::ExperimentReport report;
  report.config_hash = coind::config_hash(cfg);
  report.real_reference = ctx.real_reference;
  coind::Json sources = coind::Json::object();
  for (const std::string arm : {"vanilla", "coind"}) {
    const auto loaded = coind::load_arm_model(run_dir / arm / "model.ckpt");
    sources[arm] = {{"source_arm", loaded.source_arm}, {"config_hash_matches", loaded.config_hash == report.config_hash}};
    const double lambda = arm == "vanilla" ? 0.0 : cfg.trainer.lambda;
    report.arm_order.push_back(arm);
    report.arms[arm] = coind::evaluate_model(loaded.model, lambda, {}, cfg, ctx, true, nullptr);
  }
  coind::check_report_invariants(report);
  coind::Json doc = coind::report_to_json(report, cfg.full_space());
  doc["checkpoints"] = sources;
  coind::detail::write_text(run_dir / "eval.json", doc.dump(2) + "\n");
  print_summary(report);
  return kOk;
}

int cmd_sample(const fs::path& run_dir, const std::string& arm, const std::string& tuple_text, std::size_t count,
               std::uint64_t seed, const std::string& out) {
  const coind::RunConfig cfg = config_from_run_dir(run_dir);
  const coind::AttributeSpace space = cfg.full_space();
  const coind::AttributeTuple tuple = parse_tuple(tuple_text, space);
  const auto loaded = coind::load_arm_model(run_dir / arm / "model.ckpt");
  coind::Rng rng(seed);
  const coind::Matrix x = coind::generate_tuple(loaded.model, cfg, cfg.make_schedule(), tuple, count, rng);
  const coind::LabeledDataset ds{x, std::vector<coind::AttributeTuple>(count, tuple), coind::Provenance::kSynthetic};
  if (out.empty() || out == "-") {
    coind::write_dataset_csv(std::cout, ds, space);
  } else {
    coind::detail::write_dataset(out, ds, space);
  }
  return kOk;
}

int cmd_check(const fs::path& scratch) {
  bool all = true;
  for (const auto& r : coind::run_invariant_checks(scratch)) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
    all = all && r.pass;
  }
  return all ? kOk : kAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional diffusion experiments on Gaussian attribute worlds"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "Train vanilla and CoInD arms, sample, evaluate, write artifacts");
  run->add_option("-c,--config", config_path, "Run config (JSON)")->required();
  run->add_option("-s,--seed", seed, "Override the config seed");
  run->add_option("-o,--out", out, "Override the output directory");

  std::string run_dir;
  auto* eval = app.add_subcommand("eval", "Re-evaluate the checkpoints of a finished run");
  eval->add_option("-r,--run", run_dir, "Run directory")->required();
  eval->add_option("-s,--seed", seed, "Override the evaluation seed");

  std::string arm = "coind";
  std::string tuple;
  std::size_t count = 1000;
  std::uint64_t sample_seed = 0;
  auto* sample = app.add_subcommand("sample", "Draw composed samples for one attribute tuple");
  sample->add_option("-r,--run", run_dir, "Run directory")->required();
  sample->add_option("-a,--arm", arm, "Arm whose checkpoint to use")->check(CLI::IsMember({"vanilla", "coind", "full_vanilla"}));
  sample->add_option("-t,--tuple", tuple, "Comma-separated value labels, e.g. +1,+1")->required();
  sample->add_option("-n,--count", count, "Number of samples")->check(CLI::PositiveNumber);
  sample->add_option("-s,--seed", sample_seed, "Sampling seed");
  sample->add_option("-o,--out", out, "Output CSV (stdout if omitted)");

  coind::PlotExportOptions plot;
  auto* plots = app.add_subcommand("export-plots", "Write panel clouds and score grids for plotting");
  plots->add_option("-r,--run", run_dir, "Run directory")->required();
  plots->add_option("--grid-w", plot.grid_w, "Grid columns")->check(CLI::PositiveNumber);
  plots->add_option("--grid-h", plot.grid_h, "Grid rows")->check(CLI::PositiveNumber);
  plots->add_option("--extent", plot.extent, "Half-width of the plotted square");

  std::string scratch = "coind-check";
  auto* check = app.add_subcommand("check", "Run the invariant self-checks");
  check->add_option("--scratch", scratch, "Directory for temporary files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return cmd_run(config_path, seed, out);
    if (*eval) return cmd_eval(run_dir, seed);
    if (*sample) return cmd_sample(run_dir, arm, tuple, count, sample_seed, out);
    if (*plots) {
      coind::export_plot_data(run_dir, plot);
      std::cout << "plot data: " << (fs::path(run_dir) / "plots").string() << "\n";
      return kOk;
    }
    if (*check) return cmd_check(scratch);
  } catch (const coind::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const coind::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kConfig;
  } catch (const coind::FormatError& e) {
    std::cerr << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
