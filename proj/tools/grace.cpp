// grace: score reasoning traces from pre-extracted upstream signals, select
// subsets, run the oracle suite and the synthetic experiments.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "grace/error.hpp"
#include "grace/oracle.hpp"
#include "grace/pipeline.hpp"
#include "grace/synth.hpp"
#include "grace/valuation.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitValidation = 3;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("grace");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("GRACE_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps anything unknown to off; only honor it when asked for.
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
  }
}

// Writes to `path`, or stdout when it is empty or "-".
template <typename Fn>
void with_output(const std::string& path, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw grace::InputError(fmt::format("cannot open {} for writing", path));
  fn(out);
}

struct ScoringFlags {
  std::optional<double> alpha;
  std::optional<std::string> history;
  std::optional<std::string> target;
  std::optional<std::string> zero_vector;
  std::string config_path;

  void attach(CLI::App* cmd) {
    cmd->add_option("--alpha", alpha, "Weight of answer alignment in [0,1] (default 0.7)");
    cmd->add_option("--history", history, "uniform | window:W | ema:BETA (default uniform)");
    cmd->add_option("--target", target, "answer | full | suffix (default answer)");
    cmd->add_option("--zero-vector", zero_vector, "error | zero (default zero)");
    cmd->add_option("--config", config_path,
                    "Start from a scoring config: a JSON object or the header line of a scores file");
  }

  grace::ScoringConfig resolve() const {
    grace::ScoringConfig c;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw grace::InputError(fmt::format("cannot open config {}", config_path));
      std::string first;
      std::getline(in, first);
      nlohmann::ordered_json j;
      try {
        j = nlohmann::ordered_json::parse(first);
      } catch (const nlohmann::json::exception&) {
        in.clear();
        in.seekg(0);
        try {
          j = nlohmann::ordered_json::parse(in);
        } catch (const nlohmann::json::exception& e) {
          throw grace::InputError(fmt::format("config {} is not JSON: {}", config_path, e.what()));
        }
      }
      c = grace::ScoringConfig::from_json(j.contains("config") ? j.at("config") : j);
    }
    if (alpha) c.alpha = *alpha;
    if (history) c.history = grace::HistoryScheme::parse(*history);
    if (target) c.target = grace::parse_target_mode(*target);
    if (zero_vector) c.zero_vector = grace::parse_zero_vector_policy(*zero_vector);
    c.validate();
    return c;
  }
};

int cmd_score(const std::string& samples, const std::vector<std::string>& signal_args, const ScoringFlags& flags,
              bool lenient, std::size_t jobs, const std::string& out) {
  auto config = flags.resolve();
  std::vector<grace::SignalSource> sources;
  for (std::size_t i = 0; i < signal_args.size(); ++i) {
    // Untagged paths take their id from the loaded config, position by position.
    const std::string fallback =
        i < config.checkpoints.size() && !flags.config_path.empty() ? config.checkpoints[i] : fmt::format("ckpt{}", i);
    sources.push_back(grace::parse_signal_source(signal_args[i], fallback));
  }
  const auto run = grace::run_scoring(samples, sources, config, !lenient, jobs);
  with_output(out, [&](std::ostream& os) { grace::write_scores(run, os); });
  spdlog::info("scored {} samples over {} checkpoint(s), config {}", run.table.size(), run.config.checkpoints.size(),
               run.config.hash());
  return kExitOk;
}

int cmd_select(const std::string& scores, double rho, const std::string& tie_break, const std::string& out) {
  if (tie_break != "by_id_ascending") {
    throw grace::InputError(fmt::format("unsupported tie break '{}' (only by_id_ascending)", tie_break));
  }
  const auto file = grace::read_scores(scores);
  const auto selection = grace::select_top(file.table, rho);
  nlohmann::ordered_json provenance;
  provenance["config"] = file.config.to_json();
  provenance["config_hash"] = file.config.hash();
  with_output(out, [&](std::ostream& os) { grace::write_selection(selection, provenance, os); });
  spdlog::info("selected {} of {}", selection.budget, selection.ranked.size());
  return kExitOk;
}

int cmd_baseline(const std::string& samples_path, const std::string& method, double rho, std::uint64_t seed,
                 const std::string& out) {
  const auto samples = grace::read_samples(samples_path);
  grace::SelectionResult selection;
  nlohmann::ordered_json provenance;
  if (method == "random") {
    selection = grace::baseline_random(samples, rho, seed);
    provenance["seed"] = seed;
  } else if (method == "longest") {
    selection = grace::baseline_longest(samples, rho);
  } else if (method == "stepmax") {
    selection = grace::baseline_stepmax(samples, rho);
  } else {
    throw grace::InputError(fmt::format("unknown baseline '{}' (random|longest|stepmax)", method));
  }
  with_output(out, [&](std::ostream& os) { grace::write_selection(selection, provenance, os); });
  return kExitOk;
}

int cmd_validate(std::uint64_t seed, const std::string& report_path) {
  const auto report = grace::oracle::run_validation_suite(seed);
  with_output(report_path, [&](std::ostream& os) { os << report.to_json().dump(2) << '\n'; });
  for (const auto& c : report.checks) {
    if (!c.passed) spdlog::error("check failed: {} (metric {}, threshold {}): {}", c.name, c.metric, c.threshold, c.detail);
  }
  return report.passed() ? kExitOk : kExitValidation;
}

struct SynthFlags {
  std::string experiment = "separation";
  std::string out_dir = ".";
  grace::synth::SynthSpec spec;
  double rho = 0.2;
  std::size_t seeds = 10;
  std::vector<std::string> methods{"grace", "random", "longest", "stepmax"};
  grace::synth::ToyTaskOptions toy;
  std::size_t trials = 200;
};

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw grace::InputError(fmt::format("cannot open {} for writing", path.string()));
  fn(out);
  spdlog::info("wrote {}", path.string());
}

int cmd_synth(const SynthFlags& f, const ScoringFlags& scoring) {
  const fs::path dir(f.out_dir);
  fs::create_directories(dir);
  auto config = scoring.resolve();
  config.checkpoints = {"synth"};
  if (f.experiment == "generate") {
    const auto data = grace::synth::generate(f.spec);
    grace::write_samples(data.samples, dir / "samples.jsonl");
    grace::write_signals(data.signals, dir / "signals.gsig");
    write_file(dir / "labels.csv", [&](std::ostream& os) {
      os << "sample_id,aligned\n";
      for (std::size_t i = 0; i < data.samples.size(); ++i) {
        os << data.samples[i].sample_id << ',' << (data.aligned[i] ? 1 : 0) << '\n';
      }
    });
  } else if (f.experiment == "separation") {
    write_file(dir / "separation.csv", [&](std::ostream& os) {
      os << "seed,strength,noise,auc,precision_at_budget,budget,aligned\n";
      for (std::size_t i = 0; i < f.seeds; ++i) {
        auto spec = f.spec;
        spec.seed = f.spec.seed + i;
        const auto r = grace::synth::separation_experiment(spec, config, f.rho);
        os << fmt::format("{},{},{},{},{},{},{}\n", spec.seed, spec.strength, spec.noise, r.auc,
                          r.precision_at_budget, r.budget, r.aligned);
      }
    });
  } else if (f.experiment == "downstream") {
    std::vector<grace::synth::Method> methods;
    for (const auto& m : f.methods) methods.push_back(grace::synth::parse_method(m));
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < f.seeds; ++i) seeds.push_back(f.spec.seed + i);
    const auto report = grace::synth::downstream_experiment(f.spec, f.toy, methods, seeds, f.rho, config);
    write_file(dir / "downstream.csv", [&](std::ostream& os) { report.write_csv(os); });
    write_file(dir / "downstream_summary.csv", [&](std::ostream& os) { report.write_summary_csv(os); });
  } else if (f.experiment == "fidelity") {
    grace::oracle::FidelityOptions options;
    options.trials = f.trials;
    options.seed = f.spec.seed;
    options.scoring = config;
    const auto report = grace::oracle::proxy_fidelity_sweep(options);
    write_file(dir / "fidelity.csv", [&](std::ostream& os) { report.write_csv(os); });
    spdlog::info("median rank correlation {:.4f}", report.median_rank_correlation);
  } else {
    throw grace::InputError(
        fmt::format("unknown experiment '{}' (generate|separation|downstream|fidelity)", f.experiment));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Step-level scoring and selection of reasoning traces"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "grace 0.1.0");

  ScoringFlags scoring;
  bool lenient = false;
  std::size_t jobs = 1;
  std::string out;
  double rho = 0.2;
  std::uint64_t seed = 0;

  auto* score = app.add_subcommand("score", "Score every sample at every checkpoint");
  std::string samples_path;
  std::vector<std::string> signal_args;
  score->add_option("--samples", samples_path, "Samples JSONL")->required()->check(CLI::ExistingFile);
  score->add_option("--signals", signal_args, "Signal dump, CKPT=PATH; repeat once per checkpoint")->required();
  scoring.attach(score);
  score->add_flag("--lenient,!--strict", lenient, "Skip unmatched or unscorable samples instead of failing");
  score->add_option("--jobs,-j", jobs, "Worker threads")->check(CLI::PositiveNumber);
  score->add_option("--out,-o", out, "Output scores JSONL (default stdout)");

  auto* select = app.add_subcommand("select", "Pick the top ceil(rho*N) samples from a scores file");
  std::string scores_path;
  std::string tie_break = "by_id_ascending";
  select->add_option("--scores", scores_path, "Scores JSONL")->required()->check(CLI::ExistingFile);
  select->add_option("--rho", rho, "Selection ratio in (0,1)")->required();
  select->add_option("--tie-break", tie_break, "Tie break rule");
  select->add_option("--out,-o", out, "Output selection JSONL (default stdout)");

  auto* baseline = app.add_subcommand("baseline", "Select with a baseline rule");
  std::string method;
  baseline->add_option("--samples", samples_path, "Samples JSONL")->required()->check(CLI::ExistingFile);
  baseline->add_option("--method", method, "random | longest | stepmax")->required();
  baseline->add_option("--rho", rho, "Selection ratio in (0,1)")->required();
  baseline->add_option("--seed", seed, "Seed for the random baseline");
  baseline->add_option("--out,-o", out, "Output selection JSONL (default stdout)");

  auto* validate = app.add_subcommand("validate", "Run the exact-gradient oracle suite");
  std::uint64_t validate_seed = 20240601;
  validate->add_option("--seed", validate_seed, "Suite seed");
  validate->add_option("--report", out, "JSON report path (default stdout)");

  auto* synth = app.add_subcommand("synth", "Synthetic experiments, CSV output");
  SynthFlags sf;
  synth->add_option("experiment", sf.experiment, "generate | separation | downstream | fidelity");
  synth->add_option("--out-dir", sf.out_dir, "Directory for output files");
  synth->add_option("--samples,-n", sf.spec.samples, "Samples per run");
  synth->add_option("--min-steps", sf.spec.min_steps);
  synth->add_option("--max-steps", sf.spec.max_steps);
  synth->add_option("--dim", sf.spec.hidden_dim, "Signal dimension");
  synth->add_option("--aligned-fraction,-q", sf.spec.aligned_fraction);
  synth->add_option("--strength,-s", sf.spec.strength, "Alignment strength in [0,1]");
  synth->add_option("--noise", sf.spec.noise, "Noise scale sigma");
  synth->add_option("--seed", sf.spec.seed, "First seed");
  synth->add_option("--seeds", sf.seeds, "Number of consecutive seeds");
  synth->add_option("--rho", sf.rho, "Selection ratio");
  synth->add_option("--methods", sf.methods, "Downstream methods")->delimiter(',');
  synth->add_option("--train-steps", sf.toy.train_steps);
  synth->add_option("--learning-rate", sf.toy.learning_rate);
  synth->add_option("--warmup-fraction", sf.toy.warmup_fraction);
  synth->add_option("--trials", sf.trials, "Fidelity sweep trials");
  scoring.attach(synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (score->parsed()) return cmd_score(samples_path, signal_args, scoring, lenient, jobs, out);
    if (select->parsed()) return cmd_select(scores_path, rho, tie_break, out);
    if (baseline->parsed()) return cmd_baseline(samples_path, method, rho, seed, out);
    if (validate->parsed()) return cmd_validate(validate_seed, out);
    if (synth->parsed()) return cmd_synth(sf, scoring);
  } catch (const grace::InputError& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const std::domain_error& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return 1;
  }
  return kExitInput;
}
