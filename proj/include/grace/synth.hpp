#pragma once

// Desk-scale experiments: planted aligned/misaligned traces for separation,
// and a toy linear-softmax student for downstream subset training.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "grace/oracle.hpp"
#include "grace/proxy_engine.hpp"
#include "grace/reports.hpp"
#include "grace/trace_data.hpp"

namespace grace::synth {

struct SynthSpec {
  std::size_t samples = 500;
  std::size_t min_steps = 2;
  std::size_t max_steps = 8;
  std::size_t hidden_dim = 16;
  double aligned_fraction = 0.3;  // q
  double strength = 0.8;          // s
  double noise = 0.5;             // sigma
  std::uint64_t seed = 7;
  std::size_t min_step_tokens = 4;
  std::size_t max_step_tokens = 24;
  std::size_t min_answer_tokens = 2;
  std::size_t max_answer_tokens = 8;

  std::size_t aligned_count() const;
  void validate() const;
};

struct SynthData {
  std::vector<ReasoningSample> samples;
  std::vector<SignalRecord> signals;
  std::vector<bool> aligned;
};

// Aligned steps: s * g_ans_hat + sigma * xi / sqrt(d). Misaligned steps replace
// g_ans_hat with a fresh unit direction orthogonal to it. Every step then gets a
// random positive magnitude. Sample ids are zero-padded so id order is index order.
SynthData generate(const SynthSpec& spec);

struct SeparationReport {
  double auc = 0.0;
  double precision_at_budget = 0.0;
  std::size_t budget = 0;
  std::size_t aligned = 0;
};

SeparationReport separation_experiment(const SynthSpec& spec, const ScoringConfig& config, double rho);

// Mean over entries of 100 * subset / full.
double relative_average(std::span<const double> subset, std::span<const double> full);

enum class Method { grace, random, longest, stepmax, full };

std::string to_string(Method m);
Method parse_method(std::string_view text);

struct ToyTaskOptions {
  std::size_t vocab = 6;
  std::size_t input_dim = 6;
  std::size_t hidden_dim = 8;
  std::size_t target_tokens = 400;
  std::size_t train_steps = 150;
  double learning_rate = 0.5;
  double warmup_fraction = 0.05;  // gamma
  std::size_t warmup_steps = 20;
  double init_scale = 0.1;
};

// A teacher labels every token; the student shares W_out and learns B.
// Aligned samples carry teacher labels on every step. In misaligned samples
// each step token is relabelled uniformly at random (to a wrong class) with
// probability s. Answer and target tokens always carry teacher labels.
struct ToyTask {
  oracle::TinyRepModel model;  // initial student; tokens hold train then target data
  std::vector<ReasoningSample> samples;
  std::vector<std::size_t> offsets;  // first model token of each sample
  oracle::TokenSet target_set;
  std::vector<bool> aligned;

  oracle::TokenSet sample_tokens(std::size_t i) const;
};

ToyTask build_toy_task(const SynthSpec& spec, const ToyTaskOptions& options);

// Full-batch gradient descent on B for a fixed number of steps. The objective
// is the mean over the chosen samples of their token-mean loss.
Eigen::MatrixXd train_student(const ToyTask& task, std::span<const std::size_t> sample_indices, std::size_t steps,
                              double learning_rate);

double target_loss(const ToyTask& task, const Eigen::MatrixXd& rep);

// Forward-only signal extraction at a checkpoint: u_t per token, segment means as f32.
std::vector<SignalRecord> extract_signals(const ToyTask& task, const Eigen::MatrixXd& rep,
                                          const std::string& checkpoint_id);

struct DownstreamRow {
  Method method = Method::grace;
  std::uint64_t seed = 0;
  std::size_t subset_size = 0;
  double target_loss = 0.0;
  bool diverged = false;
};

struct MethodSummary {
  double mean_loss = 0.0;
  double sd_loss = 0.0;
  double relative_average = 0.0;  // vs the full-data loss of the same seed
  std::size_t diverged = 0;
};

struct DownstreamReport {
  double rho = 0.0;
  std::vector<DownstreamRow> rows;
  std::map<Method, MethodSummary> summary;

  double loss(Method m, std::uint64_t seed) const;
  void write_csv(std::ostream& out) const;
  void write_summary_csv(std::ostream& out) const;
};

// Each seed rebuilds the task with spec.seed = seed. The full-data run is
// always included as the relative-average reference.
DownstreamReport downstream_experiment(const SynthSpec& spec, const ToyTaskOptions& options,
                                       std::span<const Method> methods, std::span<const std::uint64_t> seeds,
                                       double rho, const ScoringConfig& config);

}  // namespace grace::synth
