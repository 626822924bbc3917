#pragma once

// Exact-gradient reference model at toy scale. Everything the proxy engine
// approximates is computed here in closed form and cross-checked against
// central finite differences.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "grace/proxy_engine.hpp"
#include "grace/rng.hpp"

namespace grace::oracle {

enum class Activation { identity, tanh };

struct Token {
  Eigen::VectorXd input;  // x_t, length m
  std::size_t target = 0;
};

using TokenSet = std::vector<std::size_t>;

// h_t = act(B x_t), logits = W_out^T h_t, loss = token-mean cross-entropy.
struct TinyRepModel {
  Eigen::MatrixXd rep;     // B, d x m
  Eigen::MatrixXd output;  // W_out, d x V
  std::vector<Token> tokens;
  Activation activation = Activation::identity;

  std::size_t hidden_dim() const { return static_cast<std::size_t>(rep.rows()); }
  std::size_t input_dim() const { return static_cast<std::size_t>(rep.cols()); }
  std::size_t vocab_size() const { return static_cast<std::size_t>(output.cols()); }

  Eigen::VectorXd hidden(std::size_t t) const;
  Eigen::VectorXd logits(std::size_t t) const;
  Eigen::VectorXd probs(std::size_t t) const;
  void validate() const;
};

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
double cross_entropy(const Eigen::VectorXd& logits, std::size_t target);

double token_loss(const TinyRepModel& model, std::size_t t);
double segment_loss(const TinyRepModel& model, const TokenSet& set);

// u_t for each token of the set, computed by the proxy engine.
std::vector<Vector> upstream_signals(const TinyRepModel& model, const TokenSet& set);

// Closed-form gradient of the segment loss w.r.t. B, flattened column-major:
// |T|^-1 sum_t (act'(B x_t) * u_t) x_t^T.
Eigen::VectorXd exact_segment_gradient(const TinyRepModel& model, const TokenSet& set);

// Gradient w.r.t. W_out: |T|^-1 sum_t h_t (p_t - y_t)^T, flattened column-major.
Eigen::VectorXd output_gradient(const TinyRepModel& model, const TokenSet& set);

// [vec(dL/dW_out); vec(dL/dB)].
Eigen::VectorXd joint_gradient(const TinyRepModel& model, const TokenSet& set);

enum class Parameters { rep, joint };

Eigen::VectorXd finite_difference_gradient(const TinyRepModel& model, const TokenSet& set, Parameters which,
                                           double h = 1e-4);

struct GradientCheck {
  double max_rel_error = 0.0;  // |analytic - numeric| / max(1, |analytic|)
  std::size_t coordinates = 0;
};

GradientCheck check_rep_gradient(const TinyRepModel& model, const TokenSet& set, double h = 1e-4);
GradientCheck check_joint_gradient(const TinyRepModel& model, const TokenSet& set, double h = 1e-4);
// dL_t/dh_t by finite differences against the engine's upstream_signal.
GradientCheck check_upstream_signal(const TinyRepModel& model, std::size_t t, double h = 1e-4);

struct SoftmaxGradCheck {
  Eigen::VectorXd analytic;  // p - y
  Eigen::VectorXd numeric;
  double max_rel_error = 0.0;
};

SoftmaxGradCheck softmax_grad_check(const Eigen::VectorXd& logits, std::size_t target, double h = 1e-4);
SoftmaxGradCheck softmax_grad_check(const TinyRepModel& model, std::size_t t, double h = 1e-4);

struct TaylorStep {
  double eta = 0.0;
  double actual_change = 0.0;     // L_tar(theta - eta g_k) - L_tar(theta)
  double predicted_change = 0.0;  // -eta <g_k, g_tar>
  double remainder = 0.0;
};

struct TaylorReport {
  std::vector<TaylorStep> steps;
  std::vector<double> ratios;  // R(eta_i) / R(eta_{i+1})
};

// First-order expansion of the target loss under one gradient step on the
// step loss, over the full parameter vector (W_out, B). etas must be descending.
TaylorReport taylor_check(const TinyRepModel& model, const TokenSet& step_set, const TokenSet& target_set,
                          const std::vector<double>& etas);

struct JacobianCosine {
  double via_gradients = 0.0;  // cosine of the flattened exact gradients
  double via_kernel = 0.0;     // sum (v_t . v_t')(x_t . x_t') normalized
};

JacobianCosine jacobian_cosine_routes(const TinyRepModel& model, const TokenSet& set1, const TokenSet& set2);
// Cosine of exact B-gradients; throws std::logic_error when the two routes
// disagree by more than 1e-10 and ZeroVectorError on a zero gradient.
double jacobian_cosine(const TinyRepModel& model, const TokenSet& set1, const TokenSet& set2);

// cos(g(T1), g(T2)) in proxy space.
double proxy_cosine(const TinyRepModel& model, const TokenSet& set1, const TokenSet& set2);

struct RandomModelOptions {
  std::size_t hidden_dim = 3;
  std::size_t input_dim = 2;
  std::size_t vocab = 4;
  std::size_t tokens = 8;
  Activation activation = Activation::identity;
  // 0: iid Gaussian inputs. Otherwise x_t = base + input_noise * xi_t / sqrt(m)
  // with one unit-norm base shared by all tokens.
  double input_noise = 0.0;
  bool correlated_inputs = false;
  bool identical_inputs = false;
};

TinyRepModel random_model(Rng& rng, const RandomModelOptions& options);

// Proxy-vs-exact fidelity of step scores on random linear models.
struct FidelityOptions {
  std::size_t trials = 200;
  std::uint64_t seed = 2024;
  std::size_t hidden_dim = 8;
  std::size_t input_dim = 4;
  std::size_t vocab = 10;
  std::size_t samples_per_trial = 8;
  std::size_t min_steps = 2;
  std::size_t max_steps = 6;
  std::size_t min_segment_tokens = 2;
  std::size_t max_segment_tokens = 6;
  double input_noise = 0.3;
  bool identical_inputs = false;
  ScoringConfig scoring;
};

struct FidelityTrial {
  std::size_t trial = 0;
  std::size_t steps = 0;
  double rank_correlation = 0.0;
  double mean_input_cosine = 0.0;
};

struct FidelityReport {
  FidelityOptions options;
  std::vector<FidelityTrial> trials;
  double median_rank_correlation = 0.0;
  double mean_input_cosine = 0.0;

  void write_csv(std::ostream& out) const;
};

FidelityReport proxy_fidelity_sweep(const FidelityOptions& options);

struct CheckResult {
  std::string name;
  bool passed = false;
  double metric = 0.0;
  double threshold = 0.0;
  std::size_t instances = 0;
  double seconds = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<CheckResult> checks;

  bool passed() const;
  nlohmann::ordered_json to_json() const;
};

// Every oracle check at its pinned tolerance. Deterministic per seed.
ValidationReport run_validation_suite(std::uint64_t seed = 20240601);

}  // namespace grace::oracle
