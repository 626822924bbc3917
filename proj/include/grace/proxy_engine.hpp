#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "grace/numeric.hpp"
#include "grace/reports.hpp"
#include "grace/trace_data.hpp"

namespace grace {

// What to do when a cosine or normalization meets a zero vector.
enum class ZeroVectorPolicy { error, score_zero };

// Which proxy a step is aligned against.
enum class TargetMode {
  answer,      // g_ans
  full_trace,  // token-weighted mean over every step and the answer
  suffix,      // token-weighted mean over the steps after k and the answer
};

std::string to_string(ZeroVectorPolicy p);
std::string to_string(TargetMode m);
ZeroVectorPolicy parse_zero_vector_policy(std::string_view text);
TargetMode parse_target_mode(std::string_view text);

// How preceding steps are weighted into the history reference.
struct HistoryScheme {
  enum class Kind { uniform, window, ema };

  Kind kind = Kind::uniform;
  std::uint32_t window = 1;  // Kind::window only
  double beta = 0.0;         // Kind::ema only

  static HistoryScheme uniform() { return {}; }
  static HistoryScheme sliding_window(std::uint32_t w) { return {Kind::window, w, 0.0}; }
  static HistoryScheme ema(double beta) { return {Kind::ema, 1, beta}; }

  // "uniform", "window:W", "ema:BETA"
  static HistoryScheme parse(std::string_view text);
  std::string to_string() const;
  void validate() const;

  bool operator==(const HistoryScheme&) const = default;
};

struct ScoringConfig {
  double alpha = 0.7;
  HistoryScheme history;
  TargetMode target = TargetMode::answer;
  std::vector<std::string> checkpoints{"ckpt0"};
  ZeroVectorPolicy zero_vector = ZeroVectorPolicy::score_zero;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ScoringConfig from_json(const nlohmann::ordered_json& j);
  // Stable 16-hex-digit digest of the canonical JSON form.
  std::string hash() const;

  bool operator==(const ScoringConfig&) const = default;
};

// W_out, d x V.
class OutputProjection {
 public:
  explicit OutputProjection(Eigen::MatrixXd weights);

  const Eigen::MatrixXd& weights() const { return weights_; }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(weights_.rows()); }
  std::size_t vocab_size() const { return static_cast<std::size_t>(weights_.cols()); }

 private:
  Eigen::MatrixXd weights_;
};

// u = W_out (p - onehot(target)). In strict mode p must be a probability
// vector (non-negative, sums to 1 within 1e-6).
Vector upstream_signal(std::span<const double> probs, std::size_t target, const OutputProjection& projection,
                       bool strict = true);

// Componentwise mean of the token signals of one segment.
Vector segment_proxy(std::span<const Vector> signals);

// <a, b> / (|a| |b|), clamped to [-1, 1].
double cosine(std::span<const double> a, std::span<const double> b, ZeroVectorPolicy policy);

struct HistoryWeights {
  HistoryScheme scheme;
  std::size_t step = 0;         // k, 1-based
  std::vector<double> weights;  // omega_{k,1..k-1}
};

HistoryWeights materialize_weights(std::size_t k, const HistoryScheme& scheme);

// Normalize(sum_j omega_{k,j} g_j) over previous = g_1..g_{k-1}. A zero
// weighted sum throws under ZeroVectorPolicy::error and is returned as the
// zero vector under score_zero, so its cosine scores 0.
Vector history_reference(std::span<const Vector> previous, const HistoryWeights& weights,
                         ZeroVectorPolicy policy);

// Target proxy for step k (1-based) from per-segment proxies and token counts.
Vector target_proxy(std::span<const Vector> steps, const Vector& answer, std::span<const std::size_t> step_tokens,
                    std::size_t answer_tokens, TargetMode mode, std::size_t k);
Vector target_proxy(const SignalRecord& record, const ReasoningSample& sample, TargetMode mode, std::size_t k);

// history must be null iff k == 1.
StepScore step_score(std::span<const double> step, std::span<const double> target, const Vector* history,
                     double alpha, std::size_t k, ZeroVectorPolicy policy);

// Scores every step of one trace. targets[k-1] is the target proxy for step k.
std::vector<StepScore> score_steps(std::span<const Vector> steps, std::span<const Vector> targets,
                                   const ScoringConfig& config);

// Full per-sample pass: proxies -> targets -> step scores -> value.
ScoreReport score_sample(const ReasoningSample& sample, const SignalRecord& record, const ScoringConfig& config);

}  // namespace grace
