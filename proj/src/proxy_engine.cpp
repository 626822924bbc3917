#include "grace/proxy_engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <fmt/core.h>

#include "grace/digest.hpp"
#include "grace/error.hpp"
#include "grace/valuation.hpp"

namespace grace {

namespace {

using ojson = nlohmann::ordered_json;

double parse_double(std::string_view text, std::string_view what) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw InputError(fmt::format("invalid {}: '{}'", what, text));
  return value;
}

std::uint32_t parse_u32(std::string_view text, std::string_view what) {
  std::uint32_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw InputError(fmt::format("invalid {}: '{}'", what, text));
  return value;
}

}  // namespace

std::string to_string(ZeroVectorPolicy p) { return p == ZeroVectorPolicy::error ? "error" : "zero"; }

std::string to_string(TargetMode m) {
  switch (m) {
    case TargetMode::answer: return "answer";
    case TargetMode::full_trace: return "full";
    case TargetMode::suffix: return "suffix";
  }
  return "answer";
}

ZeroVectorPolicy parse_zero_vector_policy(std::string_view text) {
  if (text == "error") return ZeroVectorPolicy::error;
  if (text == "zero" || text == "score_zero") return ZeroVectorPolicy::score_zero;
  throw InputError(fmt::format("unknown zero-vector policy '{}' (expected error|zero)", text));
}

TargetMode parse_target_mode(std::string_view text) {
  if (text == "answer") return TargetMode::answer;
  if (text == "full" || text == "full_trace") return TargetMode::full_trace;
  if (text == "suffix") return TargetMode::suffix;
  throw InputError(fmt::format("unknown target mode '{}' (expected answer|full|suffix)", text));
}

HistoryScheme HistoryScheme::parse(std::string_view text) {
  HistoryScheme scheme;
  if (text == "uniform") {
    scheme = uniform();
  } else if (text.starts_with("window:")) {
    scheme = sliding_window(parse_u32(text.substr(7), "window size"));
  } else if (text.starts_with("ema:")) {
    scheme = ema(parse_double(text.substr(4), "EMA decay"));
  } else {
    throw InputError(fmt::format("unknown history scheme '{}' (expected uniform|window:W|ema:BETA)", text));
  }
  scheme.validate();
  return scheme;
}

std::string HistoryScheme::to_string() const {
  switch (kind) {
    case Kind::uniform: return "uniform";
    case Kind::window: return fmt::format("window:{}", window);
    case Kind::ema: return fmt::format("ema:{}", beta);
  }
  return "uniform";
}

void HistoryScheme::validate() const {
  if (kind == Kind::window && window < 1) throw InputError("history window W must be >= 1");
  if (kind == Kind::ema && !(beta >= 0.0 && beta < 1.0)) {
    throw InputError(fmt::format("EMA decay must lie in [0, 1), got {}", beta));
  }
}

void ScoringConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError(fmt::format("alpha must lie in [0, 1], got {}", alpha));
  history.validate();
  if (checkpoints.empty()) throw InputError("at least one checkpoint is required");
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i].empty()) throw InputError("checkpoint ids must be non-empty");
    for (std::size_t j = 0; j < i; ++j) {
      if (checkpoints[i] == checkpoints[j]) throw InputError(fmt::format("checkpoint id {} given twice", checkpoints[i]));
    }
  }
}

ojson ScoringConfig::to_json() const {
  ojson j;
  j["alpha"] = alpha;
  j["history"] = history.to_string();
  j["target"] = grace::to_string(target);
  j["zero_vector"] = grace::to_string(zero_vector);
  j["checkpoints"] = checkpoints;
  return j;
}

ScoringConfig ScoringConfig::from_json(const ojson& j) {
  ScoringConfig c;
  try {
    c.alpha = j.at("alpha").get<double>();
    c.history = HistoryScheme::parse(j.at("history").get<std::string>());
    c.target = parse_target_mode(j.at("target").get<std::string>());
    c.zero_vector = parse_zero_vector_policy(j.at("zero_vector").get<std::string>());
    c.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(fmt::format("invalid scoring config: {}", e.what()));
  }
  c.validate();
  return c;
}

std::string ScoringConfig::hash() const {
  return short_digest(to_json().dump());
}

OutputProjection::OutputProjection(Eigen::MatrixXd weights) : weights_(std::move(weights)) {
  if (weights_.rows() < 1) throw std::invalid_argument("output projection needs hidden dim >= 1");
  if (weights_.cols() < 2) throw std::invalid_argument("output projection needs vocabulary size >= 2");
  if (!weights_.allFinite()) throw std::invalid_argument("output projection has non-finite entries");
}

Vector upstream_signal(std::span<const double> probs, std::size_t target, const OutputProjection& projection,
                       bool strict) {
  const std::size_t vocab = projection.vocab_size();
  if (probs.size() != vocab) {
    throw std::invalid_argument(fmt::format("probability vector has length {} (vocabulary {})", probs.size(), vocab));
  }
  if (target >= vocab) throw std::invalid_argument(fmt::format("target token {} out of range [0, {})", target, vocab));
  if (strict) {
    if (std::any_of(probs.begin(), probs.end(), [](double p) { return !(p >= 0.0); })) {
      throw std::invalid_argument("probability vector has negative or NaN entries");
    }
    if (std::abs(pairwise_sum(probs) - 1.0) > 1e-6) {
      throw std::invalid_argument("probability vector does not sum to 1");
    }
  }
  Eigen::VectorXd residual = Eigen::Map<const Eigen::VectorXd>(probs.data(), static_cast<Eigen::Index>(vocab));
#ifdef GRACE_MUTATE_UPSTREAM_SIGN
  // Deliberately wrong build used by the mutation test: u = W_out (y - p).
  residual = -residual;
  residual(static_cast<Eigen::Index>(target)) += 1.0;
#else
  residual(static_cast<Eigen::Index>(target)) -= 1.0;
#endif
  const Eigen::VectorXd u = projection.weights() * residual;
  return Vector(u.data(), u.data() + u.size());
}

Vector segment_proxy(std::span<const Vector> signals) {
  if (signals.empty()) throw std::invalid_argument("segment_proxy: empty segment");
  Vector mean = pairwise_vector_sum(signals);
  const double inv = 1.0 / static_cast<double>(signals.size());
  for (double& x : mean) x *= inv;
  return mean;
}

double cosine(std::span<const double> a, std::span<const double> b, ZeroVectorPolicy policy) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    if (policy == ZeroVectorPolicy::error) throw ZeroVectorError("cosine of a zero vector");
    return 0.0;
  }
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

HistoryWeights materialize_weights(std::size_t k, const HistoryScheme& scheme) {
  if (k < 2) throw std::invalid_argument("history weights are defined for k >= 2");
  scheme.validate();
  const std::size_t n = k - 1;
  HistoryWeights out{scheme, k, std::vector<double>(n, 0.0)};
  switch (scheme.kind) {
    case HistoryScheme::Kind::uniform:
      std::fill(out.weights.begin(), out.weights.end(), 1.0 / static_cast<double>(n));
      break;
    case HistoryScheme::Kind::window: {
      const std::size_t width = std::min<std::size_t>(scheme.window, n);
      // j (1-based) in [max(1, k - W), k): the last `width` entries.
      std::fill(out.weights.end() - static_cast<std::ptrdiff_t>(width), out.weights.end(),
                1.0 / static_cast<double>(width));
      break;
    }
    case HistoryScheme::Kind::ema: {
      // beta^(k-1-j); j = k-1 gets beta^0 = 1, including beta = 0.
      double power = 1.0;
      for (std::size_t idx = n; idx-- > 0;) {
        out.weights[idx] = power;
        power *= scheme.beta;
      }
      const double total = pairwise_sum(out.weights);
      for (double& w : out.weights) w /= total;
      break;
    }
  }
  return out;
}

Vector history_reference(std::span<const Vector> previous, const HistoryWeights& weights, ZeroVectorPolicy policy) {
  if (previous.size() + 1 != weights.step || weights.weights.size() != previous.size()) {
    throw std::invalid_argument("history_reference: weights do not match the number of preceding steps");
  }
  Vector ref = weighted_vector_sum(previous, weights.weights);
  const double n = norm(ref);
  if (n == 0.0) {
    if (policy == ZeroVectorPolicy::error) {
      throw ZeroVectorError(fmt::format("history reference for step {} is the zero vector", weights.step));
    }
    return ref;
  }
  for (double& x : ref) x /= n;
  return ref;
}

Vector target_proxy(std::span<const Vector> steps, const Vector& answer, std::span<const std::size_t> step_tokens,
                    std::size_t answer_tokens, TargetMode mode, std::size_t k) {
  if (k < 1 || k > steps.size()) throw std::invalid_argument(fmt::format("step index {} out of range", k));
  if (mode == TargetMode::answer) return answer;
  if (step_tokens.size() != steps.size() || answer_tokens == 0 ||
      std::any_of(step_tokens.begin(), step_tokens.end(), [](std::size_t n) { return n == 0; })) {
    throw InputError("full/suffix targets require a positive token count for every segment");
  }
  const std::size_t first = mode == TargetMode::full_trace ? 0 : k;
  std::vector<Vector> segments(steps.begin() + static_cast<std::ptrdiff_t>(first), steps.end());
  std::vector<double> weights;
  std::size_t total = answer_tokens;
  for (std::size_t i = first; i < steps.size(); ++i) total += step_tokens[i];
  for (std::size_t i = first; i < steps.size(); ++i) {
    weights.push_back(static_cast<double>(step_tokens[i]) / static_cast<double>(total));
  }
  segments.push_back(answer);
  weights.push_back(static_cast<double>(answer_tokens) / static_cast<double>(total));
  return weighted_vector_sum(segments, weights);
}

Vector target_proxy(const SignalRecord& record, const ReasoningSample& sample, TargetMode mode, std::size_t k) {
  if (record.num_steps() != sample.num_steps()) {
    throw InputError(fmt::format("sample {}: record has {} steps, sample has {}", sample.sample_id,
                                 record.num_steps(), sample.num_steps()));
  }
  std::vector<Vector> steps;
  std::vector<std::size_t> tokens;
  for (std::size_t i = 0; i < record.num_steps(); ++i) {
    steps.push_back(to_double(record.step(i)));
    tokens.push_back(sample.steps[i].size());
  }
  return target_proxy(steps, to_double(record.answer_proxy), tokens, sample.answer.size(), mode, k);
}

StepScore step_score(std::span<const double> step, std::span<const double> target, const Vector* history,
                     double alpha, std::size_t k, ZeroVectorPolicy policy) {
  if (k < 1) throw std::invalid_argument("step index is 1-based");
  if ((history == nullptr) != (k == 1)) {
    throw std::invalid_argument("a history reference is required for k > 1 and forbidden for k = 1");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  StepScore s;
  s.step = k;
  s.answer_alignment = cosine(step, target, policy);
  if (history == nullptr) {
    s.score = s.answer_alignment;
  } else {
    // A zero reference only reaches here under score_zero; its alignment is 0.
    const double hist = norm(*history) == 0.0 ? 0.0 : cosine(step, *history, policy);
    s.history_alignment = hist;
    s.score = alpha * s.answer_alignment + (1.0 - alpha) * hist;
  }
  return s;
}

std::vector<StepScore> score_steps(std::span<const Vector> steps, std::span<const Vector> targets,
                                   const ScoringConfig& config) {
  if (steps.empty()) throw std::invalid_argument("score_steps: no steps");
  if (targets.size() != steps.size()) throw std::invalid_argument("score_steps: one target per step required");
  std::vector<StepScore> out;
  out.reserve(steps.size());
  for (std::size_t k = 1; k <= steps.size(); ++k) {
    if (k == 1) {
      out.push_back(step_score(steps[0], targets[0], nullptr, config.alpha, 1, config.zero_vector));
      continue;
    }
    const auto weights = materialize_weights(k, config.history);
    const Vector ref = history_reference(steps.first(k - 1), weights, config.zero_vector);
    out.push_back(step_score(steps[k - 1], targets[k - 1], &ref, config.alpha, k, config.zero_vector));
  }
  return out;
}

ScoreReport score_sample(const ReasoningSample& sample, const SignalRecord& record, const ScoringConfig& config) {
  if (record.sample_id != sample.sample_id) {
    throw InputError(fmt::format("record {} does not match sample {}", record.sample_id, sample.sample_id));
  }
  if (record.num_steps() != sample.num_steps()) {
    throw InputError(fmt::format("sample {}: record has {} steps, sample has {}", sample.sample_id,
                                 record.num_steps(), sample.num_steps()));
  }
  std::vector<Vector> steps;
  std::vector<std::size_t> tokens;
  for (std::size_t i = 0; i < record.num_steps(); ++i) {
    steps.push_back(to_double(record.step(i)));
    tokens.push_back(sample.steps[i].size());
  }
  const Vector answer = to_double(record.answer_proxy);
  std::vector<Vector> targets;
  targets.reserve(steps.size());
  for (std::size_t k = 1; k <= steps.size(); ++k) {
    targets.push_back(target_proxy(steps, answer, tokens, sample.answer.size(), config.target, k));
  }

  ScoreReport report;
  report.sample_id = sample.sample_id;
  report.checkpoint_id = record.checkpoint_id;
  report.steps = score_steps(steps, targets, config);
  std::vector<double> scores;
  for (const auto& s : report.steps) scores.push_back(s.score);
  report.value = sample_value(scores);
  report.config_hash = config.hash();
  return report;
}

ojson to_json(const StepScore& s) {
  ojson j;
  j["k"] = s.step;
  j["ans"] = s.answer_alignment;
  j["hist"] = s.history_alignment ? ojson(*s.history_alignment) : ojson(nullptr);
  j["score"] = s.score;
  return j;
}

ojson to_json(const ScoreReport& r) {
  ojson j;
  j["sample_id"] = r.sample_id;
  j["checkpoint"] = r.checkpoint_id;
  ojson steps = ojson::array();
  for (const auto& s : r.steps) steps.push_back(to_json(s));
  j["steps"] = std::move(steps);
  j["value"] = r.value;
  j["config_hash"] = r.config_hash;
  return j;
}

ScoreReport score_report_from_json(const ojson& j) {
  ScoreReport r;
  try {
    r.sample_id = j.at("sample_id").get<std::string>();
    r.checkpoint_id = j.at("checkpoint").get<std::string>();
    for (const auto& s : j.at("steps")) {
      StepScore step;
      step.step = s.at("k").get<std::size_t>();
      step.answer_alignment = s.at("ans").get<double>();
      if (!s.at("hist").is_null()) step.history_alignment = s.at("hist").get<double>();
      step.score = s.at("score").get<double>();
      r.steps.push_back(step);
    }
    r.value = j.at("value").get<double>();
    r.config_hash = j.at("config_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(fmt::format("invalid score record: {}", e.what()));
  }
  return r;
}

}  // namespace grace
