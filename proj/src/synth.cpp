#include "grace/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <fmt/core.h>

#include "grace/error.hpp"
#include "grace/rng.hpp"
#include "grace/stats.hpp"
#include "grace/valuation.hpp"

namespace grace::synth {

namespace {

Eigen::VectorXd random_unit(Rng& rng, std::size_t n) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  do {
    for (auto& x : v) x = rng.normal();
  } while (v.norm() == 0.0);
  return v / v.norm();
}

Eigen::VectorXd orthogonal_unit(Rng& rng, const Eigen::VectorXd& axis) {
  Eigen::VectorXd v;
  do {
    v = random_unit(rng, static_cast<std::size_t>(axis.size()));
    v -= v.dot(axis) * axis;
  } while (v.norm() < 1e-6);
  return v / v.norm();
}

Eigen::MatrixXd normal_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = scale * rng.normal();
  }
  return m;
}

// Planted labels: exactly aligned_count() samples at uniformly random positions.
std::vector<bool> plant_labels(Rng& rng, const SynthSpec& spec) {
  std::vector<std::size_t> order(spec.samples);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[rng.index(i + 1)]);
  std::vector<bool> aligned(spec.samples, false);
  for (std::size_t i = 0; i < spec.aligned_count(); ++i) aligned[order[i]] = true;
  return aligned;
}

// Contiguous step spans from token 0, then the answer span.
ReasoningSample layout_sample(Rng& rng, const SynthSpec& spec, std::size_t index) {
  ReasoningSample s;
  s.sample_id = fmt::format("synth-{:06d}", index);
  const auto k_steps = rng.between(spec.min_steps, spec.max_steps);
  std::uint32_t cursor = 0;
  for (std::size_t k = 0; k < k_steps; ++k) {
    const auto len = static_cast<std::uint32_t>(rng.between(spec.min_step_tokens, spec.max_step_tokens));
    s.steps.push_back({cursor, cursor + len});
    cursor += len;
  }
  const auto len = static_cast<std::uint32_t>(rng.between(spec.min_answer_tokens, spec.max_answer_tokens));
  s.answer = {cursor, cursor + len};
  return s;
}

void append_f32(std::vector<float>& dst, const Eigen::VectorXd& v) {
  for (double x : v) dst.push_back(static_cast<float>(x));
}

// Column-wise softmax cross-entropy pieces for a token batch.
struct Batch {
  Eigen::MatrixXd inputs;            // m x n
  std::vector<std::size_t> targets;  // n
  Eigen::RowVectorXd weights;        // n, sums to 1
};

Batch make_batch(const ToyTask& task, std::span<const std::size_t> sample_indices) {
  std::vector<std::pair<std::size_t, double>> tokens;
  const double per_sample = 1.0 / static_cast<double>(sample_indices.size());
  for (std::size_t i : sample_indices) {
    const auto set = task.sample_tokens(i);
    for (std::size_t t : set) tokens.emplace_back(t, per_sample / static_cast<double>(set.size()));
  }
  Batch b;
  b.inputs.resize(static_cast<Eigen::Index>(task.model.input_dim()), static_cast<Eigen::Index>(tokens.size()));
  b.weights.resize(static_cast<Eigen::Index>(tokens.size()));
  for (std::size_t c = 0; c < tokens.size(); ++c) {
    const auto& tok = task.model.tokens[tokens[c].first];
    b.inputs.col(static_cast<Eigen::Index>(c)) = tok.input;
    b.targets.push_back(tok.target);
    b.weights(static_cast<Eigen::Index>(c)) = tokens[c].second;
  }
  return b;
}

// Column-wise softmax(W_out^T B X) with y subtracted.
Eigen::MatrixXd residuals(const Eigen::MatrixXd& output, const Eigen::MatrixXd& rep, const Batch& b) {
  Eigen::MatrixXd logits = output.transpose() * (rep * b.inputs);
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    auto col = logits.col(c);
    col = (col.array() - col.maxCoeff()).exp();
    col /= col.sum();
    col(static_cast<Eigen::Index>(b.targets[static_cast<std::size_t>(c)])) -= 1.0;
  }
  return logits;
}

std::vector<std::size_t> indices_of(const ToyTask& task, const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < task.samples.size(); ++i) by_id[task.samples[i].sample_id] = i;
  std::vector<std::size_t> out;
  for (const auto& id : ids) out.push_back(by_id.at(id));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::size_t SynthSpec::aligned_count() const {
  return static_cast<std::size_t>(std::llround(aligned_fraction * static_cast<double>(samples)));
}

void SynthSpec::validate() const {
  if (!(aligned_fraction > 0.0 && aligned_fraction < 1.0)) throw InputError("aligned fraction q must lie in (0, 1)");
  if (!(strength >= 0.0 && strength <= 1.0)) throw InputError("alignment strength s must lie in [0, 1]");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw InputError("noise scale sigma must be finite and >= 0");
  if (hidden_dim < 2) throw InputError("synthetic hidden dim must be >= 2");
  if (min_steps < 1 || min_steps > max_steps) throw InputError("need 1 <= min_steps <= max_steps");
  if (min_step_tokens < 1 || min_step_tokens > max_step_tokens || min_answer_tokens < 1 ||
      min_answer_tokens > max_answer_tokens) {
    throw InputError("token length ranges must be non-empty and positive");
  }
  if (aligned_fraction * static_cast<double>(samples) < 1.0 || aligned_count() >= samples) {
    throw InputError("degenerate spec: need at least one aligned and one misaligned sample");
  }
}

SynthData generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SynthData data;
  data.aligned = plant_labels(rng, spec);
  const double noise_scale = spec.noise / std::sqrt(static_cast<double>(spec.hidden_dim));
  for (std::size_t i = 0; i < spec.samples; ++i) {
    ReasoningSample sample = layout_sample(rng, spec, i);
    SignalRecord record;
    record.sample_id = sample.sample_id;
    record.checkpoint_id = "synth";
    record.hidden_dim = static_cast<std::uint32_t>(spec.hidden_dim);

    const Eigen::VectorXd answer_dir = random_unit(rng, spec.hidden_dim);
    append_f32(record.answer_proxy, answer_dir * rng.uniform(0.5, 2.0));
    for (std::size_t k = 0; k < sample.num_steps(); ++k) {
      const Eigen::VectorXd base = data.aligned[i] ? answer_dir : orthogonal_unit(rng, answer_dir);
      Eigen::VectorXd step = spec.strength * base;
      for (auto& x : step) x += noise_scale * rng.normal();
      append_f32(record.step_data, step * rng.uniform(0.5, 2.0));
    }
    data.samples.push_back(std::move(sample));
    data.signals.push_back(std::move(record));
  }
  return data;
}

SeparationReport separation_experiment(const SynthSpec& spec, const ScoringConfig& config, double rho) {
  const SynthData data = generate(spec);
  std::map<std::string, double> values;
  std::vector<double> scores;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const double v = score_sample(data.samples[i], data.signals[i], config).value;
    values[data.samples[i].sample_id] = v;
    scores.push_back(v);
  }
  SeparationReport report;
  report.auc = stats::roc_auc(scores, data.aligned);
  report.aligned = spec.aligned_count();
  const auto selection = select_top(values, rho);
  report.budget = selection.budget;
  std::size_t hits = 0;
  for (const auto& id : selection.selected_ids) {
    // ids are "synth-%06d" so the index is recoverable.
    const auto index = static_cast<std::size_t>(std::stoul(id.substr(6)));
    if (data.aligned[index]) ++hits;
  }
  report.precision_at_budget = static_cast<double>(hits) / static_cast<double>(selection.budget);
  return report;
}

double relative_average(std::span<const double> subset, std::span<const double> full) {
  if (subset.size() != full.size() || subset.empty()) {
    throw std::invalid_argument("relative_average: need equal, non-empty entry lists");
  }
  std::vector<double> ratios;
  for (std::size_t b = 0; b < subset.size(); ++b) {
    if (full[b] == 0.0) throw std::invalid_argument(fmt::format("relative_average: full-data entry {} is zero", b));
    ratios.push_back(100.0 * subset[b] / full[b]);
  }
  return stats::mean(ratios);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::grace: return "grace";
    case Method::random: return "random";
    case Method::longest: return "longest";
    case Method::stepmax: return "stepmax";
    case Method::full: return "full";
  }
  return "grace";
}

Method parse_method(std::string_view text) {
  for (Method m : {Method::grace, Method::random, Method::longest, Method::stepmax, Method::full}) {
    if (text == to_string(m)) return m;
  }
  throw InputError(fmt::format("unknown method '{}' (expected grace|random|longest|stepmax|full)", text));
}

oracle::TokenSet ToyTask::sample_tokens(std::size_t i) const {
  oracle::TokenSet set(samples.at(i).total_supervised_tokens());
  std::iota(set.begin(), set.end(), offsets.at(i));
  return set;
}

ToyTask build_toy_task(const SynthSpec& spec, const ToyTaskOptions& options) {
  spec.validate();
  if (options.vocab < 2 || options.input_dim < 1 || options.hidden_dim < 1 || options.target_tokens < 1) {
    throw InputError("toy task needs vocab >= 2 and positive dimensions");
  }
  Rng rng(spec.seed);
  ToyTask task;
  const double out_scale = 1.0 / std::sqrt(static_cast<double>(options.hidden_dim));
  task.model.output = normal_matrix(rng, options.hidden_dim, options.vocab, out_scale);
  task.model.rep = normal_matrix(rng, options.hidden_dim, options.input_dim, options.init_scale);
  const Eigen::MatrixXd teacher = normal_matrix(rng, options.hidden_dim, options.input_dim, 1.0);
  task.aligned = plant_labels(rng, spec);

  auto teacher_label = [&](const Eigen::VectorXd& x) {
    Eigen::Index best = 0;
    (task.model.output.transpose() * (teacher * x)).maxCoeff(&best);
    return static_cast<std::size_t>(best);
  };
  auto draw_input = [&](const Eigen::VectorXd& centroid) {
    Eigen::VectorXd x = centroid;
    for (auto& v : x) v += spec.noise * rng.normal();
    return x;
  };
  auto draw_centroid = [&] {
    Eigen::VectorXd c(static_cast<Eigen::Index>(options.input_dim));
    for (auto& v : c) v = rng.normal();
    return c;
  };

  for (std::size_t i = 0; i < spec.samples; ++i) {
    ReasoningSample sample = layout_sample(rng, spec, i);
    task.offsets.push_back(task.model.tokens.size());
    const Eigen::VectorXd centroid = draw_centroid();
    const std::size_t step_tokens = sample.answer.begin;
    for (std::size_t t = 0; t < sample.total_supervised_tokens(); ++t) {
      oracle::Token tok{draw_input(centroid), 0};
      tok.target = teacher_label(tok.input);
      if (t < step_tokens && !task.aligned[i] && rng.uniform() < spec.strength) {
        tok.target = (tok.target + 1 + rng.index(options.vocab - 1)) % options.vocab;
      }
      task.model.tokens.push_back(std::move(tok));
    }
    task.samples.push_back(std::move(sample));
  }
  for (std::size_t t = 0; t < options.target_tokens; ++t) {
    oracle::Token tok{draw_input(draw_centroid()), 0};
    tok.target = teacher_label(tok.input);
    task.target_set.push_back(task.model.tokens.size());
    task.model.tokens.push_back(std::move(tok));
  }
  task.model.validate();
  return task;
}

Eigen::MatrixXd train_student(const ToyTask& task, std::span<const std::size_t> sample_indices, std::size_t steps,
                              double learning_rate) {
  if (sample_indices.empty()) throw std::invalid_argument("train_student: empty subset");
  const Batch batch = make_batch(task, sample_indices);
  Eigen::MatrixXd rep = task.model.rep;
  for (std::size_t step = 0; step < steps; ++step) {
    Eigen::MatrixXd signal = task.model.output * residuals(task.model.output, rep, batch);  // d x n
    signal.array().rowwise() *= batch.weights.array();
    rep -= learning_rate * signal * batch.inputs.transpose();
    if (!rep.allFinite()) break;
  }
  return rep;
}

double target_loss(const ToyTask& task, const Eigen::MatrixXd& rep) {
  if (!rep.allFinite()) return std::numeric_limits<double>::quiet_NaN();
  oracle::TinyRepModel model = task.model;
  model.rep = rep;
  return oracle::segment_loss(model, task.target_set);
}

std::vector<SignalRecord> extract_signals(const ToyTask& task, const Eigen::MatrixXd& rep,
                                          const std::string& checkpoint_id) {
  oracle::TinyRepModel model = task.model;
  model.rep = rep;
  std::vector<SignalRecord> records;
  for (std::size_t i = 0; i < task.samples.size(); ++i) {
    const auto& sample = task.samples[i];
    SignalRecord r;
    r.sample_id = sample.sample_id;
    r.checkpoint_id = checkpoint_id;
    r.hidden_dim = static_cast<std::uint32_t>(model.hidden_dim());
    auto segment = [&](const Span& span) {
      oracle::TokenSet set;
      for (std::uint32_t t = span.begin; t < span.end; ++t) set.push_back(task.offsets[i] + t);
      return segment_proxy(oracle::upstream_signals(model, set));
    };
    for (const auto& span : sample.steps) {
      for (double x : segment(span)) r.step_data.push_back(static_cast<float>(x));
    }
    for (double x : segment(sample.answer)) r.answer_proxy.push_back(static_cast<float>(x));
    records.push_back(std::move(r));
  }
  return records;
}

double DownstreamReport::loss(Method m, std::uint64_t seed) const {
  for (const auto& r : rows) {
    if (r.method == m && r.seed == seed) return r.target_loss;
  }
  throw std::out_of_range(fmt::format("no downstream row for {} seed {}", to_string(m), seed));
}

void DownstreamReport::write_csv(std::ostream& out) const {
  out << "method,seed,subset_size,target_loss,diverged\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{}\n", to_string(r.method), r.seed, r.subset_size, r.target_loss,
                       r.diverged ? 1 : 0);
  }
}

void DownstreamReport::write_summary_csv(std::ostream& out) const {
  out << "method,rho,mean_target_loss,sd_target_loss,relative_average,diverged\n";
  for (const auto& [m, s] : summary) {
    out << fmt::format("{},{},{},{},{},{}\n", to_string(m), rho, s.mean_loss, s.sd_loss, s.relative_average,
                       s.diverged);
  }
}

DownstreamReport downstream_experiment(const SynthSpec& spec, const ToyTaskOptions& options,
                                       std::span<const Method> methods, std::span<const std::uint64_t> seeds,
                                       double rho, const ScoringConfig& config) {
  if (methods.empty()) throw InputError("downstream_experiment: no methods");
  if (seeds.size() < 3) throw InputError("downstream_experiment: need at least 3 seeds");
  config.validate();
  std::vector<Method> run(methods.begin(), methods.end());
  if (std::find(run.begin(), run.end(), Method::full) == run.end()) run.push_back(Method::full);

  DownstreamReport report;
  report.rho = rho;
  for (std::uint64_t seed : seeds) {
    SynthSpec seeded = spec;
    seeded.seed = seed;
    const ToyTask task = build_toy_task(seeded, options);

    // Scoring checkpoint: a short warm-up on a gamma-sized random subset.
    const auto warm_ids = baseline_random(task.samples, options.warmup_fraction, seed ^ 0x9e3779b97f4a7c15ULL);
    const auto warm_rep = train_student(task, indices_of(task, warm_ids.selected_ids), options.warmup_steps,
                                        options.learning_rate);
    // A diverged warm-up leaves nothing to score; the grace row then records NaN.
    const bool warm_ok = warm_rep.allFinite();
    const auto signals = warm_ok ? extract_signals(task, warm_rep, "warmup") : std::vector<SignalRecord>{};

    for (Method m : run) {
      std::vector<std::string> chosen;
      switch (m) {
        case Method::grace: {
          if (!warm_ok) break;
          std::map<std::string, double> values;
          for (std::size_t i = 0; i < task.samples.size(); ++i) {
            values[task.samples[i].sample_id] = score_sample(task.samples[i], signals[i], config).value;
          }
          chosen = select_top(values, rho).selected_ids;
          break;
        }
        case Method::random: chosen = baseline_random(task.samples, rho, seed).selected_ids; break;
        case Method::longest: chosen = baseline_longest(task.samples, rho).selected_ids; break;
        case Method::stepmax: chosen = baseline_stepmax(task.samples, rho).selected_ids; break;
        case Method::full:
          for (const auto& s : task.samples) chosen.push_back(s.sample_id);
          break;
      }
      const auto indices = indices_of(task, chosen);
      DownstreamRow row;
      row.method = m;
      row.seed = seed;
      row.subset_size = indices.size();
      row.target_loss = indices.empty()
                            ? std::numeric_limits<double>::quiet_NaN()
                            : target_loss(task, train_student(task, indices, options.train_steps, options.learning_rate));
      row.diverged = !std::isfinite(row.target_loss);
      report.rows.push_back(row);
    }
  }

  for (Method m : run) {
    std::vector<double> losses, subset, full;
    MethodSummary s;
    for (std::uint64_t seed : seeds) {
      const double l = report.loss(m, seed);
      if (!std::isfinite(l)) {
        ++s.diverged;
        continue;
      }
      const double f = report.loss(Method::full, seed);
      losses.push_back(l);
      if (std::isfinite(f)) {
        subset.push_back(l);
        full.push_back(f);
      }
    }
    if (!losses.empty()) {
      s.mean_loss = stats::mean(losses);
      s.sd_loss = stats::stddev(losses);
    }
    if (!subset.empty()) s.relative_average = relative_average(subset, full);
    report.summary[m] = s;
  }
  return report;
}

}  // namespace grace::synth
