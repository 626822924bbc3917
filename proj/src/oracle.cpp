#include "grace/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <fmt/core.h>

#include "grace/digest.hpp"
#include "grace/error.hpp"
#include "grace/stats.hpp"

namespace grace::oracle {

namespace {

using ojson = nlohmann::ordered_json;

Vector to_vector(const Eigen::VectorXd& v) { return Vector(v.data(), v.data() + v.size()); }

Eigen::VectorXd flatten(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

void require_non_empty(const TokenSet& set, const TinyRepModel& model) {
  if (set.empty()) throw std::invalid_argument("token set is empty");
  for (std::size_t t : set) {
    if (t >= model.tokens.size()) throw std::invalid_argument(fmt::format("token {} out of range", t));
  }
}

// act'(B x_t) * u_t, the signal that reaches B through the activation.
Eigen::VectorXd rep_signal(const TinyRepModel& model, const OutputProjection& projection, std::size_t t) {
  const Eigen::VectorXd p = model.probs(t);
  const Vector u = upstream_signal(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                                   model.tokens[t].target, projection);
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
  if (model.activation == Activation::tanh) {
    const Eigen::VectorXd h = model.hidden(t);
    v.array() *= 1.0 - h.array().square();
  }
  return v;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

GradientCheck compare(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  GradientCheck c;
  c.coordinates = static_cast<std::size_t>(analytic.size());
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    c.max_rel_error = std::max(c.max_rel_error, relative_error(analytic(i), numeric(i)));
  }
  return c;
}

// Moves (W_out, B) by -eta * direction, direction laid out as joint_gradient.
TinyRepModel stepped(const TinyRepModel& model, const Eigen::VectorXd& direction, double eta) {
  TinyRepModel out = model;
  const Eigen::Index n_out = out.output.size();
  Eigen::Map<Eigen::VectorXd>(out.output.data(), n_out) -= eta * direction.head(n_out);
  Eigen::Map<Eigen::VectorXd>(out.rep.data(), out.rep.size()) -= eta * direction.tail(out.rep.size());
  return out;
}

void fill_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, Eigen::MatrixXd& m) {
  m.resize(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
}

Eigen::VectorXd random_unit(Rng& rng, std::size_t n) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  do {
    for (auto& x : v) x = rng.normal();
  } while (v.norm() == 0.0);
  return v / v.norm();
}

double mean_pairwise_cosine(const TinyRepModel& model) {
  std::vector<double> cosines;
  for (std::size_t a = 0; a < model.tokens.size(); ++a) {
    for (std::size_t b = a + 1; b < model.tokens.size(); ++b) {
      const auto& xa = model.tokens[a].input;
      const auto& xb = model.tokens[b].input;
      cosines.push_back(xa.dot(xb) / (xa.norm() * xb.norm()));
    }
  }
  return cosines.empty() ? 1.0 : stats::mean(cosines);
}

template <typename Fn>
CheckResult timed_check(std::string name, double threshold, Fn&& body) {
  CheckResult result;
  result.name = std::move(name);
  result.threshold = threshold;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(result);
  } catch (const std::exception& e) {
    result.passed = false;
    result.detail = fmt::format("exception: {}", e.what());
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

TokenSet range_set(std::size_t begin, std::size_t end) {
  TokenSet s;
  for (std::size_t t = begin; t < end; ++t) s.push_back(t);
  return s;
}

}  // namespace

Eigen::VectorXd TinyRepModel::hidden(std::size_t t) const {
  Eigen::VectorXd z = rep * tokens.at(t).input;
  if (activation == Activation::tanh) z = z.array().tanh();
  return z;
}

Eigen::VectorXd TinyRepModel::logits(std::size_t t) const { return output.transpose() * hidden(t); }

Eigen::VectorXd TinyRepModel::probs(std::size_t t) const { return softmax(logits(t)); }

void TinyRepModel::validate() const {
  if (rep.rows() < 1 || rep.cols() < 1) throw std::invalid_argument("representation matrix must be non-empty");
  if (output.rows() != rep.rows()) throw std::invalid_argument("W_out rows must equal the hidden dim");
  if (output.cols() < 2) throw std::invalid_argument("vocabulary size must be >= 2");
  for (const auto& tok : tokens) {
    if (tok.input.size() != rep.cols()) throw std::invalid_argument("token input has the wrong dimension");
    if (tok.target >= vocab_size()) throw std::invalid_argument("token target out of range");
  }
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd shifted = (logits.array() - logits.maxCoeff()).exp();
  return shifted / shifted.sum();
}

double cross_entropy(const Eigen::VectorXd& logits, std::size_t target) {
  const double top = logits.maxCoeff();
  return top + std::log((logits.array() - top).exp().sum()) - logits(static_cast<Eigen::Index>(target));
}

double token_loss(const TinyRepModel& model, std::size_t t) {
  return cross_entropy(model.logits(t), model.tokens.at(t).target);
}

double segment_loss(const TinyRepModel& model, const TokenSet& set) {
  require_non_empty(set, model);
  std::vector<double> losses;
  losses.reserve(set.size());
  for (std::size_t t : set) losses.push_back(token_loss(model, t));
  return stats::mean(losses);
}

std::vector<Vector> upstream_signals(const TinyRepModel& model, const TokenSet& set) {
  require_non_empty(set, model);
  const OutputProjection projection(model.output);
  std::vector<Vector> out;
  out.reserve(set.size());
  for (std::size_t t : set) {
    const Eigen::VectorXd p = model.probs(t);
    out.push_back(upstream_signal(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                                  model.tokens[t].target, projection));
  }
  return out;
}

Eigen::VectorXd exact_segment_gradient(const TinyRepModel& model, const TokenSet& set) {
  require_non_empty(set, model);
  const OutputProjection projection(model.output);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(model.rep.rows(), model.rep.cols());
  for (std::size_t t : set) grad += rep_signal(model, projection, t) * model.tokens[t].input.transpose();
  grad /= static_cast<double>(set.size());
  return flatten(grad);
}

Eigen::VectorXd output_gradient(const TinyRepModel& model, const TokenSet& set) {
  require_non_empty(set, model);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(model.output.rows(), model.output.cols());
  for (std::size_t t : set) {
    Eigen::VectorXd residual = model.probs(t);
    residual(static_cast<Eigen::Index>(model.tokens[t].target)) -= 1.0;
    grad += model.hidden(t) * residual.transpose();
  }
  grad /= static_cast<double>(set.size());
  return flatten(grad);
}

Eigen::VectorXd joint_gradient(const TinyRepModel& model, const TokenSet& set) {
  const Eigen::VectorXd g_out = output_gradient(model, set);
  const Eigen::VectorXd g_rep = exact_segment_gradient(model, set);
  Eigen::VectorXd g(g_out.size() + g_rep.size());
  g << g_out, g_rep;
  return g;
}

Eigen::VectorXd finite_difference_gradient(const TinyRepModel& model, const TokenSet& set, Parameters which,
                                           double h) {
  require_non_empty(set, model);
  TinyRepModel probe = model;
  const Eigen::Index n_out = which == Parameters::joint ? probe.output.size() : 0;
  const Eigen::Index n = n_out + probe.rep.size();
  Eigen::VectorXd grad(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double& coord = i < n_out ? probe.output.data()[i] : probe.rep.data()[i - n_out];
    const double saved = coord;
    coord = saved + h;
    const double plus = segment_loss(probe, set);
    coord = saved - h;
    const double minus = segment_loss(probe, set);
    coord = saved;
    grad(i) = (plus - minus) / (2.0 * h);
  }
  return grad;
}

GradientCheck check_rep_gradient(const TinyRepModel& model, const TokenSet& set, double h) {
  return compare(exact_segment_gradient(model, set), finite_difference_gradient(model, set, Parameters::rep, h));
}

GradientCheck check_joint_gradient(const TinyRepModel& model, const TokenSet& set, double h) {
  return compare(joint_gradient(model, set), finite_difference_gradient(model, set, Parameters::joint, h));
}

GradientCheck check_upstream_signal(const TinyRepModel& model, std::size_t t, double h) {
  const OutputProjection projection(model.output);
  const Eigen::VectorXd p = model.probs(t);
  const Vector u = upstream_signal(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                                   model.tokens.at(t).target, projection);
  Eigen::VectorXd hidden = model.hidden(t);
  Eigen::VectorXd numeric(hidden.size());
  for (Eigen::Index i = 0; i < hidden.size(); ++i) {
    const double saved = hidden(i);
    hidden(i) = saved + h;
    const double plus = cross_entropy(model.output.transpose() * hidden, model.tokens[t].target);
    hidden(i) = saved - h;
    const double minus = cross_entropy(model.output.transpose() * hidden, model.tokens[t].target);
    hidden(i) = saved;
    numeric(i) = (plus - minus) / (2.0 * h);
  }
  return compare(Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size())), numeric);
}

SoftmaxGradCheck softmax_grad_check(const Eigen::VectorXd& logits, std::size_t target, double h) {
  if (target >= static_cast<std::size_t>(logits.size())) throw std::invalid_argument("target out of range");
  SoftmaxGradCheck c;
  c.analytic = softmax(logits);
  c.analytic(static_cast<Eigen::Index>(target)) -= 1.0;
  c.numeric.resize(logits.size());
  Eigen::VectorXd probe = logits;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    probe(i) = logits(i) + h;
    const double plus = cross_entropy(probe, target);
    probe(i) = logits(i) - h;
    const double minus = cross_entropy(probe, target);
    probe(i) = logits(i);
    c.numeric(i) = (plus - minus) / (2.0 * h);
    c.max_rel_error = std::max(c.max_rel_error, relative_error(c.analytic(i), c.numeric(i)));
  }
  return c;
}

SoftmaxGradCheck softmax_grad_check(const TinyRepModel& model, std::size_t t, double h) {
  return softmax_grad_check(model.logits(t), model.tokens.at(t).target, h);
}

TaylorReport taylor_check(const TinyRepModel& model, const TokenSet& step_set, const TokenSet& target_set,
                          const std::vector<double>& etas) {
  if (etas.empty()) throw std::invalid_argument("taylor_check: no step sizes");
  for (std::size_t i = 0; i < etas.size(); ++i) {
    if (!(etas[i] > 0.0) || (i > 0 && etas[i] >= etas[i - 1])) {
      throw std::invalid_argument("taylor_check: step sizes must be positive and strictly descending");
    }
  }
  const Eigen::VectorXd g_step = joint_gradient(model, step_set);
  if (g_step.norm() == 0.0) throw ZeroVectorError("taylor_check: the step gradient is zero");
  const Eigen::VectorXd g_target = joint_gradient(model, target_set);
  const double base = segment_loss(model, target_set);
  const double inner = g_step.dot(g_target);

  TaylorReport report;
  for (double eta : etas) {
    TaylorStep s;
    s.eta = eta;
    s.actual_change = segment_loss(stepped(model, g_step, eta), target_set) - base;
    s.predicted_change = -eta * inner;
    s.remainder = std::abs(s.actual_change - s.predicted_change);
    report.steps.push_back(s);
  }
  for (std::size_t i = 0; i + 1 < report.steps.size(); ++i) {
    report.ratios.push_back(report.steps[i].remainder / report.steps[i + 1].remainder);
  }
  return report;
}

JacobianCosine jacobian_cosine_routes(const TinyRepModel& model, const TokenSet& set1, const TokenSet& set2) {
  const Eigen::VectorXd g1 = exact_segment_gradient(model, set1);
  const Eigen::VectorXd g2 = exact_segment_gradient(model, set2);
  JacobianCosine out;
  out.via_gradients = cosine(std::span<const double>(g1.data(), static_cast<std::size_t>(g1.size())),
                             std::span<const double>(g2.data(), static_cast<std::size_t>(g2.size())),
                             ZeroVectorPolicy::error);

  // <J_t^T u_t, J_t'^T u_t'> = (v_t . v_t')(x_t . x_t') for h = act(B x).
  const OutputProjection projection(model.output);
  auto kernel_sum = [&](const TokenSet& a, const TokenSet& b) {
    std::vector<double> terms;
    for (std::size_t t : a) {
      const Eigen::VectorXd vt = rep_signal(model, projection, t);
      for (std::size_t s : b) {
        const Eigen::VectorXd vs = rep_signal(model, projection, s);
        terms.push_back(vt.dot(vs) * model.tokens[t].input.dot(model.tokens[s].input));
      }
    }
    return pairwise_sum(terms);
  };
  const double n1 = kernel_sum(set1, set1);
  const double n2 = kernel_sum(set2, set2);
  if (!(n1 > 0.0) || !(n2 > 0.0)) throw ZeroVectorError("jacobian_cosine: zero-norm gradient");
  out.via_kernel = std::clamp(kernel_sum(set1, set2) / std::sqrt(n1 * n2), -1.0, 1.0);
  return out;
}

double jacobian_cosine(const TinyRepModel& model, const TokenSet& set1, const TokenSet& set2) {
  const auto routes = jacobian_cosine_routes(model, set1, set2);
  if (std::abs(routes.via_gradients - routes.via_kernel) > 1e-10) {
    throw std::logic_error(fmt::format("jacobian_cosine routes disagree: {} vs {}", routes.via_gradients,
                                       routes.via_kernel));
  }
  return routes.via_gradients;
}

double proxy_cosine(const TinyRepModel& model, const TokenSet& set1, const TokenSet& set2) {
  const Vector g1 = segment_proxy(upstream_signals(model, set1));
  const Vector g2 = segment_proxy(upstream_signals(model, set2));
  return cosine(g1, g2, ZeroVectorPolicy::error);
}

TinyRepModel random_model(Rng& rng, const RandomModelOptions& options) {
  if (options.hidden_dim == 0 || options.input_dim == 0 || options.vocab < 2) {
    throw std::invalid_argument("random_model: degenerate shape");
  }
  TinyRepModel model;
  model.activation = options.activation;
  const auto d = static_cast<Eigen::Index>(options.hidden_dim);
  const auto m = static_cast<Eigen::Index>(options.input_dim);
  fill_normal(rng, d, m, model.rep);
  fill_normal(rng, d, static_cast<Eigen::Index>(options.vocab), model.output);

  const Eigen::VectorXd base = random_unit(rng, options.input_dim);
  const double noise_scale = options.input_noise / std::sqrt(static_cast<double>(options.input_dim));
  for (std::size_t t = 0; t < options.tokens; ++t) {
    Token tok;
    if (options.identical_inputs) {
      tok.input = base;
    } else if (options.correlated_inputs) {
      tok.input = base;
      for (auto& x : tok.input) x += noise_scale * rng.normal();
    } else {
      tok.input.resize(m);
      for (auto& x : tok.input) x = rng.normal();
    }
    tok.target = rng.index(options.vocab);
    model.tokens.push_back(std::move(tok));
  }
  model.validate();
  return model;
}

void FidelityReport::write_csv(std::ostream& out) const {
  out << "trial,steps,rank_correlation,mean_input_cosine\n";
  for (const auto& t : trials) {
    out << fmt::format("{},{},{},{}\n", t.trial, t.steps, t.rank_correlation, t.mean_input_cosine);
  }
}

FidelityReport proxy_fidelity_sweep(const FidelityOptions& options) {
  if (options.trials < 1) throw std::invalid_argument("proxy_fidelity_sweep: trials must be >= 1");
  options.scoring.validate();
  Rng rng(options.seed);
  FidelityReport report;
  report.options = options;
  std::vector<double> correlations;
  std::vector<double> input_cosines;

  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    // Layout: per sample, K step segments then one answer segment.
    struct Layout {
      std::vector<TokenSet> steps;
      TokenSet answer;
    };
    std::vector<Layout> layouts(options.samples_per_trial);
    std::size_t next = 0;
    for (auto& layout : layouts) {
      const auto k_steps = rng.between(options.min_steps, options.max_steps);
      for (std::size_t k = 0; k <= k_steps; ++k) {
        const auto len = rng.between(options.min_segment_tokens, options.max_segment_tokens);
        TokenSet seg = range_set(next, next + len);
        next += len;
        if (k < k_steps) layout.steps.push_back(std::move(seg));
        else layout.answer = std::move(seg);
      }
    }
    RandomModelOptions model_options;
    model_options.hidden_dim = options.hidden_dim;
    model_options.input_dim = options.input_dim;
    model_options.vocab = options.vocab;
    model_options.tokens = next;
    model_options.correlated_inputs = !options.identical_inputs;
    model_options.identical_inputs = options.identical_inputs;
    model_options.input_noise = options.input_noise;
    const TinyRepModel model = random_model(rng, model_options);

    std::vector<double> proxy_scores;
    std::vector<double> exact_scores;
    for (const auto& layout : layouts) {
      std::vector<Vector> proxy_steps, exact_steps;
      std::vector<std::size_t> counts;
      for (const auto& seg : layout.steps) {
        proxy_steps.push_back(segment_proxy(upstream_signals(model, seg)));
        exact_steps.push_back(to_vector(exact_segment_gradient(model, seg)));
        counts.push_back(seg.size());
      }
      const Vector proxy_answer = segment_proxy(upstream_signals(model, layout.answer));
      const Vector exact_answer = to_vector(exact_segment_gradient(model, layout.answer));
      std::vector<Vector> proxy_targets, exact_targets;
      for (std::size_t k = 1; k <= proxy_steps.size(); ++k) {
        proxy_targets.push_back(target_proxy(proxy_steps, proxy_answer, counts, layout.answer.size(),
                                             options.scoring.target, k));
        exact_targets.push_back(target_proxy(exact_steps, exact_answer, counts, layout.answer.size(),
                                             options.scoring.target, k));
      }
      for (const auto& s : score_steps(proxy_steps, proxy_targets, options.scoring)) proxy_scores.push_back(s.score);
      for (const auto& s : score_steps(exact_steps, exact_targets, options.scoring)) exact_scores.push_back(s.score);
    }

    FidelityTrial t;
    t.trial = trial;
    t.steps = proxy_scores.size();
    t.rank_correlation = stats::spearman(proxy_scores, exact_scores);
    t.mean_input_cosine = mean_pairwise_cosine(model);
    correlations.push_back(t.rank_correlation);
    input_cosines.push_back(t.mean_input_cosine);
    report.trials.push_back(t);
  }
  report.median_rank_correlation = stats::median(correlations);
  report.mean_input_cosine = stats::mean(input_cosines);
  return report;
}

bool ValidationReport::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

ojson ValidationReport::to_json() const {
  ojson j;
  j["tool"] = "grace validate";
  j["report_version"] = 1;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["passed"] = passed();
  ojson arr = ojson::array();
  for (const auto& c : checks) {
    ojson o;
    o["name"] = c.name;
    o["passed"] = c.passed;
    o["metric"] = std::isfinite(c.metric) ? ojson(c.metric) : ojson(nullptr);
    o["threshold"] = c.threshold;
    o["instances"] = c.instances;
    o["seconds"] = c.seconds;
    o["detail"] = c.detail;
    arr.push_back(std::move(o));
  }
  j["checks"] = std::move(arr);
  return j;
}

ValidationReport run_validation_suite(std::uint64_t seed) {
  constexpr std::size_t kGradientModels = 100;
  constexpr std::size_t kNonlinearModels = 25;
  constexpr std::size_t kSoftmaxInstances = 100;
  constexpr std::size_t kTaylorInstances = 20;
  constexpr std::size_t kEqualityInstances = 50;
  constexpr double kFdTolerance = 1e-5;
  constexpr double kEqualityTolerance = 1e-10;
  constexpr double kWeightTolerance = 1e-12;

  ValidationReport report;
  report.seed = seed;
  {
    ojson cfg;
    cfg["seed"] = seed;
    cfg["gradient_models"] = kGradientModels;
    cfg["nonlinear_models"] = kNonlinearModels;
    cfg["softmax_instances"] = kSoftmaxInstances;
    cfg["taylor_instances"] = kTaylorInstances;
    cfg["equality_instances"] = kEqualityInstances;
    cfg["fd_step"] = 1e-4;
    report.config_hash = short_digest(cfg.dump());
  }
  Rng rng(seed);

  auto random_shape = [&](Activation act) {
    RandomModelOptions o;
    o.hidden_dim = rng.between(2, 5);
    o.input_dim = rng.between(1, 4);
    o.vocab = rng.between(2, 6);
    o.tokens = 6;
    o.activation = act;
    return o;
  };

  report.checks.push_back(timed_check("rep_gradient_finite_difference", kFdTolerance, [&](CheckResult& r) {
    for (std::size_t i = 0; i < kGradientModels + kNonlinearModels; ++i) {
      const auto act = i < kGradientModels ? Activation::identity : Activation::tanh;
      const auto model = random_model(rng, random_shape(act));
      r.metric = std::max(r.metric, check_rep_gradient(model, range_set(0, 1 + rng.index(6))).max_rel_error);
      ++r.instances;
    }
    r.passed = r.metric < kFdTolerance;
    r.detail = fmt::format("{} linear + {} tanh models, central differences h=1e-4", kGradientModels,
                           kNonlinearModels);
  }));

  report.checks.push_back(timed_check("joint_gradient_decomposition", kFdTolerance, [&](CheckResult& r) {
    for (std::size_t i = 0; i < 20; ++i) {
      const auto model = random_model(rng, random_shape(i % 2 == 0 ? Activation::identity : Activation::tanh));
      r.metric = std::max(r.metric, check_joint_gradient(model, range_set(0, 6)).max_rel_error);
      ++r.instances;
    }
    r.passed = r.metric < kFdTolerance;
    r.detail = "[dL/dW_out; dL/dB] against finite differences of the joint loss";
  }));

  report.checks.push_back(timed_check("upstream_signal_finite_difference", kFdTolerance, [&](CheckResult& r) {
    for (std::size_t i = 0; i < kGradientModels; ++i) {
      const auto model = random_model(rng, random_shape(Activation::identity));
      r.metric = std::max(r.metric, check_upstream_signal(model, rng.index(model.tokens.size())).max_rel_error);
      ++r.instances;
    }
    r.passed = r.metric < kFdTolerance;
    r.detail = "u_t = W_out (p_t - y_t) against dL_t/dh_t";
  }));

  report.checks.push_back(timed_check("softmax_gradient_finite_difference", kFdTolerance, [&](CheckResult& r) {
    for (std::size_t i = 0; i < kSoftmaxInstances; ++i) {
      Eigen::VectorXd logits(static_cast<Eigen::Index>(rng.between(2, 12)));
      for (auto& x : logits) x = 3.0 * rng.normal();
      const auto target = rng.index(static_cast<std::uint64_t>(logits.size()));
      r.metric = std::max(r.metric, softmax_grad_check(logits, target).max_rel_error);
      ++r.instances;
    }
    r.passed = r.metric < kFdTolerance;
    r.detail = "p - y against finite differences of cross-entropy in logit space";
  }));

  report.checks.push_back(timed_check("taylor_remainder_quadratic", 0.0, [&](CheckResult& r) {
    const std::vector<double> etas{1e-2, 5e-3, 2.5e-3};
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (std::size_t i = 0; i < kTaylorInstances; ++i) {
      RandomModelOptions o;
      o.hidden_dim = 3;
      o.input_dim = 2;
      o.vocab = 4;
      o.tokens = 8;
      const auto model = random_model(rng, o);
      const auto rep = taylor_check(model, range_set(0, 4), range_set(4, 8), etas);
      for (double ratio : rep.ratios) {
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
      }
      ++r.instances;
    }
    r.passed = lo >= 2.5 && hi <= 6.0;
    r.metric = lo;
    r.threshold = 2.5;
    r.detail = fmt::format("remainder ratio under eta halving in [{:.4f}, {:.4f}], required [2.5, 6]", lo, hi);
  }));

  report.checks.push_back(timed_check("proxy_equality_regime", kEqualityTolerance, [&](CheckResult& r) {
    for (std::size_t i = 0; i < kEqualityInstances; ++i) {
      RandomModelOptions o;
      o.hidden_dim = rng.between(2, 8);
      o.input_dim = rng.between(1, 5);
      o.vocab = rng.between(2, 10);
      o.tokens = 10;
      o.identical_inputs = true;
      const auto model = random_model(rng, o);
      const auto set1 = range_set(0, 1 + rng.index(5));
      const auto set2 = range_set(5, 6 + rng.index(5));
      const double exact = jacobian_cosine(model, set1, set2);
      r.metric = std::max(r.metric, std::abs(exact - proxy_cosine(model, set1, set2)));
      ++r.instances;
    }
    r.passed = r.metric <= kEqualityTolerance;
    r.detail = "identical inputs: proxy cosine vs Jacobian-exact cosine (both exact routes agree within 1e-10)";
  }));

  report.checks.push_back(timed_check("history_weight_laws", kWeightTolerance, [&](CheckResult& r) {
    std::vector<HistoryScheme> schemes{HistoryScheme::uniform()};
    for (std::uint32_t w : {1u, 2u, 3u, 5u, 8u, 16u, 63u, 64u}) schemes.push_back(HistoryScheme::sliding_window(w));
    for (double b : {0.0, 0.3, 0.5, 0.8, 0.95, 0.999}) schemes.push_back(HistoryScheme::ema(b));
    bool laws = true;
    for (std::size_t k = 2; k <= 64; ++k) {
      const auto uniform = materialize_weights(k, HistoryScheme::uniform()).weights;
      for (const auto& scheme : schemes) {
        const auto w = materialize_weights(k, scheme).weights;
        double total = 0.0;
        for (double x : w) {
          total += x;
          laws = laws && x >= 0.0;
        }
        r.metric = std::max(r.metric, std::abs(total - 1.0));
        if (scheme.kind == HistoryScheme::Kind::window && scheme.window >= k - 1) laws = laws && w == uniform;
        ++r.instances;
      }
      laws = laws && materialize_weights(k, HistoryScheme::ema(0.0)).weights ==
                         materialize_weights(k, HistoryScheme::sliding_window(1)).weights;
    }
    r.passed = laws && r.metric <= kWeightTolerance;
    r.detail = laws ? "sums, window>=k-1 == uniform, ema(0) == window(1)" : "an exact weight law failed";
  }));

  return report;
}

}  // namespace grace::oracle
