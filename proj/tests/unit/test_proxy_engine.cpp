#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "generators.hpp"
#include "grace/error.hpp"
#include "grace/proxy_engine.hpp"
#include "grace/valuation.hpp"

using namespace grace;
using doctest::Approx;

namespace {

// Reference implementations: plain loops in long double, no shared helpers.
std::vector<long double> naive_matvec(const Eigen::MatrixXd& w, const std::vector<double>& x) {
  std::vector<long double> out(static_cast<std::size_t>(w.rows()), 0.0L);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) out[static_cast<std::size_t>(i)] += w(i, j) * x[static_cast<std::size_t>(j)];
  }
  return out;
}

long double naive_cosine(const Vector& a, const Vector& b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<long double>(a[i]) * b[i];
    aa += static_cast<long double>(a[i]) * a[i];
    bb += static_cast<long double>(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

std::vector<double> naive_weights(std::size_t k, const HistoryScheme& s) {
  std::vector<double> w(k - 1, 0.0);
  if (s.kind == HistoryScheme::Kind::uniform) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(k - 1));
  } else if (s.kind == HistoryScheme::Kind::window) {
    const std::size_t lo = k > s.window ? k - s.window : 1;
    const double mass = 1.0 / static_cast<double>(std::min<std::size_t>(s.window, k - 1));
    for (std::size_t j = lo; j < k; ++j) w[j - 1] = mass;
  } else {
    long double z = 0;
    for (std::size_t r = 1; r < k; ++r) z += std::pow(static_cast<long double>(s.beta), static_cast<long double>(k - 1 - r));
    for (std::size_t j = 1; j < k; ++j) {
      w[j - 1] = static_cast<double>(std::pow(static_cast<long double>(s.beta), static_cast<long double>(k - 1 - j)) / z);
    }
  }
  return w;
}

Vector scaled(const Vector& v, double c) {
  Vector out(v);
  for (auto& x : out) x *= c;
  return out;
}

SignalRecord scaled(const SignalRecord& r, float c) {
  SignalRecord out = r;
  for (auto& x : out.step_data) x *= c;
  for (auto& x : out.answer_proxy) x *= c;
  return out;
}

}  // namespace

TEST_CASE("upstream signal examples") {
  const OutputProjection w1((Eigen::MatrixXd(1, 2) << 1.0, -1.0).finished());
  const std::vector<double> p{0.9, 0.1};
  const auto u = upstream_signal(p, 0, w1);
  REQUIRE(u.size() == 1);
  CHECK(u[0] == Approx(-0.2).epsilon(1e-15));

  Rng rng(1);
  const OutputProjection w3(Eigen::MatrixXd::Random(3, 5));
  const std::vector<double> onehot{0, 0, 1, 0, 0};
  for (double x : upstream_signal(onehot, 2, w3)) CHECK(x == 0.0);
}

TEST_CASE("property: upstream signal matches a dense matvec oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd w(3, 5);
    for (auto& x : w.reshaped()) x = rng.normal();
    std::vector<double> p(5);
    for (auto& x : p) x = rng.uniform(0.01, 1.0);
    const double z = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& x : p) x /= z;
    const auto y = rng.index(5);
    auto diff = p;
    diff[y] -= 1.0;
    const auto expected = naive_matvec(w, diff);
    const auto got = upstream_signal(p, y, OutputProjection(w));
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(got[i] - static_cast<double>(expected[i])) < 1e-12);
  }
}

TEST_CASE("upstream signal input errors") {
  const OutputProjection w(Eigen::MatrixXd::Ones(2, 3));
  const std::vector<double> p{0.2, 0.3, 0.5};
  CHECK_THROWS(upstream_signal(std::vector<double>{0.5, 0.5}, 0, w));
  CHECK_THROWS(upstream_signal(p, 3, w));
  CHECK_THROWS(upstream_signal(std::vector<double>{0.2, 0.3, 0.6}, 0, w));
  CHECK_NOTHROW(upstream_signal(std::vector<double>{0.2, 0.3, 0.6}, 0, w, false));
  CHECK_THROWS(OutputProjection(Eigen::MatrixXd::Ones(2, 1)));
}

TEST_CASE("segment proxy examples and laws") {
  CHECK(segment_proxy(std::vector<Vector>{{1.5, -2.0}}) == Vector{1.5, -2.0});
  CHECK(segment_proxy(std::vector<Vector>{{1, 0}, {0, 1}}) == Vector{0.5, 0.5});
  CHECK_THROWS(segment_proxy(std::vector<Vector>{}));
  CHECK_THROWS(segment_proxy(std::vector<Vector>{{1, 0}, {1}}));

  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vector> a, b;
    const auto n = rng.between(1, 20);
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(testgen::random_vector(rng, 4));
      b.push_back(testgen::random_vector(rng, 4));
    }
    auto doubled = a;
    doubled.insert(doubled.end(), a.begin(), a.end());
    const auto ga = segment_proxy(a);
    const auto gd = segment_proxy(doubled);
    const double s = rng.normal(), t = rng.normal();
    std::vector<Vector> mix;
    for (std::size_t i = 0; i < n; ++i) {
      Vector m(4);
      for (std::size_t c = 0; c < 4; ++c) m[c] = s * a[i][c] + t * b[i][c];
      mix.push_back(m);
    }
    const auto gb = segment_proxy(b);
    const auto gm = segment_proxy(mix);
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(gd[c] == Approx(ga[c]).epsilon(1e-14));
      CHECK(std::abs(gm[c] - (s * ga[c] + t * gb[c])) < 1e-12);
    }
  }
}

TEST_CASE("cosine examples and zero-vector policy") {
  const Vector v{0.3, -1.2, 2.0};
  CHECK(cosine(v, v, ZeroVectorPolicy::error) == Approx(1.0).epsilon(1e-15));
  CHECK(cosine(Vector{1, 0}, Vector{0, 1}, ZeroVectorPolicy::error) == 0.0);
  CHECK(cosine(v, scaled(v, 3.7), ZeroVectorPolicy::error) == Approx(1.0).epsilon(1e-15));
  CHECK(cosine(v, scaled(v, -0.2), ZeroVectorPolicy::error) == Approx(-1.0).epsilon(1e-15));
  CHECK_THROWS_AS(cosine(v, Vector{0, 0, 0}, ZeroVectorPolicy::error), ZeroVectorError);
  CHECK(cosine(v, Vector{0, 0, 0}, ZeroVectorPolicy::score_zero) == 0.0);
  CHECK_THROWS(cosine(v, Vector{1, 2}, ZeroVectorPolicy::error));

  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = testgen::random_vector(rng, 7), b = testgen::random_vector(rng, 7);
    const double c = cosine(a, b, ZeroVectorPolicy::error);
    CHECK(std::abs(c - static_cast<double>(naive_cosine(a, b))) < 1e-14);
    CHECK(std::abs(c) <= 1.0);
    CHECK(cosine(a, a, ZeroVectorPolicy::error) <= 1.0);
  }
}

TEST_CASE("history weight examples") {
  const auto u = materialize_weights(4, HistoryScheme::uniform()).weights;
  REQUIRE(u.size() == 3);
  for (double w : u) CHECK(w == Approx(1.0 / 3.0).epsilon(1e-15));

  CHECK(materialize_weights(5, HistoryScheme::sliding_window(2)).weights == std::vector<double>{0, 0, 0.5, 0.5});
  CHECK(materialize_weights(4, HistoryScheme::ema(0.0)).weights == std::vector<double>{0, 0, 1});

  const auto e = materialize_weights(3, HistoryScheme::ema(0.8)).weights;
  CHECK(e[0] == Approx(0.8 / 1.8).epsilon(1e-15));
  CHECK(e[1] == Approx(1.0 / 1.8).epsilon(1e-15));
  CHECK(e[0] == Approx(0.4444).epsilon(1e-4));
  CHECK(e[1] == Approx(0.5556).epsilon(1e-4));

  CHECK_THROWS(materialize_weights(1, HistoryScheme::uniform()));
  CHECK_THROWS_AS(HistoryScheme::sliding_window(0).validate(), InputError);
  CHECK_THROWS_AS(HistoryScheme::ema(1.0).validate(), InputError);
  CHECK_THROWS_AS(HistoryScheme::ema(-0.1).validate(), InputError);
}

TEST_CASE("property: weight laws for k in [2, 64]") {
  std::vector<HistoryScheme> schemes{HistoryScheme::uniform()};
  for (std::uint32_t w : {1u, 2u, 3u, 5u, 8u, 63u, 100u}) schemes.push_back(HistoryScheme::sliding_window(w));
  for (double b : {0.0, 0.1, 0.5, 0.8, 0.95, 0.999}) schemes.push_back(HistoryScheme::ema(b));
  for (std::size_t k = 2; k <= 64; ++k) {
    for (const auto& s : schemes) {
      const auto w = materialize_weights(k, s).weights;
      REQUIRE(w.size() == k - 1);
      long double sum = 0;
      for (double x : w) sum += x;
      CHECK(std::abs(static_cast<double>(sum) - 1.0) <= 1e-12);
      const auto oracle = naive_weights(k, s);
      for (std::size_t j = 0; j < w.size(); ++j) CHECK(std::abs(w[j] - oracle[j]) <= 1e-15);
    }
    for (std::uint32_t w = static_cast<std::uint32_t>(k - 1); w < k + 3; ++w) {
      CHECK(materialize_weights(k, HistoryScheme::sliding_window(w)).weights ==
            materialize_weights(k, HistoryScheme::uniform()).weights);
    }
    CHECK(materialize_weights(k, HistoryScheme::ema(0.0)).weights ==
          materialize_weights(k, HistoryScheme::sliding_window(1)).weights);
  }
}

TEST_CASE("history scheme text form") {
  for (const auto* text : {"uniform", "window:3", "ema:0.8", "ema:0"}) {
    CHECK(HistoryScheme::parse(HistoryScheme::parse(text).to_string()) == HistoryScheme::parse(text));
  }
  CHECK(HistoryScheme::parse("window:3") == HistoryScheme::sliding_window(3));
  CHECK(HistoryScheme::parse("ema:0.8") == HistoryScheme::ema(0.8));
  for (const auto* bad : {"", "median", "window", "window:0", "window:x", "ema:1", "ema:-1", "ema:abc", "window:2:3"}) {
    CHECK_THROWS_AS(HistoryScheme::parse(bad), InputError);
  }
}

TEST_CASE("history reference examples") {
  const std::vector<Vector> one{{3, 4}};
  const auto r2 = history_reference(one, materialize_weights(2, HistoryScheme::ema(0.5)), ZeroVectorPolicy::error);
  CHECK(r2[0] == Approx(0.6).epsilon(1e-15));
  CHECK(r2[1] == Approx(0.8).epsilon(1e-15));

  const std::vector<Vector> two{{1, 0}, {0, 1}};
  const auto r3 = history_reference(two, materialize_weights(3, HistoryScheme::uniform()), ZeroVectorPolicy::error);
  CHECK(r3[0] == Approx(std::sqrt(2.0) / 2).epsilon(1e-15));
  CHECK(r3[1] == Approx(std::sqrt(2.0) / 2).epsilon(1e-15));

  // EMA weights are applied before normalizing.
  const auto re = history_reference(two, materialize_weights(3, HistoryScheme::ema(0.8)), ZeroVectorPolicy::error);
  CHECK(re[0] / re[1] == Approx(0.8).epsilon(1e-14));

  const std::vector<Vector> cancel{{1, 1}, {-1, -1}};
  const auto w = materialize_weights(3, HistoryScheme::uniform());
  CHECK_THROWS_AS(history_reference(cancel, w, ZeroVectorPolicy::error), ZeroVectorError);
  CHECK(history_reference(cancel, w, ZeroVectorPolicy::score_zero) == Vector{0, 0});
}

TEST_CASE("property: history reference has unit norm") {
  Rng rng(14);
  for (int trial = 0; trial < 300; ++trial) {
    const auto k = rng.between(2, 20);
    std::vector<Vector> prev;
    const double scale = std::pow(10.0, rng.uniform(-8, 8));
    for (std::size_t j = 1; j < k; ++j) prev.push_back(testgen::random_vector(rng, 5, scale));
    const auto scheme = std::vector<HistoryScheme>{HistoryScheme::uniform(), HistoryScheme::sliding_window(3),
                                                   HistoryScheme::ema(0.7)}[rng.index(3)];
    const auto r = history_reference(prev, materialize_weights(k, scheme), ZeroVectorPolicy::error);
    CHECK(std::abs(norm(r) - 1.0) <= 1e-9);
  }
}

TEST_CASE("target proxy examples") {
  const std::vector<Vector> steps{{1, 0}, {0, 2}};
  const Vector ans{4, 4};
  const std::vector<std::size_t> tokens{3, 1};
  CHECK(target_proxy(steps, ans, tokens, 2, TargetMode::answer, 1) == ans);
  CHECK(target_proxy(steps, ans, tokens, 2, TargetMode::suffix, 2) == ans);

  // K=1 with |T_1| = |T_ans|: plain average.
  const std::vector<Vector> single{{1, 3}};
  const std::vector<std::size_t> one{5};
  const auto full1 = target_proxy(single, ans, one, 5, TargetMode::full_trace, 1);
  CHECK(full1[0] == Approx(2.5));
  CHECK(full1[1] == Approx(3.5));

  CHECK_THROWS_AS(target_proxy(steps, ans, std::vector<std::size_t>{3, 0}, 2, TargetMode::full_trace, 1), InputError);
  CHECK_THROWS(target_proxy(steps, ans, tokens, 2, TargetMode::answer, 3));
}

TEST_CASE("property: full and suffix targets equal the token mean over the union") {
  Rng rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = testgen::random_sample(rng, static_cast<std::size_t>(trial));
    std::vector<TokenSignal> tokens;
    std::vector<Vector> u;
    for (std::uint32_t t = 0; t < s.total_supervised_tokens(); ++t) {
      TokenSignal ts{t, {}};
      Vector ud;
      for (int c = 0; c < 3; ++c) {
        ts.values.push_back(static_cast<float>(rng.normal()));
        ud.push_back(ts.values.back());
      }
      tokens.push_back(ts);
      u.push_back(ud);
    }
    const auto record = aggregate_token_level(s, tokens, 3, "c");
    const auto k = rng.between(1, s.num_steps());
    // Token-level oracle computed from the segment proxies as stored (f32), so
    // compare against mean of stored segment means weighted by counts.
    auto union_mean = [&](std::size_t first_step) {
      Vector acc(3, 0.0);
      std::size_t count = 0;
      for (std::size_t i = first_step; i < s.num_steps(); ++i) {
        for (std::size_t c = 0; c < 3; ++c) acc[c] += s.steps[i].size() * static_cast<double>(record.step(i)[c]);
        count += s.steps[i].size();
      }
      for (std::size_t c = 0; c < 3; ++c) acc[c] += s.answer.size() * static_cast<double>(record.answer_proxy[c]);
      count += s.answer.size();
      for (auto& x : acc) x /= static_cast<double>(count);
      return acc;
    };
    const auto full = target_proxy(record, s, TargetMode::full_trace, k);
    const auto suffix = target_proxy(record, s, TargetMode::suffix, k);
    const auto of = union_mean(0), os = union_mean(k);
    // And the f64 token-level mean over the whole trace agrees to f32 precision.
    const auto direct = segment_proxy(u);
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(std::abs(full[c] - of[c]) < 1e-12);
      CHECK(std::abs(suffix[c] - os[c]) < 1e-12);
      CHECK(std::abs(full[c] - direct[c]) < 1e-5);
    }
  }
}

TEST_CASE("step score examples") {
  const Vector g{1, 2, -1}, tgt{0.5, -1, 2}, hist{1, 0, 0};
  const auto s1 = step_score(g, tgt, nullptr, 0.3, 1, ZeroVectorPolicy::error);
  CHECK(s1.score == s1.answer_alignment);
  CHECK_FALSE(s1.history_alignment.has_value());

  const auto a1 = step_score(g, tgt, &hist, 1.0, 2, ZeroVectorPolicy::error);
  CHECK(a1.score == a1.answer_alignment);
  const auto a0 = step_score(g, tgt, &hist, 0.0, 2, ZeroVectorPolicy::error);
  CHECK(a0.score == *a0.history_alignment);

  CHECK_THROWS(step_score(g, tgt, &hist, 0.5, 1, ZeroVectorPolicy::error));
  CHECK_THROWS(step_score(g, tgt, nullptr, 0.5, 2, ZeroVectorPolicy::error));
}

TEST_CASE("property: convexity bound and monotone alpha") {
  Rng rng(16);
  for (int trial = 0; trial < 500; ++trial) {
    const auto g = testgen::random_vector(rng, 6), t = testgen::random_vector(rng, 6);
    auto h = testgen::random_vector(rng, 6);
    const double hn = norm(h);
    for (auto& x : h) x /= hn;
    const double a = rng.uniform(), b = rng.uniform();
    const auto sa = step_score(g, t, &h, a, 2, ZeroVectorPolicy::error);
    const auto sb = step_score(g, t, &h, b, 2, ZeroVectorPolicy::error);
    const double lo = std::min(sa.answer_alignment, *sa.history_alignment);
    const double hi = std::max(sa.answer_alignment, *sa.history_alignment);
    CHECK(sa.score >= lo - 1e-15);
    CHECK(sa.score <= hi + 1e-15);
    if (a != b && sa.answer_alignment != *sa.history_alignment) {
      const bool increasing = sa.answer_alignment > *sa.history_alignment;
      CHECK(((sa.score < sb.score) == (a < b)) == increasing);
    }
  }
}

TEST_CASE("property: positive rescaling leaves every score unchanged") {
  Rng rng(17);
  ScoringConfig config;
  auto random_config = [&] {
    config.alpha = rng.uniform();
    config.history = std::vector<HistoryScheme>{HistoryScheme::uniform(), HistoryScheme::sliding_window(2),
                                                HistoryScheme::ema(0.6)}[rng.index(3)];
    config.target = std::vector<TargetMode>{TargetMode::answer, TargetMode::full_trace, TargetMode::suffix}[rng.index(3)];
  };
  // Engine level: any c > 0 applied to f64 proxies.
  for (int trial = 0; trial < 200; ++trial) {
    random_config();
    const auto k = rng.between(1, 10);
    std::vector<Vector> steps, scaled_steps, targets, scaled_targets;
    const double c = std::pow(10.0, rng.uniform(-6, 6));
    for (std::size_t i = 0; i < k; ++i) {
      steps.push_back(testgen::random_vector(rng, 5));
      targets.push_back(testgen::random_vector(rng, 5));
      scaled_steps.push_back(scaled(steps.back(), c));
      scaled_targets.push_back(scaled(targets.back(), c));
    }
    const auto a = score_steps(steps, targets, config);
    const auto b = score_steps(scaled_steps, scaled_targets, config);
    std::vector<double> va, vb;
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(std::abs(a[i].score - b[i].score) <= 1e-9);
      CHECK(std::abs(a[i].answer_alignment - b[i].answer_alignment) <= 1e-9);
      CHECK(a[i].history_alignment.has_value() == b[i].history_alignment.has_value());
      if (a[i].history_alignment) CHECK(std::abs(*a[i].history_alignment - *b[i].history_alignment) <= 1e-9);
      va.push_back(a[i].score);
      vb.push_back(b[i].score);
    }
    CHECK(std::abs(sample_value(va) - sample_value(vb)) <= 1e-9);
  }
  // Record level: power-of-two factors are exact in f32 storage.
  for (int trial = 0; trial < 200; ++trial) {
    random_config();
    const auto s = testgen::random_sample(rng, static_cast<std::size_t>(trial));
    const auto r = testgen::gaussian_record(rng, s, 5);
    const float c = std::ldexp(1.0f, static_cast<int>(rng.between(0, 40)) - 20);
    const auto base = score_sample(s, r, config);
    const auto other = score_sample(s, scaled(r, c), config);
    CHECK(std::abs(base.value - other.value) <= 1e-9);
    for (std::size_t k = 0; k < base.steps.size(); ++k) {
      CHECK(std::abs(base.steps[k].score - other.steps[k].score) <= 1e-9);
    }
  }
}

TEST_CASE("property: alpha = 1 equals the answer-only ablation exactly") {
  Rng rng(18);
  ScoringConfig config;
  config.alpha = 1.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = testgen::random_sample(rng, static_cast<std::size_t>(trial));
    const auto r = testgen::gaussian_record(rng, s, 4);
    config.history = std::vector<HistoryScheme>{HistoryScheme::uniform(), HistoryScheme::ema(0.3)}[rng.index(2)];
    const auto report = score_sample(s, r, config);
    // Answer-only: mean over steps of cos(g_k, g_ans), history never consulted.
    std::vector<double> ans;
    for (std::size_t k = 0; k < s.num_steps(); ++k) {
      ans.push_back(cosine(to_double(r.step(k)), to_double(r.answer_proxy), ZeroVectorPolicy::score_zero));
    }
    CHECK(report.value == sample_value(ans));
    for (std::size_t k = 0; k < ans.size(); ++k) CHECK(report.steps[k].score == ans[k]);
  }
}

TEST_CASE("score_sample matches an independent loop for every scheme") {
  Rng rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = testgen::random_sample(rng, static_cast<std::size_t>(trial), 10);
    const auto r = testgen::gaussian_record(rng, s, 4);
    ScoringConfig config;
    config.alpha = rng.uniform();
    config.history = std::vector<HistoryScheme>{HistoryScheme::uniform(), HistoryScheme::sliding_window(3),
                                                HistoryScheme::ema(0.8)}[rng.index(3)];
    const auto report = score_sample(s, r, config);
    REQUIRE(report.steps.size() == s.num_steps());
    CHECK(report.config_hash == config.hash());
    long double total = 0;
    for (std::size_t k = 1; k <= s.num_steps(); ++k) {
      const Vector g = to_double(r.step(k - 1));
      const double ans = static_cast<double>(naive_cosine(g, to_double(r.answer_proxy)));
      double expected = ans;
      CHECK_FALSE(report.steps[k - 1].history_alignment.has_value() != (k > 1));
      if (k > 1) {
        const auto w = naive_weights(k, config.history);
        Vector ref(4, 0.0);
        for (std::size_t j = 1; j < k; ++j) {
          for (std::size_t c = 0; c < 4; ++c) ref[c] += w[j - 1] * r.step(j - 1)[c];
        }
        expected = config.alpha * ans + (1 - config.alpha) * static_cast<double>(naive_cosine(g, ref));
      }
      CHECK(std::abs(report.steps[k - 1].score - expected) < 1e-12);
      CHECK(report.steps[k - 1].step == k);
      total += expected;
    }
    CHECK(std::abs(report.value - static_cast<double>(total / s.num_steps())) < 1e-12);
  }
}

TEST_CASE("score_sample errors") {
  ReasoningSample s;
  s.sample_id = "z";
  s.steps = {{0, 1}, {1, 2}};
  s.answer = {2, 3};
  SignalRecord r;
  r.sample_id = "z";
  r.hidden_dim = 2;
  r.step_data = {1, 0, 0, 0};
  r.answer_proxy = {0, 1};
  ScoringConfig config;
  config.zero_vector = ZeroVectorPolicy::error;
  CHECK_THROWS_AS(score_sample(s, r, config), ZeroVectorError);
  config.zero_vector = ZeroVectorPolicy::score_zero;
  const auto report = score_sample(s, r, config);
  CHECK(report.steps[1].score == 0.0);

  r.step_data = {1, 0};
  CHECK_THROWS_AS(score_sample(s, r, config), InputError);
}

TEST_CASE("scoring config validation, JSON round trip and hash") {
  ScoringConfig c;
  c.alpha = 0.55;
  c.history = HistoryScheme::ema(0.9);
  c.target = TargetMode::suffix;
  c.checkpoints = {"a", "b"};
  c.zero_vector = ZeroVectorPolicy::error;
  const auto back = ScoringConfig::from_json(c.to_json());
  CHECK(back == c);
  CHECK(back.hash() == c.hash());
  CHECK(c.hash().size() == 16);
  auto d = c;
  d.alpha = 0.56;
  CHECK(d.hash() != c.hash());

  for (double bad : {-0.1, 1.1, std::nan("")}) {
    ScoringConfig e;
    e.alpha = bad;
    CHECK_THROWS_AS(e.validate(), InputError);
  }
  ScoringConfig e;
  e.checkpoints = {};
  CHECK_THROWS_AS(e.validate(), InputError);
  e.checkpoints = {"a", "a"};
  CHECK_THROWS_AS(e.validate(), InputError);
  CHECK(parse_target_mode("full") == TargetMode::full_trace);
  CHECK(parse_zero_vector_policy("zero") == ZeroVectorPolicy::score_zero);
  CHECK_THROWS_AS(parse_target_mode("prefix"), InputError);
}
