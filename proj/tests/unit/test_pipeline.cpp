#include <doctest.h>

#include <atomic>
#include <fstream>
#include <sstream>

#include "generators.hpp"
#include "grace/error.hpp"
#include "grace/pipeline.hpp"

using namespace grace;
namespace fs = std::filesystem;

namespace {

const fs::path kGolden = fs::path(GRACE_TEST_DATA_DIR) / "golden";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<SignalSource> golden_sources() {
  return {{"ckpt_a", kGolden / "ckpt_a.gsig"}, {"ckpt_b", kGolden / "ckpt_b.gsig"}};
}

ScoringConfig golden_config() {
  ScoringConfig c;
  c.alpha = 0.7;
  return c;
}

std::string scores_text(const ScoreRun& run) {
  std::ostringstream out;
  write_scores(run, out);
  return out.str();
}

}  // namespace

TEST_CASE("golden fixture: values match the independent numpy computation") {
  const auto expected = nlohmann::json::parse(slurp(kGolden / "expected_values.json"));
  const auto sources = golden_sources();
  const auto run = run_scoring(kGolden / "samples.jsonl", sources, golden_config(), true, 1);
  REQUIRE(run.table.size() == 3);
  for (const auto& [id, e] : expected["samples"].items()) {
    INFO(id);
    CHECK(std::abs(run.table.combined.at(id) - e["combined"].get<double>()) < 1e-12);
    for (std::size_t m = 0; m < 2; ++m) {
      const auto& ckpt = run.config.checkpoints[m];
      const auto& per = e["per_checkpoint"][ckpt];
      const auto it = std::find_if(run.reports[m].begin(), run.reports[m].end(),
                                   [&](const ScoreReport& r) { return r.sample_id == id; });
      REQUIRE(it != run.reports[m].end());
      CHECK(std::abs(it->value - per["value"].get<double>()) < 1e-12);
      REQUIRE(it->steps.size() == per["step_scores"].size());
      for (std::size_t k = 0; k < it->steps.size(); ++k) {
        CHECK(std::abs(it->steps[k].score - per["step_scores"][k].get<double>()) < 1e-12);
      }
    }
    // Two checkpoints combine by their mean.
    const double a = e["per_checkpoint"]["ckpt_a"]["value"], b = e["per_checkpoint"]["ckpt_b"]["value"];
    CHECK(std::abs(run.table.combined.at(id) - 0.5 * (a + b)) < 1e-15);
  }
  // The K=1 sample scores its only step by answer alignment alone.
  const auto& beta = run.reports[0][1];
  REQUIRE(beta.sample_id == "g-beta");
  CHECK(beta.steps.size() == 1);
  CHECK(beta.steps[0].score == beta.steps[0].answer_alignment);
  CHECK(beta.value == beta.steps[0].score);

  const auto selection = select_top(run.table, expected["rho"].get<double>());
  CHECK(selection.selected_ids == expected["selected"].get<std::vector<std::string>>());
}

TEST_CASE("golden fixture: score and select are byte-identical to the frozen files") {
  const auto sources = golden_sources();
  const auto frozen_scores = slurp(kGolden / "expected_scores.jsonl");
  for (std::size_t jobs : {1u, 2u, 5u}) {
    const auto run = run_scoring(kGolden / "samples.jsonl", sources, golden_config(), true, jobs);
    CHECK(scores_text(run) == frozen_scores);
  }
  std::istringstream in(frozen_scores);
  const auto file = read_scores(in);
  std::ostringstream sel;
  nlohmann::ordered_json provenance;
  provenance["config"] = file.config.to_json();
  provenance["config_hash"] = file.config.hash();
  write_selection(select_top(file.table, 0.5), provenance, sel);
  CHECK(sel.str() == slurp(kGolden / "expected_selection.jsonl"));
}

TEST_CASE("config echo in the header reproduces the run") {
  const auto sources = golden_sources();
  auto config = golden_config();
  config.history = HistoryScheme::ema(0.8);
  config.target = TargetMode::suffix;
  const auto first = scores_text(run_scoring(kGolden / "samples.jsonl", sources, config, true, 1));
  std::istringstream in(first);
  const auto file = read_scores(in);
  CHECK(file.config == ScoringConfig::from_json(file.header["config"]));
  CHECK(file.header["config_hash"] == file.config.hash());
  CHECK(file.config.history == config.history);
  const auto again = scores_text(run_scoring(kGolden / "samples.jsonl", sources, file.config, true, 3));
  CHECK(again == first);
}

TEST_CASE("property: parallel scoring is byte-identical to serial scoring") {
  Rng rng(51);
  std::vector<ReasoningSample> samples;
  std::vector<std::vector<SignalRecord>> signals(3);
  for (std::size_t i = 0; i < 150; ++i) {
    samples.push_back(testgen::random_sample(rng, i));
    for (auto& ckpt : signals) ckpt.push_back(testgen::gaussian_record(rng, samples.back(), 6));
  }
  ScoringConfig config;
  config.checkpoints = {"x", "y", "z"};
  const auto serial = scores_text(run_scoring(samples, signals, config, true, 1));
  for (std::size_t jobs : {2u, 3u, 8u}) CHECK(scores_text(run_scoring(samples, signals, config, true, jobs)) == serial);
  // Input order does not matter either.
  auto shuffled = samples;
  for (std::size_t i = shuffled.size(); i-- > 1;) std::swap(shuffled[i], shuffled[rng.index(i + 1)]);
  CHECK(scores_text(run_scoring(shuffled, signals, config, true, 4)) == serial);
}

TEST_CASE("strict and lenient matching") {
  Rng rng(52);
  std::vector<ReasoningSample> samples;
  std::vector<std::vector<SignalRecord>> signals(1);
  for (std::size_t i = 0; i < 6; ++i) {
    samples.push_back(testgen::random_sample(rng, i));
    signals[0].push_back(testgen::gaussian_record(rng, samples.back(), 3));
  }
  ScoringConfig config;
  auto missing = signals;
  missing[0].erase(missing[0].begin() + 2);
  CHECK_THROWS_AS(run_scoring(samples, missing, config, true, 1), InputError);
  const auto lenient = run_scoring(samples, missing, config, false, 1);
  CHECK(lenient.table.size() == 5);
  CHECK(lenient.skipped == std::vector<std::string>{samples[2].sample_id});

  auto extra = signals;
  extra[0].push_back(testgen::gaussian_record(rng, testgen::random_sample(rng, 99), 3));
  CHECK_THROWS_AS(run_scoring(samples, extra, config, true, 1), InputError);
  CHECK(run_scoring(samples, extra, config, false, 1).table.size() == 6);

  auto wrong_k = signals;
  wrong_k[0][1].step_data.resize(wrong_k[0][1].step_data.size() + 3, 1.0f);
  CHECK_THROWS_AS(run_scoring(samples, wrong_k, config, true, 2), InputError);
  CHECK(run_scoring(samples, wrong_k, config, false, 2).skipped.size() == 1);
}

TEST_CASE("scores file validation") {
  std::istringstream empty("");
  CHECK_THROWS_AS(read_scores(empty), InputError);
  std::istringstream no_header("{\"type\":\"score\"}\n");
  CHECK_THROWS_AS(read_scores(no_header), InputError);

  // Nudge one combined value away from the mean of its per-checkpoint values.
  std::istringstream frozen(slurp(kGolden / "expected_scores.jsonl"));
  std::string text, line;
  while (std::getline(frozen, line)) {
    auto j = nlohmann::ordered_json::parse(line);
    if (j["type"] == "combined" && j["sample_id"] == "g-alpha") j["value"] = j["value"].get<double>() + 1e-12;
    text += j.dump() + "\n";
  }
  std::istringstream tampered(text);
  CHECK_THROWS_AS(read_scores(tampered), InputError);
}

TEST_CASE("selection file round trip") {
  std::map<std::string, double> values{{"a", 0.1}, {"b", 0.9}, {"c", 0.5}};
  const auto sel = select_top(values, 0.5);
  std::ostringstream out;
  write_selection(sel, nlohmann::ordered_json::object(), out);
  std::istringstream in(out.str());
  CHECK(read_selection(in) == sel);
}

TEST_CASE("signal source tags") {
  const auto a = parse_signal_source("warm=dir/x.gsig", "ckpt0");
  CHECK(a.checkpoint_id == "warm");
  CHECK(a.path == fs::path("dir/x.gsig"));
  const auto b = parse_signal_source("dir/x.gsig", "ckpt3");
  CHECK(b.checkpoint_id == "ckpt3");
  CHECK_THROWS_AS(parse_signal_source("=x", "c"), InputError);
  CHECK_THROWS_AS(parse_signal_source("c=", "c"), InputError);
}

TEST_CASE("parallel_for runs every index once and rethrows the lowest failure") {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 7, [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) CHECK(h.load() == 1);
  try {
    parallel_for(50, 4, [](std::size_t i) {
      if (i == 13 || i == 40) throw std::runtime_error(std::to_string(i));
    });
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "13");
  }
}
