#pragma once

// File-level wiring for the score and select commands: load, match,
// score in parallel, merge in sample_id order, write JSONL.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "grace/proxy_engine.hpp"
#include "grace/reports.hpp"
#include "grace/trace_data.hpp"
#include "grace/valuation.hpp"

namespace grace {

inline constexpr int kScoresFormatVersion = 1;
inline constexpr int kSelectionFormatVersion = 1;

struct SignalSource {
  std::string checkpoint_id;
  std::filesystem::path path;
};

// "ckpt=path/to/file.gsig", or a bare path tagged with fallback_id.
SignalSource parse_signal_source(std::string_view text, const std::string& fallback_id);

// Runs body(i) for i in [0, n) on up to `jobs` threads. Exceptions are
// collected and the one with the lowest index is rethrown.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body);

struct ScoreRun {
  ScoringConfig config;
  // One list per checkpoint in config.checkpoints order, sorted by sample_id.
  std::vector<std::vector<ScoreReport>> reports;
  ValueTable table;
  std::vector<std::string> skipped;  // lenient mode only
};

// signals[m] holds the records of config.checkpoints[m]. In strict mode any
// unmatched id or per-sample failure is an InputError; lenient mode logs a
// warning and leaves the sample out.
ScoreRun run_scoring(std::span<const ReasoningSample> samples, std::span<const std::vector<SignalRecord>> signals,
                     const ScoringConfig& config, bool strict, std::size_t jobs);

// Reads every source, sets config.checkpoints from the tags, then scores.
ScoreRun run_scoring(const std::filesystem::path& samples_path, std::span<const SignalSource> sources,
                     ScoringConfig config, bool strict, std::size_t jobs);

void write_scores(const ScoreRun& run, std::ostream& out);

struct ScoresFile {
  nlohmann::ordered_json header;
  ScoringConfig config;
  std::vector<std::vector<ScoreReport>> reports;
  ValueTable table;
};

ScoresFile read_scores(std::istream& in);
ScoresFile read_scores(const std::filesystem::path& path);

void write_selection(const SelectionResult& selection, const nlohmann::ordered_json& provenance, std::ostream& out);
SelectionResult read_selection(std::istream& in);

}  // namespace grace
