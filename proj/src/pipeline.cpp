#include "grace/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <map>
#include <optional>
#include <thread>

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include "grace/error.hpp"

namespace grace {

namespace {

using json = nlohmann::ordered_json;

void write_line(std::ostream& out, const json& j) { out << j.dump() << '\n'; }

json parse_line(const std::string& line, std::size_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw InputError(fmt::format("line {}: malformed JSON: {}", lineno, e.what()));
  }
}

}  // namespace

SignalSource parse_signal_source(std::string_view text, const std::string& fallback_id) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) return {fallback_id, std::filesystem::path(text)};
  SignalSource s{std::string(text.substr(0, eq)), std::filesystem::path(text.substr(eq + 1))};
  if (s.checkpoint_id.empty() || s.path.empty()) {
    throw InputError(fmt::format("bad signal source '{}' (expected CKPT=PATH)", text));
  }
  return s;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(n);
  auto run_range = [&](std::size_t worker) {
    // Strided assignment: which thread runs an index never affects its result.
    for (std::size_t i = worker; i < n; i += jobs) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    run_range(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(run_range, w);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ScoreRun run_scoring(std::span<const ReasoningSample> samples, std::span<const std::vector<SignalRecord>> signals,
                     const ScoringConfig& config, bool strict, std::size_t jobs) {
  config.validate();
  const auto& checkpoints = config.checkpoints;
  if (signals.size() != checkpoints.size()) {
    throw InputError(fmt::format("{} signal sets for {} checkpoints", signals.size(), checkpoints.size()));
  }

  std::vector<const ReasoningSample*> ordered;
  std::map<std::string, const ReasoningSample*> by_id;
  for (const auto& s : samples) {
    if (!by_id.emplace(s.sample_id, &s).second) throw InputError(fmt::format("duplicate sample_id {}", s.sample_id));
  }
  for (const auto& [id, s] : by_id) ordered.push_back(s);

  auto mismatch = [&](const std::string& message) {
    if (strict) throw InputError(message + " (use --lenient to skip)");
    spdlog::warn("{}; skipping", message);
  };

  // Matching happens up front and single-threaded so warnings come out in order.
  const std::size_t n = ordered.size();
  std::vector<std::vector<const SignalRecord*>> matched(checkpoints.size(), std::vector<const SignalRecord*>(n));
  for (std::size_t m = 0; m < checkpoints.size(); ++m) {
    std::map<std::string, const SignalRecord*> records;
    for (const auto& r : signals[m]) {
      if (!records.emplace(r.sample_id, &r).second) {
        throw InputError(fmt::format("duplicate sample_id {} in checkpoint {}", r.sample_id, checkpoints[m]));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto it = records.find(ordered[i]->sample_id);
      if (it == records.end()) {
        mismatch(fmt::format("sample {} has no signals in checkpoint {}", ordered[i]->sample_id, checkpoints[m]));
        continue;
      }
      matched[m][i] = it->second;
      records.erase(it);
    }
    for (const auto& [id, r] : records) {
      mismatch(fmt::format("checkpoint {} has signals for unknown sample {}", checkpoints[m], id));
    }
  }

  const std::size_t tasks = n * checkpoints.size();
  std::vector<std::optional<ScoreReport>> results(tasks);
  std::vector<std::string> failures(tasks);
  parallel_for(tasks, jobs, [&](std::size_t task) {
    const std::size_t m = task / n;
    const std::size_t i = task % n;
    const SignalRecord* record = matched[m][i];
    if (!record) return;
    try {
      results[task] = score_sample(*ordered[i], *record, config);
      results[task]->checkpoint_id = checkpoints[m];
    } catch (const std::exception& e) {
      const auto message = fmt::format("sample {} at checkpoint {}: {}", ordered[i]->sample_id, checkpoints[m], e.what());
      if (strict) throw InputError(message);
      failures[task] = message;
    }
  });

  ScoreRun run;
  run.config = config;
  run.reports.resize(checkpoints.size());
  std::vector<bool> complete(n, true);
  for (std::size_t task = 0; task < tasks; ++task) {
    if (!failures[task].empty()) spdlog::warn("{}; skipping", failures[task]);
    if (!results[task]) complete[task % n] = false;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!complete[i]) {
      run.skipped.push_back(ordered[i]->sample_id);
      continue;
    }
    for (std::size_t m = 0; m < checkpoints.size(); ++m) run.reports[m].push_back(*results[m * n + i]);
  }
  run.table = build_value_table(checkpoints, run.reports, true, nullptr);
  if (!run.skipped.empty()) spdlog::warn("{} of {} samples skipped", run.skipped.size(), n);
  if (run.table.size() == 0) throw InputError("no sample could be scored");
  return run;
}

ScoreRun run_scoring(const std::filesystem::path& samples_path, std::span<const SignalSource> sources,
                     ScoringConfig config, bool strict, std::size_t jobs) {
  if (sources.empty()) throw InputError("at least one signal file is required");
  const auto samples = read_samples(samples_path);
  std::vector<std::vector<SignalRecord>> signals;
  config.checkpoints.clear();
  for (const auto& src : sources) {
    if (std::find(config.checkpoints.begin(), config.checkpoints.end(), src.checkpoint_id) !=
        config.checkpoints.end()) {
      throw InputError(fmt::format("checkpoint id {} given twice", src.checkpoint_id));
    }
    config.checkpoints.push_back(src.checkpoint_id);
    signals.push_back(read_signals(src.path, src.checkpoint_id));
    spdlog::info("read {} signal records for checkpoint {}", signals.back().size(), src.checkpoint_id);
  }
  return run_scoring(samples, signals, config, strict, jobs);
}

void write_scores(const ScoreRun& run, std::ostream& out) {
  json header;
  header["type"] = "header";
  header["format"] = "grace-scores";
  header["version"] = kScoresFormatVersion;
  header["config"] = run.config.to_json();
  header["config_hash"] = run.config.hash();
  header["samples"] = run.table.size();
  write_line(out, header);
  for (std::size_t i = 0; i < run.table.size(); ++i) {
    const auto& id = run.reports.front()[i].sample_id;
    for (const auto& per_ckpt : run.reports) {
      json line;
      line["type"] = "score";
      const json body = to_json(per_ckpt[i]);
      for (const auto& [k, v] : body.items()) line[k] = v;
      write_line(out, line);
    }
    json combined;
    combined["type"] = "combined";
    combined["sample_id"] = id;
    combined["value"] = run.table.combined.at(id);
    combined["per_checkpoint"] = run.table.per_checkpoint.at(id);
    write_line(out, combined);
  }
  out.flush();
  if (!out) throw std::runtime_error("failed writing scores");
}

ScoresFile read_scores(std::istream& in) {
  ScoresFile file;
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> checkpoint_index;
  std::map<std::string, double> combined;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = parse_line(line, lineno);
    const auto type = j.value("type", std::string());
    if (lineno == 1) {
      if (type != "header" || j.value("format", std::string()) != "grace-scores") {
        throw InputError("scores file must start with a grace-scores header line");
      }
      if (j.value("version", 0) != kScoresFormatVersion) {
        throw InputError(fmt::format("unsupported scores version {}", j.value("version", 0)));
      }
      file.header = j;
      file.config = ScoringConfig::from_json(j.at("config"));
      for (std::size_t m = 0; m < file.config.checkpoints.size(); ++m) checkpoint_index[file.config.checkpoints[m]] = m;
      file.reports.resize(file.config.checkpoints.size());
      continue;
    }
    try {
      if (type == "score") {
        auto report = score_report_from_json(j);
        const auto it = checkpoint_index.find(report.checkpoint_id);
        if (it == checkpoint_index.end()) {
          throw InputError(fmt::format("score for undeclared checkpoint {}", report.checkpoint_id));
        }
        file.reports[it->second].push_back(std::move(report));
      } else if (type == "combined") {
        combined[j.at("sample_id").get<std::string>()] = j.at("value").get<double>();
      } else {
        throw InputError(fmt::format("unknown line type '{}'", type));
      }
    } catch (const json::exception& e) {
      throw InputError(fmt::format("line {}: {}", lineno, e.what()));
    } catch (const InputError& e) {
      throw InputError(fmt::format("line {}: {}", lineno, e.what()));
    }
  }
  if (file.header.is_null()) throw InputError("empty scores file");
  file.table = build_value_table(file.config.checkpoints, file.reports, true, nullptr);
  // The combined lines are derived data; refuse files where they were edited apart.
  if (combined.size() != file.table.size()) throw InputError("combined lines do not match per-checkpoint lines");
  for (const auto& [id, v] : combined) {
    const auto it = file.table.combined.find(id);
    if (it == file.table.combined.end() || it->second != v) {
      throw InputError(fmt::format("combined value for {} disagrees with its per-checkpoint values", id));
    }
  }
  return file;
}

ScoresFile read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open scores file {}", path.string()));
  return read_scores(in);
}

void write_selection(const SelectionResult& selection, const json& provenance, std::ostream& out) {
  json header;
  header["type"] = "header";
  header["format"] = "grace-selection";
  header["version"] = kSelectionFormatVersion;
  header["method"] = selection.method;
  header["rho"] = selection.rho;
  header["budget"] = selection.budget;
  header["candidates"] = selection.ranked.size();
  header["tie_break"] = selection.tie_break;
  for (auto& [k, v] : provenance.items()) header[k] = v;
  write_line(out, header);
  for (std::size_t r = 0; r < selection.ranked.size(); ++r) {
    json line;
    line["type"] = "ranked";
    line["rank"] = r + 1;
    line["sample_id"] = selection.ranked[r].sample_id;
    line["value"] = selection.ranked[r].value;
    line["selected"] = r < selection.budget;
    write_line(out, line);
  }
  out.flush();
  if (!out) throw std::runtime_error("failed writing selection");
}

SelectionResult read_selection(std::istream& in) {
  SelectionResult s;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = parse_line(line, lineno);
    try {
      if (!have_header) {
        if (j.value("format", std::string()) != "grace-selection") throw InputError("missing grace-selection header");
        s.method = j.at("method").get<std::string>();
        s.rho = j.at("rho").get<double>();
        s.budget = j.at("budget").get<std::size_t>();
        s.tie_break = j.at("tie_break").get<std::string>();
        have_header = true;
        continue;
      }
      RankedEntry e{j.at("sample_id").get<std::string>(), j.at("value").get<double>()};
      if (j.at("selected").get<bool>()) s.selected_ids.push_back(e.sample_id);
      s.ranked.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw InputError(fmt::format("line {}: {}", lineno, e.what()));
    }
  }
  if (!have_header) throw InputError("empty selection file");
  return s;
}

}  // namespace grace
