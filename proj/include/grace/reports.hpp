#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace grace {

struct StepScore {
  std::size_t step = 0;                       // 1-based k
  double answer_alignment = 0.0;              // cosine with the target proxy
  std::optional<double> history_alignment;    // absent for k = 1
  double score = 0.0;

  bool operator==(const StepScore&) const = default;
};

struct ScoreReport {
  std::string sample_id;
  std::string checkpoint_id;
  std::vector<StepScore> steps;
  double value = 0.0;  // mean of the step scores
  std::string config_hash;

  bool operator==(const ScoreReport&) const = default;
};

struct RankedEntry {
  std::string sample_id;
  double value = 0.0;

  bool operator==(const RankedEntry&) const = default;
};

struct SelectionResult {
  std::string method = "grace";
  double rho = 0.0;
  std::size_t budget = 0;
  std::vector<RankedEntry> ranked;  // descending value, ascending id on ties
  std::vector<std::string> selected_ids;
  std::string tie_break = "by_id_ascending";

  bool operator==(const SelectionResult&) const = default;
};

nlohmann::ordered_json to_json(const StepScore& s);
nlohmann::ordered_json to_json(const ScoreReport& r);
ScoreReport score_report_from_json(const nlohmann::ordered_json& j);

}  // namespace grace
