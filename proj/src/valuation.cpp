#include "grace/valuation.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>

#include <fmt/core.h>

#include "grace/error.hpp"
#include "grace/numeric.hpp"

namespace grace {

namespace {

void check_rho(double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw InputError(fmt::format("rho must lie in (0, 1), got {}", rho));
}

SelectionResult rank_and_cut(std::vector<RankedEntry> entries, double rho, std::string method) {
  check_rho(rho);
  if (entries.empty()) throw InputError("cannot select from an empty pool");
  for (const auto& e : entries) {
    if (std::isnan(e.value)) throw InputError(fmt::format("sample {} has a NaN value", e.sample_id));
  }
  std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.sample_id < b.sample_id;
  });
  SelectionResult result;
  result.method = std::move(method);
  result.rho = rho;
  result.budget = selection_budget(entries.size(), rho);
  for (std::size_t i = 0; i < result.budget; ++i) result.selected_ids.push_back(entries[i].sample_id);
  result.ranked = std::move(entries);
  return result;
}

}  // namespace

double sample_value(std::span<const double> step_scores) {
  if (step_scores.empty()) throw std::invalid_argument("sample_value: no step scores");
  return pairwise_sum(step_scores) / static_cast<double>(step_scores.size());
}

double combine_checkpoints(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("combine_checkpoints: no checkpoint values");
  return pairwise_sum(values) / static_cast<double>(values.size());
}

ValueTable build_value_table(std::span<const std::string> checkpoints,
                             std::span<const std::vector<ScoreReport>> reports, bool strict,
                             std::vector<std::string>* dropped) {
  if (checkpoints.empty()) throw InputError("at least one checkpoint is required");
  if (checkpoints.size() != reports.size()) throw InputError("one report list per checkpoint is required");

  std::map<std::string, std::vector<std::optional<double>>> slots;
  for (std::size_t m = 0; m < reports.size(); ++m) {
    for (const auto& r : reports[m]) {
      auto& row = slots[r.sample_id];
      row.resize(checkpoints.size());
      if (row[m]) throw InputError(fmt::format("sample {} appears twice in checkpoint {}", r.sample_id, checkpoints[m]));
      row[m] = r.value;
    }
  }

  ValueTable table;
  table.checkpoints.assign(checkpoints.begin(), checkpoints.end());
  for (auto& [id, row] : slots) {
    row.resize(checkpoints.size());
    const auto missing = std::find(row.begin(), row.end(), std::nullopt);
    if (missing != row.end()) {
      const auto& ckpt = checkpoints[static_cast<std::size_t>(missing - row.begin())];
      if (strict) throw InputError(fmt::format("sample {} is missing from checkpoint {}", id, ckpt));
      if (dropped) dropped->push_back(id);
      continue;
    }
    std::vector<double> values;
    for (const auto& v : row) values.push_back(*v);
    table.combined[id] = combine_checkpoints(values);
    table.per_checkpoint[id] = std::move(values);
  }
  return table;
}

std::size_t selection_budget(std::size_t n, double rho) {
  check_rho(rho);
  if (n == 0) return 0;
  const double exact = rho * static_cast<double>(n);
  const double nearest = std::round(exact);
  double budget = std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact) ? nearest : std::ceil(exact);
  budget = std::clamp(budget, 1.0, static_cast<double>(n));
  return static_cast<std::size_t>(budget);
}

SelectionResult select_top(const std::map<std::string, double>& values, double rho) {
  std::vector<RankedEntry> entries;
  entries.reserve(values.size());
  for (const auto& [id, v] : values) entries.push_back({id, v});
  return rank_and_cut(std::move(entries), rho, "grace");
}

SelectionResult select_top(const ValueTable& table, double rho) { return select_top(table.combined, rho); }

SelectionResult baseline_random(std::span<const ReasoningSample> samples, double rho, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.sample_id);
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 engine(seed);
  std::vector<RankedEntry> entries;
  for (auto& id : ids) {
    // Larger value ranks first, so negate the key to keep the smallest keys.
    const double key = static_cast<double>(engine() >> 11) * 0x1.0p-53;
    entries.push_back({std::move(id), 1.0 - key});
  }
  return rank_and_cut(std::move(entries), rho, "random");
}

SelectionResult baseline_longest(std::span<const ReasoningSample> samples, double rho) {
  std::vector<RankedEntry> entries;
  for (const auto& s : samples) entries.push_back({s.sample_id, static_cast<double>(s.total_supervised_tokens())});
  return rank_and_cut(std::move(entries), rho, "longest");
}

SelectionResult baseline_stepmax(std::span<const ReasoningSample> samples, double rho) {
  std::vector<RankedEntry> entries;
  for (const auto& s : samples) entries.push_back({s.sample_id, static_cast<double>(s.num_steps())});
  return rank_and_cut(std::move(entries), rho, "stepmax");
}

}  // namespace grace
