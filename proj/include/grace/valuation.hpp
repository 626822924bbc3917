#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "grace/reports.hpp"
#include "grace/trace_data.hpp"

namespace grace {

// Mean of the K step scores of one trace.
double sample_value(std::span<const double> step_scores);

// Unweighted mean of one sample's values across M checkpoints.
double combine_checkpoints(std::span<const double> values);

struct ValueTable {
  std::vector<std::string> checkpoints;
  std::map<std::string, std::vector<double>> per_checkpoint;  // id -> one value per checkpoint
  std::map<std::string, double> combined;

  std::size_t size() const { return combined.size(); }
};

// reports[m] holds the reports of checkpoint m. In strict mode every id must
// appear in every checkpoint exactly once; in lenient mode ids missing from
// some checkpoint are dropped and listed in `dropped`.
ValueTable build_value_table(std::span<const std::string> checkpoints,
                             std::span<const std::vector<ScoreReport>> reports, bool strict,
                             std::vector<std::string>* dropped = nullptr);

// ceil(rho * n), with products within 1e-9 of an integer snapped to it so
// that decimal ratios such as 0.7 * 10 give 7 rather than 8.
std::size_t selection_budget(std::size_t n, double rho);

// Top ceil(rho N) by value, ties broken by ascending id.
SelectionResult select_top(const std::map<std::string, double>& values, double rho);
SelectionResult select_top(const ValueTable& table, double rho);

// Uniform subset without replacement: each id (in ascending order) draws a
// 64-bit key from mt19937_64(seed) and the smallest keys win.
SelectionResult baseline_random(std::span<const ReasoningSample> samples, double rho, std::uint64_t seed);
// Most supervised tokens first.
SelectionResult baseline_longest(std::span<const ReasoningSample> samples, double rho);
// Most steps first.
SelectionResult baseline_stepmax(std::span<const ReasoningSample> samples, double rho);

}  // namespace grace
