#pragma once

#include <span>
#include <vector>

namespace grace::stats {

double mean(std::span<const double> values);
// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(std::span<const double> values);
double median(std::vector<double> values);

// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

// Spearman rank correlation; 0 when either side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

// Probability that a random positive outscores a random negative, ties
// counting one half (Mann-Whitney U / (n+ n-)).
double roc_auc(std::span<const double> scores, const std::vector<bool>& positive);

}  // namespace grace::stats
