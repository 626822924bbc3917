#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace grace {

using Vector = std::vector<double>;

// Pairwise (cascade) summation. Error grows O(log n) instead of O(n).
double pairwise_sum(std::span<const double> values);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

// Componentwise sum of equally sized vectors, reduced pairwise in a fixed order.
Vector pairwise_vector_sum(std::span<const Vector> vectors);

// sum_i weights[i] * vectors[i], reduced pairwise.
Vector weighted_vector_sum(std::span<const Vector> vectors, std::span<const double> weights);

Vector to_double(std::span<const float> v);

}  // namespace grace
