#include "grace/numeric.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "grace/rng.hpp"

namespace grace {

namespace {

constexpr std::size_t kPairwiseBlock = 16;

double pairwise_dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() <= kPairwiseBlock) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
  }
  const std::size_t half = a.size() / 2;
  return pairwise_dot(a.first(half), b.first(half)) +
         pairwise_dot(a.subspan(half), b.subspan(half));
}

void add_into(Vector& acc, const Vector& v) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

Vector pairwise_reduce(std::span<const Vector> vectors) {
  if (vectors.size() <= 2) {
    Vector acc = vectors[0];
    if (vectors.size() == 2) add_into(acc, vectors[1]);
    return acc;
  }
  const std::size_t half = vectors.size() / 2;
  Vector left = pairwise_reduce(vectors.first(half));
  add_into(left, pairwise_reduce(vectors.subspan(half)));
  return left;
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= kPairwiseBlock) {
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  return pairwise_dot(a, b);
}

double norm(std::span<const double> v) { return std::sqrt(pairwise_dot(v, v)); }

Vector pairwise_vector_sum(std::span<const Vector> vectors) {
  if (vectors.empty()) throw std::invalid_argument("pairwise_vector_sum: empty input");
  const std::size_t dim = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != dim) throw std::invalid_argument("pairwise_vector_sum: dimension mismatch");
  }
  return pairwise_reduce(vectors);
}

Vector weighted_vector_sum(std::span<const Vector> vectors, std::span<const double> weights) {
  if (vectors.size() != weights.size()) {
    throw std::invalid_argument("weighted_vector_sum: weight count mismatch");
  }
  std::vector<Vector> scaled;
  scaled.reserve(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    Vector v = vectors[i];
    for (double& x : v) x *= weights[i];
    scaled.push_back(std::move(v));
  }
  return pairwise_vector_sum(scaled);
}

Vector to_double(std::span<const float> v) { return Vector(v.begin(), v.end()); }

double Rng::normal() {
  if (spare_) {
    const double z = *spare_;
    spare_.reset();
    return z;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

std::uint64_t Rng::index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

}  // namespace grace
