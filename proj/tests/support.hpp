#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hyptk/manifold.hpp"
#include "hyptk/tensor.hpp"

namespace testing {

inline std::vector<double> normal_values(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

inline hyp::Tensor random_tensor(const hyp::Shape& shape, std::mt19937_64& rng, double sd = 1.0) {
  return hyp::Tensor(shape, normal_values(static_cast<std::size_t>(hyp::numel(shape)), rng, sd));
}

// Random points inside the ball of curvature c, each row with norm at most
// `radius` / sqrt(c).
inline hyp::Tensor random_ball_points(const hyp::Shape& shape, double c, double radius,
                                      std::mt19937_64& rng) {
  hyp::Tensor t = random_tensor(shape, rng);
  const std::int64_t d = shape.back();
  std::uniform_real_distribution<double> u(0.0, radius);
  auto v = t.mutable_data();
  for (std::size_t row = 0; row < v.size() / static_cast<std::size_t>(d); ++row) {
    double n = 0.0;
    for (std::int64_t j = 0; j < d; ++j) n += v[row * d + j] * v[row * d + j];
    n = std::sqrt(n);
    const double target = u(rng) / std::sqrt(c);
    for (std::int64_t j = 0; j < d; ++j) v[row * d + j] *= n > 0 ? target / n : 0.0;
  }
  return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// max |a - b| / max(|b|, floor)
inline double max_rel_diff(std::span<const double> a, std::span<const double> b,
                           double floor = 1e-12) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), floor));
  }
  return m;
}

inline std::vector<double> values(const hyp::Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace testing
