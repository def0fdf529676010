#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "tcm/grid.hpp"

namespace tcm::test {

inline constexpr double pi = std::numbers::pi;

inline ScalarField random_field(const Grid& g, Bc bc, std::mt19937_64& rng, double lo = -1.0,
                                double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  ScalarField f(g, bc);
  for (double& v : f.values()) v = d(rng);
  return f;
}

inline VectorField random_vector(const Grid& g, Bc bc, std::mt19937_64& rng) {
  return VectorField(random_field(g, bc, rng), random_field(g, bc, rng));
}

inline ScalarField sinsin(const Grid& g, Bc bc = Bc::dirichlet) {
  return make_field(g, bc, [](double x, double y) {
    return std::sin(pi * x) * std::sin(pi * y);
  });
}

inline double max_abs(const ScalarField& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

struct WarningCapture {
  std::vector<std::string> messages;
  std::function<void(std::string_view)> saved;
  WarningCapture() : saved(warning_sink()) {
    warning_sink() = [this](std::string_view m) { messages.emplace_back(m); };
  }
  ~WarningCapture() { warning_sink() = saved; }
};

}  // namespace tcm::test
