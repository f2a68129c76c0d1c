#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vapor/world_io.hpp"

namespace vapor::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  Json detail = Json::object();
};

/// Fast maps against the O(N n^2) brute-force sums, cell for cell, plus the goal map closed form.
CheckResult cost_maps(std::uint64_t seed, int clouds = 1000, int max_points = 5000);
/// Stability vector against a Jacobi eigensolve of the standardized covariance.
CheckResult pca(std::uint64_t seed, int windows = 500, double tolerance = 1e-8);
/// Backprop against central differences for critic and actor, with and without attention.
CheckResult gradients(const std::vector<std::uint64_t>& seeds, int grid_n = 8, double tolerance = 1e-4);

Json to_json(const CheckResult& r);

}  // namespace vapor::checks
