#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fisheyehdk/optim.hpp"

namespace fhdk {

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
  std::size_t coords = 0;
  bool passed = false;
};

/// Central-difference checks of every differentiable op on 4x4 instances.
/// Each case compares the analytic gradient of a random linear readout of
/// the op's output against finite differences.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, double rel_tol = 1e-4);

}  // namespace fhdk
