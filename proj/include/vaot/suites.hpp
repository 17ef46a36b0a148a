#pragma once

#include <string>
#include <vector>

#include "vaot/rng.hpp"
#include "vaot/tensor.hpp"

namespace vaot {

struct SuiteResult {
  std::string name;
  double max_rel_error = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// Finite-difference gradient suites: "primitives" (tol 1e-6), "composites"
// (1e-4), "full" (full phase-2 generator loss on a 5-parameter probe, 1e-3),
// or "all". Throws ConfigError on an unknown suite name.
std::vector<SuiteResult> run_grad_suite(const std::string& which);

// Random grid with pairwise-distinct values in [lo, hi]; the gap between any
// two values is far larger than the finite-difference step, so pooling and
// max ties cannot flip during a check.
Tensor distinct_grid(Rng& rng, int h, int w, double lo = 0.05, double hi = 0.95);

}  // namespace vaot
