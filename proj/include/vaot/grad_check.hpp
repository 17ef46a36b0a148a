#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "vaot/tape.hpp"

namespace vaot {

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = false;
  int n_checked = 0;
};

// Builder receives a fresh tape plus leaf ids for the points (in order) and
// must return a scalar node.
using GraphBuilder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

// Compares reverse-mode gradients against central finite differences,
// component-wise, over every element of every point.
// rel-error = |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
GradCheckReport grad_check_multi(const GraphBuilder& f, const std::vector<Tensor>& points,
                                 double h, double tol);

// Single-input convenience wrapper.
GradCheckReport grad_check(const std::function<NodeId(Tape&, NodeId)>& f, const Tensor& point,
                           double h, double tol);

// Checks only the listed (point index, flat component) entries; used for
// parameter probes where full finite differencing would be too slow.
GradCheckReport grad_check_probe(const GraphBuilder& f, const std::vector<Tensor>& points,
                                 const std::vector<std::pair<int, int>>& components, double h,
                                 double tol);

}  // namespace vaot
