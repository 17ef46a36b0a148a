#include "vaot/grad_check.hpp"

#include <cmath>

namespace vaot {

namespace {

double eval_at(const GraphBuilder& f, const std::vector<Tensor>& points) {
  Tape t;
  std::vector<NodeId> ids;
  ids.reserve(points.size());
  for (const Tensor& p : points) ids.push_back(t.leaf(p, false));
  NodeId root = f(t, ids);
  check(t.value(root).is_scalar(), "grad_check: function must return a scalar node");
  return t.value(root).scalar_value();
}

std::vector<Tensor> reverse_grads(const GraphBuilder& f, const std::vector<Tensor>& points) {
  Tape t;
  std::vector<NodeId> ids;
  ids.reserve(points.size());
  for (const Tensor& p : points) ids.push_back(t.leaf(p, true));
  NodeId root = f(t, ids);
  check(t.value(root).is_scalar(), "grad_check: function must return a scalar node");
  t.backward(root);
  std::vector<Tensor> out;
  out.reserve(ids.size());
  for (NodeId id : ids) out.push_back(t.grad(id));
  return out;
}

}  // namespace

GradCheckReport grad_check_probe(const GraphBuilder& f, const std::vector<Tensor>& points,
                                 const std::vector<std::pair<int, int>>& components, double h,
                                 double tol) {
  std::vector<Tensor> grads = reverse_grads(f, points);
  // central differences cannot resolve differences below ~eps*|f|/h; treat
  // sub-resolution disagreements (zero-gradient components in particular)
  // as agreement instead of dividing noise by the 1e-8 floor
  double f0 = std::abs(eval_at(f, points));
  double noise = 256.0 * 2.220446049250313e-16 * std::max(1.0, f0) / h;
  GradCheckReport rep;
  for (auto [pi, ci] : components) {
    std::vector<Tensor> plus = points;
    std::vector<Tensor> minus = points;
    plus[pi].flat()[ci] += h;
    minus[pi].flat()[ci] -= h;
    double fd = (eval_at(f, plus) - eval_at(f, minus)) / (2.0 * h);
    double ad = grads[pi].flat()[ci];
    double diff = std::abs(ad - fd);
    double rel = diff < noise ? 0.0 : diff / std::max(1e-8, std::abs(ad) + std::abs(fd));
    rep.max_rel_error = std::max(rep.max_rel_error, rel);
    ++rep.n_checked;
  }
  rep.pass = rep.max_rel_error < tol;
  return rep;
}

GradCheckReport grad_check_multi(const GraphBuilder& f, const std::vector<Tensor>& points,
                                 double h, double tol) {
  std::vector<std::pair<int, int>> comps;
  for (int pi = 0; pi < static_cast<int>(points.size()); ++pi)
    for (int ci = 0; ci < points[pi].numel(); ++ci) comps.emplace_back(pi, ci);
  return grad_check_probe(f, points, comps, h, tol);
}

GradCheckReport grad_check(const std::function<NodeId(Tape&, NodeId)>& f, const Tensor& point,
                           double h, double tol) {
  return grad_check_multi(
      [&f](Tape& t, const std::vector<NodeId>& ids) { return f(t, ids[0]); }, {point}, h, tol);
}

}  // namespace vaot
