#include "vaot/losses.hpp"

#include <map>

namespace vaot {

NodeId sga_loss(Tape& t, NodeId seg_input, NodeId seg_enhanced, int k, double eps) {
  check(t.value(seg_input).same_shape(t.value(seg_enhanced)), "sga_loss: shape mismatch");
  check(eps > 0.0, "sga_loss: eps must be positive");
  NodeId sk_enh = soft_skeletonize(t, seg_enhanced, k).unioned;
  NodeId sk_in = soft_skeletonize(t, seg_input, k).unioned;
  NodeId tp = div(t, add_scalar(t, sum(t, mul(t, sk_enh, seg_input)), eps),
                  add_scalar(t, sum(t, sk_enh), eps));
  NodeId ts = div(t, add_scalar(t, sum(t, mul(t, sk_in, seg_enhanced)), eps),
                  add_scalar(t, sum(t, sk_in), eps));
  NodeId two_pt = scalar_mul(t, mul(t, tp, ts), 2.0);
  NodeId harm = div(t, two_pt, add(t, tp, ts));
  return add_scalar(t, scalar_mul(t, harm, -1.0), 1.0);
}

NodeId evp_loss(Tape& t, NodeId x, NodeId xhat, const EndpointSet& anchors, int l,
                const SsimParams& p) {
  check(t.value(x).rank() == 2 && t.value(x).same_shape(t.value(xhat)),
        "evp_loss: inputs must be same-shape {H,W}");
  if (anchors.empty()) return t.constant(0.0);
  int h = t.value(x).height(), w = t.value(x).width();
  // anchors whose clamped windows coincide share one SSIM evaluation
  std::map<std::pair<int, int>, int> corners;
  for (const auto& c : anchors.points) ++corners[clamp_window(c, l, h, w)];
  double m = static_cast<double>(anchors.size());
  NodeId acc = t.constant(0.0);
  for (const auto& [corner, count] : corners) {
    NodeId wa = crop2(t, x, corner.first, corner.second, l, l);
    NodeId wb = crop2(t, xhat, corner.first, corner.second, l, l);
    NodeId cost = add_scalar(t, scalar_mul(t, ssim(t, wa, wb, p), -1.0), 1.0);
    acc = add(t, acc, scalar_mul(t, cost, static_cast<double>(count) / m));
  }
  return acc;
}

}  // namespace vaot
