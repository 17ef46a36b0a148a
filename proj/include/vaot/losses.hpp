#pragma once

#include "vaot/endpoints.hpp"
#include "vaot/morphology.hpp"
#include "vaot/ssim.hpp"
#include "vaot/tape.hpp"

namespace vaot {

// Skeleton-guided alignment loss between two segmentation likelihoods:
//   T_p = (sum(SK(seg_enh) * seg_in) + eps) / (sum(SK(seg_enh)) + eps)
//   T_s = (sum(SK(seg_in) * seg_enh) + eps) / (sum(SK(seg_in)) + eps)
//   loss = 1 - 2 T_p T_s / (T_p + T_s)
// Fully differentiable; gradient flows through both arguments.
NodeId sga_loss(Tape& t, NodeId seg_input, NodeId seg_enhanced, int k, double eps = 1e-3);

// Endpoint-anchored window loss: mean over anchors of 1 - SSIM between the
// clamped l x l windows of x and xhat cropped at the same corner. Returns a
// constant 0 node when the anchor set is empty. Anchor positions are
// gradient-free indices.
NodeId evp_loss(Tape& t, NodeId x, NodeId xhat, const EndpointSet& anchors, int l,
                const SsimParams& p = {});

}  // namespace vaot
