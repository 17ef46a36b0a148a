#pragma once

#include <vector>

#include "vaot/tape.hpp"

namespace vaot {

// H x W grid with values in [0,1], checked on construction.
struct SoftMask {
  Grid grid;
  explicit SoftMask(Grid g);
};

// H x W grid with values exactly in {0,1}.
struct BinaryMask {
  Grid grid;
  explicit BinaryMask(Grid g);
  bool empty() const { return grid.sum() == 0.0; }
};

// Per-depth soft skeleton layers SK_0..SK_k plus their elementwise-max union.
struct SkeletonStack {
  std::vector<NodeId> layers;
  NodeId unioned = -1;
};

// ---- differentiable path --------------------------------------------------
NodeId soft_erode(Tape& t, NodeId mask);                 // minpool3
NodeId soft_open(Tape& t, NodeId mask);                  // maxpool3(minpool3)
SkeletonStack soft_skeletonize(Tape& t, NodeId mask, int k);

// ---- exact set-based oracle path -------------------------------------------
// Same 3x3 structuring element, out-of-bounds cells excluded.
BinaryMask erode_set(const BinaryMask& m);
BinaryMask dilate_set(const BinaryMask& m);
BinaryMask open_set(const BinaryMask& m);
// Lantuejoul morphological skeleton truncated at depth k (union of
// R_i \ open(R_i) with R_{i+1} = erode(R_i)).
BinaryMask hard_skeletonize(const BinaryMask& m, int k);

BinaryMask binarize(const Grid& soft, double tau = 0.5);  // v >= tau -> 1

}  // namespace vaot
