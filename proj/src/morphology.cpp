#include "vaot/morphology.hpp"

namespace vaot {

SoftMask::SoftMask(Grid g) : grid(std::move(g)) {
  check(grid.size() > 0, "SoftMask: empty grid");
  check(grid.isFinite().all() && grid.minCoeff() >= 0.0 && grid.maxCoeff() <= 1.0,
        "SoftMask: values must lie in [0,1]");
}

BinaryMask::BinaryMask(Grid g) : grid(std::move(g)) {
  check(grid.size() > 0, "BinaryMask: empty grid");
  check(((grid == 0.0) || (grid == 1.0)).all(), "BinaryMask: values must be exactly 0 or 1");
}

NodeId soft_erode(Tape& t, NodeId mask) { return minpool3(t, mask); }

NodeId soft_open(Tape& t, NodeId mask) { return maxpool3(t, minpool3(t, mask)); }

SkeletonStack soft_skeletonize(Tape& t, NodeId mask, int k) {
  check(k >= 0, "soft_skeletonize: k must be >= 0");
  SkeletonStack out;
  NodeId r = mask;
  for (int i = 0; i <= k; ++i) {
    NodeId e = soft_erode(t, r);
    NodeId o = maxpool3(t, e);
    NodeId sk = relu(t, sub(t, r, o));
    out.layers.push_back(sk);
    out.unioned = (i == 0) ? sk : max_ew(t, out.unioned, sk);
    r = e;
  }
  return out;
}

// ---------------------------------------------------------------------------

template <bool kDilate>
static BinaryMask morph_set(const BinaryMask& m) {
  int h = static_cast<int>(m.grid.rows()), w = static_cast<int>(m.grid.cols());
  Grid out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool acc = !kDilate;  // erode: all in-bounds neighbors set; dilate: any
      for (int dy = -1; dy <= 1 && acc != kDilate; ++dy) {
        int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          bool v = m.grid(yy, xx) != 0.0;
          if (kDilate && v) {
            acc = true;
            break;
          }
          if (!kDilate && !v) {
            acc = false;
            break;
          }
        }
      }
      out(y, x) = acc ? 1.0 : 0.0;
    }
  }
  return BinaryMask(std::move(out));
}

BinaryMask erode_set(const BinaryMask& m) { return morph_set<false>(m); }
BinaryMask dilate_set(const BinaryMask& m) { return morph_set<true>(m); }
BinaryMask open_set(const BinaryMask& m) { return dilate_set(erode_set(m)); }

BinaryMask hard_skeletonize(const BinaryMask& m, int k) {
  check(k >= 0, "hard_skeletonize: k must be >= 0");
  Grid skel = Grid::Zero(m.grid.rows(), m.grid.cols());
  BinaryMask r = m;
  for (int i = 0; i <= k; ++i) {
    BinaryMask e = erode_set(r);
    BinaryMask o = dilate_set(e);
    // R_i \ O_i
    skel = skel.max(((r.grid == 1.0) && (o.grid == 0.0)).cast<double>());
    r = e;
  }
  return BinaryMask(std::move(skel));
}

BinaryMask binarize(const Grid& soft, double tau) {
  check(tau > 0.0 && tau < 1.0, "binarize: threshold must lie in (0,1)");
  return BinaryMask((soft >= tau).cast<double>());
}

}  // namespace vaot
