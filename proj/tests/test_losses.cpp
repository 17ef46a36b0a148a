#include <doctest.h>

#include "helpers.hpp"
#include "vaot/grad_check.hpp"
#include "vaot/losses.hpp"
#include "vaot/suites.hpp"

using namespace vaot;
using namespace vaot::testing;

namespace {

// straight-line reimplementation of the SGA formula, fed the module's own
// skeleton outputs
double sga_oracle(const Grid& seg_in, const Grid& seg_enh, int k, double eps) {
  Tape t;
  Grid sk_in(seg_in.rows(), seg_in.cols()), sk_enh(seg_in.rows(), seg_in.cols());
  sk_in = t.value(soft_skeletonize(t, t.constant(Tensor::from_grid(seg_in)), k).unioned).grid();
  sk_enh =
      t.value(soft_skeletonize(t, t.constant(Tensor::from_grid(seg_enh)), k).unioned).grid();
  double tp = ((sk_enh * seg_in).sum() + eps) / (sk_enh.sum() + eps);
  double ts = ((sk_in * seg_enh).sum() + eps) / (sk_in.sum() + eps);
  return 1.0 - 2.0 * tp * ts / (tp + ts);
}

double sga_value(const Grid& seg_in, const Grid& seg_enh, int k, double eps = 1e-3) {
  Tape t;
  return t
      .value(sga_loss(t, t.constant(Tensor::from_grid(seg_in)),
                      t.constant(Tensor::from_grid(seg_enh)), k, eps))
      .scalar_value();
}

double evp_value(const Grid& x, const Grid& xhat, const EndpointSet& anchors, int l) {
  Tape t;
  return t
      .value(evp_loss(t, t.constant(Tensor::from_grid(x)),
                      t.constant(Tensor::from_grid(xhat)), anchors, l))
      .scalar_value();
}

Grid line_mask(int h, int w, int row, int x0, int x1) {
  Grid g = Grid::Zero(h, w);
  for (int x = x0; x <= x1; ++x) g(row, x) = 1.0;
  return g;
}

}  // namespace

TEST_CASE("sga_loss vanishes on identical binary masks") {
  Grid line = line_mask(16, 16, 8, 3, 12);
  CHECK(sga_value(line, line, 5) == 0.0);
  Rng rng(97);
  for (int rep = 0; rep < 10; ++rep) {
    BinaryMask m(random_binary(rng, 20, 20, 0.3));
    if (hard_skeletonize(m, 10).empty()) continue;
    CHECK(sga_value(m.grid, m.grid, 10) < 1e-6);
  }
}

TEST_CASE("sga_loss on disjoint supports approaches 1") {
  Grid a = line_mask(32, 32, 5, 2, 29);
  Grid b = line_mask(32, 32, 25, 2, 29);
  double loss = sga_value(a, b, 5);
  // plug disjoint supports into the formula by hand: both numerators are eps
  double eps = 1e-3;
  double tp = eps / (28.0 + eps);
  double ts = eps / (28.0 + eps);
  CHECK(loss == doctest::Approx(1.0 - 2.0 * tp * ts / (tp + ts)).epsilon(1e-12));
  CHECK(loss > 0.99);
}

TEST_CASE("sga_loss equals the independent formula oracle on random soft pairs") {
  Rng rng(101);
  for (int rep = 0; rep < 5; ++rep) {
    Grid a = random_grid(rng, 32, 32), b = random_grid(rng, 32, 32);
    CHECK(sga_value(a, b, 6) == doctest::Approx(sga_oracle(a, b, 6, 1e-3)).epsilon(1e-12));
  }
}

TEST_CASE("sga_loss stays in [0, 1]") {
  Rng rng(103);
  for (int rep = 0; rep < 20; ++rep) {
    Grid a = random_grid(rng, 16, 16), b = random_grid(rng, 16, 16);
    double v = sga_value(a, b, 4);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-9);
  }
}

TEST_CASE("sga_loss rejects shape mismatches") {
  Tape t;
  NodeId a = t.constant(Tensor::zeros({4, 4}));
  NodeId b = t.constant(Tensor::zeros({4, 5}));
  CHECK_THROWS_AS(sga_loss(t, a, b, 2, 1e-3), std::invalid_argument);
}

TEST_CASE("evp_loss: identical images and empty anchor sets give exactly 0") {
  Rng rng(107);
  Grid x = random_grid(rng, 32, 32);
  EndpointSet anchors;
  anchors.points = {{4, 4}, {16, 16}, {30, 2}};
  CHECK(evp_value(x, x, anchors, 16) == 0.0);
  CHECK(evp_value(x, random_grid(rng, 32, 32), EndpointSet{}, 16) == 0.0);
}

TEST_CASE("evp_loss with one anchor equals the direct-crop cost") {
  Rng rng(109);
  Grid x = random_grid(rng, 32, 32);
  Grid xhat = x;
  auto corner = clamp_window({16, 16}, 16, 32, 32);
  for (int y = corner.first; y < corner.first + 16; ++y)
    for (int x2 = corner.second; x2 < corner.second + 16; ++x2)
      xhat(y, x2) = std::min(1.0, x(y, x2) + 0.1);
  EndpointSet one;
  one.points = {{16, 16}};
  Grid wx = x.block(corner.first, corner.second, 16, 16);
  Grid wh = xhat.block(corner.first, corner.second, 16, 16);
  CHECK(evp_value(x, xhat, one, 16) ==
        doctest::Approx(1.0 - ssim_value(wx, wh)).epsilon(1e-12));
}

TEST_CASE("evp_loss is invariant under simultaneous translation") {
  Rng rng(113);
  Grid x = random_grid(rng, 24, 24), xh = random_grid(rng, 24, 24);
  Grid xs = Grid::Zero(32, 32), xhs = Grid::Zero(32, 32);
  xs.block(0, 0, 24, 24) = x;
  xhs.block(0, 0, 24, 24) = xh;
  Grid xt = Grid::Zero(32, 32), xht = Grid::Zero(32, 32);
  xt.block(5, 6, 24, 24) = x;
  xht.block(5, 6, 24, 24) = xh;
  EndpointSet a0, a1;
  a0.points = {{10, 9}, {12, 14}};
  for (auto [r, c] : a0.points) a1.points.emplace_back(r + 5, c + 6);
  CHECK(evp_value(xs, xhs, a0, 8) == doctest::Approx(evp_value(xt, xht, a1, 8)).epsilon(1e-12));
}

TEST_CASE("evp_loss gradient flows only through windowed pixels of xhat") {
  Rng rng(127);
  Tensor x = distinct_grid(rng, 16, 16);
  Tensor xh = distinct_grid(rng, 16, 16);
  EndpointSet one;
  one.points = {{4, 4}};
  Tape t;
  NodeId xn = t.constant(x);
  NodeId xhn = t.leaf(xh, true);
  t.backward(evp_loss(t, xn, xhn, one, 8));
  const Tensor& g = t.grad(xhn);
  auto corner = clamp_window({4, 4}, 8, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int c = 0; c < 16; ++c) {
      bool inside = y >= corner.first && y < corner.first + 8 && c >= corner.second &&
                    c < corner.second + 8;
      if (!inside) CHECK(g.grid()(y, c) == 0.0);
    }
  CHECK(g.flat().abs().maxCoeff() > 0.0);
}

TEST_CASE("evp_loss gradient matches finite differences") {
  Rng rng(131);
  Tensor x0 = distinct_grid(rng, 16, 16);
  EndpointSet anchors;
  anchors.points = {{8, 8}, {2, 13}};
  auto rep = grad_check(
      [&](Tape& t, NodeId id) {
        return evp_loss(t, t.constant(x0), id, anchors, 8);
      },
      distinct_grid(rng, 16, 16), 1e-5, 1e-4);
  CHECK(rep.pass);
}

TEST_CASE("sga_loss gradient through the segmenter matches finite differences") {
  auto results = run_grad_suite("composites");
  for (const auto& r : results)
    if (r.name == "sga_through_segmenter") {
      CHECK(r.pass);
      CHECK(r.max_rel_error < 1e-4);
    }
}
