#include <doctest.h>

#include "helpers.hpp"
#include "vaot/grad_check.hpp"
#include "vaot/suites.hpp"
#include "vaot/tape.hpp"

using namespace vaot;
using namespace vaot::testing;

namespace {

// nested-loop reference for cross-correlation with zero padding
Tensor conv_oracle(const Tensor& in, const Tensor& k, int stride, int py, int px) {
  int C = in.channels(), H = in.height(), W = in.width();
  int F = k.shape()[0], kh = k.shape()[2], kw = k.shape()[3];
  int oh = (H + 2 * py - kh) / stride + 1, ow = (W + 2 * px - kw) / stride + 1;
  Tensor out = Tensor::zeros({F, oh, ow});
  for (int f = 0; f < F; ++f)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int c = 0; c < C; ++c)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              int iy = oy * stride + ky - py, ix = ox * stride + kx - px;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += in.grid(c)(iy, ix) *
                     k.data()[((static_cast<Eigen::Index>(f) * C + c) * kh + ky) * kw + kx];
            }
        out.grid(f)(oy, ox) = acc;
      }
  return out;
}

template <bool kMax>
Grid pool_oracle(const Grid& in) {
  int h = static_cast<int>(in.rows()), w = static_cast<int>(in.cols());
  Grid out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool first = true;
      double best = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          double v = in(yy, xx);
          if (first || (kMax ? v > best : v < best)) best = v;
          first = false;
        }
      out(y, x) = best;
    }
  return out;
}

}  // namespace

TEST_CASE("conv2d: all-ones 5x5 with 3x3 ones kernel, same padding") {
  Tape t;
  Tensor in = Tensor::zeros({1, 5, 5});
  in.flat() = 1.0;
  Tensor k = Tensor::zeros({1, 1, 3, 3});
  k.flat() = 1.0;
  NodeId out = conv2d(t, t.constant(in), t.constant(k), 1, Padding::same());
  CHECK(t.value(out).grid(0)(2, 2) == 9.0);
  CHECK(t.value(out).grid(0)(0, 0) == 4.0);
  CHECK(t.value(out).grid(0)(0, 2) == 6.0);
}

TEST_CASE("conv2d: 1x1 identity kernel is the identity") {
  Tape t;
  Rng rng(5);
  Tensor in = random_tensor(rng, {2, 4, 6});
  Tensor k = Tensor::zeros({2, 2, 1, 1});
  k.flat()[0] = 1.0;  // k[f=0,c=0] and k[f=1,c=1]
  k.flat()[3] = 1.0;
  NodeId out = conv2d(t, t.constant(in), t.constant(k), 1, Padding::same());
  CHECK((t.value(out).flat() == in.flat()).all());
}

TEST_CASE("conv2d matches the nested-loop oracle") {
  Rng rng(17);
  for (int rep = 0; rep < 4; ++rep) {
    Tensor in = random_tensor(rng, {2, 8, 8});
    Tensor k = random_tensor(rng, {3, 2, 3, 3});
    for (int stride : {1, 2}) {
      Tape t;
      NodeId out = conv2d(t, t.constant(in), t.constant(k), stride, Padding::same());
      Tensor want = conv_oracle(in, k, stride, 1, 1);
      REQUIRE(t.value(out).shape() == want.shape());
      CHECK(((t.value(out).flat() - want.flat()).abs() < 1e-12).all());
    }
  }
}

TEST_CASE("pooling: single impulse at the center") {
  Grid g = const_grid(3, 3, 0.0);
  g(1, 1) = 1.0;
  Tape t;
  NodeId mn = minpool3(t, t.constant(Tensor::from_grid(g)));
  NodeId mx = maxpool3(t, t.constant(Tensor::from_grid(g)));
  CHECK(t.value(mn).flat().maxCoeff() == 0.0);
  CHECK(t.value(mx).flat().minCoeff() == 1.0);
}

TEST_CASE("pooling matches the nested-loop oracle bit-exactly") {
  Rng rng(23);
  for (int rep = 0; rep < 5; ++rep) {
    Grid g = random_grid(rng, 8, 8);
    Tape t;
    NodeId mn = minpool3(t, t.constant(Tensor::from_grid(g)));
    NodeId mx = maxpool3(t, t.constant(Tensor::from_grid(g)));
    Grid mn_want = pool_oracle<false>(g), mx_want = pool_oracle<true>(g);
    CHECK((t.value(mn).grid() == mn_want).all());
    CHECK((t.value(mx).grid() == mx_want).all());
  }
}

TEST_CASE("activations: values and the sigmoid gradient at 0") {
  Tape t;
  NodeId x = t.leaf(Tensor::from_grid(make_grid(1, 2, {-0.3, 0.7})), false);
  NodeId r = relu(t, x);
  CHECK(t.value(r).flat()[0] == 0.0);
  CHECK(t.value(r).flat()[1] == 0.7);

  CHECK(t.value(sigmoid(t, t.constant(Tensor::scalar(0.0)))).scalar_value() == 0.5);

  // d sigmoid / dx at 0 is exactly 0.25; compare against central differences
  auto f = [](Tape& tt, NodeId id) { return sigmoid(tt, id); };
  Tape t2;
  NodeId leaf = t2.leaf(Tensor::scalar(0.0), true);
  t2.backward(f(t2, leaf));
  double ad = t2.grad(leaf).scalar_value();
  CHECK(ad == doctest::Approx(0.25).epsilon(1e-12));
  double h = 1e-6;
  double fd = (1.0 / (1.0 + std::exp(-h)) - 1.0 / (1.0 + std::exp(h))) / (2.0 * h);
  CHECK(std::abs(ad - fd) < 1e-8);
}

TEST_CASE("reductions and downsample2") {
  Tape t;
  NodeId ones = t.constant(Tensor::from_grid(const_grid(4, 4, 1.0)));
  CHECK(t.value(sum(t, ones)).scalar_value() == 16.0);
  NodeId d = downsample2(t, t.constant(Tensor::from_grid(make_grid(2, 2, {0, 1, 1, 0}))));
  CHECK(t.value(d).grid()(0, 0) == 0.5);
}

TEST_CASE("mul gradient: d sum(a*b)/da = b (finite differences)") {
  Rng rng(31);
  Tensor a = random_tensor(rng, {4, 4});
  Tensor b = random_tensor(rng, {4, 4});
  auto rep = grad_check_multi(
      [](Tape& t, const std::vector<NodeId>& ids) { return sum(t, mul(t, ids[0], ids[1])); },
      {a, b}, 1e-6, 1e-6);
  CHECK(rep.pass);

  Tape t;
  NodeId an = t.leaf(a, true);
  NodeId bn = t.constant(b);
  t.backward(sum(t, mul(t, an, bn)));
  CHECK(((t.grad(an).flat() - b.flat()).abs() < 1e-12).all());
}

TEST_CASE("grad_check: sum of squares and constants") {
  Rng rng(37);
  Tensor x = random_tensor(rng, {3, 3});
  auto rep = grad_check(
      [](Tape& t, NodeId id) { return sum(t, mul(t, id, id)); }, x, 1e-6, 1e-6);
  CHECK(rep.pass);
  CHECK(rep.max_rel_error < 1e-6);

  Tape t;
  NodeId leaf = t.leaf(x, true);
  t.backward(sum(t, mul(t, leaf, leaf)));
  CHECK(((t.grad(leaf).flat() - 2.0 * x.flat()).abs() < 1e-10).all());

  // constant function: gradient is exactly zero
  Tape t2;
  NodeId leaf2 = t2.leaf(x, true);
  NodeId c = t2.constant(Tensor::scalar(3.0));
  t2.backward(add(t2, sum(t2, scalar_mul(t2, leaf2, 0.0)), c));
  CHECK((t2.grad(leaf2).flat() == 0.0).all());
}

TEST_CASE("shared subgraphs accumulate: d(x+x)/dx = 2 exactly") {
  Tape t;
  NodeId x = t.leaf(Tensor::scalar(1.25), true);
  NodeId root = add(t, x, x);
  t.backward(root);
  CHECK(t.grad(x).scalar_value() == 2.0);
  CHECK(t.grad(root).scalar_value() == 1.0);  // d root / d root
}

TEST_CASE("backward twice without reset is an error") {
  Tape t;
  NodeId x = t.leaf(Tensor::scalar(1.0), true);
  NodeId root = mul(t, x, x);
  t.backward(root);
  CHECK_THROWS_AS(t.backward(root), std::invalid_argument);
  t.reset_grads();
  t.backward(root);
  CHECK(t.grad(x).scalar_value() == 2.0);
}

TEST_CASE("shape mismatches are rejected") {
  Tape t;
  NodeId a = t.constant(Tensor::zeros({2, 3}));
  NodeId b = t.constant(Tensor::zeros({3, 2}));
  CHECK_THROWS_AS(add(t, a, b), std::invalid_argument);
  NodeId in = t.constant(Tensor::zeros({2, 4, 4}));
  NodeId k = t.constant(Tensor::zeros({1, 3, 3, 3}));
  CHECK_THROWS_AS(conv2d(t, in, k, 1, Padding::same()), std::invalid_argument);
}

TEST_CASE("forward passes are bit-deterministic across repeated runs") {
  Rng rng(41);
  Tensor in = random_tensor(rng, {2, 12, 12});
  Tensor k = random_tensor(rng, {4, 2, 3, 3});
  Tensor first;
  for (int rep = 0; rep < 2; ++rep) {
    Tape t;
    NodeId out = conv2d(t, t.constant(in), t.constant(k), 1, Padding::same());
    NodeId red = mean(t, mul(t, out, out));
    Tensor got = t.value(red);
    if (rep == 0)
      first = got;
    else
      CHECK((first.flat() == got.flat()).all());
  }
}

TEST_CASE("second-order: gradient of a gradient-norm penalty") {
  // y = <w, x>; GP(w) = (||grad_x y|| - 1)^2 = (||w|| - 1)^2; check d GP / dw
  Rng rng(43);
  Tensor w = random_tensor(rng, {5});
  auto rep = grad_check(
      [](Tape& t, NodeId wn) {
        NodeId x = t.leaf(Tensor::zeros({5}), true);
        NodeId y = sum(t, mul(t, wn, x));
        NodeId g = t.backward_graph(y, {x})[0];
        NodeId norm = vaot::sqrt(t, sum(t, mul(t, g, g)));
        NodeId ex = add_scalar(t, norm, -1.0);
        return mul(t, ex, ex);
      },
      w, 1e-6, 1e-6);
  CHECK(rep.pass);
}

TEST_CASE("tie-avoiding generator produces pairwise-distinct values") {
  Rng rng(47);
  Tensor t = distinct_grid(rng, 8, 8);
  std::vector<double> v(t.data(), t.data() + t.numel());
  std::sort(v.begin(), v.end());
  for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] - v[i - 1] > 1e-4);
}
