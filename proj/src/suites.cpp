#include "vaot/suites.hpp"

#include <cmath>

#include "vaot/error.hpp"
#include "vaot/grad_check.hpp"
#include "vaot/losses.hpp"
#include "vaot/nets.hpp"
#include "vaot/ssim.hpp"
#include "vaot/trainer.hpp"

namespace vaot {

Tensor distinct_grid(Rng& rng, int h, int w, double lo, double hi) {
  int n = h * w;
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.uniform_int(static_cast<std::uint64_t>(i + 1))]);
  Tensor t = Tensor::zeros({h, w});
  for (int i = 0; i < n; ++i)
    t.flat()[i] = lo + (hi - lo) * (perm[i] + 0.3 * rng.uniform()) / n;
  return t;
}

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo, double hi) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (Eigen::Index i = 0; i < t.numel(); ++i) t.flat()[i] = rng.uniform(lo, hi);
  return t;
}

// scalarize a tensor-valued op with a fixed random weighting; the seed is
// fixed per case so repeated evaluations see identical weights, and the
// magnitudes stay in [0.5, 1.5] so no component gradient collapses to zero
NodeId weighted(Tape& t, NodeId node, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w = Tensor::zeros(t.value(node).shape());
  for (Eigen::Index i = 0; i < w.numel(); ++i) {
    double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    w.flat()[i] = sign * rng.uniform(0.5, 1.5);
  }
  return sum(t, mul(t, node, t.constant(std::move(w))));
}

struct Harness {
  std::vector<SuiteResult> results;

  void run(const std::string& name, const GraphBuilder& f, std::vector<Tensor> pts,
           double h, double tol) {
    GradCheckReport rep = grad_check_multi(f, pts, h, tol);
    results.push_back({name, rep.max_rel_error, tol, rep.pass});
  }
  void run_probe(const std::string& name, const GraphBuilder& f, std::vector<Tensor> pts,
                 const std::vector<std::pair<int, int>>& comps, double h, double tol) {
    GradCheckReport rep = grad_check_probe(f, pts, comps, h, tol);
    results.push_back({name, rep.max_rel_error, tol, rep.pass});
  }
};

void primitives_suite(Harness& hs) {
  const double h = 1e-6, tol = 1e-6;
  Rng rng(101);

  auto grid = [&](int rows, int cols) { return distinct_grid(rng, rows, cols); };
  // signed variant keeps values away from zero so relu kinks cannot flip
  auto signed_grid = [&](int rows, int cols) {
    Tensor t = distinct_grid(rng, rows, cols, 0.1, 0.9);
    for (Eigen::Index i = 0; i < t.numel(); ++i)
      if (rng.uniform() < 0.5) t.flat()[i] = -t.flat()[i];
    return t;
  };

  std::uint64_t case_seed = 7000;
  auto w1 = [&](const char* name, auto opfn, Tensor pt) {
    std::uint64_t seed = ++case_seed;
    hs.run(name,
           [opfn, seed](Tape& t, const std::vector<NodeId>& ids) {
             return weighted(t, opfn(t, ids[0]), seed);
           },
           {std::move(pt)}, h, tol);
  };
  auto w2 = [&](const char* name, auto opfn, Tensor a, Tensor b) {
    std::uint64_t seed = ++case_seed;
    hs.run(name,
           [opfn, seed](Tape& t, const std::vector<NodeId>& ids) {
             return weighted(t, opfn(t, ids[0], ids[1]), seed);
           },
           {std::move(a), std::move(b)}, h, tol);
  };

  w2("add", [](Tape& t, NodeId a, NodeId b) { return add(t, a, b); }, grid(5, 5), grid(5, 5));
  w2("sub", [](Tape& t, NodeId a, NodeId b) { return sub(t, a, b); }, grid(5, 5), grid(5, 5));
  w2("mul", [](Tape& t, NodeId a, NodeId b) { return mul(t, a, b); }, grid(5, 5), grid(5, 5));
  w2("div", [](Tape& t, NodeId a, NodeId b) { return div(t, a, b); }, grid(5, 5),
     distinct_grid(rng, 5, 5, 0.5, 1.5));
  w1("scalar_mul", [](Tape& t, NodeId a) { return scalar_mul(t, a, 1.7); }, grid(5, 5));
  w1("add_scalar", [](Tape& t, NodeId a) { return add_scalar(t, a, 0.3); }, grid(5, 5));
  w1("relu", [](Tape& t, NodeId a) { return relu(t, a); }, signed_grid(6, 6));
  w1("leaky_relu", [](Tape& t, NodeId a) { return leaky_relu(t, a, 0.2); }, signed_grid(6, 6));
  w1("sigmoid", [](Tape& t, NodeId a) { return sigmoid(t, a); }, signed_grid(5, 5));
  w1("tanh01", [](Tape& t, NodeId a) { return tanh01(t, a); }, signed_grid(5, 5));
  {
    // values spread over [-0.45, 1.45], nudged off the clamp boundaries
    Tensor t = distinct_grid(rng, 6, 6, -0.45, 1.45);
    for (Eigen::Index i = 0; i < t.numel(); ++i) {
      if (std::abs(t.flat()[i]) < 0.02) t.flat()[i] += 0.05;
      if (std::abs(t.flat()[i] - 1.0) < 0.02) t.flat()[i] += 0.05;
    }
    w1("clamp01", [](Tape& tt, NodeId a) { return clamp01(tt, a); }, std::move(t));
  }
  {
    Tensor t = distinct_grid(rng, 6, 6, 0.0, 1.0);
    for (Eigen::Index i = 0; i < t.numel(); ++i)
      if (std::abs(t.flat()[i] - 0.4) < 0.02) t.flat()[i] += 0.05;
    w1("clamp_min", [](Tape& tt, NodeId a) { return clamp_min(tt, a, 0.4); }, std::move(t));
  }
  w1("sqrt", [](Tape& t, NodeId a) { return vaot::sqrt(t, a); },
     distinct_grid(rng, 5, 5, 0.1, 2.0));
  w1("recip", [](Tape& t, NodeId a) { return recip(t, a); },
     distinct_grid(rng, 5, 5, 0.5, 2.0));
  w1("pow_const", [](Tape& t, NodeId a) { return pow_const(t, a, 0.7); },
     distinct_grid(rng, 5, 5, 0.2, 2.0));
  w2("max_ew", [](Tape& t, NodeId a, NodeId b) { return max_ew(t, a, b); }, grid(6, 6),
     grid(6, 6));
  hs.run("sum", [](Tape& t, const std::vector<NodeId>& ids) { return sum(t, ids[0]); },
         {grid(5, 5)}, h, tol);
  hs.run("mean", [](Tape& t, const std::vector<NodeId>& ids) { return mean(t, ids[0]); },
         {grid(5, 5)}, h, tol);
  w1("broadcast_to",
     [](Tape& t, NodeId a) { return broadcast_to(t, a, {4, 4}); }, Tensor::scalar(0.37));
  w2("scale_by", [](Tape& t, NodeId a, NodeId s) { return scale_by(t, a, s); }, grid(4, 4),
     Tensor::scalar(0.8));
  w1("reshape", [](Tape& t, NodeId a) { return reshape(t, a, {2, 8}); }, grid(4, 4));

  // spatial ops
  {
    Tensor in = random_tensor(rng, {2, 6, 6}, -1.0, 1.0);
    Tensor k = random_tensor(rng, {3, 2, 3, 3}, -1.0, 1.0);
    hs.run("conv2d_same",
           [](Tape& t, const std::vector<NodeId>& ids) {
             return weighted(t, conv2d(t, ids[0], ids[1], 1, Padding::same()), 9001);
           },
           {in, k}, h, tol);
    hs.run("conv2d_stride2",
           [](Tape& t, const std::vector<NodeId>& ids) {
             return weighted(t, conv2d(t, ids[0], ids[1], 2, Padding::explicit_pad(1)), 9002);
           },
           {random_tensor(rng, {1, 8, 8}, -1.0, 1.0), random_tensor(rng, {2, 1, 3, 3}, -1.0, 1.0)},
           h, tol);
  }
  w1("minpool3", [](Tape& t, NodeId a) { return minpool3(t, a); }, grid(8, 8));
  w1("maxpool3", [](Tape& t, NodeId a) { return maxpool3(t, a); }, grid(8, 8));
  w1("downsample2", [](Tape& t, NodeId a) { return downsample2(t, a); }, grid(7, 7));
  w1("upsample2_nearest", [](Tape& t, NodeId a) { return upsample2_nearest(t, a); },
     random_tensor(rng, {2, 4, 4}, -1.0, 1.0));
  w1("crop2", [](Tape& t, NodeId a) { return crop2(t, a, 2, 1, 5, 4); }, grid(8, 8));
  w1("pad_replicate", [](Tape& t, NodeId a) { return pad_replicate(t, a, 2); }, grid(6, 6));
  w2("add_channel_bias", [](Tape& t, NodeId a, NodeId b) { return add_channel_bias(t, a, b); },
     random_tensor(rng, {3, 4, 4}, -1.0, 1.0), random_tensor(rng, {3}, -0.5, 0.5));
  w1("channel_sums", [](Tape& t, NodeId a) { return channel_sums(t, a); },
     random_tensor(rng, {3, 5, 5}, -1.0, 1.0));
  w1("broadcast_channels", [](Tape& t, NodeId a) { return broadcast_channels(t, a, 3, 3); },
     random_tensor(rng, {4}, -1.0, 1.0));
  w1("instance_norm", [](Tape& t, NodeId a) { return instance_norm(t, a); },
     random_tensor(rng, {2, 6, 6}, -1.0, 1.0));
  w1("channel_logsumexp", [](Tape& t, NodeId a) { return channel_logsumexp(t, a, 10.0); },
     random_tensor(rng, {4, 5, 5}, -0.3, 0.3));
  // the gradient-penalty norm path: (||a||_2 - 1)^2
  hs.run("gp_norm",
         [](Tape& t, const std::vector<NodeId>& ids) {
           NodeId norm = vaot::sqrt(t, sum(t, mul(t, ids[0], ids[0])));
           NodeId ex = add_scalar(t, norm, -1.0);
           return mul(t, ex, ex);
         },
         {random_tensor(rng, {4, 4}, -1.0, 1.0)}, h, tol);
}

void composites_suite(Harness& hs) {
  const double h = 1e-5;
  const double tol = 1e-4;
  Rng rng(202);
  Segmenter seg;

  hs.run("ssim",
         [](Tape& t, const std::vector<NodeId>& ids) { return ssim(t, ids[0], ids[1]); },
         {distinct_grid(rng, 16, 16), distinct_grid(rng, 16, 16)}, h, tol);
  hs.run("msssim_cost",
         [](Tape& t, const std::vector<NodeId>& ids) {
           return msssim_cost(t, ids[0], ids[1]);
         },
         {distinct_grid(rng, 32, 32), distinct_grid(rng, 32, 32)}, h, tol);
  hs.run("segmenter",
         [&seg](Tape& t, const std::vector<NodeId>& ids) {
           return weighted(t, seg.forward(t, ids[0]), 9003);
         },
         {distinct_grid(rng, 16, 16)}, h, tol);
  {
    Tensor x0 = distinct_grid(rng, 16, 16);
    hs.run("sga_through_segmenter",
           [&seg, x0](Tape& t, const std::vector<NodeId>& ids) {
             NodeId s_in = seg.forward(t, t.constant(x0));
             NodeId s_enh = seg.forward(t, ids[0]);
             return sga_loss(t, s_in, s_enh, 4, 1e-3);
           },
           {distinct_grid(rng, 16, 16)}, h, tol);
  }
  {
    Tensor x0 = distinct_grid(rng, 16, 16);
    EndpointSet anchors;
    anchors.points = {{8, 8}, {3, 12}};
    hs.run("evp_loss",
           [x0, anchors](Tape& t, const std::vector<NodeId>& ids) {
             return evp_loss(t, t.constant(x0), ids[0], anchors, 8);
           },
           {distinct_grid(rng, 16, 16)}, h, tol);
  }
  {
    CriticNet critic = make_critic(11);
    hs.run("critic_dx",
           [critic](Tape& t, const std::vector<NodeId>& ids) {
             BoundParams bp = bind_params(t, critic.params, false);
             return critic.forward(t, bp, ids[0]);
           },
           {distinct_grid(rng, 16, 16)}, h, tol);
  }
  {
    // msssim_cost(x, G(x)) w.r.t. a 3-parameter probe
    GeneratorNet gen = make_generator(12);
    Tensor x = distinct_grid(rng, 16, 16);
    std::vector<Tensor> pts = gen.params.tensors;
    GraphBuilder f = [gen, x](Tape& t, const std::vector<NodeId>& ids) {
      BoundParams bp;
      bp.ids = ids;
      NodeId xn = t.constant(x);
      return msssim_cost(t, xn, gen.forward(t, bp, xn));
    };
    std::vector<std::pair<int, int>> comps{{0, 3}, {6, 17}, {18, 5}};
    hs.run_probe("generator_param_probe", f, pts, comps, h, tol);
  }
}

void full_loss_suite(Harness& hs) {
  const double h = 1e-5;
  const double tol = 1e-3;
  Rng rng(303);
  Segmenter seg;
  GeneratorNet gen = make_generator(21);
  CriticNet critic = make_critic(22);
  TrainConfig cfg;
  cfg.window_l = 8;
  cfg.k = 4;
  cfg.batch = 1;

  std::vector<Grid> xs, ys;
  {
    Tensor xt = distinct_grid(rng, 16, 16);
    Tensor yt = distinct_grid(rng, 16, 16);
    Grid xg(16, 16), yg(16, 16);
    xg = xt.grid();
    yg = yt.grid();
    xs.push_back(xg);
    ys.push_back(yg);
  }
  std::vector<EndpointSet> anchors(1);
  anchors[0].points = {{8, 8}, {12, 3}};

  std::vector<Tensor> pts = gen.params.tensors;
  GraphBuilder f = [&](Tape& t, const std::vector<NodeId>& ids) {
    BoundParams gen_bp;
    gen_bp.ids = ids;
    BoundParams critic_bp = bind_params(t, critic.params, false);
    ApplyFn apply = [&gen, &gen_bp](Tape& tt, NodeId x) {
      return gen.forward(tt, gen_bp, x);
    };
    GenLossBuild lb = build_generator_loss(t, apply, critic, critic_bp, xs, ys, 2, cfg, seg,
                                           0, &anchors);
    return lb.total;
  };
  std::vector<std::pair<int, int>> comps{{0, 0}, {4, 9}, {10, 21}, {16, 2}, {20, 4}};
  hs.run_probe("full_phase2_generator_loss", f, pts, comps, h, tol);
}

}  // namespace

std::vector<SuiteResult> run_grad_suite(const std::string& which) {
  Harness hs;
  if (which == "primitives" || which == "all") primitives_suite(hs);
  if (which == "composites" || which == "all") composites_suite(hs);
  if (which == "full" || which == "all") full_loss_suite(hs);
  if (hs.results.empty()) throw ConfigError("unknown gradient suite '" + which + "'");
  return hs.results;
}

}  // namespace vaot
