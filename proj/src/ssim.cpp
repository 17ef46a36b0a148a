#include "vaot/ssim.hpp"

#include <cmath>

namespace vaot {

namespace {

Tensor gaussian_window(int size, double sigma) {
  Tensor k = Tensor::zeros({1, 1, size, size});
  double* d = k.data();
  int r = size / 2;
  double acc = 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double dy = y - r, dx = x - r;
      double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      d[y * size + x] = v;
      acc += v;
    }
  for (int i = 0; i < size * size; ++i) d[i] /= acc;
  return k;
}

struct LocalStats {
  NodeId mu_a, mu_b, var_a, var_b, cov;
};

LocalStats local_stats(Tape& t, NodeId a, NodeId b, const SsimParams& p) {
  const Tensor& av = t.value(a);
  int h = av.height(), w = av.width();
  bool fits = h >= p.window && w >= p.window;
  LocalStats s;
  NodeId mu_aa, mu_bb, mu_ab;
  if (fits) {
    NodeId kw = t.constant(gaussian_window(p.window, p.sigma));
    auto blur = [&](NodeId n) {
      return conv2d(t, reshape(t, n, {1, h, w}), kw, 1, Padding::valid());
    };
    s.mu_a = blur(a);
    s.mu_b = blur(b);
    mu_aa = blur(mul(t, a, a));
    mu_bb = blur(mul(t, b, b));
    mu_ab = blur(mul(t, a, b));
  } else {
    // image smaller than the window: one uniform full-image window
    s.mu_a = mean(t, a);
    s.mu_b = mean(t, b);
    mu_aa = mean(t, mul(t, a, a));
    mu_bb = mean(t, mul(t, b, b));
    mu_ab = mean(t, mul(t, a, b));
  }
  s.var_a = sub(t, mu_aa, mul(t, s.mu_a, s.mu_a));
  s.var_b = sub(t, mu_bb, mul(t, s.mu_b, s.mu_b));
  s.cov = sub(t, mu_ab, mul(t, s.mu_a, s.mu_b));
  return s;
}

NodeId cs_map(Tape& t, const LocalStats& s, const SsimParams& p) {
  NodeId num = add_scalar(t, scalar_mul(t, s.cov, 2.0), p.c2);
  NodeId den = add_scalar(t, add(t, s.var_a, s.var_b), p.c2);
  return div(t, num, den);
}

}  // namespace

NodeId ssim(Tape& t, NodeId a, NodeId b, const SsimParams& p) {
  check(t.value(a).rank() == 2 && t.value(b).rank() == 2, "ssim: inputs must be {H,W}");
  check(t.value(a).same_shape(t.value(b)), "ssim: shape mismatch");
  LocalStats s = local_stats(t, a, b, p);
  NodeId lum_num = add_scalar(t, scalar_mul(t, mul(t, s.mu_a, s.mu_b), 2.0), p.c1);
  NodeId lum_den =
      add_scalar(t, add(t, mul(t, s.mu_a, s.mu_a), mul(t, s.mu_b, s.mu_b)), p.c1);
  NodeId map = mul(t, div(t, lum_num, lum_den), cs_map(t, s, p));
  return mean(t, map);
}

int msssim_scales_used(int h, int w, int requested, const SsimParams& p) {
  int scales = std::min(requested, 5);
  if (scales < 1) scales = 1;
  while (scales > 1 && (std::min(h, w) >> (scales - 1)) < p.window) --scales;
  return scales;
}

NodeId msssim_cost(Tape& t, NodeId a, NodeId b, int scales, const SsimParams& p) {
  check(t.value(a).rank() == 2 && t.value(a).same_shape(t.value(b)),
        "msssim_cost: inputs must be same-shape {H,W}");
  int h = t.value(a).height(), w = t.value(a).width();
  int m = msssim_scales_used(h, w, scales, p);
  double wsum = 0.0;
  for (int i = 0; i < m; ++i) wsum += SsimParams::scale_weights[i];
  NodeId ms = t.constant(1.0);
  NodeId ca = a, cb = b;
  for (int i = 0; i < m; ++i) {
    double wi = SsimParams::scale_weights[i] / wsum;
    NodeId term;
    if (i + 1 < m) {
      LocalStats s = local_stats(t, ca, cb, p);
      term = mean(t, cs_map(t, s, p));
      ca = downsample2(t, ca);
      cb = downsample2(t, cb);
    } else {
      term = ssim(t, ca, cb, p);
    }
    ms = mul(t, ms, pow_const(t, clamp_min(t, term, 1e-6), wi));
  }
  return add_scalar(t, scalar_mul(t, ms, -1.0), 1.0);
}

double ssim_value(const Grid& a, const Grid& b, const SsimParams& p) {
  Tape t;
  return t.value(ssim(t, t.constant(Tensor::from_grid(a)), t.constant(Tensor::from_grid(b)), p))
      .scalar_value();
}

double msssim_cost_value(const Grid& a, const Grid& b, int scales, const SsimParams& p) {
  Tape t;
  return t
      .value(msssim_cost(t, t.constant(Tensor::from_grid(a)), t.constant(Tensor::from_grid(b)),
                         scales, p))
      .scalar_value();
}

double psnr(const Grid& a, const Grid& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "psnr: shape mismatch");
  double mse = (a - b).square().sum() / static_cast<double>(a.size());
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

}  // namespace vaot
