#pragma once

#include <array>

#include "vaot/tape.hpp"

namespace vaot {

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double c1 = 1e-4;  // (0.01 * L)^2, L = 1
  double c2 = 9e-4;  // (0.03 * L)^2
  // canonical per-scale weights, renormalized to the scales actually used
  static constexpr std::array<double, 5> scale_weights{0.0448, 0.2856, 0.3001, 0.2363,
                                                       0.1333};
};

// Single-scale SSIM over local Gaussian statistics (valid-region convolution),
// mean over the map. Images smaller than the window fall back to one uniform
// full-image window. Differentiable w.r.t. both inputs; exactly 1 for a == b.
NodeId ssim(Tape& t, NodeId a, NodeId b, const SsimParams& p = {});

// 1 - MS-SSIM; scales auto-reduced until the coarsest level still fits the
// window. Nonnegative, exactly 0 for identical inputs.
NodeId msssim_cost(Tape& t, NodeId a, NodeId b, int scales = 5, const SsimParams& p = {});

int msssim_scales_used(int h, int w, int requested, const SsimParams& p = {});

// plain-value wrappers
double ssim_value(const Grid& a, const Grid& b, const SsimParams& p = {});
double msssim_cost_value(const Grid& a, const Grid& b, int scales = 5,
                         const SsimParams& p = {});

// 10*log10(1/MSE) capped at 99.0 dB (the cap is also returned for MSE = 0).
double psnr(const Grid& a, const Grid& b);

}  // namespace vaot
