#pragma once

#include <cstdint>

namespace vaot {

// Training hyperparameters. Defaults follow the VAOT recipe; step counts are
// desk-scale stand-ins for epoch counts.
struct TrainConfig {
  double lambda1 = 30.0;
  double lambda2 = 15.0;
  double lambda_s = 1.0;
  double lambda_e = 35.0;
  int k = 20;              // soft-skeleton iterations
  double epsilon = 1e-3;   // SGA numerical stabilizer
  int window_l = 64;       // EVP window side, auto-clamped to image size
  int t1_steps = 200;      // phase-1 generator steps
  int t2_steps = 200;      // phase-2 generator steps
  double lr0 = 1e-4;       // cosine-annealed, reset at each phase start
  int n_critic = 5;        // critic updates per generator update
  double lambda_gp = 10.0;
  int batch = 2;
  std::uint64_t seed = 1;
  int m_max = 128;  // anchor cap per image
  int image_size = 64;
  bool keep_identity_phase2 = false;
};

}  // namespace vaot
