#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "vaot/tensor.hpp"

namespace vaot {

// Degradation recipe: multiplicative illumination field, additive Gaussian
// spot blobs, then Gaussian blur; output clamped to [0,1].
struct DegradeParams {
  int spot_count_min = 1;
  int spot_count_max = 4;
  double spot_radius_min = 2.0;
  double spot_radius_max = 6.0;
  double spot_intensity_min = 0.1;
  double spot_intensity_max = 0.3;
  double illum_min = 0.6;  // multiplicative field range
  double illum_max = 1.0;
  double blur_sigma_min = 0.5;
  double blur_sigma_max = 1.5;

  static DegradeParams none() {  // identity configuration
    DegradeParams p;
    p.spot_count_min = p.spot_count_max = 0;
    p.illum_min = p.illum_max = 1.0;
    p.blur_sigma_min = p.blur_sigma_max = 0.0;
    return p;
  }
};

struct SyntheticSample {
  Grid clean;
  Grid degraded;
  Grid mask;  // ground-truth vessel support, exactly {0,1}
  std::uint64_t seed = 0;
};

// Phantom geometry shared with tests.
double disk_radius(int h, int w);
std::pair<double, double> disk_center(int h, int w);

// Bright disk on a dark field with 2-4 dark vessel trees grown by seeded
// random walks; returns (image, mask). Bit-identical regeneration from seed.
std::pair<Grid, Grid> gen_clean(std::uint64_t seed, int h, int w);

Grid degrade(const Grid& clean, const DegradeParams& params, std::uint64_t seed);

SyntheticSample make_sample(std::uint64_t seed, int h, int w,
                            const DegradeParams& params = {});

struct EvalTriple {
  Grid clean;
  Grid degraded;
  Grid mask;
  std::uint64_t seed = 0;
  double ssim_recorded = 0.0;
};

struct Dataset {
  std::vector<Grid> low;   // degraded training images (unpaired stream)
  std::vector<Grid> high;  // clean training images (disjoint stream)
  std::vector<EvalTriple> eval;
};

// Writes n_low degraded + n_high clean training images (disjoint seed
// streams, unpaired by construction) plus n_eval held-out triples; every
// image is stored as PGM and raw tensor side by side. Returns the manifest
// path (out_dir/manifest.tsv).
std::filesystem::path make_dataset(int n_low, int n_high, int n_eval, std::uint64_t seed,
                                   int h, int w, const std::filesystem::path& out_dir,
                                   const DegradeParams& params = {});

Dataset load_dataset(const std::filesystem::path& manifest);

// Per-role phantom seed streams (exposed so tests can assert disjointness).
std::uint64_t sample_seed(std::uint64_t master, const char* role, int index);

}  // namespace vaot
