#include "vaot/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "vaot/error.hpp"
#include "vaot/io.hpp"
#include "vaot/rng.hpp"
#include "vaot/ssim.hpp"

namespace vaot {

double disk_radius(int h, int w) { return 0.47 * std::min(h, w); }

std::pair<double, double> disk_center(int h, int w) {
  return {(h - 1) / 2.0, (w - 1) / 2.0};
}

std::uint64_t sample_seed(std::uint64_t master, const char* role, int index) {
  std::uint64_t tag = 1469598103934665603ULL;  // FNV-1a over the role string
  for (const char* p = role; *p; ++p) tag = (tag ^ static_cast<unsigned char>(*p)) * 1099511628211ULL;
  std::uint64_t sm = master ^ tag;
  std::uint64_t a = splitmix64(sm);
  sm = a + static_cast<std::uint64_t>(index) * 0x9e3779b97f4a7c15ULL;
  return splitmix64(sm);
}

namespace {

struct WalkSegment {
  double y, x, dy, dx, width, budget;
  int depth;
};

void stamp(Grid& mask, double py, double px, double width, double cy, double cx,
           double rmax) {
  double radius = std::max(0.5, width / 2.0);
  int r0 = std::max(0, static_cast<int>(std::floor(py - radius)));
  int r1 = std::min(static_cast<int>(mask.rows()) - 1, static_cast<int>(std::ceil(py + radius)));
  int c0 = std::max(0, static_cast<int>(std::floor(px - radius)));
  int c1 = std::min(static_cast<int>(mask.cols()) - 1, static_cast<int>(std::ceil(px + radius)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      double d2 = (r - py) * (r - py) + (c - px) * (c - px);
      if (d2 > radius * radius) continue;
      double dd = std::hypot(r - cy, c - cx);
      if (dd <= rmax) mask(r, c) = 1.0;
    }
}

}  // namespace

std::pair<Grid, Grid> gen_clean(std::uint64_t seed, int h, int w) {
  check(h >= 32 && w >= 32, "gen_clean: H and W must be >= 32");
  Rng rng = Rng::stream(seed, 0x7068616e746f6dULL);  // "phantom"
  auto [cy, cx] = disk_center(h, w);
  double R = disk_radius(h, w);

  Grid img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double d = std::hypot(y - cy, x - cx);
      img(y, x) = d <= R ? 0.80 * (1.0 - 0.12 * (d / R) * (d / R)) : 0.05;
    }

  Grid mask = Grid::Zero(h, w);
  double rmax = 0.93 * R;
  int n_trees = rng.uniform_int(2, 4);
  for (int tree = 0; tree < n_trees; ++tree) {
    double theta = rng.uniform(0.0, 6.283185307179586);
    WalkSegment root;
    root.y = cy + 0.88 * R * std::sin(theta);
    root.x = cx + 0.88 * R * std::cos(theta);
    double inward = std::atan2(cy - root.y, cx - root.x) + rng.uniform(-0.5, 0.5);
    root.dy = std::sin(inward);
    root.dx = std::cos(inward);
    root.width = 3.0;
    root.budget = rng.uniform(0.7, 1.05) * R;
    root.depth = 0;
    std::vector<WalkSegment> stack{root};
    int segments = 1;
    while (!stack.empty()) {
      WalkSegment s = stack.back();
      stack.pop_back();
      double total = s.budget;
      for (int t = 0; t < static_cast<int>(total); ++t) {
        stamp(mask, s.y, s.x, s.width, cy, cx, rmax);
        double jitter = 0.15 * rng.normal();
        double ang = std::atan2(s.dy, s.dx) + jitter;
        s.dy = std::sin(ang);
        s.dx = std::cos(ang);
        s.y += s.dy;
        s.x += s.dx;
        s.width = std::max(1.0, 3.0 * (1.0 - static_cast<double>(t) / total));
        if (std::hypot(s.y - cy, s.x - cx) > rmax) break;
        if (s.depth < 2 && segments < 5 && t > 6 && rng.uniform() < 0.15) {
          WalkSegment b = s;
          double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
          double bang = ang + side * rng.uniform(0.35, 0.75);
          b.dy = std::sin(bang);
          b.dx = std::cos(bang);
          b.width = std::max(1.0, s.width * 0.75);
          b.budget = (total - t) * 0.55;
          b.depth = s.depth + 1;
          stack.push_back(b);
          ++segments;
        }
      }
    }
  }

  // vessels are dark: local background minus a fixed drop
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask(y, x) == 1.0) img(y, x) = std::max(0.0, img(y, x) - 0.35);
  return {std::move(img), std::move(mask)};
}

namespace {

Grid gaussian_blur_renorm(const Grid& in, double sigma) {
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double acc = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    acc += k[i + radius];
  }
  for (double& v : k) v /= acc;
  int h = static_cast<int>(in.rows()), w = static_cast<int>(in.cols());
  Grid tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0, wsum = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        int xx = x + i;
        if (xx < 0 || xx >= w) continue;
        s += k[i + radius] * in(y, xx);
        wsum += k[i + radius];
      }
      tmp(y, x) = s / wsum;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0, wsum = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        int yy = y + i;
        if (yy < 0 || yy >= h) continue;
        s += k[i + radius] * tmp(yy, x);
        wsum += k[i + radius];
      }
      out(y, x) = s / wsum;
    }
  return out;
}

}  // namespace

Grid degrade(const Grid& clean, const DegradeParams& p, std::uint64_t seed) {
  check(clean.minCoeff() >= 0.0 && clean.maxCoeff() <= 1.0, "degrade: input must be in [0,1]");
  Rng rng = Rng::stream(seed, 0x64656772ULL);  // "degr"
  int h = static_cast<int>(clean.rows()), w = static_cast<int>(clean.cols());
  auto [cy, cx] = disk_center(h, w);
  double R = disk_radius(h, w);
  Grid out = clean;

  // multiplicative illumination: planar gradient plus a radial component
  if (!(p.illum_min == 1.0 && p.illum_max == 1.0)) {
    double phi = rng.uniform(0.0, 6.283185307179586);
    double planar = rng.uniform(0.3, 0.9);
    double radial = rng.uniform(-0.35, 0.25);
    double ux = std::cos(phi), uy = std::sin(phi);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double d = std::hypot(y - cy, x - cx);
        double raw = 0.55 + planar * (ux * (x - cx) / w + uy * (y - cy) / h) +
                     radial * (1.0 - (d / R) * (d / R));
        raw = std::clamp(raw, 0.0, 1.0);
        out(y, x) *= p.illum_min + (p.illum_max - p.illum_min) * raw;
      }
  }

  // additive Gaussian spot blobs
  int n_spots = p.spot_count_max > 0 ? rng.uniform_int(p.spot_count_min, p.spot_count_max) : 0;
  for (int s = 0; s < n_spots; ++s) {
    double theta = rng.uniform(0.0, 6.283185307179586);
    double rad = R * std::sqrt(rng.uniform());
    double sy = cy + rad * std::sin(theta);
    double sx = cx + rad * std::cos(theta);
    double rho = rng.uniform(p.spot_radius_min, p.spot_radius_max);
    double amp = rng.uniform(p.spot_intensity_min, p.spot_intensity_max);
    if (rng.uniform() < 0.5) amp = -amp;
    double s2 = (rho / 2.0) * (rho / 2.0);
    int r0 = std::max(0, static_cast<int>(sy - 3 * rho)), r1 = std::min(h - 1, static_cast<int>(sy + 3 * rho));
    int c0 = std::max(0, static_cast<int>(sx - 3 * rho)), c1 = std::min(w - 1, static_cast<int>(sx + 3 * rho));
    for (int y = r0; y <= r1; ++y)
      for (int x = c0; x <= c1; ++x) {
        double d2 = (y - sy) * (y - sy) + (x - sx) * (x - sx);
        out(y, x) += amp * std::exp(-d2 / (2.0 * s2));
      }
  }

  double sigma = rng.uniform(p.blur_sigma_min, p.blur_sigma_max);
  if (sigma > 1e-9) out = gaussian_blur_renorm(out, sigma);

  return out.cwiseMax(0.0).cwiseMin(1.0);
}

SyntheticSample make_sample(std::uint64_t seed, int h, int w, const DegradeParams& params) {
  SyntheticSample s;
  s.seed = seed;
  auto [clean, mask] = gen_clean(seed, h, w);
  s.clean = std::move(clean);
  s.mask = std::move(mask);
  s.degraded = degrade(s.clean, params, seed);
  return s;
}

namespace {

// storage is f32; the recorded SSIM must match what a loader recomputes
Grid f32_quantize(const Grid& g) {
  Grid out = g;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out.data()[i] = static_cast<double>(static_cast<float>(out.data()[i]));
  return out;
}

std::string index_name(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.%s", prefix, i, ext);
  return buf;
}

void write_image_pair(const std::filesystem::path& dir, const std::string& stem,
                      const Grid& g) {
  write_raw_tensor(dir / (stem + ".vt"), Tensor::from_grid(g));
  write_pgm(dir / (stem + ".pgm"), g);
}

}  // namespace

std::filesystem::path make_dataset(int n_low, int n_high, int n_eval, std::uint64_t seed,
                                   int h, int w, const std::filesystem::path& out_dir,
                                   const DegradeParams& params) {
  check(n_low >= 1 && n_high >= 1, "make_dataset: n_low and n_high must be >= 1");
  check(n_eval >= 0, "make_dataset: n_eval must be >= 0");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory: " + out_dir.string());

  std::vector<ManifestRow> rows;
  for (int i = 0; i < n_low; ++i) {
    std::uint64_t s = sample_seed(seed, "low", i);
    auto [clean, mask] = gen_clean(s, h, w);
    Grid deg = degrade(clean, params, sample_seed(seed, "low-degrade", i));
    std::string stem = index_name("low", i, "");
    stem.pop_back();  // drop trailing '.'
    write_image_pair(out_dir, stem, deg);
    rows.push_back({"low", s, stem + ".vt"});
  }
  for (int i = 0; i < n_high; ++i) {
    std::uint64_t s = sample_seed(seed, "high", i);
    auto [clean, mask] = gen_clean(s, h, w);
    std::string stem = index_name("high", i, "");
    stem.pop_back();
    write_image_pair(out_dir, stem, clean);
    rows.push_back({"high", s, stem + ".vt"});
  }
  for (int i = 0; i < n_eval; ++i) {
    std::uint64_t s = sample_seed(seed, "eval", i);
    auto [clean, mask] = gen_clean(s, h, w);
    Grid deg = degrade(clean, params, sample_seed(seed, "eval-degrade", i));
    std::string cs = index_name("eval_clean", i, ""), ds = index_name("eval_deg", i, ""),
                ms = index_name("eval_mask", i, "");
    cs.pop_back();
    ds.pop_back();
    ms.pop_back();
    write_image_pair(out_dir, cs, clean);
    write_image_pair(out_dir, ds, deg);
    write_image_pair(out_dir, ms, mask);
    rows.push_back({"eval_clean", s, cs + ".vt"});
    rows.push_back({"eval_degraded", s, ds + ".vt"});
    rows.push_back({"eval_mask", s, ms + ".vt"});
    rows.push_back({"eval_ssim", s, format_double(ssim_value(f32_quantize(clean), f32_quantize(deg)))});
  }
  std::filesystem::path manifest = out_dir / "manifest.tsv";
  write_manifest(manifest, rows);
  return manifest;
}

Dataset load_dataset(const std::filesystem::path& manifest) {
  std::filesystem::path dir = manifest.parent_path();
  Dataset ds;
  std::map<std::uint64_t, EvalTriple> triples;
  for (const ManifestRow& r : read_manifest(manifest)) {
    if (r.role == "low")
      ds.low.push_back(tensor_to_grid(read_raw_tensor(dir / r.value)));
    else if (r.role == "high")
      ds.high.push_back(tensor_to_grid(read_raw_tensor(dir / r.value)));
    else if (r.role == "eval_clean")
      triples[r.seed].clean = tensor_to_grid(read_raw_tensor(dir / r.value));
    else if (r.role == "eval_degraded")
      triples[r.seed].degraded = tensor_to_grid(read_raw_tensor(dir / r.value));
    else if (r.role == "eval_mask")
      triples[r.seed].mask = tensor_to_grid(read_raw_tensor(dir / r.value));
    else if (r.role == "eval_ssim")
      triples[r.seed].ssim_recorded = std::stod(r.value);
    else
      throw IoError("manifest: unknown role '" + r.role + "'");
    if (r.role.rfind("eval_", 0) == 0) triples[r.seed].seed = r.seed;
  }
  for (auto& [s, t] : triples) {
    check(t.clean.size() > 0 && t.degraded.size() > 0 && t.mask.size() > 0,
          "manifest: incomplete eval triple");
    ds.eval.push_back(std::move(t));
  }
  if (ds.low.empty() || ds.high.empty())
    throw IoError("manifest: dataset needs at least one low and one high image");
  return ds;
}

}  // namespace vaot
