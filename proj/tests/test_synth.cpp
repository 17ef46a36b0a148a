#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "vaot/io.hpp"
#include "vaot/ssim.hpp"
#include "vaot/synth.hpp"

using namespace vaot;
using namespace vaot::testing;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("vaot_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("gen_clean is bit-identical per seed") {
  auto [img1, mask1] = gen_clean(77, 64, 64);
  auto [img2, mask2] = gen_clean(77, 64, 64);
  CHECK((img1 == img2).all());
  CHECK((mask1 == mask2).all());
  auto [img3, mask3] = gen_clean(78, 64, 64);
  CHECK((img1 != img3).any());
}

TEST_CASE("phantom mask density and geometry over a 100-seed sweep") {
  double disk_area = 3.141592653589793 * disk_radius(64, 64) * disk_radius(64, 64);
  auto [cy, cx] = disk_center(64, 64);
  double R = disk_radius(64, 64);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto [img, mask] = gen_clean(seed, 64, 64);
    double frac = mask.sum() / disk_area;
    CHECK(frac >= 0.01);
    CHECK(frac <= 0.15);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        if (mask(y, x) == 1.0) {
          CHECK(std::hypot(y - cy, x - cx) <= R);
          // vessels are darker than the local background would have been
          CHECK(img(y, x) < 0.55);
        }
        CHECK((mask(y, x) == 0.0 || mask(y, x) == 1.0));
      }
    CHECK(img.minCoeff() >= 0.0);
    CHECK(img.maxCoeff() <= 1.0);
  }
}

TEST_CASE("degrade: identity configuration returns the input exactly") {
  auto [clean, mask] = gen_clean(5, 64, 64);
  Grid out = degrade(clean, DegradeParams::none(), 123);
  CHECK((out == clean).all());
}

TEST_CASE("degrade: blur of an interior impulse equals the separable kernel") {
  Grid impulse = Grid::Zero(33, 33);
  impulse(16, 16) = 0.5;
  DegradeParams p = DegradeParams::none();
  p.blur_sigma_min = p.blur_sigma_max = 1.0;
  Grid out = degrade(impulse, p, 9);
  int radius = 3;  // ceil(3 * sigma)
  std::vector<double> k(2 * radius + 1);
  double acc = 0;
  for (int i = -radius; i <= radius; ++i) acc += (k[i + radius] = std::exp(-0.5 * i * i));
  for (double& v : k) v /= acc;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      CHECK(out(16 + dy, 16 + dx) ==
            doctest::Approx(0.5 * k[dy + radius] * k[dx + radius]).epsilon(1e-12));
  CHECK(out(16, 16 + radius + 1) == 0.0);
}

TEST_CASE("degrade: the full pipeline is a non-trivial perturbation") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto [clean, mask] = gen_clean(seed, 64, 64);
    Grid deg = degrade(clean, DegradeParams{}, seed + 1000);
    double s = ssim_value(clean, deg);
    CHECK(s < 0.95);
    CHECK(s > 0.1);
    CHECK(deg.minCoeff() >= 0.0);
    CHECK(deg.maxCoeff() <= 1.0);
  }
}

TEST_CASE("make_dataset: counts, disjoint seed streams, reproducibility") {
  auto dir = temp_dir("dataset");
  auto manifest = make_dataset(8, 8, 4, 7, 64, 64, dir);
  auto rows = read_manifest(manifest);

  int n_low = 0, n_high = 0, n_eval_rows = 0;
  std::set<std::uint64_t> low_seeds, high_seeds;
  for (const auto& r : rows) {
    if (r.role == "low") {
      ++n_low;
      low_seeds.insert(r.seed);
    } else if (r.role == "high") {
      ++n_high;
      high_seeds.insert(r.seed);
    } else {
      ++n_eval_rows;
    }
  }
  CHECK(n_low == 8);
  CHECK(n_high == 8);
  CHECK(n_eval_rows == 4 * 4);  // clean, degraded, mask, ssim per triple
  for (auto s : low_seeds) CHECK(high_seeds.count(s) == 0);

  // 16 training + 12 eval images, each as .vt and .pgm
  int vt = 0, pgm = 0;
  for (auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".vt") ++vt;
    if (e.path().extension() == ".pgm") ++pgm;
  }
  CHECK(vt == 28);
  CHECK(pgm == 28);

  // rerun into a second directory: identical manifest and image bytes
  auto dir2 = temp_dir("dataset2");
  auto manifest2 = make_dataset(8, 8, 4, 7, 64, 64, dir2);
  CHECK(slurp(manifest) == slurp(manifest2));
  CHECK(slurp(dir / "low_000.vt") == slurp(dir2 / "low_000.vt"));
  CHECK(slurp(dir / "eval_mask_003.vt") == slurp(dir2 / "eval_mask_003.vt"));

  // recorded eval SSIM matches recomputation from the stored triples
  Dataset ds = load_dataset(manifest);
  REQUIRE(ds.eval.size() == 4);
  for (const auto& triple : ds.eval)
    CHECK(std::abs(ssim_value(triple.clean, triple.degraded) - triple.ssim_recorded) < 1e-12);

  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("degradation keeps the ground-truth mask geometry") {
  SyntheticSample s = make_sample(3, 64, 64);
  auto [clean, mask] = gen_clean(3, 64, 64);
  CHECK((s.mask == mask).all());
}
