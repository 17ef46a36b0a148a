#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "vaot/grad_check.hpp"
#include "vaot/ssim.hpp"
#include "vaot/suites.hpp"

using namespace vaot;
using namespace vaot::testing;

namespace {

// independent direct-formula SSIM (valid-region Gaussian window)
double ssim_oracle(const Grid& a, const Grid& b) {
  const int win = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  int h = static_cast<int>(a.rows()), w = static_cast<int>(a.cols());
  Grid kern(win, win);
  double acc = 0.0;
  for (int y = 0; y < win; ++y)
    for (int x = 0; x < win; ++x) {
      double dy = y - 5, dx = x - 5;
      kern(y, x) = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
      acc += kern(y, x);
    }
  kern /= acc;
  double total = 0.0;
  int count = 0;
  for (int oy = 0; oy + win <= h; ++oy)
    for (int ox = 0; ox + win <= w; ++ox) {
      double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
      for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
          double va = a(oy + y, ox + x), vb = b(oy + y, ox + x);
          ma += kern(y, x) * va;
          mb += kern(y, x) * vb;
          maa += kern(y, x) * va * va;
          mbb += kern(y, x) * vb * vb;
          mab += kern(y, x) * va * vb;
        }
      double sa = maa - ma * ma, sb = mbb - mb * mb, sab = mab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * sab + c2)) /
               ((ma * ma + mb * mb + c1) * (sa + sb + c2));
      ++count;
    }
  return total / count;
}

}  // namespace

TEST_CASE("ssim(a,a) is exactly 1") {
  Rng rng(61);
  Grid a = random_grid(rng, 24, 24);
  CHECK(ssim_value(a, a) == 1.0);
}

TEST_CASE("ssim of constant 0 vs constant 1 matches the closed form") {
  double got = ssim_value(const_grid(16, 16, 0.0), const_grid(16, 16, 1.0));
  CHECK(got == doctest::Approx(1e-4 / 1.0001).epsilon(1e-9));
}

TEST_CASE("ssim matches an independent formula implementation") {
  Rng rng(67);
  for (int rep = 0; rep < 3; ++rep) {
    Grid a = random_grid(rng, 20, 20), b = random_grid(rng, 20, 20);
    CHECK(std::abs(ssim_value(a, b) - ssim_oracle(a, b)) < 1e-10);
  }
}

TEST_CASE("ssim symmetry and bounded-above-by-one") {
  Rng rng(71);
  for (int rep = 0; rep < 5; ++rep) {
    Grid a = random_grid(rng, 16, 16), b = random_grid(rng, 16, 16);
    CHECK(std::abs(ssim_value(a, b) - ssim_value(b, a)) < 1e-12);
    CHECK(ssim_value(a, b) < 1.0 - 1e-9);
  }
}

TEST_CASE("small images fall back to a full-image window") {
  Rng rng(73);
  Grid a = random_grid(rng, 8, 8), b = random_grid(rng, 8, 8);
  double s = ssim_value(a, b);
  CHECK(std::isfinite(s));
  CHECK(ssim_value(a, a) == 1.0);
}

TEST_CASE("msssim_cost: zero on identical, scale auto-reduction, nonnegative") {
  Rng rng(79);
  Grid a = random_grid(rng, 64, 64);
  CHECK(msssim_cost_value(a, a) == 0.0);
  CHECK(msssim_scales_used(64, 64, 5) == 3);  // 64 -> 32 -> 16 >= 11
  CHECK(msssim_scales_used(256, 256, 5) == 5);
  CHECK(msssim_scales_used(16, 16, 5) == 1);
  for (int rep = 0; rep < 4; ++rep) {
    Grid x = random_grid(rng, 32, 32), y = random_grid(rng, 32, 32);
    double c = msssim_cost_value(x, y);
    CHECK(c >= 0.0);
    CHECK(c > 1e-9);  // not identical
  }
}

TEST_CASE("msssim_cost gradient matches finite differences") {
  Rng rng(83);
  auto rep = grad_check_multi(
      [](Tape& t, const std::vector<NodeId>& ids) { return msssim_cost(t, ids[0], ids[1]); },
      {distinct_grid(rng, 32, 32), distinct_grid(rng, 32, 32)}, 1e-5, 1e-5);
  CHECK(rep.pass);
}

TEST_CASE("psnr: cap, closed form, formula oracle, monotonicity") {
  Rng rng(89);
  Grid a = random_grid(rng, 16, 16);
  CHECK(psnr(a, a) == 99.0);

  Grid b = a;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) b(y, x) = a(y, x) + 0.1;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));

  Grid c = random_grid(rng, 16, 16);
  double mse = (a - c).square().sum() / 256.0;
  CHECK(psnr(a, c) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-12));

  double prev = 1e9;
  for (double amp : {0.01, 0.05, 0.1, 0.2}) {
    Grid noisy = a;
    Rng nr(91);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) noisy(y, x) = a(y, x) + amp * (nr.uniform() - 0.5);
    double p = psnr(a, noisy);
    CHECK(p < prev);
    prev = p;
  }
}
