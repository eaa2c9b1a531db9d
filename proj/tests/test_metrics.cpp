#include <doctest.h>

#include <cmath>

#include "udig/metrics.hpp"
#include "udig/rng.hpp"

using namespace udig;

namespace {

Tensor random_image(std::size_t h, std::size_t w, std::uint64_t seed,
                    double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t({h, w});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// direct-formula re-computation, interior uniform windows, independent of the
// library implementation
double ssim_oracle(const Tensor& x, const Tensor& ref, const MetricConfig& cfg) {
  const std::size_t H = x.dim(0), W = x.dim(1);
  const std::size_t win = static_cast<std::size_t>(cfg.ssim_window);
  double range = cfg.data_range;
  if (range <= 0) {
    range = 0;
    for (std::size_t i = 0; i < ref.numel(); ++i)
      range = std::max(range, ref[i]);
  }
  const double c1 = (cfg.ssim_k1 * range) * (cfg.ssim_k1 * range);
  const double c2 = (cfg.ssim_k2 * range) * (cfg.ssim_k2 * range);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + win <= H; ++r) {
    for (std::size_t c = 0; c + win <= W; ++c) {
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < win; ++i)
        for (std::size_t j = 0; j < win; ++j) {
          mx += x.at(r + i, c + j);
          my += ref.at(r + i, c + j);
        }
      const double n = static_cast<double>(win * win);
      mx /= n;
      my /= n;
      double vx = 0, vy = 0, cov = 0;
      for (std::size_t i = 0; i < win; ++i)
        for (std::size_t j = 0; j < win; ++j) {
          const double dx = x.at(r + i, c + j) - mx;
          const double dy = ref.at(r + i, c + j) - my;
          vx += dx * dx;
          vy += dy * dy;
          cov += dx * dy;
        }
      vx /= n;
      vy /= n;
      cov /= n;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

} // namespace

TEST_CASE("psnr: identical images hit the cap") {
  const Tensor x = random_image(16, 16, 1);
  MetricConfig cfg;
  CHECK(psnr(x, x, cfg) == cfg.psnr_cap_db);
}

TEST_CASE("psnr: uniform 0.1 offset at unit range gives exactly 20 dB") {
  const Tensor ref = random_image(32, 32, 2);
  Tensor x = ref;
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] += 0.1;
  MetricConfig cfg;
  cfg.data_range = 1.0;
  CHECK(psnr(x, ref, cfg) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("psnr: matches a direct-formula recomputation on random pairs") {
  for (std::uint64_t seed : {10u, 11u, 12u}) {
    const Tensor ref = random_image(24, 24, seed);
    const Tensor x = random_image(24, 24, seed + 100);
    MetricConfig cfg; // data_range defaults to max(ref)
    double range = 0, mse = 0;
    for (std::size_t i = 0; i < ref.numel(); ++i) {
      range = std::max(range, ref[i]);
      mse += (x[i] - ref[i]) * (x[i] - ref[i]);
    }
    mse /= static_cast<double>(ref.numel());
    const double expected = 10.0 * std::log10(range * range / mse);
    CHECK(psnr(x, ref, cfg) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("psnr: symmetric when data_range is fixed") {
  const Tensor a = random_image(20, 20, 5);
  const Tensor b = random_image(20, 20, 6);
  MetricConfig cfg;
  cfg.data_range = 1.0;
  CHECK(psnr(a, b, cfg) == doctest::Approx(psnr(b, a, cfg)).epsilon(1e-12));
}

TEST_CASE("psnr: decreases as added noise grows") {
  const Tensor ref = random_image(64, 64, 7);
  MetricConfig cfg;
  cfg.data_range = 1.0;
  Rng rng(99);
  double prev = psnr(ref, ref, cfg);
  for (double sigma : {0.01, 0.05, 0.2}) {
    Tensor x = ref;
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] += sigma * rng.normal();
    const double v = psnr(x, ref, cfg);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("ssim: identical images score exactly 1") {
  const Tensor x = random_image(16, 16, 3);
  MetricConfig cfg;
  CHECK(ssim(x, x, cfg) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim: constant images follow the closed-form luminance ratio") {
  Tensor a({16, 16}), b({16, 16});
  const double va = 0.8, vb = 0.5;
  a.fill(va);
  b.fill(vb);
  MetricConfig cfg;
  cfg.data_range = 1.0;
  const double c1 = (cfg.ssim_k1 * cfg.data_range) * (cfg.ssim_k1 * cfg.data_range);
  const double expected = (2 * va * vb + c1) / (va * va + vb * vb + c1);
  CHECK(ssim(a, b, cfg) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ssim: matches an independent windowed recomputation") {
  const Tensor ref = random_image(14, 14, 21);
  Tensor x = ref;
  Rng rng(22);
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] += 0.05 * rng.normal();
  MetricConfig cfg;
  cfg.data_range = 1.0;
  CHECK(ssim(x, ref, cfg) == doctest::Approx(ssim_oracle(x, ref, cfg)).epsilon(1e-12));
}

TEST_CASE("ssim: symmetric and bounded by 1") {
  MetricConfig cfg;
  cfg.data_range = 1.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor a = random_image(16, 16, 30 + seed);
    const Tensor b = random_image(16, 16, 40 + seed);
    const double s = ssim(a, b, cfg);
    CHECK(s <= 1.0 + 1e-12);
    CHECK(s == doctest::Approx(ssim(b, a, cfg)).epsilon(1e-12));
    CHECK(ssim(a, a, cfg) > s);
  }
}

TEST_CASE("metrics reject mismatched shapes and undersized images") {
  MetricConfig cfg;
  const Tensor a = random_image(16, 16, 1);
  const Tensor b = random_image(8, 8, 1);
  CHECK_THROWS_AS(psnr(a, b, cfg), Error);
  CHECK_THROWS_AS(ssim(a, b, cfg), Error);
  const Tensor tiny = random_image(4, 4, 1);
  CHECK_THROWS_AS(ssim(tiny, tiny, cfg), Error);
}

TEST_CASE("magnitude: combines 2-channel images with hypot") {
  Tensor x({2, 3, 3});
  Rng rng(8);
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();
  const Tensor m = magnitude(x);
  REQUIRE(m.shape() == std::vector<std::size_t>({3, 3}));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(m.at(r, c) ==
            doctest::Approx(std::hypot(x.at(0, r, c), x.at(1, r, c))).epsilon(1e-12));
}

TEST_CASE("evaluate_reconstruction: 2-channel pairs are scored on magnitudes") {
  Rng rng(9);
  Tensor ref({2, 16, 16}), x({2, 16, 16});
  for (std::size_t i = 0; i < ref.numel(); ++i) {
    ref[i] = rng.uniform();
    x[i] = ref[i] + 0.02 * rng.normal();
  }
  const auto scores = evaluate_reconstruction(x, ref);
  const Tensor mx = magnitude(x), mref = magnitude(ref);
  MetricConfig cfg; // data_range = max of reference magnitude
  CHECK(scores.psnr_db == doctest::Approx(psnr(mx, mref, cfg)).epsilon(1e-12));
  CHECK(scores.ssim == doctest::Approx(ssim(mx, mref, cfg)).epsilon(1e-12));
}
