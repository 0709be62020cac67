#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "synf/metrics.hpp"
#include "synf/rng.hpp"

using namespace synf;

namespace {
Image uniform_image(int w, int h, float r, float g, float b) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.set_pixel(x, y, {r, g, b});
  return img;
}

Image random_image(int w, int h, uint64_t seed) {
  Image img(w, h);
  Rng rng(seed);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}
}  // namespace

TEST_CASE("psnr") {
  SECTION("identical images are flagged infinite") {
    const Image a = random_image(16, 16, 1);
    const PsnrResult p = psnr(a, a);
    CHECK(p.infinite);
  }
  SECTION("uniform 0.1 offset gives exactly 20 dB") {
    const Image a = uniform_image(16, 16, 0.5f, 0.5f, 0.5f);
    const Image b = uniform_image(16, 16, 0.6f, 0.6f, 0.6f);
    const PsnrResult p = psnr(a, b);
    CHECK_FALSE(p.infinite);
    CHECK(p.db == Catch::Approx(20.0).margin(1e-5));
  }
  SECTION("symmetric") {
    const Image a = random_image(12, 9, 2);
    const Image b = random_image(12, 9, 3);
    CHECK(psnr(a, b).db == Catch::Approx(psnr(b, a).db).margin(1e-12));
  }
  SECTION("shape mismatch is rejected") {
    CHECK_THROWS_AS(psnr(random_image(8, 8, 1), random_image(8, 9, 1)),
                    DataError);
  }
}

TEST_CASE("ssim") {
  SECTION("identical images score exactly 1") {
    const Image a = random_image(20, 20, 5);
    CHECK(ssim(a, a) == Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("contrast reversal scores negative") {
    // Binary checkerboard vs its inverse: anticorrelated in every window.
    Image a(24, 24), b(24, 24);
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x) {
        const float v = ((x / 4 + y / 4) % 2) ? 1.0f : 0.0f;
        a.set_pixel(x, y, {v, v, v});
        b.set_pixel(x, y, {1 - v, 1 - v, 1 - v});
      }
    CHECK(ssim(a, b) < 0.0);
  }
  SECTION("symmetric to 1e-9") {
    const Image a = random_image(18, 14, 7);
    const Image b = random_image(18, 14, 8);
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-9);
  }
  SECTION("bounded by 1 in magnitude") {
    for (uint64_t s = 0; s < 5; ++s) {
      const double v = ssim(random_image(16, 16, s), random_image(16, 16, s + 50));
      CHECK(v <= 1.0);
      CHECK(v >= -1.0);
    }
  }
  SECTION("images smaller than the window are rejected") {
    CHECK_THROWS_AS(ssim(random_image(10, 16, 1), random_image(10, 16, 2)),
                    DataError);
  }
}
