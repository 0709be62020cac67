#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "synf/camera.hpp"
#include "synf/render.hpp"
#include "synf/rng.hpp"
#include "synf/tape.hpp"

using namespace synf;

namespace {
Ray unit_ray() {
  Ray r;
  r.origin = {0, 0, 0};
  r.dir = {0, 0, 1};
  r.near = 0.0;
  r.far = 1.0;
  r.valid = true;
  return r;
}
}  // namespace

TEST_CASE("midpoint sampling hits bin centers and deltas tile the interval") {
  const RaySamples s = sample_along_ray(unit_ray(), 4, false, nullptr);
  REQUIRE(s.ts.size() == 4);
  CHECK(s.ts[0] == Catch::Approx(0.125));
  CHECK(s.ts[1] == Catch::Approx(0.375));
  CHECK(s.ts[2] == Catch::Approx(0.625));
  CHECK(s.ts[3] == Catch::Approx(0.875));
  double sum = 0.0;
  for (double d : s.deltas) sum += d;
  CHECK(sum == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("jittered samples are stratified and deltas telescope") {
  Rng rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    Ray r = unit_ray();
    r.near = 0.3;
    r.far = 2.7;
    const int n = 17;
    const RaySamples s = sample_along_ray(r, n, true, &rng);
    const double bin = (r.far - r.near) / n;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(s.ts[i] >= r.near + i * bin);
      CHECK(s.ts[i] < r.near + (i + 1) * bin);
      if (i) CHECK(s.ts[i] > s.ts[i - 1]);
      CHECK(s.deltas[i] > 0.0);
      sum += s.deltas[i];
    }
    CHECK(sum == Catch::Approx(r.far - r.near).margin(1e-6));
  }
}

TEST_CASE("composite basics") {
  SECTION("transparent medium returns the background exactly") {
    std::vector<Vec3> colors(5, Vec3{0.2, 0.4, 0.9});
    std::vector<double> sigmas(5, 0.0);
    std::vector<double> deltas(5, 0.2);
    const Vec3 bg{0.25, 0.5, 0.75};
    const Vec3 c = composite(colors, sigmas, deltas, bg);
    CHECK(c.x == bg.x);
    CHECK(c.y == bg.y);
    CHECK(c.z == bg.z);
  }
  SECTION("single segment with sigma*delta = ln 2 passes half the light") {
    std::vector<Vec3> colors{{1, 0, 0}};
    std::vector<double> sigmas{std::log(2.0)};
    std::vector<double> deltas{1.0};
    const Vec3 c = composite(colors, sigmas, deltas, Vec3{0, 0, 0});
    CHECK(c.x == Catch::Approx(0.5).margin(1e-12));
    CHECK(c.y == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("non-finite input is rejected") {
    std::vector<Vec3> colors{{1, 0, 0}};
    std::vector<double> sigmas{std::nan("")};
    std::vector<double> deltas{1.0};
    CHECK_THROWS_AS(composite(colors, sigmas, deltas, Vec3{}), NumericError);
  }
}

TEST_CASE("homogeneous medium matches the analytic transmittance") {
  Rng rng(7);
  for (double sigma : {0.3, 1.0, 4.2}) {
    double out[3];
    render_ray_with<double>(
        unit_ray(), 256, false, nullptr, Vec3{1, 1, 1},
        [&](const Vec3&, int, double rgb[3], double& s) {
          rgb[0] = 0.8;
          rgb[1] = 0.1;
          rgb[2] = 0.4;
          s = sigma;
        },
        out);
    const double trans = std::exp(-sigma);
    CHECK(out[0] == Catch::Approx(0.8 * (1 - trans) + trans).margin(1e-3));
    CHECK(out[1] == Catch::Approx(0.1 * (1 - trans) + trans).margin(1e-3));
    CHECK(out[2] == Catch::Approx(0.4 * (1 - trans) + trans).margin(1e-3));
  }
  // Jittered sampling stays within quadrature tolerance too.
  double out[3];
  render_ray_with<double>(
      unit_ray(), 256, true, &rng, Vec3{0, 0, 0},
      [&](const Vec3&, int, double rgb[3], double& s) {
        rgb[0] = rgb[1] = rgb[2] = 1.0;
        s = 2.0;
      },
      out);
  CHECK(out[0] == Catch::Approx(1.0 - std::exp(-2.0)).margin(1e-3));
}

TEST_CASE("weights telescope: unit colors on unit background give exactly 1") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(32));
    std::vector<Vec3> colors(n, Vec3{1, 1, 1});
    std::vector<double> sigmas(n), deltas(n);
    for (int i = 0; i < n; ++i) {
      sigmas[i] = rng.uniform(0.0, 20.0);
      deltas[i] = rng.uniform(1e-4, 0.5);
    }
    const Vec3 c = composite(colors, sigmas, deltas, Vec3{1, 1, 1});
    CHECK(std::abs(c.x - 1.0) < 1e-6);
  }
}

TEST_CASE("increasing an upstream density never brightens the background") {
  Rng rng(5);
  std::vector<Vec3> colors(6, Vec3{0, 0, 0});
  std::vector<double> sigmas(6), deltas(6, 0.25);
  for (auto& s : sigmas) s = rng.uniform(0.1, 3.0);
  const Vec3 bg{1, 1, 1};
  // With black emission, C.x equals the final transmittance.
  const double t_before = composite(colors, sigmas, deltas, bg).x;
  for (int i = 0; i < 6; ++i) {
    auto bumped = sigmas;
    bumped[i] += 1.0;
    const double t_after = composite(colors, bumped, deltas, bg).x;
    CHECK(t_after <= t_before + 1e-12);
  }
}

TEST_CASE("composited color is affine in the background with slope T_end") {
  Rng rng(9);
  const int n = 8;
  std::vector<Vec3> colors(n);
  std::vector<double> sigmas(n), deltas(n);
  for (int i = 0; i < n; ++i) {
    colors[i] = {rng.uniform(), rng.uniform(), rng.uniform()};
    sigmas[i] = rng.uniform(0.0, 4.0);
    deltas[i] = rng.uniform(0.01, 0.3);
  }
  const Vec3 c0 = composite(colors, sigmas, deltas, Vec3{0, 0, 0});
  const Vec3 c1 = composite(colors, sigmas, deltas, Vec3{1, 1, 1});
  double t_end = 1.0;
  for (int i = 0; i < n; ++i) t_end *= std::exp(-sigmas[i] * deltas[i]);
  CHECK(c1.x - c0.x == Catch::Approx(t_end).margin(1e-9));
  const Vec3 chalf = composite(colors, sigmas, deltas, Vec3{0.5, 0.5, 0.5});
  CHECK(chalf.y == Catch::Approx(0.5 * (c0.y + c1.y)).margin(1e-12));
}

TEST_CASE("composite gradients match finite differences") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(8));
    std::vector<double> sig(n), del(n), col(3 * n);
    for (int i = 0; i < n; ++i) {
      sig[i] = rng.uniform(0.05, 3.0);
      del[i] = rng.uniform(0.05, 0.4);
      for (int c = 0; c < 3; ++c) col[3 * i + c] = rng.uniform();
    }
    const Vec3 bg{0.3, 0.6, 0.9};
    auto value = [&] {
      std::vector<double> out(3);
      composite_core(col.data(), sig.data(), del.data(), n, bg, out.data());
      return out[0] + 2.0 * out[1] - 0.7 * out[2];
    };

    ParameterStore dummy;
    Tape tape(&dummy);
    std::vector<Var> vsig(n), vcol(3 * n);
    for (int i = 0; i < n; ++i) vsig[i] = tape.input(sig[i]);
    for (int i = 0; i < 3 * n; ++i) vcol[i] = tape.input(col[i]);
    Var out[3];
    composite_core(vcol.data(), vsig.data(), del.data(), n, bg, out);
    Var loss = out[0] + out[1] * 2.0 - out[2] * 0.7;
    std::vector<double> grads(1, 0.0);
    tape.backward(loss, 1.0, grads);

    const double h = 1e-6;
    for (int i = 0; i < n; ++i) {
      const double saved = sig[i];
      sig[i] = saved + h;
      const double up = value();
      sig[i] = saved - h;
      const double dn = value();
      sig[i] = saved;
      const double fd = (up - dn) / (2 * h);
      const double got = tape.grad_of(vsig[i]);
      CHECK(std::abs(got - fd) <
            1e-4 * std::max({std::abs(fd), std::abs(got), 1e-8}));
    }
    for (int i = 0; i < 3 * n; ++i) {
      const double saved = col[i];
      col[i] = saved + h;
      const double up = value();
      col[i] = saved - h;
      const double dn = value();
      col[i] = saved;
      const double fd = (up - dn) / (2 * h);
      const double got = tape.grad_of(vcol[i]);
      CHECK(std::abs(got - fd) <
            1e-4 * std::max({std::abs(fd), std::abs(got), 1e-8}));
    }
  }
}

TEST_CASE("pinhole rays") {
  const auto rig = build_rig(7, 64, 64);
  const Aabb bounds{{-1, -1, -1}, {1, 1, 1}};
  const CameraModel& cam = rig.back();  // test camera at cap center
  SECTION("principal point maps to the forward axis") {
    const Ray r = generate_ray(cam, cam.cx, cam.cy, bounds);
    const Vec3 fwd = cam.forward();
    CHECK(r.dir.dot(fwd) == Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("horizontally adjacent pixels differ only in camera x") {
    const Ray a = generate_pixel_ray(cam, 10, 20, bounds);
    const Ray b = generate_pixel_ray(cam, 11, 20, bounds);
    const Mat3 rt = cam.pose.rot.transposed();
    Vec3 da = rt * a.dir;
    Vec3 db = rt * b.dir;
    da = da / da.z;
    db = db / db.z;
    CHECK(da.y == Catch::Approx(db.y).margin(1e-12));
    CHECK(db.x - da.x == Catch::Approx(1.0 / cam.focal).margin(1e-12));
  }
  SECTION("all corner rays of every rig camera hit the scene box") {
    for (const auto& c : rig) {
      for (int iy : {0, c.height - 1})
        for (int ix : {0, c.width - 1})
          CHECK(generate_pixel_ray(c, ix, iy, bounds).valid);
    }
  }
  SECTION("out-of-image pixel is rejected") {
    CHECK_THROWS_AS(generate_pixel_ray(cam, -1, 0, bounds), DataError);
    CHECK_THROWS_AS(generate_pixel_ray(cam, 0, 64, bounds), DataError);
  }
}

TEST_CASE("rig geometry is valid") {
  const auto rig = build_rig(7, 64, 48);
  REQUIRE(rig.size() == 8);
  int tests = 0;
  for (const auto& cam : rig) {
    cam.validate();
    if (cam.split == Split::kTest) {
      ++tests;
      // Test camera sits on the cap axis.
      CHECK(std::abs(cam.position().x) < 1e-9);
      CHECK(std::abs(cam.position().y) < 1e-9);
    }
    // Every camera looks at the origin.
    const Vec3 to_center = (Vec3{0, 0, 0} - cam.position()).normalized();
    CHECK(cam.forward().dot(to_center) == Catch::Approx(1.0).margin(1e-9));
  }
  CHECK(tests == 1);
}
