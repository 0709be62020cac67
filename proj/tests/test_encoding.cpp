#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "synf/encoding.hpp"
#include "synf/rng.hpp"
#include "synf/tape.hpp"

using namespace synf;

TEST_CASE("encode_time produces interleaved sin/cos pairs") {
  SECTION("t = 0") {
    double out[6];
    encode_time(0.0, 3, out);
    for (int l = 0; l < 3; ++l) {
      CHECK(out[2 * l] == Catch::Approx(0.0).margin(1e-15));
      CHECK(out[2 * l + 1] == Catch::Approx(1.0).margin(1e-15));
    }
  }
  SECTION("t = 1 hits exact multiples of pi") {
    double out[4];
    encode_time(1.0, 2, out);
    CHECK(out[0] == Catch::Approx(0.0).margin(1e-12));   // sin(pi)
    CHECK(out[1] == Catch::Approx(-1.0).margin(1e-12));  // cos(pi)
    CHECK(out[2] == Catch::Approx(0.0).margin(1e-12));   // sin(2pi)
    CHECK(out[3] == Catch::Approx(1.0).margin(1e-12));   // cos(2pi)
  }
  SECTION("t = 0.25, L = 1") {
    double out[2];
    encode_time(0.25, 1, out);
    CHECK(out[0] == Catch::Approx(std::sqrt(0.5)).epsilon(1e-9));
    CHECK(out[1] == Catch::Approx(std::sqrt(0.5)).epsilon(1e-9));
  }
}

TEST_CASE("encode_time is 2-periodic to 1e-12 at L = 10") {
  Rng rng(17);
  double a[20], b[20];
  for (int trial = 0; trial < 200; ++trial) {
    const double t = rng.uniform(-3.0, 3.0);
    encode_time(t, 10, a);
    encode_time(t + 2.0, 10, b);
    for (int i = 0; i < 20; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
    encode_time(t - 2.0, 10, b);
    for (int i = 0; i < 20; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
  }
}

TEST_CASE("encode_time gradient matches finite differences") {
  ParameterStore store;
  Tape tape(&store);
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const double t = rng.uniform(-1.0, 1.0);
    const int order = 6;
    tape.reset();
    Var vt = tape.input(t);
    Var enc[12];
    encode_time(vt, order, enc);
    // Random linear functional of the encoding.
    Rng wrng(trial);
    double w[12];
    Var loss(0.0);
    for (int i = 0; i < 12; ++i) {
      w[i] = wrng.normal();
      loss = madd(enc[i], Var(w[i]), loss);
    }
    std::vector<double> grads(1, 0.0);
    tape.backward(loss, 1.0, grads);

    auto value = [&](double tv) {
      double e[12];
      encode_time(tv, order, e);
      double acc = 0.0;
      for (int i = 0; i < 12; ++i) acc += w[i] * e[i];
      return acc;
    };
    const double h = 1e-6;
    const double fd = (value(t + h) - value(t - h)) / (2 * h);
    CHECK(std::abs(tape.grad_of(vt) - fd) <
          1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("sh2 basis has the constant term and unit-direction symmetry") {
  double a[kSh2Dim], b[kSh2Dim];
  sh2_encode(Vec3{0, 0, 1}, a);
  sh2_encode(Vec3{0, 0, -1}, b);
  CHECK(a[0] == Catch::Approx(b[0]));       // l=0 constant
  CHECK(a[2] == Catch::Approx(-b[2]));      // l=1 z flips sign
  CHECK(a[6] == Catch::Approx(b[6]));       // l=2 even
}
