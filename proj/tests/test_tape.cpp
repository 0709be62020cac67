#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <functional>
#include <vector>

#include "synf/grids.hpp"
#include "synf/mlp.hpp"
#include "synf/params.hpp"
#include "synf/rng.hpp"
#include "synf/tape.hpp"

using namespace synf;

namespace {

// Central finite difference over one parameter slot.
double fd_param(ParameterStore& st, int64_t slot,
                const std::function<double()>& f, double h = 1e-5) {
  double& p = st.values()[static_cast<size_t>(slot)];
  const double saved = p;
  p = saved + h;
  const double up = f();
  p = saved - h;
  const double dn = f();
  p = saved;
  return (up - dn) / (2.0 * h);
}

double rel_err(double got, double want) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-8});
  return std::abs(got - want) / denom;
}

}  // namespace

TEST_CASE("generic ops match finite differences") {
  ParameterStore st;
  const int tid = st.add("p", {4}, ParamGroup::kMlp);
  auto vals = st.tensor_values(tid);
  vals[0] = 0.7;
  vals[1] = -0.3;
  vals[2] = 1.2;
  vals[3] = 0.05;

  auto forward = [&](Tape* tape) -> double {
    auto read = [&](int i) -> Var {
      return tape ? tape->param(st.info(tid).offset + i)
                  : Var(st.tensor_values(tid)[i]);
    };
    Var a = read(0), b = read(1), c = read(2), d = read(3);
    Var u = sin(a * b) + cos(c) * a;
    Var w = exp(d - a * 0.5) + sqrt(c + 2.0);
    Var s = sigmoid(u) * softplus(w) + tanh(a + b);
    Var l = lerp(u, w, sigmoid(d));
    Var out = madd(s, l, u / (c + 3.0)) - log(c + 2.0);
    return out.v;
  };

  Tape tape(&st);
  std::vector<double> grads(st.total_size(), 0.0);
  // rebuild the graph through the tape
  {
    tape.reset();
    auto read = [&](int i) { return tape.param(st.info(tid).offset + i); };
    Var a = read(0), b = read(1), c = read(2), d = read(3);
    Var u = sin(a * b) + cos(c) * a;
    Var w = exp(d - a * 0.5) + sqrt(c + 2.0);
    Var s = sigmoid(u) * softplus(w) + tanh(a + b);
    Var l = lerp(u, w, sigmoid(d));
    Var out = madd(s, l, u / (c + 3.0)) - log(c + 2.0);
    tape.backward(out, 1.0, grads);
  }
  for (int i = 0; i < 4; ++i) {
    const double fd =
        fd_param(st, st.info(tid).offset + i, [&] { return forward(nullptr); });
    INFO("param " << i);
    CHECK(rel_err(grads[st.info(tid).offset + i], fd) < 1e-7);
  }
}

TEST_CASE("input leaves receive gradients") {
  ParameterStore st;
  Tape tape(&st);
  Var x = tape.input(0.4);
  Var y = tape.input(-1.3);
  Var out = sin(x) * exp(y) + x * y;
  std::vector<double> grads(1, 0.0);
  tape.backward(out, 1.0, grads);
  const double want_dx = std::cos(0.4) * std::exp(-1.3) + (-1.3);
  const double want_dy = std::sin(0.4) * std::exp(-1.3) + 0.4;
  CHECK(rel_err(tape.grad_of(x), want_dx) < 1e-12);
  CHECK(rel_err(tape.grad_of(y), want_dy) < 1e-12);
}

TEST_CASE("bilinear gather gradients (const and time-variable axis)") {
  ParameterStore st;
  PlaneDesc plane;
  plane.ra = 4;
  plane.rb = 5;
  plane.dim = 3;
  plane.tensor_id =
      st.add("plane", {plane.ra, plane.rb, plane.dim}, ParamGroup::kGrid);
  Rng rng(99);
  for (double& v : st.tensor_values(plane.tensor_id)) v = rng.normal(0.0, 1.0);

  const double a01 = 0.37;
  const double b_val = 0.52;

  auto loss_value = [&](double b01) {
    double out[3];
    sample_plane(st, plane, a01, b01, out);
    return out[0] * 1.0 + out[1] * 2.0 + out[2] * -0.5;
  };

  Tape tape(&st);
  std::vector<double> grads(st.total_size(), 0.0);
  Var b = tape.input(b_val);
  Var out[3];
  sample_plane(tape, plane, a01, b, out);
  Var loss = out[0] * 1.0 + out[1] * 2.0 + out[2] * -0.5;
  tape.backward(loss, 1.0, grads);

  SECTION("gradient w.r.t. the variable axis") {
    const double h = 1e-6;
    const double fd = (loss_value(b_val + h) - loss_value(b_val - h)) / (2 * h);
    CHECK(rel_err(tape.grad_of(b), fd) < 1e-6);
  }
  SECTION("gradient w.r.t. touched plane entries") {
    int checked = 0;
    for (int64_t s = 0; s < st.total_size(); ++s) {
      if (grads[s] == 0.0) continue;
      const double fd = fd_param(st, s, [&] { return loss_value(b_val); });
      CHECK(rel_err(grads[s], fd) < 1e-6);
      ++checked;
    }
    CHECK(checked == 12);  // 4 corners x 3 channels
  }
}

TEST_CASE("trilinear gather gradients") {
  ParameterStore st;
  GridDesc grid;
  grid.res = 3;
  grid.dim = 2;
  grid.tensor_id =
      st.add("grid", {grid.res, grid.res, grid.res, grid.dim},
             ParamGroup::kGrid);
  Rng rng(7);
  for (double& v : st.tensor_values(grid.tensor_id)) v = rng.normal(0.0, 1.0);
  const Vec3 p{0.21, 0.68, 0.45};

  auto loss_value = [&] {
    double out[2];
    sample_grid(st, grid, p, out);
    return 0.3 * out[0] - 1.7 * out[1];
  };

  Tape tape(&st);
  std::vector<double> grads(st.total_size(), 0.0);
  Var out[2];
  sample_grid(tape, grid, p, out);
  Var loss = out[0] * 0.3 - out[1] * 1.7;
  tape.backward(loss, 1.0, grads);

  int checked = 0;
  for (int64_t s = 0; s < st.total_size(); ++s) {
    if (grads[s] == 0.0) continue;
    const double fd = fd_param(st, s, loss_value);
    CHECK(rel_err(grads[s], fd) < 1e-6);
    ++checked;
  }
  CHECK(checked == 16);  // 8 corners x 2 channels
}

TEST_CASE("linear layer gradients for weights, bias and inputs") {
  ParameterStore st;
  Rng rng(3);
  LinearDesc lin = add_linear(st, "lin", 3, 2, ParamGroup::kMlp, rng);

  const double x0 = 0.3, x1 = -0.8;
  auto loss_value = [&](double a, double b) {
    const double x[3] = {a, b, 0.25};
    double y[2];
    linear_forward(st, lin, x, y);
    return std::tanh(y[0]) + 0.5 * y[1] * y[1];
  };

  Tape tape(&st);
  std::vector<double> grads(st.total_size(), 0.0);
  Var xa = tape.input(x0);
  Var xb = tape.input(x1);
  Var x[3] = {xa, xb, Var(0.25)};
  Var y[2];
  linear_forward(tape, lin, x, y);
  Var loss = tanh(y[0]) + y[1] * y[1] * 0.5;
  tape.backward(loss, 1.0, grads);

  for (int64_t s = 0; s < st.total_size(); ++s) {
    const double fd = fd_param(st, s, [&] { return loss_value(x0, x1); });
    INFO("slot " << s);
    CHECK(rel_err(grads[s], fd) < 1e-6);
  }
  const double h = 1e-6;
  const double fda = (loss_value(x0 + h, x1) - loss_value(x0 - h, x1)) / (2 * h);
  const double fdb = (loss_value(x0, x1 + h) - loss_value(x0, x1 - h)) / (2 * h);
  CHECK(rel_err(tape.grad_of(xa), fda) < 1e-6);
  CHECK(rel_err(tape.grad_of(xb), fdb) < 1e-6);
}

TEST_CASE("backward accumulates across repeated parameter reads") {
  ParameterStore st;
  const int tid = st.add("w", {1}, ParamGroup::kMlp);
  st.tensor_values(tid)[0] = 0.9;
  Tape tape(&st);
  Var a = tape.param(0);
  Var b = tape.param(0);
  Var out = a * b;  // w^2 -> d/dw = 2w
  std::vector<double> grads(1, 0.0);
  tape.backward(out, 1.0, grads);
  CHECK(grads[0] == Catch::Approx(1.8).epsilon(1e-12));
}

TEST_CASE("tape reset clears recorded state") {
  ParameterStore st;
  st.add("w", {2}, ParamGroup::kMlp);
  Tape tape(&st);
  (void)(tape.param(0) * tape.param(1));
  CHECK(tape.size() > 0);
  tape.reset();
  CHECK(tape.size() == 0);
}
