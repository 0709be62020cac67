#pragma once

#include <cmath>
#include <cstdint>

#include "synf/params.hpp"
#include "synf/rng.hpp"
#include "synf/tape.hpp"

namespace synf {

struct LinearDesc {
  int w_id = -1;  // [n_out][n_in] row-major
  int b_id = -1;
  int n_in = 0, n_out = 0;
};

inline LinearDesc add_linear(ParameterStore& st, const std::string& name,
                             int n_in, int n_out, ParamGroup group, Rng& rng,
                             double bias_init = 0.0) {
  LinearDesc d;
  d.n_in = n_in;
  d.n_out = n_out;
  d.w_id = st.add(name + ".weight", {n_out, n_in}, group);
  d.b_id = st.add(name + ".bias", {n_out}, group);
  const double bound = std::sqrt(6.0 / (n_in + n_out));
  for (double& w : st.tensor_values(d.w_id)) w = rng.uniform(-bound, bound);
  for (double& b : st.tensor_values(d.b_id)) b = bias_init;
  return d;
}

inline void linear_forward(const ParameterStore& st, const LinearDesc& d,
                           const double* x, double* y) {
  const double* w = st.data() + st.info(d.w_id).offset;
  const double* b = st.data() + st.info(d.b_id).offset;
  for (int o = 0; o < d.n_out; ++o) {
    const double* row = w + static_cast<int64_t>(o) * d.n_in;
    double acc = b[o];
    for (int i = 0; i < d.n_in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

inline void linear_forward(Tape& tape, const LinearDesc& d, const Var* x,
                           Var* y) {
  const ParameterStore& st = tape.store();
  tape.linear(st.info(d.w_id).offset, st.info(d.b_id).offset, d.n_in, d.n_out,
              x, y);
}

}  // namespace synf
