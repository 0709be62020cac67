#pragma once

#include <cmath>

#include "synf/common.hpp"
#include "synf/tape.hpp"

namespace synf {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Sinusoidal time encoding: [sin(2^0 pi t), cos(2^0 pi t), ...,
// sin(2^{L-1} pi t), cos(2^{L-1} pi t)], 2L outputs. Every component has
// period dividing 2, so t is reduced modulo 2 first; this keeps the encoding
// exactly periodic and the sin argument small. The reduction shift is
// constant, so derivatives pass through unchanged.
template <class S>
inline void encode_time(S t, int order, S* out) {
  using std::cos;
  using std::sin;
  const double shift = 2.0 * std::floor(value_of(t) / 2.0);
  const S tr = t - S(shift);
  double freq = kPi;
  for (int l = 0; l < order; ++l) {
    const S arg = tr * S(freq);
    out[2 * l] = sin(arg);
    out[2 * l + 1] = cos(arg);
    freq *= 2.0;
  }
}

inline int encode_time_dim(int order) { return 2 * order; }

// Real spherical harmonics up to degree 2 (9 values) for optional view
// direction conditioning. Directions are never trainable, so this is plain
// arithmetic regardless of evaluation mode.
inline void sh2_encode(const Vec3& d, double* out) {
  const double x = d.x, y = d.y, z = d.z;
  out[0] = 0.28209479177387814;
  out[1] = -0.48860251190291987 * y;
  out[2] = 0.48860251190291987 * z;
  out[3] = -0.48860251190291987 * x;
  out[4] = 1.0925484305920792 * x * y;
  out[5] = -1.0925484305920792 * y * z;
  out[6] = 0.31539156525252005 * (3.0 * z * z - 1.0);
  out[7] = -1.0925484305920792 * x * z;
  out[8] = 0.5462742152960396 * (x * x - y * y);
}

inline constexpr int kSh2Dim = 9;

}  // namespace synf
