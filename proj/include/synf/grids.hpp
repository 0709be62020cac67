#pragma once

#include <cmath>
#include <cstdint>

#include "synf/common.hpp"
#include "synf/params.hpp"
#include "synf/tape.hpp"

namespace synf {

// 2D feature plane stored [ra][rb][dim], channel fastest. For time-carrying
// planes axis b is time.
struct PlaneDesc {
  int tensor_id = -1;
  int ra = 0, rb = 0, dim = 0;
};

// 3D feature grid stored [res][res][res][dim], channel fastest.
struct GridDesc {
  int tensor_id = -1;
  int res = 0, dim = 0;
};

struct CellCoord {
  int i = 0;
  double f = 0.0;
};

// Locate u (in grid units, [0, res-1]) in its cell; clamps outside the range.
inline CellCoord locate_cell(double u, int res) {
  if (!(u > 0.0)) return {0, 0.0};
  if (u >= static_cast<double>(res - 1)) return {res - 2, 1.0};
  int i = static_cast<int>(u);
  if (i > res - 2) i = res - 2;
  return {i, u - i};
}

namespace detail {
inline int64_t plane_slot(const ParameterStore& st, const PlaneDesc& d, int i,
                          int j) {
  return st.info(d.tensor_id).offset +
         (static_cast<int64_t>(i) * d.rb + j) * d.dim;
}
}  // namespace detail

// Bilinear sample, plain double mode. a01/b01 are normalized plane
// coordinates in [0,1] (clamped outside). out has d.dim entries.
inline void sample_plane(const ParameterStore& st, const PlaneDesc& d,
                         double a01, double b01, double* out) {
  const CellCoord ca = locate_cell(a01 * (d.ra - 1), d.ra);
  const CellCoord cb = locate_cell(b01 * (d.rb - 1), d.rb);
  const double w00 = (1.0 - ca.f) * (1.0 - cb.f);
  const double w01 = (1.0 - ca.f) * cb.f;
  const double w10 = ca.f * (1.0 - cb.f);
  const double w11 = ca.f * cb.f;
  const double* pv = st.data();
  const int64_t c00 = detail::plane_slot(st, d, ca.i, cb.i);
  const int64_t c01 = detail::plane_slot(st, d, ca.i, cb.i + 1);
  const int64_t c10 = detail::plane_slot(st, d, ca.i + 1, cb.i);
  const int64_t c11 = detail::plane_slot(st, d, ca.i + 1, cb.i + 1);
  for (int c = 0; c < d.dim; ++c) {
    out[c] = w00 * pv[c00 + c] + w01 * pv[c01 + c] + w10 * pv[c10 + c] +
             w11 * pv[c11 + c];
    if (!std::isfinite(out[c]))
      throw NumericError("non-finite feature in plane sample (tensor " +
                         st.info(d.tensor_id).name + ")");
  }
}

// Bilinear sample on the tape. Axis b may be a tape variable (time); when it
// saturates the [0,1] range the fraction degrades to a constant and the
// gradient w.r.t. b is zero, which is the clamping contract.
inline void sample_plane(Tape& tape, const PlaneDesc& d, double a01, Var b01,
                         Var* out) {
  const ParameterStore& st = tape.store();
  const CellCoord ca = locate_cell(a01 * (d.ra - 1), d.ra);
  const double ub = b01.v * (d.rb - 1);
  const CellCoord cb = locate_cell(ub, d.rb);
  const int64_t c00 = detail::plane_slot(st, d, ca.i, cb.i);
  const int64_t c01 = detail::plane_slot(st, d, ca.i, cb.i + 1);
  const int64_t c10 = detail::plane_slot(st, d, ca.i + 1, cb.i);
  const int64_t c11 = detail::plane_slot(st, d, ca.i + 1, cb.i + 1);
  const double sa = 1.0 - ca.f;
  const double sb = ca.f;
  Var frac(cb.f);
  if (b01.id >= 0 && ub > 0.0 && ub < static_cast<double>(d.rb - 1)) {
    // frac = b01*(rb-1) - i, affine in b01 inside the cell.
    frac = tape.make1(cb.f, b01, static_cast<double>(d.rb - 1));
  }
  tape.quad_timevar(c00, c01, c10, c11, sa, sb, frac, d.dim, out);
}

// Trilinear sample, double mode. p01 in [0,1]^3 (clamped outside).
inline void sample_grid(const ParameterStore& st, const GridDesc& g, Vec3 p01,
                        double* out) {
  const CellCoord cx = locate_cell(p01.x * (g.res - 1), g.res);
  const CellCoord cy = locate_cell(p01.y * (g.res - 1), g.res);
  const CellCoord cz = locate_cell(p01.z * (g.res - 1), g.res);
  const int64_t base = st.info(g.tensor_id).offset;
  const int64_t sx = static_cast<int64_t>(g.res) * g.res * g.dim;
  const int64_t sy = static_cast<int64_t>(g.res) * g.dim;
  const double* pv = st.data();
  for (int c = 0; c < g.dim; ++c) out[c] = 0.0;
  for (int k = 0; k < 8; ++k) {
    const int dx = k >> 2, dy = (k >> 1) & 1, dz = k & 1;
    const double w = (dx ? cx.f : 1.0 - cx.f) * (dy ? cy.f : 1.0 - cy.f) *
                     (dz ? cz.f : 1.0 - cz.f);
    const int64_t slot =
        base + (cx.i + dx) * sx + (cy.i + dy) * sy + (cz.i + dz) * g.dim;
    for (int c = 0; c < g.dim; ++c) out[c] += w * pv[slot + c];
  }
  for (int c = 0; c < g.dim; ++c)
    if (!std::isfinite(out[c]))
      throw NumericError("non-finite feature in grid sample (tensor " +
                         st.info(g.tensor_id).name + ")");
}

// Trilinear sample on the tape. Positions are never trainable, so weights
// are constants and only the grid parameters receive gradients.
inline void sample_grid(Tape& tape, const GridDesc& g, Vec3 p01, Var* out) {
  const ParameterStore& st = tape.store();
  const CellCoord cx = locate_cell(p01.x * (g.res - 1), g.res);
  const CellCoord cy = locate_cell(p01.y * (g.res - 1), g.res);
  const CellCoord cz = locate_cell(p01.z * (g.res - 1), g.res);
  const int64_t base = st.info(g.tensor_id).offset;
  const int64_t sx = static_cast<int64_t>(g.res) * g.res * g.dim;
  const int64_t sy = static_cast<int64_t>(g.res) * g.dim;
  int64_t corners[8];
  double weights[8];
  for (int k = 0; k < 8; ++k) {
    const int dx = k >> 2, dy = (k >> 1) & 1, dz = k & 1;
    weights[k] = (dx ? cx.f : 1.0 - cx.f) * (dy ? cy.f : 1.0 - cy.f) *
                 (dz ? cz.f : 1.0 - cz.f);
    corners[k] =
        base + (cx.i + dx) * sx + (cy.i + dy) * sy + (cz.i + dz) * g.dim;
  }
  tape.oct_const(corners, weights, g.dim, out);
}

}  // namespace synf
