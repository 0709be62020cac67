#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "synf/common.hpp"
#include "synf/encoding.hpp"
#include "synf/grids.hpp"
#include "synf/mlp.hpp"
#include "synf/params.hpp"
#include "synf/rng.hpp"
#include "synf/tape.hpp"
#include "synf/time_map.hpp"

namespace synf {

enum class ModelFamily { kPlaneExplicit, kPlaneHybrid, kLatent };

inline std::string family_name(ModelFamily f) {
  switch (f) {
    case ModelFamily::kPlaneExplicit: return "plane-explicit";
    case ModelFamily::kPlaneHybrid: return "plane-hybrid";
    case ModelFamily::kLatent: return "latent";
  }
  return "?";
}
inline ModelFamily family_from_name(const std::string& s) {
  if (s == "plane-explicit") return ModelFamily::kPlaneExplicit;
  if (s == "plane-hybrid") return ModelFamily::kPlaneHybrid;
  if (s == "latent") return ModelFamily::kLatent;
  throw UsageError("unknown model family '" + s +
                   "' (expected plane-explicit, plane-hybrid or latent)");
}

struct FieldConfig {
  ModelFamily family = ModelFamily::kPlaneHybrid;
  int spatial_res = 32;    // plane spatial resolution / latent grid resolution
  int temporal_res = 32;   // plane time resolution
  int feature_dim = 16;    // D
  int temporal_mlp_hidden = 64;  // W_t
  int temporal_embed_dim = 16;   // D_z
  int encode_order = 10;         // L
  int decoder_hidden = 32;
  bool use_direction = false;  // SH degree-2 view conditioning
  uint64_t init_seed = 1;
};

inline constexpr int kMaxFeature = 64;
inline constexpr int kMaxWidth = 160;

// A trainable dynamic field: six spatiotemporal feature planes fused by
// element-wise product (plane families), or a spatial grid plus an implicit
// temporal embedding z(t) (latent family), both decoded to (color, density).
// All tensors live in `params`; registration order fixes the checkpoint
// layout.
struct FieldModel {
  FieldConfig cfg;
  TimeMap time_map;
  Aabb bounds;
  std::vector<int> train_camera_ids;

  ParameterStore params;
  OffsetTable offsets;

  // Plane families: 0 xy, 1 xz, 2 yz (spatial), 3 xt, 4 yt, 5 zt (time).
  std::array<PlaneDesc, 6> planes{};
  // Latent family.
  GridDesc grid{};
  LinearDesc tmlp1{}, tmlp2{};
  // Decoder; explicit uses dec1 only.
  LinearDesc dec1{}, dec2{};
  bool has_dec2 = false;

  bool is_plane() const { return cfg.family != ModelFamily::kLatent; }
  int n_train_cameras() const { return offsets.size(); }

  int fused_dim() const {
    return is_plane() ? cfg.feature_dim
                      : cfg.feature_dim + cfg.temporal_embed_dim;
  }
  int decoder_in_dim() const {
    return fused_dim() + (cfg.use_direction ? kSh2Dim : 0);
  }
};

inline FieldModel build_field_model(const FieldConfig& cfg,
                                    const TimeMap& time_map,
                                    const Aabb& bounds,
                                    std::vector<int> train_camera_ids) {
  FieldModel m;
  m.cfg = cfg;
  m.time_map = time_map;
  m.bounds = bounds;
  m.train_camera_ids = std::move(train_camera_ids);
  m.offsets.init(m.params, static_cast<int>(m.train_camera_ids.size()));

  int stream = 0;
  auto next_rng = [&] { return Rng::keyed(cfg.init_seed, 100 + stream++); };

  if (m.is_plane()) {
    static const char* names[6] = {"plane.xy", "plane.xz", "plane.yz",
                                   "plane.xt", "plane.yt", "plane.zt"};
    for (int p = 0; p < 6; ++p) {
      const bool temporal = p >= 3;
      PlaneDesc d;
      d.ra = cfg.spatial_res;
      d.rb = temporal ? cfg.temporal_res : cfg.spatial_res;
      d.dim = cfg.feature_dim;
      d.tensor_id =
          m.params.add(names[p], {d.ra, d.rb, d.dim}, ParamGroup::kGrid);
      Rng rng = next_rng();
      // Product fusion starts near a static field: time planes near 1.
      for (double& v : m.params.tensor_values(d.tensor_id))
        v = temporal ? 1.0 + rng.normal(0.0, 0.01) : rng.normal(0.0, 0.1);
      m.planes[p] = d;
    }
  } else {
    m.grid.res = cfg.spatial_res;
    m.grid.dim = cfg.feature_dim;
    m.grid.tensor_id = m.params.add(
        "grid", {cfg.spatial_res, cfg.spatial_res, cfg.spatial_res,
                 cfg.feature_dim},
        ParamGroup::kGrid);
    Rng grng = next_rng();
    for (double& v : m.params.tensor_values(m.grid.tensor_id))
      v = grng.normal(0.0, 0.1);
    Rng r1 = next_rng(), r2 = next_rng();
    m.tmlp1 = add_linear(m.params, "tmlp.l1", encode_time_dim(cfg.encode_order),
                         cfg.temporal_mlp_hidden, ParamGroup::kMlp, r1);
    m.tmlp2 = add_linear(m.params, "tmlp.l2", cfg.temporal_mlp_hidden,
                         cfg.temporal_embed_dim, ParamGroup::kMlp, r2);
  }

  const int dec_in = m.decoder_in_dim();
  if (cfg.family == ModelFamily::kPlaneExplicit) {
    Rng r = next_rng();
    m.dec1 = add_linear(m.params, "decoder.l1", dec_in, 4, ParamGroup::kMlp, r);
    m.has_dec2 = false;
  } else {
    Rng r1 = next_rng(), r2 = next_rng();
    m.dec1 = add_linear(m.params, "decoder.l1", dec_in, cfg.decoder_hidden,
                        ParamGroup::kMlp, r1);
    m.dec2 = add_linear(m.params, "decoder.l2", cfg.decoder_hidden, 4,
                        ParamGroup::kMlp, r2);
    m.has_dec2 = true;
  }
  // Gentle start: low density, mid-gray color.
  const LinearDesc& out_layer = m.has_dec2 ? m.dec2 : m.dec1;
  m.params.tensor_values(out_layer.b_id)[3] = -1.0;
  return m;
}

// ---------------------------------------------------------------------------
// Evaluation contexts: the same field code runs either on plain doubles
// (inference) or on the tape (training).

struct DoubleCtx {
  using S = double;
  const ParameterStore& st;
};

struct TapeCtx {
  using S = Var;
  Tape& tape;
};

inline void ctx_plane(const DoubleCtx& c, const PlaneDesc& d, double a,
                      double b, double* out) {
  sample_plane(c.st, d, a, b, out);
}
inline void ctx_plane(const TapeCtx& c, const PlaneDesc& d, double a, Var b,
                      Var* out) {
  sample_plane(c.tape, d, a, b, out);
}
inline void ctx_grid(const DoubleCtx& c, const GridDesc& g, const Vec3& p,
                     double* out) {
  sample_grid(c.st, g, p, out);
}
inline void ctx_grid(const TapeCtx& c, const GridDesc& g, const Vec3& p,
                     Var* out) {
  sample_grid(c.tape, g, p, out);
}
inline void ctx_linear(const DoubleCtx& c, const LinearDesc& d,
                       const double* x, double* y) {
  linear_forward(c.st, d, x, y);
}
inline void ctx_linear(const TapeCtx& c, const LinearDesc& d, const Var* x,
                       Var* y) {
  linear_forward(c.tape, d, x, y);
}

// Per-ray temporal state: everything that depends on t_k but not on the
// sample position, so it is built once per ray and shared by all samples.
template <class S>
struct TimeContext {
  S tb = S(0.0);  // plane families: time in [0,1] on the [-1,1] plane extent
  int time_cell = 0;      // cell index on the time axis (shared by a ray)
  S time_frac = S(0.0);   // fraction within that cell
  std::array<S, kMaxFeature> z;  // latent family: entries [0, D_z) are
                                 // written by make_time_context before use
  std::array<double, kSh2Dim> sh{};
  bool has_sh = false;
};

inline double make_cell_frac(const DoubleCtx&, double, double,
                             const CellCoord& cb, bool) {
  return cb.f;
}
inline Var make_cell_frac(const TapeCtx& cx, Var tb, double scale,
                          const CellCoord& cb, bool in_range) {
  if (tb.id >= 0 && in_range) return cx.tape.make1(cb.f, tb, scale);
  return Var(cb.f);
}

// z(t) = T_theta(encode_time(t, L)).
template <class Ctx>
inline void temporal_embedding(const FieldModel& m, const Ctx& cx,
                               typename Ctx::S t_k, typename Ctx::S* z) {
  using S = typename Ctx::S;
  using std::tanh;
  S enc[kMaxWidth];
  encode_time(t_k, m.cfg.encode_order, enc);
  S hid[kMaxWidth];
  ctx_linear(cx, m.tmlp1, enc, hid);
  for (int i = 0; i < m.tmlp1.n_out; ++i) hid[i] = tanh(hid[i]);
  ctx_linear(cx, m.tmlp2, hid, z);
}

template <class Ctx>
inline TimeContext<typename Ctx::S> make_time_context(
    const FieldModel& m, const Ctx& cx, typename Ctx::S t_k,
    const Vec3* dir = nullptr) {
  using S = typename Ctx::S;
  TimeContext<S> tc;
  if (m.is_plane()) {
    // Plane time axis spans [-1, 1]; shifted times are clamped, so an offset
    // drifting past the plane edge stops producing gradient instead of
    // reading out of range.
    tc.tb = (t_k + S(1.0)) * S(0.5);
    const int rb = m.planes[3].rb;
    const double ub = value_of(tc.tb) * (rb - 1);
    const CellCoord cb = locate_cell(ub, rb);
    tc.time_cell = cb.i;
    const bool in_range = ub > 0.0 && ub < static_cast<double>(rb - 1);
    tc.time_frac =
        make_cell_frac(cx, tc.tb, static_cast<double>(rb - 1), cb, in_range);
  } else {
    temporal_embedding(m, cx, t_k, tc.z.data());
  }
  if (m.cfg.use_direction) {
    if (!dir) throw DataError("direction conditioning needs a view direction");
    sh2_encode(*dir, tc.sh.data());
    tc.has_sh = true;
  }
  return tc;
}

inline Vec3 normalize_position(const Aabb& bounds, const Vec3& x) {
  const Vec3 e = bounds.extent();
  return {(x.x - bounds.lo.x) / e.x, (x.y - bounds.lo.y) / e.y,
          (x.z - bounds.lo.z) / e.z};
}

namespace detail_fuse {
inline double fuse6(const DoubleCtx&, const double* f, int stride, int c) {
  return f[c] * f[stride + c] * f[2 * stride + c] * f[3 * stride + c] *
         f[4 * stride + c] * f[5 * stride + c];
}
inline Var fuse6(const TapeCtx& cx, const Var* f, int stride, int c) {
  Var factors[6];
  for (int p = 0; p < 6; ++p) factors[p] = f[p * stride + c];
  return cx.tape.product(factors, 6);
}
}  // namespace detail_fuse

// Fused plane features at (x, t): per-plane bilinear interpolation combined
// by element-wise product over the six planes.
template <class Ctx>
inline void plane_features(const FieldModel& m, const Ctx& cx,
                           const Vec3& p, typename Ctx::S tb,
                           typename Ctx::S* out) {
  using S = typename Ctx::S;
  const int dim = m.cfg.feature_dim;
  S feat[6 * kMaxFeature];
  ctx_plane(cx, m.planes[0], p.x, S(p.y), feat);
  ctx_plane(cx, m.planes[1], p.x, S(p.z), feat + dim);
  ctx_plane(cx, m.planes[2], p.y, S(p.z), feat + 2 * dim);
  for (int tp = 0; tp < 3; ++tp)
    ctx_plane(cx, m.planes[3 + tp], p[tp], tb, feat + (3 + tp) * dim);
  for (int c = 0; c < dim; ++c)
    out[c] = detail_fuse::fuse6(cx, feat, dim, c);
}

// Spec-level f(x, t_k) for plane families (double mode).
inline void grid_sample(const FieldModel& m, const Vec3& x, double t_k,
                        double* out) {
  if (!m.is_plane())
    throw UsageError("grid_sample applies to plane-family models");
  DoubleCtx cx{m.params};
  const Vec3 p = normalize_position(m.bounds, x);
  plane_features(m, cx, p, (t_k + 1.0) * 0.5, out);
}

inline void fused_plane_features(const FieldModel& m, const DoubleCtx& cx,
                                 const Vec3& p, const TimeContext<double>& tc,
                                 double* out) {
  plane_features(m, cx, p, tc.tb, out);
}

// Tape mode: one fused plane-stack op per sample; the time fraction node is
// shared across the ray's samples.
inline void fused_plane_features(const FieldModel& m, const TapeCtx& cx,
                                 const Vec3& p, const TimeContext<Var>& tc,
                                 Var* out) {
  const ParameterStore& st = cx.tape.store();
  detail::PlaneStackRec rec;
  const double pa[3] = {p.x, p.x, p.y};
  const double pb[3] = {p.y, p.z, p.z};
  for (int q = 0; q < 3; ++q) {
    const PlaneDesc& d = m.planes[q];
    const CellCoord ca = locate_cell(pa[q] * (d.ra - 1), d.ra);
    const CellCoord cb = locate_cell(pb[q] * (d.rb - 1), d.rb);
    rec.corner[q][0] = detail::plane_slot(st, d, ca.i, cb.i);
    rec.corner[q][1] = detail::plane_slot(st, d, ca.i, cb.i + 1);
    rec.corner[q][2] = detail::plane_slot(st, d, ca.i + 1, cb.i);
    rec.corner[q][3] = detail::plane_slot(st, d, ca.i + 1, cb.i + 1);
    rec.w[q][0] = (1.0 - ca.f) * (1.0 - cb.f);
    rec.w[q][1] = (1.0 - ca.f) * cb.f;
    rec.w[q][2] = ca.f * (1.0 - cb.f);
    rec.w[q][3] = ca.f * cb.f;
  }
  const double f = value_of(tc.time_frac);
  for (int tp = 0; tp < 3; ++tp) {
    const PlaneDesc& d = m.planes[3 + tp];
    const CellCoord ca = locate_cell(p[tp] * (d.ra - 1), d.ra);
    rec.corner[3 + tp][0] = detail::plane_slot(st, d, ca.i, tc.time_cell);
    rec.corner[3 + tp][1] = detail::plane_slot(st, d, ca.i, tc.time_cell + 1);
    rec.corner[3 + tp][2] = detail::plane_slot(st, d, ca.i + 1, tc.time_cell);
    rec.corner[3 + tp][3] =
        detail::plane_slot(st, d, ca.i + 1, tc.time_cell + 1);
    rec.sa[tp] = 1.0 - ca.f;
    rec.sb[tp] = ca.f;
    rec.w[3 + tp][0] = rec.sa[tp] * (1.0 - f);
    rec.w[3 + tp][1] = rec.sa[tp] * f;
    rec.w[3 + tp][2] = rec.sb[tp] * (1.0 - f);
    rec.w[3 + tp][3] = rec.sb[tp] * f;
  }
  rec.frac = tc.time_frac.id;
  cx.tape.plane_stack(rec, m.cfg.feature_dim, out);
}

// Color/density query at one point. rgb in (0,1)^3 via sigmoid, density >= 0
// via softplus.
template <class Ctx>
inline void eval_point(const FieldModel& m, const Ctx& cx,
                       const TimeContext<typename Ctx::S>& tc, const Vec3& x,
                       typename Ctx::S rgb[3], typename Ctx::S& sigma) {
  using S = typename Ctx::S;
  using std::tanh;
  const Vec3 p = normalize_position(m.bounds, x);
  S fused[kMaxFeature];
  int n_in = 0;
  if (m.is_plane()) {
    fused_plane_features(m, cx, p, tc, fused);
    n_in = m.cfg.feature_dim;
  } else {
    ctx_grid(cx, m.grid, p, fused);
    n_in = m.cfg.feature_dim;
    for (int c = 0; c < m.cfg.temporal_embed_dim; ++c)
      fused[n_in + c] = tc.z[c];
    n_in += m.cfg.temporal_embed_dim;
  }
  if (m.cfg.use_direction) {
    for (int k = 0; k < kSh2Dim; ++k) fused[n_in + k] = S(tc.sh[k]);
    n_in += kSh2Dim;
  }
  S raw[kMaxWidth];
  if (m.has_dec2) {
    S hid[kMaxWidth];
    ctx_linear(cx, m.dec1, fused, hid);
    for (int i = 0; i < m.dec1.n_out; ++i) hid[i] = tanh(hid[i]);
    ctx_linear(cx, m.dec2, hid, raw);
  } else {
    ctx_linear(cx, m.dec1, fused, raw);
  }
  rgb[0] = sigmoid(raw[0]);
  rgb[1] = sigmoid(raw[1]);
  rgb[2] = sigmoid(raw[2]);
  sigma = softplus(raw[3]);
}

// Single-query form of the field: F(x, d, t_k) -> (color, density).
inline void eval_field(const FieldModel& m, const Vec3& x, const Vec3& d,
                       double t_k, Vec3& rgb, double& sigma) {
  if (!std::isfinite(x.x) || !std::isfinite(x.y) || !std::isfinite(x.z) ||
      !std::isfinite(t_k))
    throw DataError("non-finite field query");
  if (m.cfg.use_direction && std::abs(d.norm() - 1.0) > 1e-6)
    throw DataError("view direction must be unit-norm");
  DoubleCtx cx{m.params};
  const TimeContext<double> tc = make_time_context(m, cx, t_k, &d);
  double c[3];
  eval_point(m, cx, tc, x, c, sigma);
  rgb = {c[0], c[1], c[2]};
}

}  // namespace synf
