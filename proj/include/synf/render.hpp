#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "synf/camera.hpp"
#include "synf/field_model.hpp"
#include "synf/image.hpp"
#include "synf/rng.hpp"
#include "synf/threading.hpp"

namespace synf {

inline constexpr int kMaxSamples = 1024;

struct RaySamples {
  std::vector<double> ts;      // sample depths, strictly increasing
  std::vector<double> deltas;  // segment lengths, sum to (far - near)
};

// Stratified sampling over [near, far]: one sample per bin, midpoint when
// jitter is off. Segment i runs from the midpoint below sample i to the
// midpoint above it, with the first segment opening at near and the last
// closing at far, so the deltas tile the interval exactly.
inline void sample_along_ray_into(const Ray& ray, int n, bool jitter, Rng* rng,
                                  double* ts, double* deltas) {
  if (n < 1) throw UsageError("sample count must be >= 1");
  const double span = ray.far - ray.near;
  const double bin = span / n;
  for (int i = 0; i < n; ++i) {
    const double u = jitter ? rng->uniform() : 0.5;
    ts[i] = ray.near + (i + u) * bin;
  }
  double prev_edge = ray.near;
  for (int i = 0; i < n; ++i) {
    const double next_edge = i + 1 < n ? 0.5 * (ts[i] + ts[i + 1]) : ray.far;
    deltas[i] = next_edge - prev_edge;
    prev_edge = next_edge;
  }
}

inline RaySamples sample_along_ray(const Ray& ray, int n, bool jitter,
                                   Rng* rng) {
  RaySamples s;
  s.ts.resize(n);
  s.deltas.resize(n);
  sample_along_ray_into(ray, n, jitter, rng, s.ts.data(), s.deltas.data());
  return s;
}

// alpha = 1 - exp(-sigma*delta), as one tape node.
inline double alpha_from_density(double sigma, double delta) {
  return -std::expm1(-sigma * delta);
}
inline Var alpha_from_density(Var sigma, double delta) {
  const double a = -std::expm1(-sigma.v * delta);
  if (!sigma.tape) return Var(a);
  return sigma.tape->make1(a, sigma, delta * std::exp(-sigma.v * delta));
}

// Emission-absorption quadrature:
//   alpha_i = 1 - exp(-sigma_i * delta_i), T_i = prod_{j<i} (1 - alpha_j),
//   C = sum_i T_i alpha_i c_i + T_end * background.
template <class S>
inline void composite_core(const S* rgb, const S* sigma, const double* deltas,
                           int n, const Vec3& background, S out[3]) {
  S transmittance(1.0);
  S acc[3] = {S(0.0), S(0.0), S(0.0)};
  for (int i = 0; i < n; ++i) {
    const S alpha = alpha_from_density(sigma[i], deltas[i]);
    const S w = transmittance * alpha;
    for (int c = 0; c < 3; ++c) acc[c] = madd(w, rgb[3 * i + c], acc[c]);
    transmittance = transmittance - w;
  }
  for (int c = 0; c < 3; ++c)
    out[c] = madd(transmittance, S(background[c]), acc[c]);
}

// PointFn fills (rgb, sigma) for sample i at world position pos.
template <class S, class PointFn>
inline void render_ray_with(const Ray& ray, int n, bool jitter, Rng* rng,
                            const Vec3& background, PointFn&& point_fn,
                            S out[3]) {
  if (!ray.valid) {
    out[0] = S(background.x);
    out[1] = S(background.y);
    out[2] = S(background.z);
    return;
  }
  if (n > kMaxSamples) throw UsageError("sample count too large");
  double ts[kMaxSamples], deltas[kMaxSamples];
  sample_along_ray_into(ray, n, jitter, rng, ts, deltas);
  S rgb[3 * kMaxSamples];
  S sigma[kMaxSamples];
  for (int i = 0; i < n; ++i) {
    const Vec3 pos = ray.origin + ray.dir * ts[i];
    point_fn(pos, i, &rgb[3 * i], sigma[i]);
  }
  composite_core(rgb, sigma, deltas, n, background, out);
}

// Standalone compositor over precomputed per-sample values (the quadrature
// used everywhere; exposed for direct checks).
inline Vec3 composite(std::span<const Vec3> colors,
                      std::span<const double> densities,
                      std::span<const double> deltas, const Vec3& background) {
  const size_t n = colors.size();
  if (densities.size() != n || deltas.size() != n)
    throw UsageError("composite: mismatched input lengths");
  double transmittance = 1.0;
  Vec3 acc{0, 0, 0};
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(densities[i]) || densities[i] < 0.0 ||
        !std::isfinite(deltas[i]))
      throw NumericError("composite: invalid density or delta");
    for (int c = 0; c < 3; ++c)
      if (!std::isfinite(colors[i][c]))
        throw NumericError("composite: non-finite color");
    const double alpha = alpha_from_density(densities[i], deltas[i]);
    const double w = transmittance * alpha;
    acc += colors[i] * w;
    transmittance -= w;
  }
  return acc + background * transmittance;
}

// Renders one pixel of the model at camera-specific time t_k (inference).
inline Vec3 render_pixel_at(const FieldModel& m, const CameraModel& cam,
                            int ix, int iy, double t_k, int n_samples,
                            const Vec3& background, bool jitter = false,
                            Rng* rng = nullptr) {
  const Ray ray = generate_pixel_ray(cam, ix, iy, m.bounds);
  DoubleCtx cx{m.params};
  const Vec3 dir = ray.valid ? ray.dir : cam.forward();
  const TimeContext<double> tc = make_time_context(m, cx, t_k, &dir);
  double out[3];
  render_ray_with<double>(
      ray, n_samples, jitter, rng, background,
      [&](const Vec3& pos, int, double rgb[3], double& sigma) {
        eval_point(m, cx, tc, pos, rgb, sigma);
      },
      out);
  return {out[0], out[1], out[2]};
}

// Spec form: render through the offset table (k = training-camera ordinal)
// or with the caller's raw time when k is absent.
inline Vec3 render_pixel(const FieldModel& m, const CameraModel& cam, int ix,
                         int iy, double t, std::optional<int> k,
                         int n_samples, const Vec3& background,
                         bool jitter = false, Rng* rng = nullptr) {
  const double t_k =
      k.has_value() ? m.offsets.shift_time(m.params, t, *k) : t;
  return render_pixel_at(m, cam, ix, iy, t_k, n_samples, background, jitter,
                         rng);
}

// Full-frame inference render, parallel over rows (deterministic: one writer
// per pixel, no cross-pixel reduction).
inline Image render_frame(const FieldModel& m, const CameraModel& cam,
                          double t_k, int n_samples, const Vec3& background,
                          int threads) {
  Image img(cam.width, cam.height);
  parallel_rows(cam.height, threads, [&](int y) {
    for (int x = 0; x < cam.width; ++x) {
      img.set_pixel(x, y, render_pixel_at(m, cam, x, y, t_k, n_samples,
                                          background));
    }
  });
  return img;
}

// Tape-mode ray render: returns the predicted color as tape variables so the
// loss can backpropagate into every parameter reachable from this ray,
// including the time offset inside t_k.
inline void render_ray_tape(const FieldModel& m, Tape& tape, const Ray& ray,
                            Var t_k, int n_samples, bool jitter, Rng* rng,
                            const Vec3& background, Var out[3]) {
  TapeCtx cx{tape};
  const Vec3 dir = ray.valid ? ray.dir : Vec3{0, 0, 1};
  const TimeContext<Var> tc = make_time_context(m, cx, t_k, &dir);
  render_ray_with<Var>(
      ray, n_samples, jitter, rng, background,
      [&](const Vec3& pos, int, Var rgb[3], Var& sigma) {
        eval_point(m, cx, tc, pos, rgb, sigma);
      },
      out);
}

}  // namespace synf
