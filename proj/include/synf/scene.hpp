#pragma once

#include <cmath>
#include <vector>

#include "synf/camera.hpp"
#include "synf/common.hpp"
#include "synf/encoding.hpp"
#include "synf/image.hpp"
#include "synf/render.hpp"
#include "synf/rng.hpp"

namespace synf {

// Gaussian emission blob on a sinusoidal trajectory. Everything is smooth in
// t, so losses built on renders of this scene are differentiable in time
// shifts.
struct MovingBlob {
  Vec3 base;      // trajectory center
  Vec3 amp;       // per-axis oscillation amplitude
  Vec3 freq_hz;   // per-axis oscillation frequency
  Vec3 phase;     // per-axis phase, radians
  double radius = 0.2;        // world units
  double peak_density = 20.0; // 1 / world unit
  Vec3 color{1, 1, 1};

  Vec3 center(double t_sec) const {
    Vec3 c;
    for (int a = 0; a < 3; ++a)
      c[a] = base[a] + amp[a] * std::sin(2.0 * kPi * freq_hz[a] * t_sec +
                                         phase[a]);
    return c;
  }
  double density(const Vec3& x, double t_sec) const {
    const double r2 = (x - center(t_sec)).norm2();
    return peak_density * std::exp(-r2 / (2.0 * radius * radius));
  }
};

// Analytic emission/density field used as ground truth.
struct DynamicScene {
  std::vector<MovingBlob> blobs;
  Vec3 background{1, 1, 1};
  Aabb bounds{{-1, -1, -1}, {1, 1, 1}};
  double duration_s = 4.0;

  void validate() const {
    if (bounds.empty()) throw DataError("scene bounds are empty");
    for (const auto& b : blobs) {
      if (b.radius <= 0.0) throw DataError("blob radius must be > 0");
      if (b.peak_density < 0.0) throw DataError("blob density must be >= 0");
      for (int a = 0; a < 3; ++a) {
        const double reach = std::abs(b.amp[a]);
        if (b.base[a] - reach < bounds.lo[a] ||
            b.base[a] + reach > bounds.hi[a])
          throw DataError("blob trajectory leaves the scene bounds");
      }
    }
  }

  // sigma = sum of blob densities; color = density-weighted blend of blob
  // colors (regularized so it stays finite where sigma ~ 0).
  void eval(const Vec3& x, double t_sec, Vec3& color, double& sigma) const {
    constexpr double kEps = 1e-12;
    sigma = 0.0;
    Vec3 mix{kEps, kEps, kEps};
    for (const auto& b : blobs) {
      const double d = b.density(x, t_sec);
      sigma += d;
      mix += b.color * d;
    }
    color = mix / (sigma + kEps);
  }
};

// Deterministic random scene. Blobs get distinct colors, staggered speeds
// and amplitudes large enough that a few frames of time shift visibly moves
// them (a requirement for offset recovery to be observable at all).
inline DynamicScene make_random_scene(uint64_t seed, int n_blobs,
                                      double duration_s) {
  if (n_blobs < 1) throw UsageError("scene needs at least one blob");
  DynamicScene scene;
  scene.duration_s = duration_s;
  Rng rng = Rng::keyed(seed, 0xb10b);
  static const Vec3 palette[6] = {{0.92, 0.22, 0.18}, {0.20, 0.45, 0.90},
                                  {0.95, 0.75, 0.10}, {0.15, 0.70, 0.35},
                                  {0.70, 0.25, 0.80}, {0.10, 0.75, 0.75}};
  for (int i = 0; i < n_blobs; ++i) {
    MovingBlob b;
    b.radius = rng.uniform(0.14, 0.22);
    b.peak_density = rng.uniform(18.0, 30.0);
    b.color = palette[i % 6];
    const double margin = b.radius + 0.05;
    for (int a = 0; a < 3; ++a) {
      b.amp[a] = rng.uniform(0.25, 0.55);
      const double room = 1.0 - margin - b.amp[a];
      b.base[a] = rng.uniform(-room, room);
      // 0.3..0.7 cycles per second: crosses a fair part of the box within
      // the clip without aliasing at 30 fps.
      b.freq_hz[a] = rng.uniform(0.3, 0.7);
      b.phase[a] = rng.uniform(0.0, 2.0 * kPi);
    }
    scene.blobs.push_back(b);
  }
  scene.validate();
  return scene;
}

// Ground-truth frame render through the shared quadrature (midpoint sampling,
// fixed high sample count keeps it consistent with model renders).
inline constexpr int kGroundTruthSamples = 256;

inline Image render_scene_frame(const DynamicScene& scene,
                                const CameraModel& cam, double t_sec,
                                int n_samples, int threads) {
  scene.validate();
  Image img(cam.width, cam.height);
  parallel_rows(cam.height, threads, [&](int y) {
    for (int x = 0; x < cam.width; ++x) {
      const Ray ray = generate_pixel_ray(cam, x, y, scene.bounds);
      double out[3];
      render_ray_with<double>(
          ray, n_samples, /*jitter=*/false, nullptr, scene.background,
          [&](const Vec3& pos, int, double rgb[3], double& sigma) {
            Vec3 c;
            scene.eval(pos, t_sec, c, sigma);
            rgb[0] = c.x;
            rgb[1] = c.y;
            rgb[2] = c.z;
          },
          out);
      img.set_pixel(x, y, {out[0], out[1], out[2]});
    }
  });
  return img;
}

}  // namespace synf
