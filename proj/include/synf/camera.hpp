#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "synf/common.hpp"
#include "synf/encoding.hpp"

namespace synf {

enum class Split { kTrain, kTest };

inline std::string split_name(Split s) {
  return s == Split::kTrain ? "train" : "test";
}
inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw DataError("unknown camera split '" + s + "'");
}

// Pinhole camera, CV convention: x right, y down, z forward in camera space.
// pose maps camera coordinates to world coordinates.
struct CameraModel {
  int id = 0;
  double focal = 0.0;  // pixels
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  RigidPose pose;
  Split split = Split::kTrain;

  Vec3 position() const { return pose.trans; }
  Vec3 forward() const { return pose.rot * Vec3{0, 0, 1}; }

  void validate() const {
    if (focal <= 0.0) throw DataError("camera focal must be > 0");
    if (width < 8 || height < 8)
      throw DataError("camera resolution must be at least 8x8");
    const Mat3& r = pose.rot;
    const Mat3 rt = r.transposed();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += rt(i, k) * r(k, j);
        const double expect = i == j ? 1.0 : 0.0;
        if (std::abs(dot - expect) > 1e-6)
          throw DataError("camera rotation is not orthonormal");
      }
    if (std::abs(r.det() - 1.0) > 1e-6)
      throw DataError("camera rotation must have det = +1");
  }
};

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit
  double near = 0.0, far = 0.0;
  bool valid = false;  // false: missed the scene bounds, renders background
};

// Ray through continuous image-plane point (u, v) in pixels. Callers address
// pixel (ix, iy) through its center (ix + 0.5, iy + 0.5).
inline Ray generate_ray(const CameraModel& cam, double u, double v,
                        const Aabb& bounds) {
  Ray ray;
  ray.origin = cam.position();
  const Vec3 dir_cam{(u - cam.cx) / cam.focal, (v - cam.cy) / cam.focal, 1.0};
  ray.dir = cam.pose.rotate(dir_cam).normalized();
  double t0, t1;
  ray.valid = bounds.clip_ray(ray.origin, ray.dir, t0, t1);
  if (ray.valid) {
    ray.near = t0;
    ray.far = t1;
  }
  return ray;
}

inline Ray generate_pixel_ray(const CameraModel& cam, int ix, int iy,
                              const Aabb& bounds) {
  if (ix < 0 || ix >= cam.width || iy < 0 || iy >= cam.height)
    throw DataError("pixel out of image bounds");
  return generate_ray(cam, ix + 0.5, iy + 0.5, bounds);
}

// Look-at pose: camera at `eye` with +z toward `target`, world up hint +y.
inline RigidPose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 fwd = (target - eye).normalized();
  Vec3 up{0, 1, 0};
  if (std::abs(fwd.dot(up)) > 0.999) up = Vec3{1, 0, 0};
  const Vec3 right = fwd.cross(up).normalized();
  const Vec3 down = fwd.cross(right);  // y-down camera axis
  RigidPose pose;
  for (int r = 0; r < 3; ++r) {
    pose.rot(r, 0) = right[r];
    pose.rot(r, 1) = down[r];
    pose.rot(r, 2) = fwd[r];
  }
  pose.trans = eye;
  return pose;
}

// Forward-facing rig: n_train cameras spread over a spherical cap looking at
// the scene center, plus one test camera at the cap center. Uses a
// golden-angle spiral so any camera count stays roughly uniform.
inline std::vector<CameraModel> build_rig(int n_train, int width, int height,
                                          double fov_deg = 45.0,
                                          double distance = 2.5,
                                          double cap_deg = 24.0) {
  if (n_train < 2) throw DataError("rig needs at least 2 training cameras");
  std::vector<CameraModel> cams;
  const double focal = 0.5 * width / std::tan(0.5 * fov_deg * kPi / 180.0);
  const double cap = cap_deg * kPi / 180.0;
  auto make_cam = [&](int id, double polar, double azimuth, Split split) {
    const Vec3 eye{distance * std::sin(polar) * std::cos(azimuth),
                   distance * std::sin(polar) * std::sin(azimuth),
                   distance * std::cos(polar)};
    CameraModel cam;
    cam.id = id;
    cam.focal = focal;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.width = width;
    cam.height = height;
    cam.pose = look_at(eye, Vec3{0, 0, 0});
    cam.split = split;
    return cam;
  };
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n_train; ++i) {
    // Area-uniform in cos(polar) over the cap, radius grows outward so the
    // first camera is not at the exact center (that spot is the test view).
    const double frac = (i + 1.0) / n_train;
    const double polar = std::acos(1.0 - frac * (1.0 - std::cos(cap)));
    const double azimuth = i * golden;
    cams.push_back(make_cam(i, polar, azimuth, Split::kTrain));
  }
  cams.push_back(make_cam(n_train, 0.0, 0.0, Split::kTest));
  for (const auto& c : cams) c.validate();
  return cams;
}

}  // namespace synf
