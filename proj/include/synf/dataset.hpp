#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "synf/camera.hpp"
#include "synf/image.hpp"
#include "synf/png_io.hpp"
#include "synf/rng.hpp"
#include "synf/scene.hpp"

namespace synf {

// Multi-view video: K cameras x F frames of RGB in [0,1], plus the rig and,
// for synthetic data, the ground-truth per-camera offsets in frames.
struct VideoSet {
  std::vector<CameraModel> cameras;
  std::vector<std::vector<Image>> frames;  // [camera][frame]
  double fps = 30.0;
  int n_frames = 0;
  Aabb bounds;
  std::optional<std::vector<double>> offsets_gt;  // frames, rebased (min 0)

  int width() const { return cameras.empty() ? 0 : cameras[0].width; }
  int height() const { return cameras.empty() ? 0 : cameras[0].height; }
  int n_cameras() const { return static_cast<int>(cameras.size()); }

  std::vector<int> split_indices(Split s) const {
    std::vector<int> idx;
    for (int i = 0; i < n_cameras(); ++i)
      if (cameras[i].split == s) idx.push_back(i);
    return idx;
  }

  void validate() const {
    if (cameras.empty()) throw DataError("video set has no cameras");
    if (frames.size() != cameras.size())
      throw DataError("camera/frame table mismatch");
    for (size_t k = 0; k < cameras.size(); ++k) {
      cameras[k].validate();
      if (static_cast<int>(frames[k].size()) != n_frames)
        throw DataError("camera " + std::to_string(cameras[k].id) +
                        " has wrong frame count");
      for (const Image& im : frames[k])
        if (im.width != width() || im.height != height())
          throw DataError("frame size mismatch across cameras");
    }
  }
};

// Per-camera offsets in frames ~ N(0, sigma^2), optionally rounded to
// integers. Raw draws: the mean is not forced to zero.
inline std::vector<double> sample_offsets(int n_cameras, double sigma_frames,
                                          uint64_t seed, bool round_to_int) {
  if (n_cameras < 2) throw UsageError("need at least 2 cameras");
  if (sigma_frames < 0.0) throw UsageError("sigma must be >= 0");
  Rng rng = Rng::keyed(seed, 0x0ff5e7);
  std::vector<double> out(n_cameras);
  for (int k = 0; k < n_cameras; ++k) {
    double v = sigma_frames * rng.normal();
    if (round_to_int) v = std::round(v) + 0.0;  // normalize -0
    out[k] = v;
  }
  return out;
}

// Renders the analytic scene for every camera and frame; frame f images the
// scene at f/fps seconds through the shared quadrature at a fixed high
// sample count.
inline VideoSet render_ground_truth(const DynamicScene& scene,
                                    const std::vector<CameraModel>& cameras,
                                    double fps, int n_frames, int threads,
                                    int n_samples = kGroundTruthSamples) {
  if (n_frames < 2) throw UsageError("need at least 2 frames");
  scene.validate();
  VideoSet vs;
  vs.cameras = cameras;
  vs.fps = fps;
  vs.n_frames = n_frames;
  vs.bounds = scene.bounds;
  vs.frames.resize(cameras.size());
  for (size_t k = 0; k < cameras.size(); ++k) {
    vs.frames[k].reserve(n_frames);
    for (int f = 0; f < n_frames; ++f)
      vs.frames[k].push_back(
          render_scene_frame(scene, cameras[k], f / fps, n_samples, threads));
  }
  vs.validate();
  return vs;
}

// Temporal translation: camera k's output frame f is its input frame
// f + (offset_k - min_offset); the output is cropped to the overlapping
// interval and ground-truth offsets are stored rebased so min = 0 (only
// relative offsets are identifiable).
inline VideoSet apply_unsync(const VideoSet& video,
                             const std::vector<int>& offsets_frames) {
  video.validate();
  if (static_cast<int>(offsets_frames.size()) != video.n_cameras())
    throw DataError("one offset per camera required");
  int max_abs = 0;
  for (int o : offsets_frames) max_abs = std::max(max_abs, std::abs(o));
  if (max_abs >= video.n_frames / 4)
    throw DataError("offsets too large: no usable overlap remains");
  const auto [lo_it, hi_it] =
      std::minmax_element(offsets_frames.begin(), offsets_frames.end());
  const int lo = *lo_it, hi = *hi_it;
  const int out_frames = video.n_frames - (hi - lo);

  VideoSet out;
  out.cameras = video.cameras;
  out.fps = video.fps;
  out.n_frames = out_frames;
  out.bounds = video.bounds;
  out.frames.resize(video.cameras.size());
  std::vector<double> rebased(video.cameras.size());
  for (int k = 0; k < video.n_cameras(); ++k) {
    const int shift = offsets_frames[k] - lo;
    rebased[k] = shift;
    out.frames[k].reserve(out_frames);
    for (int f = 0; f < out_frames; ++f)
      out.frames[k].push_back(video.frames[k][f + shift]);
  }
  out.offsets_gt = std::move(rebased);
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directory layout:
//   meta.json + cam_00/frame_0000.png ...

namespace detail {
inline std::string cam_dir_name(int k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "cam_%02d", k);
  return buf;
}
inline std::string frame_file_name(int f) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "frame_%04d.png", f);
  return buf;
}
}  // namespace detail

inline void save_dataset(const std::filesystem::path& dir, const VideoSet& vs,
                         bool force = false) {
  namespace fs = std::filesystem;
  vs.validate();
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw DataError("output directory exists and is not empty: " +
                    dir.string() + " (use --force to overwrite)");
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["fps"] = vs.fps;
  meta["n_frames"] = vs.n_frames;
  meta["width"] = vs.width();
  meta["height"] = vs.height();
  meta["bounds"] = {vs.bounds.lo.x, vs.bounds.lo.y, vs.bounds.lo.z,
                    vs.bounds.hi.x, vs.bounds.hi.y, vs.bounds.hi.z};
  meta["cameras"] = nlohmann::json::array();
  for (const auto& cam : vs.cameras) {
    nlohmann::json jc;
    jc["id"] = cam.id;
    jc["focal"] = cam.focal;
    jc["cx"] = cam.cx;
    jc["cy"] = cam.cy;
    jc["width"] = cam.width;
    jc["height"] = cam.height;
    std::vector<double> pose(16, 0.0);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) pose[r * 4 + c] = cam.pose.rot(r, c);
      pose[r * 4 + 3] = cam.pose.trans[r];
    }
    pose[15] = 1.0;
    jc["pose"] = pose;
    jc["split"] = split_name(cam.split);
    meta["cameras"].push_back(jc);
  }
  if (vs.offsets_gt) meta["offsets_gt_frames"] = *vs.offsets_gt;
  std::ofstream mf(dir / "meta.json");
  mf << meta.dump(2) << "\n";
  if (!mf) throw DataError("failed to write meta.json");

  for (int k = 0; k < vs.n_cameras(); ++k) {
    const fs::path cdir = dir / detail::cam_dir_name(k);
    fs::create_directories(cdir);
    for (int f = 0; f < vs.n_frames; ++f)
      write_png((cdir / detail::frame_file_name(f)).string(), vs.frames[k][f]);
  }
}

inline VideoSet load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path meta_path = dir / "meta.json";
  if (!fs::exists(meta_path))
    throw DataError("not a dataset directory (no meta.json): " + dir.string());
  nlohmann::json meta;
  {
    std::ifstream mf(meta_path);
    try {
      mf >> meta;
    } catch (const std::exception& e) {
      throw DataError(std::string("bad meta.json: ") + e.what());
    }
  }
  VideoSet vs;
  try {
    vs.fps = meta.at("fps").get<double>();
    vs.n_frames = meta.at("n_frames").get<int>();
    const int width = meta.at("width").get<int>();
    const int height = meta.at("height").get<int>();
    const auto b = meta.at("bounds").get<std::vector<double>>();
    if (b.size() != 6) throw DataError("bounds must have 6 entries");
    vs.bounds = Aabb{{b[0], b[1], b[2]}, {b[3], b[4], b[5]}};
    for (const auto& jc : meta.at("cameras")) {
      CameraModel cam;
      cam.id = jc.at("id").get<int>();
      cam.focal = jc.at("focal").get<double>();
      cam.cx = jc.at("cx").get<double>();
      cam.cy = jc.at("cy").get<double>();
      cam.width = jc.value("width", width);
      cam.height = jc.value("height", height);
      const auto pose = jc.at("pose").get<std::vector<double>>();
      if (pose.size() != 16) throw DataError("pose must have 16 entries");
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) cam.pose.rot(r, c) = pose[r * 4 + c];
        cam.pose.trans[r] = pose[r * 4 + 3];
      }
      cam.split = split_from_name(jc.at("split").get<std::string>());
      vs.cameras.push_back(cam);
    }
    if (meta.contains("offsets_gt_frames"))
      vs.offsets_gt = meta.at("offsets_gt_frames").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid meta.json: ") + e.what());
  }
  vs.frames.resize(vs.cameras.size());
  for (int k = 0; k < vs.n_cameras(); ++k) {
    vs.frames[k].reserve(vs.n_frames);
    for (int f = 0; f < vs.n_frames; ++f) {
      const fs::path p =
          dir / detail::cam_dir_name(k) / detail::frame_file_name(f);
      if (!fs::exists(p)) throw DataError("missing frame: " + p.string());
      vs.frames[k].push_back(read_png(p.string()));
    }
  }
  vs.validate();
  return vs;
}

}  // namespace synf
