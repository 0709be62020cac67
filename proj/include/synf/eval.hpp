#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "synf/dataset.hpp"
#include "synf/field_model.hpp"
#include "synf/metrics.hpp"
#include "synf/render.hpp"

namespace synf {

// Gauge-fixed offset error: both vectors are mean-subtracted (the global
// shift is unobservable), compared in frames, reported in seconds.
inline double offset_mae_seconds(const std::vector<double>& learned_norm,
                                 const std::vector<double>& gt_frames,
                                 const TimeMap& tm) {
  if (learned_norm.size() != gt_frames.size() || learned_norm.empty())
    throw DataError("offset MAE: camera count mismatch");
  const size_t n = learned_norm.size();
  std::vector<double> lf(n);
  for (size_t i = 0; i < n; ++i) lf[i] = learned_norm[i] / tm.frame_step();
  double ml = 0.0, mg = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ml += lf[i];
    mg += gt_frames[i];
  }
  ml /= n;
  mg /= n;
  double mae_frames = 0.0;
  for (size_t i = 0; i < n; ++i)
    mae_frames += std::abs((lf[i] - ml) - (gt_frames[i] - mg));
  mae_frames /= n;
  return tm.frames_to_seconds(mae_frames);
}

inline std::vector<double> gauge_fixed(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= v.empty() ? 1.0 : static_cast<double>(v.size());
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] - mean;
  return out;
}

// Renders a fixed pixel column at every frame time and stacks the columns
// left to right: an H x n_frames probe of temporal reconstruction quality.
inline Image spatiotemporal_image(const FieldModel& m, const CameraModel& cam,
                                  int column_px, double delta_norm,
                                  int n_samples, const Vec3& background,
                                  int threads) {
  if (column_px < 0 || column_px >= cam.width)
    throw DataError("column outside the image");
  const int n_frames = m.time_map.n_frames;
  Image img(n_frames, cam.height);
  parallel_rows(n_frames, threads, [&](int f) {
    const double t_k = m.time_map.frame_to_time(f) + delta_norm;
    DoubleCtx cx{m.params};
    const TimeContext<double> tc = make_time_context(
        m, cx, t_k, nullptr);
    for (int y = 0; y < cam.height; ++y) {
      const Ray ray = generate_pixel_ray(cam, column_px, y, m.bounds);
      double out[3];
      render_ray_with<double>(
          ray, n_samples, false, nullptr, background,
          [&](const Vec3& pos, int, double rgb[3], double& sigma) {
            eval_point(m, cx, tc, pos, rgb, sigma);
          },
          out);
      img.set_pixel(f, y, {out[0], out[1], out[2]});
    }
  });
  return img;
}

struct ViewMetrics {
  int camera_id = 0;
  std::string split;
  double psnr_db = 0.0;
  bool psnr_infinite = false;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<ViewMetrics> views;
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
  std::optional<double> offset_mae_seconds;
  std::vector<double> deltas_frames;  // learned offsets, gauge-fixed, frames
  std::optional<double> delta_test_frames;
  std::optional<double> lpips;  // intentionally always null in reports
  std::string config_fingerprint;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["views"] = nlohmann::json::array();
    for (const auto& v : views) {
      nlohmann::json jv;
      jv["camera_id"] = v.camera_id;
      jv["split"] = v.split;
      jv["psnr_db"] =
          v.psnr_infinite ? nlohmann::json(nullptr) : nlohmann::json(v.psnr_db);
      jv["psnr_infinite"] = v.psnr_infinite;
      jv["ssim"] = v.ssim;
      j["views"].push_back(jv);
    }
    j["mean_psnr_db"] = mean_psnr_db;
    j["mean_ssim"] = mean_ssim;
    j["offset_mae_seconds"] = offset_mae_seconds
                                  ? nlohmann::json(*offset_mae_seconds)
                                  : nlohmann::json(nullptr);
    j["deltas_frames"] = deltas_frames;
    j["delta_test_frames"] = delta_test_frames
                                 ? nlohmann::json(*delta_test_frames)
                                 : nlohmann::json(nullptr);
    j["lpips"] = nullptr;
    j["config_fingerprint"] = config_fingerprint;
    return j;
  }

  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport r;
    for (const auto& jv : j.at("views")) {
      ViewMetrics v;
      v.camera_id = jv.at("camera_id").get<int>();
      v.split = jv.at("split").get<std::string>();
      v.psnr_infinite = jv.at("psnr_infinite").get<bool>();
      if (!jv.at("psnr_db").is_null()) v.psnr_db = jv.at("psnr_db").get<double>();
      v.ssim = jv.at("ssim").get<double>();
      r.views.push_back(v);
    }
    r.mean_psnr_db = j.at("mean_psnr_db").get<double>();
    r.mean_ssim = j.at("mean_ssim").get<double>();
    if (!j.at("offset_mae_seconds").is_null())
      r.offset_mae_seconds = j.at("offset_mae_seconds").get<double>();
    r.deltas_frames = j.at("deltas_frames").get<std::vector<double>>();
    if (!j.at("delta_test_frames").is_null())
      r.delta_test_frames = j.at("delta_test_frames").get<double>();
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    return r;
  }
};

struct EvalOptions {
  int n_samples = 64;
  Vec3 background{1, 1, 1};
  int threads = 0;
  std::string views = "test";  // test | train | all
};

// Renders and scores the selected views. delta_per_camera holds the
// normalized time shift applied to each camera (learned offsets for train
// views, delta_test or 0 for the test view). Per-view PSNR comes from the
// MSE pooled over the whole video so it is monotone in the restricted loss.
inline EvalReport evaluate(const FieldModel& m, const VideoSet& video,
                           const std::vector<double>& delta_per_camera,
                           const EvalOptions& opt) {
  video.validate();
  if (static_cast<int>(delta_per_camera.size()) != video.n_cameras())
    throw DataError("evaluate: one delta per camera required");
  const int threads = opt.threads > 0 ? opt.threads : default_threads();
  EvalReport report;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  int scored = 0;
  for (int k = 0; k < video.n_cameras(); ++k) {
    const CameraModel& cam = video.cameras[k];
    const bool is_test = cam.split == Split::kTest;
    if (opt.views == "test" && !is_test) continue;
    if (opt.views == "train" && is_test) continue;
    double mse_total = 0.0;
    double ssim_acc = 0.0;
    for (int f = 0; f < video.n_frames; ++f) {
      const double t_k = m.time_map.frame_to_time(f) + delta_per_camera[k];
      const Image img =
          render_frame(m, cam, t_k, opt.n_samples, opt.background, threads);
      mse_total += mse_images_sum(img, video.frames[k][f]);
      ssim_acc += ssim(img, video.frames[k][f]);
    }
    const double video_mse_value =
        mse_total / (static_cast<double>(video.n_frames) * video.width() *
                     video.height() * 3.0);
    const PsnrResult p = psnr_from_mse(video_mse_value);
    ViewMetrics vm;
    vm.camera_id = cam.id;
    vm.split = split_name(cam.split);
    vm.psnr_db = p.db;
    vm.psnr_infinite = p.infinite;
    vm.ssim = ssim_acc / video.n_frames;
    report.views.push_back(vm);
    if (!p.infinite) psnr_sum += p.db;
    ssim_sum += vm.ssim;
    ++scored;
  }
  if (scored > 0) {
    report.mean_psnr_db = psnr_sum / scored;
    report.mean_ssim = ssim_sum / scored;
  }
  // Learned offsets (gauge-fixed, frames) and MAE against ground truth.
  const std::vector<double> learned = m.offsets.deltas(m.params);
  std::vector<double> learned_frames(learned.size());
  for (size_t i = 0; i < learned.size(); ++i)
    learned_frames[i] = learned[i] / m.time_map.frame_step();
  report.deltas_frames = gauge_fixed(learned_frames);
  if (video.offsets_gt) {
    // Ground truth covers every camera; restrict to the training cameras the
    // offset table knows about.
    std::vector<double> gt_train;
    const std::vector<int> train_cams = video.split_indices(Split::kTrain);
    if (train_cams.size() == learned.size()) {
      for (int ci : train_cams) gt_train.push_back((*video.offsets_gt)[ci]);
      report.offset_mae_seconds =
          offset_mae_seconds(learned, gt_train, m.time_map);
    }
  }
  return report;
}

}  // namespace synf
