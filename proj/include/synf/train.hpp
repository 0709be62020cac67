#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "synf/adam.hpp"
#include "synf/dataset.hpp"
#include "synf/field_model.hpp"
#include "synf/metrics.hpp"
#include "synf/render.hpp"
#include "synf/rng.hpp"
#include "synf/threading.hpp"

namespace synf {

// ---------------------------------------------------------------------------
// Ray sampling

struct RaySpec {
  int cam_index = 0;      // index into video.cameras
  int train_ordinal = 0;  // index into the offset table (-1: not a train cam)
  int frame = 0;
  int px = 0, py = 0;
  Vec3 target;
};

enum class SamplerKind { kUniform, kTemporalVariance };

inline SamplerKind sampler_from_name(const std::string& s) {
  if (s == "uniform") return SamplerKind::kUniform;
  if (s == "temporal-variance") return SamplerKind::kTemporalVariance;
  throw UsageError("unknown sampler '" + s +
                   "' (expected uniform or temporal-variance)");
}
inline std::string sampler_name(SamplerKind k) {
  return k == SamplerKind::kUniform ? "uniform" : "temporal-variance";
}

// Per-pixel sampling weights for one camera: eps + std-dev over frames of
// pixel luminance, normalized to sum 1. Static video -> uniform.
inline std::vector<double> temporal_variance_weights(const VideoSet& video,
                                                     int cam_index) {
  if (video.n_frames < 2) throw UsageError("need at least 2 frames");
  const int n_px = video.width() * video.height();
  std::vector<double> mean(n_px, 0.0), sq(n_px, 0.0);
  for (const Image& frame : video.frames[cam_index]) {
    for (int i = 0; i < n_px; ++i) {
      const float* p = frame.data.data() + 3 * i;
      const double lum = (static_cast<double>(p[0]) + p[1] + p[2]) / 3.0;
      mean[i] += lum;
      sq[i] += lum * lum;
    }
  }
  constexpr double kEps = 1e-3;
  const double inv_f = 1.0 / video.n_frames;
  double total = 0.0;
  std::vector<double> w(n_px);
  for (int i = 0; i < n_px; ++i) {
    const double mu = mean[i] * inv_f;
    const double var = std::max(0.0, sq[i] * inv_f - mu * mu);
    w[i] = kEps + std::sqrt(var);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

// Draws training rays: camera and frame uniform, pixel either uniform or
// proportional to the temporal-variance weights.
class RaySampler {
 public:
  RaySampler(const VideoSet& video, SamplerKind kind,
             std::optional<int> only_camera = std::nullopt)
      : video_(&video) {
    if (only_camera) {
      cams_ = {*only_camera};
      ordinals_ = {-1};
    } else {
      cams_ = video.split_indices(Split::kTrain);
      ordinals_.resize(cams_.size());
      for (size_t i = 0; i < cams_.size(); ++i)
        ordinals_[i] = static_cast<int>(i);
    }
    if (cams_.empty()) throw DataError("no cameras to sample from");
    if (kind == SamplerKind::kTemporalVariance) {
      cdf_.resize(cams_.size());
      for (size_t i = 0; i < cams_.size(); ++i) {
        const std::vector<double> w =
            temporal_variance_weights(video, cams_[i]);
        cdf_[i].resize(w.size());
        double acc = 0.0;
        for (size_t j = 0; j < w.size(); ++j) {
          acc += w[j];
          cdf_[i][j] = acc;
        }
        cdf_[i].back() = 1.0;
      }
    }
  }

  RaySpec draw(Rng& rng) const {
    RaySpec r;
    const size_t ci = static_cast<size_t>(rng.below(cams_.size()));
    r.cam_index = cams_[ci];
    r.train_ordinal = ordinals_[ci];
    r.frame = static_cast<int>(rng.below(video_->n_frames));
    const int w = video_->width();
    int pixel;
    if (cdf_.empty()) {
      pixel = static_cast<int>(rng.below(static_cast<uint64_t>(w) *
                                         video_->height()));
    } else {
      const double u = rng.uniform();
      const auto& cdf = cdf_[ci];
      pixel = static_cast<int>(
          std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      if (pixel >= static_cast<int>(cdf.size()))
        pixel = static_cast<int>(cdf.size()) - 1;
    }
    r.px = pixel % w;
    r.py = pixel / w;
    r.target = video_->frames[r.cam_index][r.frame].get_pixel(r.px, r.py);
    return r;
  }

 private:
  const VideoSet* video_;
  std::vector<int> cams_;
  std::vector<int> ordinals_;
  std::vector<std::vector<double>> cdf_;
};

// ---------------------------------------------------------------------------
// Loss

// Mean over rays of || C_hat(r, t + delta_k) - C(r, t) ||^2 (channel sum),
// evaluated without the tape. time_shift/offset_shift exist to probe the
// gauge freedom: the query time is (t + time_shift) + (delta_k + offset_shift).
inline double rgb_loss_value(const FieldModel& m,
                             const std::vector<CameraModel>& cameras,
                             std::span<const RaySpec> rays, int n_samples,
                             const Vec3& background, double time_shift = 0.0,
                             double offset_shift = 0.0) {
  if (rays.empty()) throw UsageError("rgb_loss: empty batch");
  double total = 0.0;
  for (const RaySpec& r : rays) {
    const double t = m.time_map.frame_to_time(r.frame) + time_shift;
    double t_k = t;
    if (r.train_ordinal >= 0)
      t_k = t + m.offsets.delta(m.params, r.train_ordinal) + offset_shift;
    const Vec3 c = render_pixel_at(m, cameras[r.cam_index], r.px, r.py, t_k,
                                   n_samples, background);
    total += (c - r.target).norm2();
  }
  return total / static_cast<double>(rays.size());
}

// Tape-mode batch loss: accumulates d(mean loss)/d(params) into grads and
// returns the loss. Single-threaded; training runs its own chunked version.
inline double rgb_loss_backward(const FieldModel& m,
                                const std::vector<CameraModel>& cameras,
                                std::span<const RaySpec> rays, int n_samples,
                                const Vec3& background,
                                std::vector<double>& grads, Tape& tape) {
  if (rays.empty()) throw UsageError("rgb_loss: empty batch");
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(rays.size());
  for (const RaySpec& r : rays) {
    tape.reset();
    const double t = m.time_map.frame_to_time(r.frame);
    Var t_k(t);
    if (r.train_ordinal >= 0)
      t_k = m.offsets.shift_time(tape, m.params, t, r.train_ordinal);
    const Ray ray =
        generate_pixel_ray(cameras[r.cam_index], r.px, r.py, m.bounds);
    Var out[3];
    render_ray_tape(m, tape, ray, t_k, n_samples, /*jitter=*/false, nullptr,
                    background, out);
    Var dr = out[0] - Var(r.target.x);
    Var dg = out[1] - Var(r.target.y);
    Var db = out[2] - Var(r.target.z);
    Var loss = dr * dr + dg * dg + db * db;
    total += loss.v;
    tape.backward(loss, inv_n, grads);
  }
  return total * inv_n;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  FieldConfig field;
  int iterations = 6000;
  int batch_rays = 1024;
  int n_samples = 64;
  bool jitter = true;
  double lr_field = 2e-2;        // grid tensors
  double lr_mlp = 5e-3;          // MLP / decoder tensors
  double lr_offset_ratio = 0.1;  // offset lr = lr_field * ratio
  int offset_warmup_iters = 500;
  AdamConfig adam;
  uint64_t seed = 1;
  SamplerKind sampler = SamplerKind::kTemporalVariance;
  int eval_every = 250;
  bool no_offsets = false;
  Vec3 background{1, 1, 1};
  int threads = 0;  // 0: hardware concurrency
  double t_lo = -0.8, t_hi = 0.8;

  void validate() const {
    if (iterations < 1 || batch_rays < 1 || n_samples < 1 || eval_every < 1)
      throw UsageError("train config: counts must be positive");
    if (lr_field <= 0 || lr_mlp <= 0 || lr_offset_ratio < 0)
      throw UsageError("train config: learning rates must be positive");
    if (offset_warmup_iters >= iterations)
      throw UsageError("offset warm-up must be shorter than the run");
    if (t_lo >= t_hi) throw UsageError("bad time normalization range");
  }
};

struct OffsetHistory {
  std::vector<int64_t> iters;
  std::vector<std::vector<double>> deltas_norm;  // row per snapshot

  void to_csv(const std::string& path, const TimeMap& tm) const {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << "iteration";
    if (!deltas_norm.empty())
      for (size_t k = 0; k < deltas_norm[0].size(); ++k)
        f << ",delta_frames_cam" << k;
    f << "\n";
    for (size_t i = 0; i < iters.size(); ++i) {
      f << iters[i];
      for (double d : deltas_norm[i]) f << "," << d / tm.frame_step();
      f << "\n";
    }
  }
};

struct MetricsRecord {
  int64_t iter = 0;
  double loss = 0.0;
  double psnr_train = 0.0;
  std::vector<double> deltas_frames;
};

struct TrainResult {
  FieldModel model;
  OffsetHistory history;
  std::vector<MetricsRecord> log;
};

namespace detail {
inline std::string param_norm_diagnostic(const ParameterStore& st) {
  std::ostringstream os;
  for (const TensorInfo& t : st.tensors()) {
    double n2 = 0.0;
    for (int64_t i = t.offset; i < t.offset + t.size; ++i)
      n2 += st.data()[i] * st.data()[i];
    os << " " << t.name << "=" << std::sqrt(n2);
  }
  return os.str();
}
}  // namespace detail

using EvalCallback = std::function<void(const MetricsRecord&)>;

// Joint optimization of field parameters and per-camera time offsets.
// Deterministic for a fixed (dataset, config, seed) at any thread count:
// batches are drawn sequentially, rays are processed in fixed-size chunks
// with per-chunk gradient buffers, and chunks are reduced in index order.
inline TrainResult train(const VideoSet& video, const TrainConfig& cfg,
                         const EvalCallback& on_eval = nullptr) {
  cfg.validate();
  video.validate();
  const std::vector<int> train_cams = video.split_indices(Split::kTrain);
  if (train_cams.size() < 2)
    throw DataError("training needs at least 2 train cameras");
  if (video.n_frames < 2) throw DataError("training needs at least 2 frames");

  TimeMap tm;
  tm.n_frames = video.n_frames;
  tm.fps = video.fps;
  tm.t_lo = cfg.t_lo;
  tm.t_hi = cfg.t_hi;
  std::vector<int> train_ids;
  for (int ci : train_cams) train_ids.push_back(video.cameras[ci].id);

  TrainResult result{build_field_model(cfg.field, tm, video.bounds,
                                       std::move(train_ids)),
                     {}, {}};
  FieldModel& model = result.model;
  model.offsets.set_frozen(cfg.no_offsets);

  const int threads = cfg.threads > 0 ? cfg.threads : default_threads();
  RaySampler sampler(video, cfg.sampler);
  AdamState adam;
  adam.init(model.params.total_size());
  const LearningRates lrs{cfg.lr_field, cfg.lr_mlp,
                          cfg.lr_field * cfg.lr_offset_ratio};

  constexpr int kChunkRays = 128;  // fixed: reduction order never depends on
                                   // the worker count
  const int n_chunks = (cfg.batch_rays + kChunkRays - 1) / kChunkRays;
  std::vector<Tape> tapes;
  tapes.reserve(n_chunks);
  for (int c = 0; c < n_chunks; ++c) tapes.emplace_back(&model.params);
  std::vector<std::vector<double>> chunk_grads(
      n_chunks, std::vector<double>(model.params.total_size(), 0.0));
  std::vector<double> chunk_loss(n_chunks, 0.0);
  std::vector<double> grads(model.params.total_size(), 0.0);
  std::vector<RaySpec> batch(cfg.batch_rays);

  const TensorInfo& offsets_info =
      model.params.info(model.offsets.tensor_id());
  const double inv_batch = 1.0 / cfg.batch_rays;

  double loss_accum = 0.0;
  int loss_count = 0;
  auto snapshot = [&](int64_t iter_idx, double mean_loss) {
    result.history.iters.push_back(iter_idx);
    result.history.deltas_norm.push_back(model.offsets.deltas(model.params));
    MetricsRecord rec;
    rec.iter = iter_idx;
    rec.loss = mean_loss;
    rec.psnr_train =
        mean_loss > 0.0 ? 10.0 * std::log10(3.0 / mean_loss) : 99.0;
    for (double d : result.history.deltas_norm.back())
      rec.deltas_frames.push_back(d / tm.frame_step());
    result.log.push_back(rec);
    if (on_eval) on_eval(rec);
  };

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    Rng batch_rng = Rng::keyed(cfg.seed, 0xba7c4, static_cast<uint64_t>(iter));
    for (int i = 0; i < cfg.batch_rays; ++i) batch[i] = sampler.draw(batch_rng);

    parallel_chunks(n_chunks, threads, [&](int c) {
      Tape& tape = tapes[c];
      std::vector<double>& gbuf = chunk_grads[c];
      std::fill(gbuf.begin(), gbuf.end(), 0.0);
      double closs = 0.0;
      const int lo = c * kChunkRays;
      const int hi = std::min(cfg.batch_rays, lo + kChunkRays);
      for (int r = lo; r < hi; ++r) {
        const RaySpec& rs = batch[r];
        tape.reset();
        const double t = tm.frame_to_time(rs.frame);
        Var t_k = model.offsets.shift_time(tape, model.params, t,
                                           rs.train_ordinal);
        const Ray ray = generate_pixel_ray(video.cameras[rs.cam_index], rs.px,
                                           rs.py, model.bounds);
        Rng jitter_rng = Rng::keyed(
            cfg.seed, 0x217e5,
            static_cast<uint64_t>(iter) * cfg.batch_rays + r);
        Var out[3];
        render_ray_tape(model, tape, ray, t_k, cfg.n_samples, cfg.jitter,
                        &jitter_rng, cfg.background, out);
        Var dr = out[0] - Var(rs.target.x);
        Var dg = out[1] - Var(rs.target.y);
        Var db = out[2] - Var(rs.target.z);
        Var loss = dr * dr + dg * dg + db * db;
        closs += loss.v;
        tape.backward(loss, inv_batch, gbuf);
      }
      chunk_loss[c] = closs;
    });

    std::fill(grads.begin(), grads.end(), 0.0);
    double loss = 0.0;
    for (int c = 0; c < n_chunks; ++c) {
      loss += chunk_loss[c];
      const std::vector<double>& gbuf = chunk_grads[c];
      for (size_t i = 0; i < grads.size(); ++i) grads[i] += gbuf[i];
    }
    loss *= inv_batch;
    if (!std::isfinite(loss))
      throw NumericError(
          "non-finite loss at iteration " + std::to_string(iter) +
          "; parameter norms:" + detail::param_norm_diagnostic(model.params));

    if (iter < cfg.offset_warmup_iters || cfg.no_offsets) {
      for (int64_t i = offsets_info.offset;
           i < offsets_info.offset + offsets_info.size; ++i)
        grads[static_cast<size_t>(i)] = 0.0;
    }
    adam_step(model.params, grads, adam, cfg.adam, lrs);

    loss_accum += loss;
    ++loss_count;
    if ((iter + 1) % cfg.eval_every == 0 || iter + 1 == cfg.iterations) {
      snapshot(iter + 1, loss_accum / loss_count);
      loss_accum = 0.0;
      loss_count = 0;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Test-view offset calibration against a frozen model

struct TestOffsetConfig {
  int batch_rays = 256;
  int n_samples = 64;
  double lr = 4e-3;
  uint64_t seed = 11;
  AdamConfig adam;
  Vec3 background{1, 1, 1};
  int threads = 0;
};

struct TestOffsetResult {
  double delta_norm = 0.0;
  double loss_at_zero = 0.0;   // full-video MSE at delta = 0
  double loss_at_delta = 0.0;  // full-video MSE at the returned delta
  int iters_run = 0;
};

// Full-video MSE of camera `cam_index` rendered at t + delta_norm.
inline double video_mse(const FieldModel& m, const VideoSet& video,
                        int cam_index, double delta_norm, int n_samples,
                        const Vec3& background, int threads) {
  double total = 0.0;
  for (int f = 0; f < video.n_frames; ++f) {
    const double t_k = m.time_map.frame_to_time(f) + delta_norm;
    const Image img = render_frame(m, video.cameras[cam_index], t_k, n_samples,
                                   background, threads);
    total += mse_images_sum(img, video.frames[cam_index][f]);
  }
  return total / (static_cast<double>(video.n_frames) * video.width() *
                  video.height() * 3.0);
}

// Optimizes only delta_test against the frozen model on one camera's video,
// then returns the better of {0, adam result} under the full restricted
// loss. The model is const throughout.
inline TestOffsetResult optimize_test_offset(const FieldModel& m,
                                             const VideoSet& video,
                                             int cam_index, int iters,
                                             const TestOffsetConfig& cfg) {
  const int threads = cfg.threads > 0 ? cfg.threads : default_threads();
  TestOffsetResult res;
  res.loss_at_zero = video_mse(m, video, cam_index, 0.0, cfg.n_samples,
                               cfg.background, threads);
  if (iters <= 0) {
    res.loss_at_delta = res.loss_at_zero;
    return res;
  }

  RaySampler sampler(video, SamplerKind::kTemporalVariance, cam_index);
  double delta = 0.0;
  double m1 = 0.0, m2 = 0.0;
  double first_loss = -1.0;

  constexpr int kChunkRays = 64;
  const int n_chunks = (cfg.batch_rays + kChunkRays - 1) / kChunkRays;
  std::vector<Tape> tapes;
  for (int c = 0; c < n_chunks; ++c) tapes.emplace_back(&m.params);
  // Parameter gradients land here and are ignored; only d(loss)/d(delta)
  // is consumed.
  std::vector<std::vector<double>> scratch(
      n_chunks, std::vector<double>(m.params.total_size(), 0.0));
  std::vector<double> chunk_loss(n_chunks, 0.0), chunk_dg(n_chunks, 0.0);
  std::vector<RaySpec> batch(cfg.batch_rays);
  const double inv_batch = 1.0 / cfg.batch_rays;

  for (int iter = 0; iter < iters; ++iter) {
    Rng rng = Rng::keyed(cfg.seed, 0x7e57, static_cast<uint64_t>(iter));
    for (int i = 0; i < cfg.batch_rays; ++i) batch[i] = sampler.draw(rng);
    parallel_chunks(n_chunks, threads, [&](int c) {
      Tape& tape = tapes[c];
      double closs = 0.0, cdg = 0.0;
      const int lo = c * kChunkRays;
      const int hi = std::min(cfg.batch_rays, lo + kChunkRays);
      for (int r = lo; r < hi; ++r) {
        const RaySpec& rs = batch[r];
        tape.reset();
        Var dt = tape.input(delta);
        Var t_k = dt + Var(m.time_map.frame_to_time(rs.frame));
        const Ray ray = generate_pixel_ray(video.cameras[rs.cam_index], rs.px,
                                           rs.py, m.bounds);
        Var out[3];
        render_ray_tape(m, tape, ray, t_k, cfg.n_samples, /*jitter=*/false,
                        nullptr, cfg.background, out);
        Var dr = out[0] - Var(rs.target.x);
        Var dg = out[1] - Var(rs.target.y);
        Var db = out[2] - Var(rs.target.z);
        Var loss = dr * dr + dg * dg + db * db;
        closs += loss.v;
        tape.backward(loss, inv_batch, scratch[c]);
        cdg += tape.grad_of(dt);
      }
      chunk_loss[c] = closs;
      chunk_dg[c] = cdg;
    });
    double loss = 0.0, grad = 0.0;
    for (int c = 0; c < n_chunks; ++c) {
      loss += chunk_loss[c];
      grad += chunk_dg[c];
    }
    loss *= inv_batch;
    if (first_loss < 0.0) first_loss = loss;
    if (!std::isfinite(loss) || loss > 10.0 * first_loss)
      throw NumericError("test-offset optimization diverged at iteration " +
                         std::to_string(iter));
    m1 = cfg.adam.beta1 * m1 + (1.0 - cfg.adam.beta1) * grad;
    m2 = cfg.adam.beta2 * m2 + (1.0 - cfg.adam.beta2) * grad * grad;
    const double t1 = 1.0 - std::pow(cfg.adam.beta1, iter + 1.0);
    const double t2 = 1.0 - std::pow(cfg.adam.beta2, iter + 1.0);
    delta -= cfg.lr * (m1 / t1) / (std::sqrt(m2 / t2) + cfg.adam.eps);
    ++res.iters_run;
  }

  const double loss_delta = video_mse(m, video, cam_index, delta,
                                      cfg.n_samples, cfg.background, threads);
  if (loss_delta <= res.loss_at_zero) {
    res.delta_norm = delta;
    res.loss_at_delta = loss_delta;
  } else {
    res.delta_norm = 0.0;
    res.loss_at_delta = res.loss_at_zero;
  }
  return res;
}

}  // namespace synf
