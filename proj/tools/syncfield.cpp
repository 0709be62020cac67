// syncfield: desk-scale dynamic radiance fields that self-synchronize
// unsynchronized multi-view video by jointly optimizing per-camera time
// offsets. Subcommands: synth, train, eval, sync, render, st-image.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "synf/checkpoint.hpp"
#include "synf/dataset.hpp"
#include "synf/eval.hpp"
#include "synf/train.hpp"

using namespace synf;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

void write_resolved_config(CLI::App& app, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_text(out_dir / "config.resolved.ini", app.config_to_str(true, true));
}

std::string config_fingerprint(CLI::App& app) {
  const std::string s = app.config_to_str(true, true);
  return hex64(fnv1a(s.data(), s.size()));
}

int find_camera(const VideoSet& vs, int camera_id) {
  for (int i = 0; i < vs.n_cameras(); ++i)
    if (vs.cameras[i].id == camera_id) return i;
  throw DataError("camera id " + std::to_string(camera_id) +
                  " not in the dataset");
}

int find_test_camera(const VideoSet& vs) {
  const auto idx = vs.split_indices(Split::kTest);
  if (idx.empty()) throw DataError("dataset has no test camera");
  return idx.front();
}

void check_compat(const FieldModel& m, const VideoSet& vs) {
  std::vector<int> ids;
  for (int ci : vs.split_indices(Split::kTrain))
    ids.push_back(vs.cameras[ci].id);
  if (ids != m.train_camera_ids)
    throw DataError(
        "checkpoint/dataset camera mismatch (training camera ids differ)");
  if (m.time_map.n_frames != vs.n_frames)
    throw DataError("checkpoint was trained for " +
                    std::to_string(m.time_map.n_frames) + " frames, dataset has " +
                    std::to_string(vs.n_frames));
}

// Learned per-camera time shifts in normalized units; test cameras get
// delta_test (0 unless optimized).
std::vector<double> deltas_for_cameras(const FieldModel& m, const VideoSet& vs,
                                       double delta_test) {
  std::vector<double> d(vs.n_cameras(), 0.0);
  const auto train = vs.split_indices(Split::kTrain);
  for (size_t k = 0; k < train.size(); ++k)
    d[train[k]] = m.offsets.delta(m.params, static_cast<int>(k));
  for (int ci : vs.split_indices(Split::kTest)) d[ci] = delta_test;
  return d;
}

// --------------------------------------------------------------------------
// synth

struct SynthOpts {
  std::string out;
  int cameras = 8;
  int frames = 120;
  double fps = 30.0;
  int width = 64, height = 64;
  int blobs = 3;
  double sigma_frames = 5.0;
  double unsync_scale = 1.0;
  uint64_t seed = 7;
  int gt_samples = kGroundTruthSamples;
  bool force = false;
  int threads = 0;
};

void run_synth(const SynthOpts& o) {
  if (o.cameras < 3) throw UsageError("need at least 3 cameras (2 train + test)");
  if (o.frames < 8) throw UsageError("need at least 8 frames");
  const int threads = o.threads > 0 ? o.threads : default_threads();

  const double duration = o.frames / o.fps;
  const DynamicScene scene = make_random_scene(o.seed, o.blobs, duration);
  const auto rig = build_rig(o.cameras - 1, o.width, o.height);
  std::fprintf(stderr, "synth: rendering %d cameras x %d frames at %dx%d\n",
               o.cameras, o.frames, o.width, o.height);
  VideoSet vs = render_ground_truth(scene, rig, o.fps, o.frames, threads,
                                    o.gt_samples);

  const std::vector<double> raw =
      sample_offsets(o.cameras, o.sigma_frames, o.seed, /*round_to_int=*/false);
  std::vector<int> offsets(raw.size());
  for (size_t i = 0; i < raw.size(); ++i)
    offsets[i] = static_cast<int>(std::round(o.unsync_scale * raw[i]));
  VideoSet unsynced = apply_unsync(vs, offsets);
  std::fprintf(stderr, "synth: offsets (frames, rebased):");
  for (double d : *unsynced.offsets_gt) std::fprintf(stderr, " %g", d);
  std::fprintf(stderr, "\nsynth: %d overlapping frames kept\n",
               unsynced.n_frames);
  save_dataset(o.out, unsynced, o.force);
}

// --------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string dataset;
  std::string out;
  std::string model = "plane-hybrid";
  TrainConfig cfg;
  std::string sampler = "temporal-variance";
};

void run_train(TrainOpts& o) {
  o.cfg.field.family = family_from_name(o.model);
  o.cfg.sampler = sampler_from_name(o.sampler);
  const VideoSet vs = load_dataset(o.dataset);
  fs::create_directories(o.out);

  std::ofstream metrics(fs::path(o.out) / "metrics.jsonl");
  if (!metrics) throw DataError("cannot write metrics.jsonl");
  const TimeMap tm{vs.n_frames, vs.fps, o.cfg.t_lo, o.cfg.t_hi};
  auto log_record = [&](const MetricsRecord& rec) {
    nlohmann::json j;
    j["iter"] = rec.iter;
    j["loss"] = rec.loss;
    j["psnr_train"] = rec.psnr_train;
    j["deltas_frames"] = rec.deltas_frames;
    metrics << j.dump() << "\n";
    metrics.flush();
    std::fprintf(stderr, "iter %6lld  loss %.6f  psnr %.2f\n",
                 static_cast<long long>(rec.iter), rec.loss, rec.psnr_train);
  };

  const TrainResult result = train(vs, o.cfg, log_record);
  save_checkpoint(fs::path(o.out) / "model.ckpt", result.model);
  result.history.to_csv((fs::path(o.out) / "offset_history.csv").string(), tm);
  std::fprintf(stderr, "train: checkpoint written to %s/model.ckpt\n",
               o.out.c_str());
}

// --------------------------------------------------------------------------
// eval

struct EvalOpts2 {
  std::string checkpoint;
  std::string dataset;
  std::string out;
  bool optimize_test_offset = false;
  int test_offset_iters = 400;
  std::string views = "test";
  int samples = 64;
  int threads = 0;
};

void run_eval(const EvalOpts2& o, CLI::App& sub) {
  const FieldModel m = load_checkpoint(o.checkpoint);
  const VideoSet vs = load_dataset(o.dataset);
  check_compat(m, vs);

  double delta_test = 0.0;
  std::optional<double> delta_test_frames;
  if (o.optimize_test_offset) {
    const int test_cam = find_test_camera(vs);
    TestOffsetConfig tcfg;
    tcfg.n_samples = o.samples;
    tcfg.threads = o.threads;
    const TestOffsetResult r =
        optimize_test_offset(m, vs, test_cam, o.test_offset_iters, tcfg);
    delta_test = r.delta_norm;
    delta_test_frames = r.delta_norm / m.time_map.frame_step();
    std::fprintf(stderr,
                 "eval: test-view offset %.4f frames (video MSE %.3e -> %.3e)\n",
                 *delta_test_frames, r.loss_at_zero, r.loss_at_delta);
  }

  EvalOptions eo;
  eo.n_samples = o.samples;
  eo.threads = o.threads;
  eo.views = o.views;
  EvalReport report = evaluate(m, vs, deltas_for_cameras(m, vs, delta_test), eo);
  report.delta_test_frames = delta_test_frames;
  report.config_fingerprint = config_fingerprint(sub);

  const std::string text = report.to_json().dump(2);
  std::printf("%s\n", text.c_str());
  if (!o.out.empty()) {
    fs::create_directories(fs::path(o.out).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(o.out).parent_path());
    write_text(o.out, text + "\n");
  }
}

// --------------------------------------------------------------------------
// sync

struct SyncOpts {
  std::string checkpoint;
  std::string dataset;
  std::string out;
  bool frame_maps = false;
};

void run_sync(const SyncOpts& o) {
  const FieldModel m = load_checkpoint(o.checkpoint);
  const VideoSet vs = load_dataset(o.dataset);
  check_compat(m, vs);

  const std::vector<double> learned = m.offsets.deltas(m.params);
  std::vector<double> frames(learned.size());
  for (size_t i = 0; i < learned.size(); ++i)
    frames[i] = learned[i] / m.time_map.frame_step();
  const std::vector<double> fixed = gauge_fixed(frames);
  double min_f = frames.empty() ? 0.0 : frames[0];
  double max_f = min_f;
  for (double f : frames) {
    min_f = std::min(min_f, f);
    max_f = std::max(max_f, f);
  }
  const int spread = static_cast<int>(std::ceil(max_f - min_f));
  const int n_sync = std::max(0, vs.n_frames - spread);

  // Sort report rows by camera id.
  const auto train = vs.split_indices(Split::kTrain);
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return vs.cameras[train[a]].id < vs.cameras[train[b]].id;
  });

  nlohmann::json j;
  j["n_sync_frames"] = n_sync;
  j["cameras"] = nlohmann::json::array();
  for (size_t oi : order) {
    nlohmann::json jc;
    jc["id"] = vs.cameras[train[oi]].id;
    jc["delta_frames"] = fixed[oi];
    jc["delta_seconds"] = m.time_map.frames_to_seconds(fixed[oi]);
    const double rebased = frames[oi] - min_f;
    jc["rebased_frames"] = rebased;
    if (o.frame_maps) {
      // Synchronized index s maps to the source frame showing the same
      // moment: cameras that run ahead (large rebased offset) contribute
      // earlier source frames.
      std::vector<int> map(n_sync);
      for (int s = 0; s < n_sync; ++s) {
        int src = static_cast<int>(std::lround(s + (max_f - min_f) - rebased));
        map[s] = std::clamp(src, 0, vs.n_frames - 1);
      }
      jc["frame_map"] = map;
    }
    j["cameras"].push_back(jc);
  }
  if (vs.offsets_gt) {
    std::vector<double> gt_train;
    for (int ci : train) gt_train.push_back((*vs.offsets_gt)[ci]);
    j["offset_mae_seconds"] = offset_mae_seconds(learned, gt_train, m.time_map);
  }
  const std::string text = j.dump(2);
  std::printf("%s\n", text.c_str());
  if (!o.out.empty()) write_text(o.out, text + "\n");
}

// --------------------------------------------------------------------------
// render / st-image

struct RenderOpts {
  std::string checkpoint;
  std::string out;
  int camera_id = 0;
  std::vector<int> frames;
  double delta_frames = 0.0;
  bool use_learned = true;
  int samples = 64;
  int threads = 0;
  std::string dataset;  // optional: source of camera parameters
};

VideoSet cameras_holder(const FieldModel& m, const RenderOpts& o) {
  if (o.dataset.empty())
    throw UsageError("--dataset is required to resolve camera parameters");
  VideoSet vs = load_dataset(o.dataset);
  check_compat(m, vs);
  return vs;
}

double resolve_delta(const FieldModel& m, const VideoSet& vs, int cam_index,
                     const RenderOpts& o) {
  if (o.use_learned && vs.cameras[cam_index].split == Split::kTrain) {
    const auto train = vs.split_indices(Split::kTrain);
    for (size_t k = 0; k < train.size(); ++k)
      if (train[k] == cam_index)
        return m.offsets.delta(m.params, static_cast<int>(k));
  }
  return o.delta_frames * m.time_map.frame_step();
}

void run_render(const RenderOpts& o) {
  const FieldModel m = load_checkpoint(o.checkpoint);
  const VideoSet vs = cameras_holder(m, o);
  const int cam_index = find_camera(vs, o.camera_id);
  const int threads = o.threads > 0 ? o.threads : default_threads();
  const double delta = resolve_delta(m, vs, cam_index, o);
  std::vector<int> frames = o.frames;
  if (frames.empty())
    for (int f = 0; f < vs.n_frames; ++f) frames.push_back(f);
  fs::create_directories(o.out);
  for (int f : frames) {
    if (f < 0 || f >= vs.n_frames)
      throw DataError("frame " + std::to_string(f) + " out of range");
    const double t_k = m.time_map.frame_to_time(f) + delta;
    const Image img = render_frame(m, vs.cameras[cam_index], t_k, o.samples,
                                   Vec3{1, 1, 1}, threads);
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.png", f);
    write_png((fs::path(o.out) / name).string(), img);
  }
  std::fprintf(stderr, "render: wrote %zu frames to %s\n", frames.size(),
               o.out.c_str());
}

struct StImageOpts {
  std::string checkpoint;
  std::string dataset;
  std::string out;
  int camera_id = 0;
  int column = 32;
  double delta_frames = 0.0;
  bool use_learned = true;
  int samples = 64;
  int threads = 0;
};

void run_st_image(const StImageOpts& o) {
  const FieldModel m = load_checkpoint(o.checkpoint);
  RenderOpts ro;
  ro.dataset = o.dataset;
  ro.delta_frames = o.delta_frames;
  ro.use_learned = o.use_learned;
  const VideoSet vs = cameras_holder(m, ro);
  const int cam_index = find_camera(vs, o.camera_id);
  const int threads = o.threads > 0 ? o.threads : default_threads();
  const double delta = resolve_delta(m, vs, cam_index, ro);
  const Image img = spatiotemporal_image(m, vs.cameras[cam_index], o.column,
                                         delta, o.samples, Vec3{1, 1, 1},
                                         threads);
  write_png(o.out, img);
  std::fprintf(stderr, "st-image: %dx%d written to %s\n", img.width,
               img.height, o.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "syncfield: dynamic radiance fields with per-camera time offsets"};
  app.require_subcommand(1);

  // synth ------------------------------------------------------------------
  SynthOpts synth;
  CLI::App* s_synth =
      app.add_subcommand("synth", "generate a synthetic multi-view dataset");
  s_synth->set_config("--config");
  s_synth->allow_config_extras(false);
  s_synth->add_option("--out", synth.out, "output dataset directory")
      ->required();
  s_synth->add_option("--cameras", synth.cameras,
                      "total cameras (last one is the test view)");
  s_synth->add_option("--frames", synth.frames, "frames per camera");
  s_synth->add_option("--fps", synth.fps, "frame rate");
  s_synth->add_option("--width", synth.width, "image width");
  s_synth->add_option("--height", synth.height, "image height");
  s_synth->add_option("--blobs", synth.blobs, "number of moving blobs");
  s_synth->add_option("--sigma-frames", synth.sigma_frames,
                      "offset standard deviation in frames");
  s_synth->add_option("--unsync-scale", synth.unsync_scale,
                      "offset length multiplier (1.0, 1.5, 2.0)");
  s_synth->add_option("--seed", synth.seed, "scene and offset seed");
  s_synth->add_option("--gt-samples", synth.gt_samples,
                      "quadrature samples per ray for ground truth");
  s_synth->add_flag("--force", synth.force, "overwrite a non-empty directory");
  s_synth->add_option("--threads", synth.threads, "worker threads (0: auto)");
  s_synth->callback([&] {
    run_synth(synth);
    write_resolved_config(*s_synth, synth.out);
  });

  // train ------------------------------------------------------------------
  TrainOpts tr;
  CLI::App* s_train =
      app.add_subcommand("train", "train a model on a dataset");
  s_train->set_config("--config");
  s_train->allow_config_extras(false);
  s_train->add_option("--dataset", tr.dataset, "dataset directory")->required();
  s_train->add_option("--out", tr.out, "output directory")->required();
  s_train->add_option("--model", tr.model,
                      "plane-explicit | plane-hybrid | latent");
  s_train->add_option("--iterations", tr.cfg.iterations, "Adam steps");
  s_train->add_option("--batch-rays", tr.cfg.batch_rays, "rays per step");
  s_train->add_option("--samples", tr.cfg.n_samples, "quadrature samples/ray");
  s_train->add_option("--lr-field", tr.cfg.lr_field, "grid learning rate");
  s_train->add_option("--lr-mlp", tr.cfg.lr_mlp, "MLP learning rate");
  s_train->add_option("--lr-offset-ratio", tr.cfg.lr_offset_ratio,
                      "offset lr = lr-field * ratio");
  s_train->add_option("--offset-warmup", tr.cfg.offset_warmup_iters,
                      "steps with offsets frozen at 0");
  s_train->add_option("--seed", tr.cfg.seed, "training seed");
  s_train->add_option("--sampler", tr.sampler,
                      "uniform | temporal-variance");
  s_train->add_option("--eval-every", tr.cfg.eval_every,
                      "steps between metric snapshots");
  s_train->add_flag("--no-offsets", tr.cfg.no_offsets,
                    "baseline: freeze all offsets at 0");
  s_train->add_option("--threads", tr.cfg.threads, "worker threads (0: auto)");
  s_train->add_option("--spatial-res", tr.cfg.field.spatial_res,
                      "plane/grid spatial resolution");
  s_train->add_option("--temporal-res", tr.cfg.field.temporal_res,
                      "plane temporal resolution");
  s_train->add_option("--feature-dim", tr.cfg.field.feature_dim,
                      "feature channels per plane/grid");
  s_train->add_option("--encode-order", tr.cfg.field.encode_order,
                      "sinusoidal encoding order L");
  s_train->add_option("--init-seed", tr.cfg.field.init_seed,
                      "parameter init seed");
  s_train->callback([&] {
    run_train(tr);
    write_resolved_config(*s_train, tr.out);
  });

  // eval -------------------------------------------------------------------
  EvalOpts2 ev;
  CLI::App* s_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  s_eval->set_config("--config");
  s_eval->allow_config_extras(false);
  s_eval->add_option("--checkpoint", ev.checkpoint, "model checkpoint")
      ->required();
  s_eval->add_option("--dataset", ev.dataset, "dataset directory")->required();
  s_eval->add_option("--out", ev.out, "report JSON path");
  s_eval->add_flag("--optimize-test-offset", ev.optimize_test_offset,
                   "calibrate the test view's offset before scoring");
  s_eval->add_option("--test-offset-iters", ev.test_offset_iters,
                     "iterations for test-offset calibration");
  s_eval->add_option("--views", ev.views, "test | train | all");
  s_eval->add_option("--samples", ev.samples, "quadrature samples/ray");
  s_eval->add_option("--threads", ev.threads, "worker threads (0: auto)");
  s_eval->callback([&] { run_eval(ev, *s_eval); });

  // sync -------------------------------------------------------------------
  SyncOpts sy;
  CLI::App* s_sync =
      app.add_subcommand("sync", "report recovered synchronization");
  s_sync->add_option("--checkpoint", sy.checkpoint, "model checkpoint")
      ->required();
  s_sync->add_option("--dataset", sy.dataset, "dataset directory")->required();
  s_sync->add_option("--out", sy.out, "report JSON path");
  s_sync->add_flag("--frame-maps", sy.frame_maps,
                   "include per-camera synchronized frame index maps");
  s_sync->callback([&] { run_sync(sy); });

  // render -----------------------------------------------------------------
  RenderOpts rn;
  CLI::App* s_render =
      app.add_subcommand("render", "render frames from a checkpoint");
  s_render->add_option("--checkpoint", rn.checkpoint, "model checkpoint")
      ->required();
  s_render->add_option("--dataset", rn.dataset,
                       "dataset directory (camera parameters)")
      ->required();
  s_render->add_option("--out", rn.out, "output directory")->required();
  s_render->add_option("--camera", rn.camera_id, "camera id")->required();
  s_render->add_option("--frames", rn.frames,
                       "frame indices (default: all)");
  s_render->add_option("--delta-frames", rn.delta_frames,
                       "manual time offset in frames (test views)");
  s_render->add_flag("!--no-learned-offset", rn.use_learned,
                     "ignore the learned offset for train cameras");
  s_render->add_option("--samples", rn.samples, "quadrature samples/ray");
  s_render->add_option("--threads", rn.threads, "worker threads (0: auto)");
  s_render->callback([&] { run_render(rn); });

  // st-image ---------------------------------------------------------------
  StImageOpts st;
  CLI::App* s_st = app.add_subcommand(
      "st-image", "spatiotemporal slice image (columns over time)");
  s_st->add_option("--checkpoint", st.checkpoint, "model checkpoint")
      ->required();
  s_st->add_option("--dataset", st.dataset, "dataset directory")->required();
  s_st->add_option("--out", st.out, "output PNG path")->required();
  s_st->add_option("--camera", st.camera_id, "camera id")->required();
  s_st->add_option("--column", st.column, "pixel column to slice")->required();
  s_st->add_option("--delta-frames", st.delta_frames,
                   "manual time offset in frames");
  s_st->add_flag("!--no-learned-offset", st.use_learned,
                 "ignore the learned offset for train cameras");
  s_st->add_option("--samples", st.samples, "quadrature samples/ray");
  s_st->add_option("--threads", st.threads, "worker threads (0: auto)");
  s_st->callback([&] { run_st_image(st); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return 3;
  }
  return 0;
}
