#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>

#include "synf/adam.hpp"
#include "synf/checkpoint.hpp"
#include "synf/dataset.hpp"
#include "synf/eval.hpp"
#include "synf/train.hpp"

using namespace synf;

TEST_CASE("adam") {
  SECTION("zero gradient with fresh state leaves parameters unchanged") {
    ParameterStore st;
    const int tid = st.add("w", {3}, ParamGroup::kMlp);
    auto w = st.tensor_values(tid);
    w[0] = 1.0;
    w[1] = -2.0;
    w[2] = 0.5;
    AdamState state;
    state.init(st.total_size());
    std::vector<double> g(3, 0.0);
    adam_step(st, g, state, AdamConfig{}, LearningRates{});
    CHECK(w[0] == 1.0);
    CHECK(w[1] == -2.0);
    CHECK(w[2] == 0.5);
  }
  SECTION("bias-corrected first step has magnitude ~ lr") {
    ParameterStore st;
    st.add("w", {2}, ParamGroup::kMlp);
    AdamState state;
    state.init(2);
    std::vector<double> g{0.3, -4.0};
    LearningRates lrs;
    lrs.mlp = 0.05;
    adam_step(st, g, state, AdamConfig{}, lrs);
    CHECK(st.data()[0] == Catch::Approx(-0.05).margin(1e-6));
    CHECK(st.data()[1] == Catch::Approx(0.05).margin(1e-6));
  }
  SECTION("non-finite gradient is rejected with the tensor name") {
    ParameterStore st;
    st.add("grid_a", {1}, ParamGroup::kGrid);
    st.add("bad_tensor", {1}, ParamGroup::kMlp);
    AdamState state;
    state.init(2);
    std::vector<double> g{0.0, std::nan("")};
    try {
      adam_step(st, g, state, AdamConfig{}, LearningRates{});
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("bad_tensor") != std::string::npos);
    }
  }
  SECTION("matches the reference run on a 2-D quadratic") {
    // f(x, y) = (x-1)^2 + 2(y+0.5)^2, lr 0.1; reference values from an
    // independent scripted Adam implementation.
    ParameterStore st;
    const int tid = st.add("xy", {2}, ParamGroup::kGrid);
    AdamState state;
    state.init(2);
    LearningRates lrs;
    lrs.grid = 0.1;
    std::vector<double> g(2);
    auto p = st.tensor_values(tid);
    for (int step = 1; step <= 2000; ++step) {
      g[0] = 2.0 * (p[0] - 1.0);
      g[1] = 4.0 * (p[1] + 0.5);
      adam_step(st, g, state, AdamConfig{}, lrs);
      if (step == 1) {
        CHECK(p[0] == Catch::Approx(0.099999999500000).margin(1e-12));
        CHECK(p[1] == Catch::Approx(-0.099999999500000).margin(1e-12));
      }
      if (step == 10) {
        CHECK(p[0] == Catch::Approx(0.923750844393088).margin(1e-9));
        CHECK(p[1] == Catch::Approx(-0.703322827624518).margin(1e-9));
      }
      if (step == 100) {
        CHECK(p[0] == Catch::Approx(0.997063324318897).margin(1e-9));
        CHECK(p[1] == Catch::Approx(-0.502246363402596).margin(1e-9));
      }
    }
    const double loss = (p[0] - 1) * (p[0] - 1) + 2 * (p[1] + 0.5) * (p[1] + 0.5);
    CHECK(loss < 1e-6);
  }
}

namespace {
VideoSet tiny_dataset(bool moving = true, int frames = 10) {
  const DynamicScene s = [&] {
    DynamicScene scene;
    MovingBlob b;
    b.base = {0, 0, 0};
    b.amp = moving ? Vec3{0.45, 0.2, 0.0} : Vec3{0, 0, 0};
    b.freq_hz = {0.8, 0.5, 0};
    b.phase = {0, 1.2, 0};
    b.radius = 0.3;
    b.peak_density = 25.0;
    b.color = {0.9, 0.25, 0.1};
    scene.blobs.push_back(b);
    return scene;
  }();
  return render_ground_truth(s, build_rig(3, 16, 16), 30.0, frames, 2, 64);
}
}  // namespace

TEST_CASE("temporal variance weights") {
  SECTION("static video gives uniform weights") {
    const VideoSet vs = tiny_dataset(false, 4);
    const auto w = temporal_variance_weights(vs, 0);
    const double uniform = 1.0 / (16 * 16);
    for (double x : w) CHECK(x == Catch::Approx(uniform).margin(1e-9));
  }
  SECTION("a flashing pixel dominates") {
    VideoSet vs = tiny_dataset(false, 4);
    for (int f = 0; f < vs.n_frames; ++f)
      vs.frames[0][f].set_pixel(5, 7, f % 2 ? Vec3{1, 1, 1} : Vec3{0, 0, 0});
    const auto w = temporal_variance_weights(vs, 0);
    size_t argmax = 0;
    for (size_t i = 1; i < w.size(); ++i)
      if (w[i] > w[argmax]) argmax = i;
    CHECK(argmax == size_t(7 * 16 + 5));
  }
  SECTION("weights normalize to 1 per camera") {
    const VideoSet vs = tiny_dataset(true, 6);
    for (int k = 0; k < vs.n_cameras(); ++k) {
      const auto w = temporal_variance_weights(vs, k);
      double sum = 0.0;
      for (double x : w) sum += x;
      CHECK(sum == Catch::Approx(1.0).margin(1e-6));
    }
  }
}

TEST_CASE("rgb_loss") {
  const VideoSet vs = tiny_dataset();
  FieldConfig fc;
  fc.family = ModelFamily::kPlaneExplicit;
  fc.spatial_res = 4;
  fc.temporal_res = 4;
  fc.feature_dim = 4;
  TimeMap tm;
  tm.n_frames = vs.n_frames;
  tm.fps = vs.fps;
  FieldModel m = build_field_model(fc, tm, vs.bounds, {0, 1, 2});

  Rng rng(5);
  std::vector<RaySpec> rays;
  for (int i = 0; i < 8; ++i) {
    RaySpec r;
    r.cam_index = static_cast<int>(rng.below(3));
    r.train_ordinal = r.cam_index;
    r.frame = static_cast<int>(rng.below(vs.n_frames));
    r.px = static_cast<int>(rng.below(16));
    r.py = static_cast<int>(rng.below(16));
    r.target = vs.frames[r.cam_index][r.frame].get_pixel(r.px, r.py);
    rays.push_back(r);
  }
  const Vec3 bg{1, 1, 1};

  SECTION("empty batch is rejected") {
    CHECK_THROWS_AS(
        rgb_loss_value(m, vs.cameras, std::span<const RaySpec>{}, 8, bg),
        UsageError);
  }
  SECTION("a model that reproduces the targets has zero loss") {
    auto exact = rays;
    for (auto& r : exact)
      r.target = render_pixel_at(m, vs.cameras[r.cam_index], r.px, r.py,
                                 m.time_map.frame_to_time(r.frame), 8, bg);
    CHECK(rgb_loss_value(m, vs.cameras, exact, 8, bg) == 0.0);
  }
  SECTION("constant gray difference of 0.1 per channel gives 0.03") {
    // Kill the field: zero decoder weights, strongly negative density bias.
    for (double& w : m.params.tensor_values(m.dec1.w_id)) w = 0.0;
    auto bias = m.params.tensor_values(m.dec1.b_id);
    bias[0] = bias[1] = bias[2] = 0.0;
    bias[3] = -60.0;  // softplus(-60) ~ 0: transparent everywhere
    auto gray = rays;
    for (auto& r : gray) r.target = {0.4, 0.4, 0.4};
    const Vec3 gray_bg{0.5, 0.5, 0.5};
    CHECK(rgb_loss_value(m, vs.cameras, gray, 8, gray_bg) ==
          Catch::Approx(0.03).margin(1e-9));
  }
  SECTION("loss is invariant under the time/offset gauge shift") {
    // Give the offsets some structure first.
    auto deltas = m.params.tensor_values(m.offsets.tensor_id());
    deltas[0] = 0.03;
    deltas[1] = -0.02;
    deltas[2] = 0.01;
    const double base = rgb_loss_value(m, vs.cameras, rays, 8, bg);
    Rng arng(17);
    for (int trial = 0; trial < 5; ++trial) {
      const double a = arng.uniform(-0.1, 0.1);
      const double shifted =
          rgb_loss_value(m, vs.cameras, rays, 8, bg, a, -a);
      CHECK(std::abs(shifted - base) < 1e-6);
    }
  }
  SECTION("loss gradient w.r.t. delta matches finite differences") {
    std::vector<double> grads(m.params.total_size(), 0.0);
    Tape tape(&m.params);
    rgb_loss_backward(m, vs.cameras, rays, 8, bg, grads, tape);
    const int64_t slot = m.offsets.slot(m.params, rays[0].train_ordinal);
    double& p = m.params.values()[static_cast<size_t>(slot)];
    const double h = 1e-4;
    const double saved = p;
    p = saved + h;
    const double up = rgb_loss_value(m, vs.cameras, rays, 8, bg);
    p = saved - h;
    const double dn = rgb_loss_value(m, vs.cameras, rays, 8, bg);
    p = saved;
    const double fd = (up - dn) / (2 * h);
    CHECK(std::abs(grads[slot] - fd) <
          1e-4 * std::max({std::abs(fd), std::abs(grads[slot]), 1e-8}));
  }
}

TEST_CASE("training smoke run") {
  const VideoSet vs = tiny_dataset(true, 8);
  TrainConfig cfg;
  cfg.field.family = ModelFamily::kPlaneExplicit;
  cfg.field.spatial_res = 8;
  cfg.field.temporal_res = 8;
  cfg.field.feature_dim = 4;
  cfg.iterations = 40;
  cfg.batch_rays = 64;
  cfg.n_samples = 8;
  cfg.offset_warmup_iters = 20;
  cfg.eval_every = 10;
  cfg.seed = 3;
  cfg.threads = 2;

  const TrainResult r1 = train(vs, cfg);
  SECTION("history snapshots cover the run and respect the warm-up") {
    REQUIRE(!r1.history.iters.empty());
    for (size_t i = 0; i < r1.history.iters.size(); ++i) {
      if (i) CHECK(r1.history.iters[i] > r1.history.iters[i - 1]);
      if (r1.history.iters[i] <= cfg.offset_warmup_iters)
        for (double d : r1.history.deltas_norm[i]) CHECK(d == 0.0);
    }
    CHECK(r1.history.iters.back() == cfg.iterations);
    for (const auto& rec : r1.log) CHECK(std::isfinite(rec.loss));
  }
  SECTION("bitwise deterministic across runs and thread counts") {
    TrainConfig cfg1 = cfg;
    cfg1.threads = 1;
    const TrainResult r2 = train(vs, cfg1);
    CHECK(r1.model.params.values() == r2.model.params.values());
  }
  SECTION("no-offsets mode pins deltas to zero") {
    TrainConfig cfg2 = cfg;
    cfg2.no_offsets = true;
    const TrainResult r3 = train(vs, cfg2);
    for (double d : r3.model.offsets.deltas(r3.model.params)) CHECK(d == 0.0);
  }
}

TEST_CASE("test-view offset optimization") {
  const VideoSet vs = tiny_dataset(true, 10);
  FieldConfig fc;
  fc.family = ModelFamily::kPlaneExplicit;
  fc.spatial_res = 6;
  fc.temporal_res = 8;
  fc.feature_dim = 8;
  fc.init_seed = 77;
  TimeMap tm;
  tm.n_frames = vs.n_frames;
  tm.fps = vs.fps;
  FieldModel m = build_field_model(fc, tm, vs.bounds, {0, 1, 2});
  // The fresh init is intentionally near-static; give the field pronounced
  // spatial and temporal structure so alignment has a clear optimum.
  {
    Rng rng(123);
    for (int p = 0; p < 6; ++p) {
      const bool temporal = p >= 3;
      for (double& v : m.params.tensor_values(m.planes[p].tensor_id))
        v = temporal ? 1.0 + rng.normal(0.0, 0.35) : rng.normal(0.0, 0.6);
    }
    for (double& v : m.params.tensor_values(m.dec1.w_id))
      v = rng.normal(0.0, 1.0);
  }

  TestOffsetConfig tcfg;
  tcfg.batch_rays = 64;
  tcfg.n_samples = 8;
  tcfg.threads = 2;

  SECTION("zero iterations returns zero and leaves the model alone") {
    const auto res = optimize_test_offset(m, vs, 0, 0, tcfg);
    CHECK(res.delta_norm == 0.0);
    CHECK(res.iters_run == 0);
  }
  SECTION("recovers a self-injected offset against the frozen model") {
    // Target video rendered from the model itself at t + 0.07: the restricted
    // loss has its optimum at exactly 0.07.
    VideoSet self = vs;
    const int cam = 1;
    for (int f = 0; f < self.n_frames; ++f)
      self.frames[cam][f] =
          render_frame(m, self.cameras[cam],
                       tm.frame_to_time(f) + 0.07, tcfg.n_samples,
                       tcfg.background, 2);
    const std::filesystem::path ckpt =
        std::filesystem::temp_directory_path() / "synf_frozen_check.ckpt";
    save_checkpoint(ckpt, m);
    const uint64_t before = file_checksum(ckpt);

    const auto res = optimize_test_offset(m, self, cam, 150, tcfg);
    CHECK(std::abs(res.delta_norm - 0.07) < 0.005);
    CHECK(res.loss_at_delta <= res.loss_at_zero);

    save_checkpoint(ckpt, m);
    CHECK(file_checksum(ckpt) == before);
    std::filesystem::remove(ckpt);
  }
}

TEST_CASE("offset MAE is gauge invariant") {
  TimeMap tm;
  tm.n_frames = 121;
  tm.fps = 30.0;
  // frame_step = 1.6/120; learned offsets in normalized units.
  const double step = tm.frame_step();
  const std::vector<double> gt{0, 3, -2, 5};
  SECTION("exact match gives zero") {
    std::vector<double> learned;
    for (double g : gt) learned.push_back(g * step);
    CHECK(offset_mae_seconds(learned, gt, tm) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("a constant shift on either side changes nothing") {
    std::vector<double> learned;
    for (double g : gt) learned.push_back((g + 3.0) * step);
    CHECK(offset_mae_seconds(learned, gt, tm) ==
          Catch::Approx(0.0).margin(1e-9));
  }
  SECTION("one frame of error on one of four cameras is 1/4 frame MAE") {
    std::vector<double> learned;
    for (double g : gt) learned.push_back(g * step);
    learned[2] += step;
    // Gauge fixing spreads the error: MAE = 2*(1/4)*(3/4) frames.
    const double want_frames = 2.0 * 0.25 * 0.75;
    CHECK(offset_mae_seconds(learned, gt, tm) ==
          Catch::Approx(want_frames / 30.0).margin(1e-9));
  }
  SECTION("camera count mismatch is rejected") {
    CHECK_THROWS_AS(offset_mae_seconds({0.0, 0.1}, {0, 1, 2}, tm), DataError);
  }
}

TEST_CASE("eval report JSON round trip") {
  EvalReport r;
  r.views.push_back({4, "test", 31.25, false, 0.912});
  r.views.push_back({0, "train", 0.0, true, 1.0});
  r.mean_psnr_db = 31.25;
  r.mean_ssim = 0.956;
  r.offset_mae_seconds = 0.0123456789;
  r.deltas_frames = {0.5, -1.25, 0.75};
  r.delta_test_frames = 2.0;
  r.config_fingerprint = "deadbeef12345678";
  const auto j = r.to_json();
  const EvalReport back = EvalReport::from_json(j);
  CHECK(back.to_json().dump() == j.dump());
  CHECK(back.views[1].psnr_infinite);
  CHECK(*back.offset_mae_seconds == *r.offset_mae_seconds);
  CHECK(j.at("lpips").is_null());
}
