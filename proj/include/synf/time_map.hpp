#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "synf/common.hpp"
#include "synf/params.hpp"
#include "synf/tape.hpp"

namespace synf {

// Affine map between frame indices and normalized time. The default range
// [-0.8, 0.8] leaves headroom on the feature planes (which span [-1, 1]) so
// shifted times t + delta stay on the grid.
struct TimeMap {
  int n_frames = 2;
  double fps = 30.0;
  double t_lo = -0.8;
  double t_hi = 0.8;

  double frame_to_time(double f) const {
    return t_lo + (t_hi - t_lo) * f / (n_frames - 1);
  }
  double time_to_frame(double t) const {
    return (t - t_lo) * (n_frames - 1) / (t_hi - t_lo);
  }
  // Width of one frame step in normalized time.
  double frame_step() const { return (t_hi - t_lo) / (n_frames - 1); }
  double frames_to_seconds(double frames) const { return frames / fps; }
};

// Per-training-camera learnable time offsets, stored in normalized time
// units inside the parameter store. Initialized to exactly 0.
class OffsetTable {
 public:
  OffsetTable() = default;

  void init(ParameterStore& store, int n_train_cameras) {
    n_ = n_train_cameras;
    tensor_id_ = store.add("offsets", {n_train_cameras}, ParamGroup::kOffset);
    // store.add zero-fills, which is exactly the required init.
  }

  int size() const { return n_; }
  int tensor_id() const { return tensor_id_; }
  bool frozen() const { return frozen_; }
  void set_frozen(bool f) { frozen_ = f; }

  int64_t slot(const ParameterStore& store, int k) const {
    check_index(k);
    return store.info(tensor_id_).offset + k;
  }
  double delta(const ParameterStore& store, int k) const {
    return store.data()[slot(store, k)];
  }
  std::vector<double> deltas(const ParameterStore& store) const {
    std::vector<double> out(n_);
    for (int k = 0; k < n_; ++k) out[k] = delta(store, k);
    return out;
  }

  // t_k = t + delta_k; d(t_k)/d(delta_k) = 1.
  double shift_time(const ParameterStore& store, double t, int k) const {
    return t + delta(store, k);
  }
  Var shift_time(Tape& tape, const ParameterStore& store, double t,
                 int k) const {
    if (frozen_) return Var(t + delta(store, k));
    return tape.param(slot(store, k)) + Var(t);
  }

 private:
  void check_index(int k) const {
    if (k < 0 || k >= n_)
      throw DataError("camera index " + std::to_string(k) +
                      " out of range for offset table of size " +
                      std::to_string(n_));
  }

  int n_ = 0;
  int tensor_id_ = -1;
  bool frozen_ = false;
};

}  // namespace synf
