#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "synf/params.hpp"

namespace synf {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  int64_t step = 0;

  void init(int64_t n) {
    m.assign(static_cast<size_t>(n), 0.0);
    v.assign(static_cast<size_t>(n), 0.0);
    step = 0;
  }
};

struct LearningRates {
  double grid = 2e-2;
  double mlp = 5e-3;
  double offset = 2e-3;

  double for_group(ParamGroup g) const {
    switch (g) {
      case ParamGroup::kGrid: return grid;
      case ParamGroup::kMlp: return mlp;
      case ParamGroup::kOffset: return offset;
    }
    return grid;
  }
};

// One Adam step with bias correction over every tensor in the store.
// Deterministic: plain sequential loop in tensor/slot order.
inline void adam_step(ParameterStore& store, const std::vector<double>& grads,
                      AdamState& state, const AdamConfig& cfg,
                      const LearningRates& lrs) {
  if (static_cast<int64_t>(grads.size()) != store.total_size() ||
      static_cast<int64_t>(state.m.size()) != store.total_size())
    throw UsageError("adam_step: shape mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  double* p = store.data();
  for (const TensorInfo& t : store.tensors()) {
    const double lr = lrs.for_group(t.group);
    for (int64_t i = t.offset; i < t.offset + t.size; ++i) {
      const double g = grads[static_cast<size_t>(i)];
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in tensor '" + t.name + "'");
      double& m = state.m[static_cast<size_t>(i)];
      double& v = state.v[static_cast<size_t>(i)];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace synf
