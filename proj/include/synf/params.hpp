#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synf/common.hpp"

namespace synf {

// Learning-rate group a tensor belongs to (grids and MLPs train at different
// rates; offsets at lr_field * lr_offset_ratio).
enum class ParamGroup : uint8_t { kGrid, kMlp, kOffset };

struct TensorInfo {
  std::string name;
  std::vector<int64_t> shape;
  int64_t offset = 0;  // into the flat value vector
  int64_t size = 0;
  ParamGroup group = ParamGroup::kGrid;
};

// Flat storage for every trainable tensor of a model. Tensors are registered
// once at model construction; afterwards the flat layout is stable, and
// gradient buffers are plain vectors of the same length.
class ParameterStore {
 public:
  int add(std::string name, std::vector<int64_t> shape, ParamGroup group) {
    int64_t sz = 1;
    for (int64_t d : shape) sz *= d;
    TensorInfo info;
    info.name = std::move(name);
    info.shape = std::move(shape);
    info.offset = static_cast<int64_t>(values_.size());
    info.size = sz;
    info.group = group;
    tensors_.push_back(std::move(info));
    values_.resize(values_.size() + static_cast<size_t>(sz), 0.0);
    return static_cast<int>(tensors_.size()) - 1;
  }

  int find(std::string_view name) const {
    for (size_t i = 0; i < tensors_.size(); ++i)
      if (tensors_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  const TensorInfo& info(int id) const { return tensors_[id]; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  int tensor_count() const { return static_cast<int>(tensors_.size()); }

  std::span<double> tensor_values(int id) {
    const TensorInfo& t = tensors_[id];
    return {values_.data() + t.offset, static_cast<size_t>(t.size)};
  }
  std::span<const double> tensor_values(int id) const {
    const TensorInfo& t = tensors_[id];
    return {values_.data() + t.offset, static_cast<size_t>(t.size)};
  }

  int64_t total_size() const { return static_cast<int64_t>(values_.size()); }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<TensorInfo> tensors_;
  std::vector<double> values_;
};

}  // namespace synf
