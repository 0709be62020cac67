#pragma once

#include <cstdint>
#include <vector>

#include "synf/common.hpp"

namespace synf {

// RGB image, float in [0,1], row-major, channel fastest.
struct Image {
  int width = 0, height = 0;
  std::vector<float> data;  // height*width*3

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(size_t(w) * h * 3, 0.0f) {}

  float* pixel(int x, int y) { return data.data() + (size_t(y) * width + x) * 3; }
  const float* pixel(int x, int y) const {
    return data.data() + (size_t(y) * width + x) * 3;
  }
  void set_pixel(int x, int y, const Vec3& c) {
    float* p = pixel(x, y);
    p[0] = static_cast<float>(c.x);
    p[1] = static_cast<float>(c.y);
    p[2] = static_cast<float>(c.z);
  }
  Vec3 get_pixel(int x, int y) const {
    const float* p = pixel(x, y);
    return {p[0], p[1], p[2]};
  }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height;
  }
};

// Quantize to the PNG-ready 8-bit form: round(255*clamp(v,0,1)).
inline std::vector<uint8_t> to_bytes(const Image& img) {
  std::vector<uint8_t> out(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) out[i] = quantize8(img.data[i]);
  return out;
}

inline Image from_bytes(int width, int height, const std::vector<uint8_t>& b) {
  Image img(width, height);
  for (size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<float>(b[i]) / 255.0f;
  return img;
}

}  // namespace synf
