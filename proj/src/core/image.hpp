#pragma once

#include <cstdint>
#include <vector>

#include "core/geometry.hpp"

namespace vf {

// Row-major RGB, [0,1] floats, origin at the top-left pixel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.0f) {}

  float& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  float at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  void set(int x, int y, const Rgb& rgb) {
    for (int c = 0; c < 3; ++c) at(x, y, c) = static_cast<float>(rgb[c]);
  }
  Rgb pixel(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

double image_mse(const Image& a, const Image& b);

}  // namespace vf
