#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "skullkit/error.hpp"

namespace skullkit {

// Dense f32 tensor with fixed rank 5: (batch, channels, depth, height, width).
struct Tensor {
  std::array<int64_t, 5> shape{0, 0, 0, 0, 0};
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::array<int64_t, 5> s) : shape(s) {
    data.assign(static_cast<size_t>(numel()), 0.f);
  }

  static Tensor scalar(float v) {
    Tensor t({1, 1, 1, 1, 1});
    t.data[0] = v;
    return t;
  }

  int64_t numel() const {
    return shape[0] * shape[1] * shape[2] * shape[3] * shape[4];
  }

  int64_t index(int64_t n, int64_t c, int64_t d, int64_t h, int64_t w) const {
    return (((n * shape[1] + c) * shape[2] + d) * shape[3] + h) * shape[4] + w;
  }

  float& at(int64_t n, int64_t c, int64_t d, int64_t h, int64_t w) {
    return data[static_cast<size_t>(index(n, c, d, h, w))];
  }
  float at(int64_t n, int64_t c, int64_t d, int64_t h, int64_t w) const {
    return data[static_cast<size_t>(index(n, c, d, h, w))];
  }
};

}  // namespace skullkit
