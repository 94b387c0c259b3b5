// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace asd {

// Dense float32 tensor, row-major. The single value carrier for the whole
// engine; layout conventions (which axis is time, channels, ...) are
// documented on each kernel.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);
  Tensor(std::vector<int> s, std::vector<float> d);

  static std::size_t numel_of(const std::vector<int>& s);

  std::size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }

  float& at2(int i, int j) {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
  }
  float at2(int i, int j) const {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
  }
  float& at3(int i, int j, int k) {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  float at3(int i, int j, int k) const {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::string shape_str(const std::vector<int>& s);

}  // namespace asd
