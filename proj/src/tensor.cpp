// SPDX-License-Identifier: Apache-2.0
#include "asd/tensor.hpp"

#include <sstream>

#include "asd/errors.hpp"

namespace asd {

std::size_t Tensor::numel_of(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> s)
    : shape(std::move(s)), data(numel_of(shape), 0.0f) {}

Tensor::Tensor(std::vector<int> s, std::vector<float> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (numel_of(shape) != data.size()) {
    throw ShapeError("data size " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
}

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

}  // namespace asd
