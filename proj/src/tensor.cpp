// SPDX-License-Identifier: Apache-2.0

#include "msmpc/tensor.hpp"

namespace msmpc {

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  s += "]";
  return s;
}

}  // namespace msmpc
