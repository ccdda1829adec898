// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace msmpc {

/// Runtime fault: shape mismatch, malformed data, I/O failure. Problems in a
/// model description are reported as Diagnostics instead and never thrown.
class Fault : public std::runtime_error {
 public:
  explicit Fault(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace msmpc
