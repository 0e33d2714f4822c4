// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dreammap {

/// Malformed or inconsistent external data (files, headers, value counts).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure that survives all safeguards (e.g. Cholesky after
/// jitter escalation, divergent training loss).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dreammap
