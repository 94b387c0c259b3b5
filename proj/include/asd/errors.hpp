// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace asd {

// Base class for all engine errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape / argument contract violations.
struct ShapeError : Error {
  using Error::Error;
};

// Malformed or inconsistent external data (files, formats, configs).
struct DataError : Error {
  using Error::Error;
};

// A kernel produced a non-finite value.
struct NumericError : Error {
  using Error::Error;
};

// Misuse of stateful objects (closed session, double flush).
struct StateError : Error {
  using Error::Error;
};

}  // namespace asd
