// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mfss {

enum class ErrorKind {
  Config,          // invalid configuration or precondition
  Dimension,       // shape mismatch between inputs
  Convergence,     // solver or adaptive-loop failure to converge
  PoolExhausted,   // a stratum cannot supply the requested draws
  Numerical,       // non-finite values, singular systems
  Io,              // artifact read/write problems
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Process exit code for an error kind (CLI contract).
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Convergence: return 3;
    case ErrorKind::PoolExhausted: return 4;
    default: return 1;
  }
}

#define MFSS_REQUIRE(cond, kind, msg)                 \
  do {                                                \
    if (!(cond)) throw ::mfss::Error((kind), (msg));  \
  } while (0)

}  // namespace mfss
