#pragma once

#include <stdexcept>
#include <string>

namespace hdm {

// Base for all errors raised by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad input data, bad configuration, violated precondition. CLI exit code 1.
struct ValidationError : Error {
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Failure while doing the work (I/O, infeasible sampling, ...). CLI exit code 2.
struct RuntimeError : Error {
  explicit RuntimeError(const std::string& msg) : Error(msg) {}
};

// Remote endpoint unreachable, non-2xx status or schema-invalid response.
struct TransportError : RuntimeError {
  explicit TransportError(const std::string& msg) : RuntimeError(msg) {}
};

}  // namespace hdm
