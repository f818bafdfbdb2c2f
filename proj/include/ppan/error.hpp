#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ppan {

enum class ErrorKind {
  config,      // invalid configuration values
  shape,       // dimension mismatch between tensors / samples
  domain,      // argument outside a function's mathematical domain
  state,       // object used in the wrong lifecycle state
  argument,    // other invalid arguments (sizes, empty batches, ...)
  degenerate,  // data that makes a statistic undefined (zero variance, ...)
  generation,  // a generator was handed an invalid distribution
  schema,      // input file missing required structure
  parse,       // malformed cell or token
  precondition,
  training,    // non-finite loss during optimisation
  io,
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return "config";
    case ErrorKind::shape: return "shape";
    case ErrorKind::domain: return "domain";
    case ErrorKind::state: return "state";
    case ErrorKind::argument: return "argument";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::generation: return "generation";
    case ErrorKind::schema: return "schema";
    case ErrorKind::parse: return "parse";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::training: return "training";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ppan
