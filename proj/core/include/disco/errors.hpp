#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace disco {

// Failure categories. At the CLI boundary, usage-class errors (bad inputs,
// malformed files, impossible requests) exit with status 1 and runtime-class
// errors (I/O, network, divergence, internal bugs) exit with status 2.
enum class ErrorKind {
  parse,             // malformed input document (carries file/line context)
  validation,        // well-formed input that violates a contract
  capacity,          // request exceeds what the inputs can supply
  undefined_metric,  // metric has no defined value for these inputs
  io,                // filesystem failure
  transport,         // network/service failure after retries
  replay_miss,       // request not present in the replay cassette
  divergence,        // training produced non-finite values
  internal,          // invariant breakage inside this library
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  bool is_usage_error() const noexcept {
    return kind_ == ErrorKind::parse || kind_ == ErrorKind::validation ||
           kind_ == ErrorKind::capacity || kind_ == ErrorKind::undefined_metric;
  }

 private:
  ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace disco
