#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wxdrive {

/// Invalid road, scenario, weather or run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (trajectory log line, report, agent reply).
/// `line` is 1-based; 0 when the input is not line oriented.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// The agent channel is gone (child exited, socket closed, write failed).
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wxdrive
