#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace spikefool {

// Error categories map 1:1 onto the C API status codes.
enum class ErrorCode : int {
  internal = 1,
  io = 2,
  parse = 3,
  validation = 4,
  config = 5,
  numeric = 6,
  calibration = 7,
  degenerate_gradient = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorCode::io, m) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error(ErrorCode::parse, m) {}
};
struct ValidationError : Error {
  explicit ValidationError(const std::string& m)
      : Error(ErrorCode::validation, m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorCode::config, m) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error(ErrorCode::numeric, m) {}
};
struct CalibrationError : Error {
  explicit CalibrationError(const std::string& m)
      : Error(ErrorCode::calibration, m) {}
};
struct DegenerateGradientError : Error {
  explicit DegenerateGradientError(const std::string& m)
      : Error(ErrorCode::degenerate_gradient, m) {}
};

// Log level is read once from SPIKEFOOL_LOG (error|warn|info|debug).
enum class LogLevel : int { error = 0, warn = 1, info = 2, debug = 3 };
LogLevel log_level();
void log_msg(LogLevel level, const std::string& msg);

}  // namespace spikefool
