#include "spikefool/common.hpp"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <mutex>

namespace spikefool {

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("SPIKEFOOL_LOG");
    if (!env) return LogLevel::warn;
    if (std::strcmp(env, "error") == 0) return LogLevel::error;
    if (std::strcmp(env, "warn") == 0) return LogLevel::warn;
    if (std::strcmp(env, "info") == 0) return LogLevel::info;
    if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
    return LogLevel::warn;
  }();
  return level;
}

void log_msg(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  static std::mutex mu;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[spikefool:" << names[int(level)] << "] " << msg << '\n';
}

}  // namespace spikefool
