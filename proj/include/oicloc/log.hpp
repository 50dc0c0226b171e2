// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace oicloc {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Parses OICLOC_LOG values: error, warn, info, debug (or 0-3).
inline LogLevel parse_log_level(std::string_view s, LogLevel fallback = LogLevel::Warn) {
  if (s == "error" || s == "0") return LogLevel::Error;
  if (s == "warn" || s == "1") return LogLevel::Warn;
  if (s == "info" || s == "2") return LogLevel::Info;
  if (s == "debug" || s == "3") return LogLevel::Debug;
  return fallback;
}

inline LogLevel& log_threshold() {
  static LogLevel level = [] {
    const char* env = std::getenv("OICLOC_LOG");
    return env ? parse_log_level(env) : LogLevel::Warn;
  }();
  return level;
}

inline void log_message(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_threshold())) return;
  static std::mutex mu;
  static constexpr const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[oicloc " << names[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void log_info(const std::string& msg) { log_message(LogLevel::Info, msg); }
inline void log_debug(const std::string& msg) { log_message(LogLevel::Debug, msg); }
inline void log_warn(const std::string& msg) { log_message(LogLevel::Warn, msg); }

}  // namespace oicloc
