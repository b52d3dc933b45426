#pragma once

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace lens {

enum class LogLevel : int { error = 0, warn = 1, info = 2, debug = 3 };

// Level comes from LENSFORGE_LOG (error|warn|info|debug); default warn.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("LENSFORGE_LOG");
    if (env == nullptr) return LogLevel::warn;
    if (std::strcmp(env, "error") == 0) return LogLevel::error;
    if (std::strcmp(env, "warn") == 0) return LogLevel::warn;
    if (std::strcmp(env, "info") == 0) return LogLevel::info;
    if (std::strcmp(env, "debug") == 0) return LogLevel::debug;
    return LogLevel::warn;
  }();
  return level;
}

inline void log_at(LogLevel level, const char* tag, const char* fmt, ...) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::fprintf(stderr, "[%s] ", tag);
  va_list args;
  va_start(args, fmt);
  std::vfprintf(stderr, fmt, args);
  va_end(args);
  std::fprintf(stderr, "\n");
}

#define LENS_LOG_ERROR(...) ::lens::log_at(::lens::LogLevel::error, "error", __VA_ARGS__)
#define LENS_LOG_WARN(...) ::lens::log_at(::lens::LogLevel::warn, "warn", __VA_ARGS__)
#define LENS_LOG_INFO(...) ::lens::log_at(::lens::LogLevel::info, "info", __VA_ARGS__)
#define LENS_LOG_DEBUG(...) ::lens::log_at(::lens::LogLevel::debug, "debug", __VA_ARGS__)

}  // namespace lens
