#pragma once

#include <string>

namespace triphase {

enum class LogLevel { quiet = 0, warn = 1, info = 2, debug = 3 };

/// Process-wide log verbosity. Messages go to stderr; data never does.
void set_log_level(LogLevel level);
LogLevel log_level();

void log_warn(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

} // namespace triphase
