#pragma once

#include <string>

namespace ssf {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

/// Level from SSF_LOG (error|info|debug); defaults to error.
LogLevel log_level();
void set_log_level(LogLevel level);

void log_error(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace ssf
