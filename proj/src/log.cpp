#include "ssf/log.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <mutex>

namespace ssf {

namespace {

LogLevel from_env() {
    const char* v = std::getenv("SSF_LOG");
    if (!v) return LogLevel::Error;
    if (std::strcmp(v, "debug") == 0) return LogLevel::Debug;
    if (std::strcmp(v, "info") == 0) return LogLevel::Info;
    return LogLevel::Error;
}

std::atomic<int>& level_ref() {
    static std::atomic<int> level{static_cast<int>(from_env())};
    return level;
}

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

void emit(LogLevel lvl, const char* tag, const std::string& msg) {
    if (static_cast<int>(lvl) > level_ref().load()) return;
    std::lock_guard lock(sink_mutex());
    std::cerr << "[ssf " << tag << "] " << msg << '\n';
}

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_ref().load()); }
void set_log_level(LogLevel level) { level_ref() = static_cast<int>(level); }

void log_error(const std::string& msg) { emit(LogLevel::Error, "error", msg); }
void log_info(const std::string& msg) { emit(LogLevel::Info, "info", msg); }
void log_debug(const std::string& msg) { emit(LogLevel::Debug, "debug", msg); }

}  // namespace ssf
