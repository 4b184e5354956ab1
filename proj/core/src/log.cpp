#include "triphase/log.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>

namespace triphase {

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::warn)};
std::mutex g_mutex;

void emit(const char* tag, const std::string& msg) {
    std::lock_guard<std::mutex> lock(g_mutex);
    std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
    std::fflush(stderr);
}
} // namespace

void set_log_level(LogLevel level) { g_level.store(static_cast<int>(level)); }
LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log_warn(const std::string& msg) {
    if (g_level.load() >= static_cast<int>(LogLevel::warn)) emit("warn", msg);
}
void log_info(const std::string& msg) {
    if (g_level.load() >= static_cast<int>(LogLevel::info)) emit("info", msg);
}
void log_debug(const std::string& msg) {
    if (g_level.load() >= static_cast<int>(LogLevel::debug)) emit("debug", msg);
}

} // namespace triphase
