#include "lobg/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace lobg {

namespace {
std::atomic<LogLevel> g_level{LogLevel::kWarning};
std::mutex g_mu;
}  // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_warning(const std::string& msg) {
  if (g_level.load() < LogLevel::kWarning) return;
  std::lock_guard lock(g_mu);
  std::cerr << "warning: " << msg << '\n';
}

void log_info(const std::string& msg) {
  if (g_level.load() < LogLevel::kInfo) return;
  std::lock_guard lock(g_mu);
  std::cerr << msg << '\n';
}

}  // namespace lobg
