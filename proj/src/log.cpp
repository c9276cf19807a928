#include "tinyids/log.hpp"

#include <atomic>
#include <cstdio>

namespace tinyids::log {

namespace {
std::atomic<Level> g_level{Level::info};

void emit(const char* tag, std::string_view message) {
  std::fprintf(stderr, "[tinyids] %s%.*s\n", tag, static_cast<int>(message.size()), message.data());
}
}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

void info(std::string_view message) {
  if (g_level.load() >= Level::info) emit("", message);
}

void warn(std::string_view message) {
  if (g_level.load() >= Level::warn) emit("warning: ", message);
}

}  // namespace tinyids::log
