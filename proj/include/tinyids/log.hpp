#pragma once

#include <string_view>

// Progress and warnings go to stderr; artifacts only ever go to files.
namespace tinyids::log {

enum class Level { quiet = 0, warn = 1, info = 2 };

void set_level(Level level);
Level level();
void info(std::string_view message);
void warn(std::string_view message);

}  // namespace tinyids::log
