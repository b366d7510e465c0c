#pragma once

#include <iostream>
#include <string_view>

namespace meal::log {

enum class Level { quiet = 0, warn = 1, info = 2 };

Level& threshold();

inline void warn(std::string_view msg) {
  if (threshold() >= Level::warn) std::clog << "[meal] warning: " << msg << '\n';
}
inline void info(std::string_view msg) {
  if (threshold() >= Level::info) std::clog << "[meal] " << msg << '\n';
}

}  // namespace meal::log
