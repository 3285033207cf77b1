#pragma once

#include <iostream>
#include <string_view>

namespace infune::log {

enum class Level { quiet = 0, warn = 1, info = 2 };

inline Level& level() {
  static Level current = Level::warn;
  return current;
}

inline void warn(std::string_view msg) {
  if (level() >= Level::warn) std::cerr << "[warn] " << msg << '\n';
}

inline void info(std::string_view msg) {
  if (level() >= Level::info) std::cerr << "[info] " << msg << '\n';
}

}  // namespace infune::log
