#include "meal/log.hpp"

namespace meal::log {

Level& threshold() {
  static Level level = Level::warn;
  return level;
}

}  // namespace meal::log
