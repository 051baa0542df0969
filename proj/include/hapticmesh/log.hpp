#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace hapticmesh {

// Shared stderr logger. HAPTICMESH_LOG selects the level (trace..off); default warn.
inline std::shared_ptr<spdlog::logger> logger() {
  static const std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_color_mt("hapticmesh");
    const char* level = std::getenv("HAPTICMESH_LOG");
    l->set_level(level != nullptr ? spdlog::level::from_str(level) : spdlog::level::warn);
    return l;
  }();
  return instance;
}

}  // namespace hapticmesh
