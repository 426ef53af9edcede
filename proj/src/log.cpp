#include "abbrx/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace abbrx {

void init_logging(spdlog::level::level_enum fallback) {
  static bool sink_installed = false;
  if (!sink_installed) {
    auto logger = spdlog::stderr_color_mt("abbrx");
    logger->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    spdlog::set_default_logger(logger);
    sink_installed = true;
  }
  spdlog::level::level_enum level = fallback;
  if (const char* env = std::getenv("ABBRX_LOG"); env != nullptr && *env != '\0')
    level = spdlog::level::from_str(env);
  spdlog::set_level(level);
}

}  // namespace abbrx
