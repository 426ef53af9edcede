#pragma once

#include <spdlog/spdlog.h>

namespace abbrx {

/// Apply the ABBRX_LOG environment variable (trace, debug, info, warn, error,
/// off) to the default spdlog logger. Unset leaves `fallback` in effect.
void init_logging(spdlog::level::level_enum fallback = spdlog::level::info);

}  // namespace abbrx
