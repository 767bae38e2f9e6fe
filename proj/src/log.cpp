#include "kronest/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace kronest {

void init_logging()
{
    auto logger = spdlog::stderr_color_mt("kronest");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("KRONEST_LOG")) {
        const auto level = spdlog::level::from_str(env);
        if (level != spdlog::level::off || std::string(env) == "off") {
            spdlog::set_level(level);
        }
    }
}

} // namespace kronest
