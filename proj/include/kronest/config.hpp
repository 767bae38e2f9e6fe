#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "kronest/simlab.hpp"

namespace kronest {

/// Everything `kronest experiment` needs: the experiment plus where and how to run it.
struct RunConfig {
    ExperimentSpec spec;
    std::string out = "out";
    int workers = 1;
    bool timing = false;
};

/// Parses "N", "0.1N", "t2.5", "0.1t1.5" or "tbar1.1[1000]" (the TailSpec::label format).
TailSpec parse_tail_spec(std::string_view text);

/// Strict JSON parsing: unknown keys, wrong types and invalid values throw ConfigError
/// naming the offending key path.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved configuration; parse_run_config(run_config_to_json(c)) reproduces c.
std::string run_config_to_json(const RunConfig& config);

} // namespace kronest
