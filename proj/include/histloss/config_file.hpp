#pragma once

#include <filesystem>
#include <string>

#include "histloss/experiment.hpp"

namespace histloss {

// Raised for malformed files, unknown sections/keys, and bad values.
// The CLI maps it to the usage/config exit code.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Plain-text key-value run configuration with [dataset], [grid], [loss],
// [optimizer], [model], and [run] sections. Every key has a default (the
// RunConfig defaults); unknown keys are a hard error. Lines starting with
// '#' are comments.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

// Full resolved configuration, re-parseable by parse_run_config. Written as
// run_config.echo next to run outputs.
std::string run_config_text(const RunConfig& cfg);

}  // namespace histloss
