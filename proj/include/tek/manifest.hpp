#pragma once

#include <string>
#include <utility>
#include <vector>

namespace tek {

inline constexpr const char* kVersionString = "tek-v0.1.0";

// Every subcommand that writes artifacts drops a manifest.json in its output
// directory: inputs, a stable hash of the effective config, and the version.
void write_manifest(const std::string& out_dir, const std::string& subcommand,
                    const std::vector<std::pair<std::string, std::string>>& inputs,
                    const std::string& config_dump);

}  // namespace tek
