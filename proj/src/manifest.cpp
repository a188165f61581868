#include "tek/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "tek/common.hpp"

namespace tek {

void write_manifest(const std::string& out_dir, const std::string& subcommand,
                    const std::vector<std::pair<std::string, std::string>>& inputs,
                    const std::string& config_dump) {
    nlohmann::json jinputs = nlohmann::json::object();
    for (const auto& [name, path] : inputs) {
        jinputs[name] = path;
    }
    nlohmann::json root = {{"subcommand", subcommand},
                           {"inputs", jinputs},
                           {"config_hash", hex64(fnv1a(config_dump))},
                           {"version", kVersionString}};
    const std::string path = out_dir + "/manifest.json";
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write manifest: " + path);
    out << root.dump(2) << '\n';
}

}  // namespace tek
