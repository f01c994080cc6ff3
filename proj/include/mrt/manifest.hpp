#pragma once

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "mrt/common.hpp"

namespace mrt {

inline const char* kToolVersion = "mrt 1.0.0";

// One manifest per command invocation: the fully resolved config, the seed,
// and the artifacts the run produced (paths relative to the manifest).
// Rerunning from a manifest reproduces those artifacts byte for byte; the
// timing field is run metadata and takes no part in that contract.
struct RunManifest {
    std::string tool_version = kToolVersion;
    std::string command;
    uint64_t seed = 0;
    std::string config_text;
    std::map<std::string, std::string> artifacts;
    double wall_seconds = 0.0;
};

inline void write_manifest(const std::string& path, const RunManifest& m) {
    nlohmann::ordered_json j;
    j["tool_version"] = m.tool_version;
    j["command"] = m.command;
    j["seed"] = m.seed;
    j["config"] = m.config_text;
    j["artifacts"] = m.artifacts;
    j["wall_seconds"] = m.wall_seconds;
    std::ofstream os(path);
    if (!os) throw data_error("manifest: cannot write " + path);
    os << j.dump(2) << '\n';
}

inline RunManifest read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw data_error("manifest: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("manifest: " + path + " is not valid JSON: " + e.what());
    }
    RunManifest m;
    m.tool_version = j.value("tool_version", "");
    m.command = j.value("command", "");
    m.seed = j.value("seed", 0ull);
    m.config_text = j.value("config", "");
    if (j.contains("artifacts"))
        for (auto& [k, v] : j["artifacts"].items()) m.artifacts[k] = v.get<std::string>();
    m.wall_seconds = j.value("wall_seconds", 0.0);
    return m;
}

} // namespace mrt
