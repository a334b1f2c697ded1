#pragma once

// Run manifest: every CLI command writes one next to its primary output
// so a run can be reproduced from the recorded configuration. No
// timestamps; deterministic reruns produce identical manifests.

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

#include "osrk/common.hpp"
#include "osrk/kernel_bank.hpp"  // read_file / write_file_atomic

namespace osrk {

struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    std::map<std::string, std::string> config;  // fully resolved settings
    uint64_t seed = 0;
    bool deterministic = true;
    int threads = 1;
    std::vector<std::string> inputs;   // paths
    std::vector<std::string> outputs;  // paths

    void add_config(const std::string& key, const std::string& value) { config[key] = value; }

    std::string to_json() const {
        nlohmann::json j;
        j["tool"] = "osrk";
        j["tool_version"] = kToolVersion;
        j["command"] = command;
        j["argv"] = argv;
        j["config"] = config;
        j["seed"] = seed;
        j["deterministic"] = deterministic;
        j["threads"] = threads;
        nlohmann::json ins = nlohmann::json::array();
        for (const auto& p : inputs) {
            nlohmann::json e;
            e["path"] = p;
            try {
                std::string bytes = read_file(p);
                e["bytes"] = bytes.size();
                char hex[16];
                std::snprintf(hex, sizeof(hex), "%08x", crc32_of(bytes.data(), bytes.size()));
                e["crc32"] = hex;
            } catch (const Error&) {
                e["crc32"] = nullptr;
            }
            ins.push_back(e);
        }
        j["inputs"] = ins;
        j["outputs"] = outputs;
        return j.dump(2) + "\n";
    }

    // Written alongside the primary output as <output>.manifest.json, or
    // run_manifest.json inside directory outputs.
    void write_alongside(const std::string& primary_output, bool is_directory = false) const {
        std::string path = is_directory ? primary_output + "/run_manifest.json"
                                        : primary_output + ".manifest.json";
        write_file_atomic(path, to_json());
    }
};

}  // namespace osrk
