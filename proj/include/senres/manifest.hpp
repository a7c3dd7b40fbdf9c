#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "senres/common.hpp"

namespace senres {

// Everything needed to re-execute and audit a run: the exact config, the
// seed, per-epoch losses, per-repetition scores, timing, and content hashes
// of produced artifacts.
struct RunManifest {
    std::string kind;  // "pretrain", "eval", ...
    nlohmann::json config;
    uint64_t seed = 0;
    std::vector<double> epoch_losses;
    std::vector<double> repetition_scores;
    double wall_seconds = 0.0;
    std::map<std::string, std::string> artifact_hashes;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = kind;
        j["config"] = config;
        j["seed"] = seed;
        j["epoch_losses"] = epoch_losses;
        j["repetition_scores"] = repetition_scores;
        j["wall_seconds"] = wall_seconds;
        j["artifact_hashes"] = artifact_hashes;
        return j;
    }

    static RunManifest from_json(const nlohmann::json& j) {
        RunManifest m;
        if (!j.is_object()) throw ConfigError("manifest: expected a JSON object");
        m.kind = j.value("kind", "");
        if (j.contains("config")) m.config = j["config"];
        m.seed = j.value("seed", uint64_t(0));
        if (j.contains("epoch_losses"))
            m.epoch_losses = j["epoch_losses"].get<std::vector<double>>();
        if (j.contains("repetition_scores"))
            m.repetition_scores = j["repetition_scores"].get<std::vector<double>>();
        m.wall_seconds = j.value("wall_seconds", 0.0);
        if (j.contains("artifact_hashes"))
            m.artifact_hashes = j["artifact_hashes"].get<std::map<std::string, std::string>>();
        return m;
    }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw FormatError("manifest: cannot open '" + path + "' for writing");
        os << to_json().dump(2) << "\n";
    }

    static RunManifest load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw FormatError("manifest: cannot open '" + path + "'");
        nlohmann::json j;
        try {
            is >> j;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest: invalid JSON in '" + path + "': " + e.what());
        }
        return from_json(j);
    }
};

inline std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

inline std::string hash_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("hash_file: cannot open '" + path + "'");
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (is.read(buf, sizeof buf) || is.gcount() > 0)
        h = fnv1a64(buf, static_cast<size_t>(is.gcount()), h);
    return hash_hex(h);
}

}  // namespace senres
