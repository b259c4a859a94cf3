#pragma once

#include <array>
#include <fstream>
#include <string>

#include <json.hpp>

#include "mldsim/errors.hpp"
#include "mldsim/neural.hpp"
#include "mldsim/ppo.hpp"

namespace mldsim {

inline constexpr const char* kCheckpointFormat = "mldsim-checkpoint-v1";

struct CheckpointMeta {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string mode = "dual";
    long episodes = 0;
    long timesteps = 0;
};

namespace detail {

inline nlohmann::ordered_json block_to_json(const ParameterBlock& p) {
    nlohmann::ordered_json slices = nlohmann::ordered_json::object();
    for (const auto& [name, s] : p.slices()) {
        nlohmann::ordered_json entry;
        entry["rows"] = s.rows;
        entry["cols"] = s.cols;
        entry["data"] = std::vector<double>(p.value.begin() + static_cast<long>(s.offset),
                                            p.value.begin() + static_cast<long>(s.offset + s.size()));
        slices[name] = std::move(entry);
    }
    return slices;
}

inline void block_from_json(ParameterBlock& p, const nlohmann::json& slices,
                            const std::string& net_name) {
    for (const auto& [name, s] : p.slices()) {
        if (!slices.contains(name))
            throw ConfigError("checkpoint: " + net_name + " is missing slice " + name);
        const auto& entry = slices.at(name);
        const auto rows = entry.at("rows").get<std::size_t>();
        const auto cols = entry.at("cols").get<std::size_t>();
        if (rows != s.rows || cols != s.cols)
            throw ConfigError("checkpoint: " + net_name + " slice " + name + " has shape " +
                              std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                              std::to_string(s.rows) + "x" + std::to_string(s.cols));
        const auto data = entry.at("data").get<std::vector<double>>();
        if (data.size() != s.size())
            throw ConfigError("checkpoint: " + net_name + " slice " + name + " has " +
                              std::to_string(data.size()) + " values, expected " +
                              std::to_string(s.size()));
        std::copy(data.begin(), data.end(), p.value.begin() + static_cast<long>(s.offset));
    }
    if (slices.size() != p.slices().size())
        for (const auto& [name, v] : slices.items())
            if (!p.has(name))
                throw ConfigError("checkpoint: " + net_name + " has unknown slice " + name);
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const std::array<Agent, 2>& agents,
                            const CheckpointMeta& meta) {
    nlohmann::ordered_json j;
    j["format"] = kCheckpointFormat;
    j["config_hash"] = meta.config_hash;
    j["seed"] = meta.seed;
    j["mode"] = meta.mode;
    j["episodes"] = meta.episodes;
    j["timesteps"] = meta.timesteps;
    j["agents"] = nlohmann::ordered_json::array();
    for (const auto& agent : agents) {
        nlohmann::ordered_json a;
        a["policy"] = detail::block_to_json(agent.policy.params);
        a["value"] = detail::block_to_json(agent.value.params);
        j["agents"].push_back(std::move(a));
    }
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write checkpoint file: " + path);
    os << j.dump(1) << "\n";
}

inline CheckpointMeta load_checkpoint(const std::string& path, std::array<Agent, 2>& agents) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open checkpoint file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint " + path + ": " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat)
            throw ConfigError("checkpoint " + path + ": unknown format tag");
        CheckpointMeta meta;
        meta.config_hash = j.at("config_hash").get<std::string>();
        meta.seed = j.at("seed").get<std::uint64_t>();
        meta.mode = j.at("mode").get<std::string>();
        meta.episodes = j.at("episodes").get<long>();
        meta.timesteps = j.at("timesteps").get<long>();
        const auto& arr = j.at("agents");
        if (!arr.is_array() || arr.size() != 2)
            throw ConfigError("checkpoint " + path + ": expected 2 agents");
        for (int i = 0; i < 2; ++i) {
            detail::block_from_json(agents[static_cast<std::size_t>(i)].policy.params,
                                    arr.at(static_cast<std::size_t>(i)).at("policy"),
                                    "agent" + std::to_string(i) + ".policy");
            detail::block_from_json(agents[static_cast<std::size_t>(i)].value.params,
                                    arr.at(static_cast<std::size_t>(i)).at("value"),
                                    "agent" + std::to_string(i) + ".value");
        }
        return meta;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint " + path + ": " + e.what());
    }
}

} // namespace mldsim
