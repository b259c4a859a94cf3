#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mldsim/env.hpp"
#include "mldsim/errors.hpp"
#include "mldsim/ppo.hpp"

namespace mldsim {

enum class TomlKind { Bool, Int, Float, String, Array };

struct TomlValue {
    TomlKind kind = TomlKind::Int;
    bool b = false;
    long long i = 0;
    double f = 0.0;
    std::string s;
    std::vector<double> arr;
};

using TomlTable = std::map<std::string, TomlValue>;

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.') return false;
    return true;
}

inline bool parse_number(const std::string& text, TomlValue& out) {
    if (text.empty()) return false;
    // integer: optional sign, digits only
    std::size_t p = (text[0] == '+' || text[0] == '-') ? 1 : 0;
    bool all_digits = p < text.size();
    for (std::size_t k = p; k < text.size(); ++k)
        if (!std::isdigit(static_cast<unsigned char>(text[k]))) all_digits = false;
    if (all_digits) {
        out.kind = TomlKind::Int;
        out.i = std::stoll(text);
        out.f = static_cast<double>(out.i);
        return true;
    }
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (end == text.c_str() || *end != '\0') return false;
    out.kind = TomlKind::Float;
    out.f = v;
    return true;
}

inline TomlValue parse_value(const std::string& raw, const std::string& where) {
    const std::string v = trim(raw);
    if (v.empty()) throw ConfigError(where + ": missing value");
    TomlValue out;
    if (v == "true" || v == "false") {
        out.kind = TomlKind::Bool;
        out.b = v == "true";
        return out;
    }
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"')
            throw ConfigError(where + ": unterminated string");
        out.kind = TomlKind::String;
        out.s = v.substr(1, v.size() - 2);
        return out;
    }
    if (v.front() == '[') {
        if (v.back() != ']') throw ConfigError(where + ": unterminated array");
        out.kind = TomlKind::Array;
        const std::string inner = trim(v.substr(1, v.size() - 2));
        if (inner.empty()) return out;
        std::stringstream ss(inner);
        std::string item;
        while (std::getline(ss, item, ',')) {
            TomlValue elem;
            if (!parse_number(trim(item), elem))
                throw ConfigError(where + ": array elements must be numbers");
            out.arr.push_back(elem.f);
        }
        return out;
    }
    if (!parse_number(v, out)) throw ConfigError(where + ": cannot parse value '" + v + "'");
    return out;
}

} // namespace detail

// Flat "section.key" table from a small TOML subset: [section] headers,
// key = value lines, '#' comments, values of bool / int / float / string /
// numeric array.
inline TomlTable parse_toml_text(const std::string& text, const std::string& source = "config") {
    TomlTable out;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = source + ":" + std::to_string(lineno);
        bool in_string = false;
        for (std::size_t k = 0; k < line.size(); ++k) {
            if (line[k] == '"') in_string = !in_string;
            if (line[k] == '#' && !in_string) {
                line = line.substr(0, k);
                break;
            }
        }
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (!detail::valid_key(section)) throw ConfigError(where + ": bad section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        if (!detail::valid_key(key)) throw ConfigError(where + ": bad key '" + key + "'");
        const std::string full = section.empty() ? key : section + "." + key;
        if (out.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
        out[full] = detail::parse_value(line.substr(eq + 1), where);
    }
    return out;
}

inline TomlTable parse_toml_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_toml_text(ss.str(), path);
}

// "section.key=value" from the command line; replaces or inserts.
inline void apply_override(TomlTable& table, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like key=value, got '" + kv + "'");
    const std::string key = detail::trim(kv.substr(0, eq));
    if (!detail::valid_key(key)) throw ConfigError("override: bad key '" + key + "'");
    table[key] = detail::parse_value(kv.substr(eq + 1), "override " + key);
}

namespace detail {

inline double as_float(const TomlValue& v, const std::string& key) {
    if (v.kind == TomlKind::Float || v.kind == TomlKind::Int) return v.f;
    throw ConfigError("config key " + key + " must be a number");
}

inline long long as_int(const TomlValue& v, const std::string& key) {
    if (v.kind == TomlKind::Int) return v.i;
    throw ConfigError("config key " + key + " must be an integer");
}

inline bool as_bool(const TomlValue& v, const std::string& key) {
    if (v.kind == TomlKind::Bool) return v.b;
    throw ConfigError("config key " + key + " must be true or false");
}

inline std::string as_string(const TomlValue& v, const std::string& key) {
    if (v.kind == TomlKind::String) return v.s;
    throw ConfigError("config key " + key + " must be a quoted string");
}

inline std::vector<double> as_array(const TomlValue& v, const std::string& key, int expect = -1) {
    if (v.kind != TomlKind::Array) throw ConfigError("config key " + key + " must be an array");
    if (expect >= 0 && static_cast<int>(v.arr.size()) != expect)
        throw ConfigError("config key " + key + " must have " + std::to_string(expect) +
                          " elements");
    return v.arr;
}

inline Vec3 as_vec3(const TomlValue& v, const std::string& key) {
    const auto a = as_array(v, key, 3);
    return {a[0], a[1], a[2]};
}

inline std::string fmt_float(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string fmt_array(const std::vector<double>& a) {
    std::string out = "[";
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (i) out += ", ";
        out += fmt_float(a[i]);
    }
    return out + "]";
}

} // namespace detail

inline std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Every tunable of a run, with the stock two-arm scene as defaults.
struct RunConfig {
    // run
    std::string mode = "dual"; // "dual" or "single" (second arm parked, not learning)
    std::uint64_t seed = 1;
    long total_timesteps = 56000;
    int eval_episodes = 20;
    std::string dh_file = "data/ur10_dh.txt";

    // scene
    Vec3 table_lo{-0.95, -0.5, 0.66};
    Vec3 table_hi{0.95, 0.5, 0.72};
    Vec3 base0{-0.9, 0.0, 0.72};
    double base0_yaw = 0.0;
    Vec3 base1{0.9, 0.0, 0.72};
    double base1_yaw = 3.141592653589793;
    Vec3 box0_lo{-0.55, 0.7, 0.0};
    Vec3 box0_hi{-0.15, 1.1, 0.5};
    Vec3 box1_lo{0.25, 0.7, 0.0};
    Vec3 box1_hi{0.65, 1.1, 0.5};
    Vec3 goal0{-0.35, 0.9, 0.55};
    Vec3 goal1{0.45, 0.9, 0.55};
    JointVector home0{-2.25, -0.86, 1.41, -2.05, -1.61, -0.23};
    JointVector home1{1.84, -0.64, 0.99, -0.41, -1.44, -0.13};
    std::vector<Vec3> cube_centers{{-0.4, 0.25, 0.75}, {-0.1, -0.3, 0.75}, {0.2, 0.3, 0.75},
                                   {0.5, -0.2, 0.75}};
    double cube_side = 0.06;
    double vel_limit = 3.0;
    std::vector<int> monitored_joints{1, 2, 3, 5};
    bool human_enabled = true;
    std::vector<Vec3> human_waypoints{{-0.5, 2.4, 0.0}, {-0.5, 1.6, 0.0}, {-0.5, 1.25, 0.0}};
    std::vector<double> human_speeds{0.8, 0.35};
    Vec3 human_box{0.6, 0.6, 1.8};
    double human_phase = 0.0;

    RewardParams reward;
    EpisodeConfig episode; // steps_per_episode and dt; total_timesteps above
    double dbscan_eps = 0.10;
    int dbscan_min_pts = 10;
    double cloud_density = 500.0;
    double cloud_noise_sd = 0.005;
    double label_flip_rate = 0.01;
    bool include_table_obstacle = false;

    PpoConfig ppo;

    static RunConfig from_table(const TomlTable& table);
    std::string canonical_toml() const;
    std::string config_hash() const {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(fnv1a64(canonical_toml())));
        return buf;
    }
};

inline RunConfig RunConfig::from_table(const TomlTable& table) {
    RunConfig c;
    using detail::as_array;
    using detail::as_bool;
    using detail::as_float;
    using detail::as_int;
    using detail::as_string;
    using detail::as_vec3;

    auto vec3_list = [](const TomlValue& v, const std::string& key) {
        const auto a = as_array(v, key);
        if (a.size() % 3 != 0)
            throw ConfigError("config key " + key + " must have a multiple of 3 elements");
        std::vector<Vec3> out;
        for (std::size_t i = 0; i < a.size(); i += 3) out.push_back({a[i], a[i + 1], a[i + 2]});
        return out;
    };
    auto joints6 = [](const TomlValue& v, const std::string& key) {
        const auto a = as_array(v, key, 6);
        JointVector q{};
        std::copy(a.begin(), a.end(), q.begin());
        return q;
    };
    auto int_list = [](const TomlValue& v, const std::string& key) {
        const auto a = as_array(v, key);
        std::vector<int> out;
        for (double x : a) {
            if (x != std::floor(x))
                throw ConfigError("config key " + key + " must contain integers");
            out.push_back(static_cast<int>(x));
        }
        return out;
    };

    for (const auto& [key, v] : table) {
        if (key == "run.mode") c.mode = as_string(v, key);
        else if (key == "run.seed") c.seed = static_cast<std::uint64_t>(as_int(v, key));
        else if (key == "run.total_timesteps") c.total_timesteps = static_cast<long>(as_int(v, key));
        else if (key == "run.eval_episodes") c.eval_episodes = static_cast<int>(as_int(v, key));
        else if (key == "run.dh_file") c.dh_file = as_string(v, key);
        else if (key == "scene.table_lo") c.table_lo = as_vec3(v, key);
        else if (key == "scene.table_hi") c.table_hi = as_vec3(v, key);
        else if (key == "scene.base0") c.base0 = as_vec3(v, key);
        else if (key == "scene.base0_yaw") c.base0_yaw = as_float(v, key);
        else if (key == "scene.base1") c.base1 = as_vec3(v, key);
        else if (key == "scene.base1_yaw") c.base1_yaw = as_float(v, key);
        else if (key == "scene.box0_lo") c.box0_lo = as_vec3(v, key);
        else if (key == "scene.box0_hi") c.box0_hi = as_vec3(v, key);
        else if (key == "scene.box1_lo") c.box1_lo = as_vec3(v, key);
        else if (key == "scene.box1_hi") c.box1_hi = as_vec3(v, key);
        else if (key == "scene.goal0") c.goal0 = as_vec3(v, key);
        else if (key == "scene.goal1") c.goal1 = as_vec3(v, key);
        else if (key == "scene.home0") c.home0 = joints6(v, key);
        else if (key == "scene.home1") c.home1 = joints6(v, key);
        else if (key == "scene.cube_centers") c.cube_centers = vec3_list(v, key);
        else if (key == "scene.cube_side") c.cube_side = as_float(v, key);
        else if (key == "scene.vel_limit") c.vel_limit = as_float(v, key);
        else if (key == "scene.monitored_joints") c.monitored_joints = int_list(v, key);
        else if (key == "scene.human_enabled") c.human_enabled = as_bool(v, key);
        else if (key == "scene.human_waypoints") c.human_waypoints = vec3_list(v, key);
        else if (key == "scene.human_speeds") c.human_speeds = as_array(v, key);
        else if (key == "scene.human_box") c.human_box = as_vec3(v, key);
        else if (key == "scene.human_phase") c.human_phase = as_float(v, key);
        else if (key == "reward.l1") c.reward.l1 = as_float(v, key);
        else if (key == "reward.l2") c.reward.l2 = as_float(v, key);
        else if (key == "reward.sphere_radius") c.reward.sphere_radius = as_float(v, key);
        else if (key == "reward.weights") {
            const auto a = as_array(v, key, 4);
            std::copy(a.begin(), a.end(), c.reward.weights.begin());
        } else if (key == "reward.gamma") c.reward.gamma = as_float(v, key);
        else if (key == "episode.steps_per_episode")
            c.episode.steps_per_episode = static_cast<int>(as_int(v, key));
        else if (key == "episode.dt") c.episode.dt = as_float(v, key);
        else if (key == "perception.dbscan_eps") c.dbscan_eps = as_float(v, key);
        else if (key == "perception.dbscan_min_pts") c.dbscan_min_pts = static_cast<int>(as_int(v, key));
        else if (key == "perception.cloud_density") c.cloud_density = as_float(v, key);
        else if (key == "perception.cloud_noise_sd") c.cloud_noise_sd = as_float(v, key);
        else if (key == "perception.label_flip_rate") c.label_flip_rate = as_float(v, key);
        else if (key == "perception.include_table_obstacle")
            c.include_table_obstacle = as_bool(v, key);
        else if (key == "ppo.clip") c.ppo.clip = as_float(v, key);
        else if (key == "ppo.gae_lambda") c.ppo.gae_lambda = as_float(v, key);
        else if (key == "ppo.lr") c.ppo.lr = as_float(v, key);
        else if (key == "ppo.epochs") c.ppo.epochs = static_cast<int>(as_int(v, key));
        else if (key == "ppo.minibatch") c.ppo.minibatch = static_cast<int>(as_int(v, key));
        else if (key == "ppo.rollout_length") c.ppo.rollout_length = static_cast<int>(as_int(v, key));
        else if (key == "ppo.value_coef") c.ppo.value_coef = as_float(v, key);
        else if (key == "ppo.entropy_coef") c.ppo.entropy_coef = as_float(v, key);
        else if (key == "ppo.log_std_init") c.ppo.log_std_init = as_float(v, key);
        else if (key == "ppo.lstm_hidden")
            c.ppo.sizes.lstm_hidden = static_cast<std::size_t>(as_int(v, key));
        else if (key == "ppo.trunk_hidden")
            c.ppo.sizes.trunk_hidden = static_cast<std::size_t>(as_int(v, key));
        else throw ConfigError("unknown config key: " + key);
    }

    if (c.mode != "dual" && c.mode != "single")
        throw ConfigError("run.mode must be \"dual\" or \"single\"");
    if (c.total_timesteps <= 0) throw ConfigError("run.total_timesteps must be > 0");
    if (c.eval_episodes < 1) throw ConfigError("run.eval_episodes must be >= 1");
    if (c.monitored_joints.size() != 4)
        throw ConfigError("scene.monitored_joints must list 4 joints");
    for (int j : c.monitored_joints)
        if (j < 0 || j > 5) throw ConfigError("scene.monitored_joints entries must be in [0, 5]");
    if (c.human_waypoints.size() < 2) throw ConfigError("scene.human_waypoints needs >= 2 points");
    if (c.human_speeds.size() + 1 != c.human_waypoints.size())
        throw ConfigError("scene.human_speeds must have one entry per segment");
    return c;
}

inline std::string RunConfig::canonical_toml() const {
    using detail::fmt_array;
    using detail::fmt_float;
    auto flat3 = [](const std::vector<Vec3>& v) {
        std::vector<double> out;
        for (const auto& p : v) {
            out.push_back(p.x);
            out.push_back(p.y);
            out.push_back(p.z);
        }
        return out;
    };
    auto vec = [](const Vec3& p) { return std::vector<double>{p.x, p.y, p.z}; };

    std::string s;
    s += "[run]\n";
    s += "mode = \"" + mode + "\"\n";
    s += "seed = " + std::to_string(seed) + "\n";
    s += "total_timesteps = " + std::to_string(total_timesteps) + "\n";
    s += "eval_episodes = " + std::to_string(eval_episodes) + "\n";
    s += "dh_file = \"" + dh_file + "\"\n";
    s += "\n[scene]\n";
    s += "table_lo = " + fmt_array(vec(table_lo)) + "\n";
    s += "table_hi = " + fmt_array(vec(table_hi)) + "\n";
    s += "base0 = " + fmt_array(vec(base0)) + "\n";
    s += "base0_yaw = " + fmt_float(base0_yaw) + "\n";
    s += "base1 = " + fmt_array(vec(base1)) + "\n";
    s += "base1_yaw = " + fmt_float(base1_yaw) + "\n";
    s += "box0_lo = " + fmt_array(vec(box0_lo)) + "\n";
    s += "box0_hi = " + fmt_array(vec(box0_hi)) + "\n";
    s += "box1_lo = " + fmt_array(vec(box1_lo)) + "\n";
    s += "box1_hi = " + fmt_array(vec(box1_hi)) + "\n";
    s += "goal0 = " + fmt_array(vec(goal0)) + "\n";
    s += "goal1 = " + fmt_array(vec(goal1)) + "\n";
    s += "home0 = " + fmt_array({home0.begin(), home0.end()}) + "\n";
    s += "home1 = " + fmt_array({home1.begin(), home1.end()}) + "\n";
    s += "cube_centers = " + fmt_array(flat3(cube_centers)) + "\n";
    s += "cube_side = " + fmt_float(cube_side) + "\n";
    s += "vel_limit = " + fmt_float(vel_limit) + "\n";
    s += "monitored_joints = " + fmt_array({monitored_joints.begin(), monitored_joints.end()}) + "\n";
    s += "human_enabled = " + std::string(human_enabled ? "true" : "false") + "\n";
    s += "human_waypoints = " + fmt_array(flat3(human_waypoints)) + "\n";
    s += "human_speeds = " + fmt_array(human_speeds) + "\n";
    s += "human_box = " + fmt_array(vec(human_box)) + "\n";
    s += "human_phase = " + fmt_float(human_phase) + "\n";
    s += "\n[reward]\n";
    s += "l1 = " + fmt_float(reward.l1) + "\n";
    s += "l2 = " + fmt_float(reward.l2) + "\n";
    s += "sphere_radius = " + fmt_float(reward.sphere_radius) + "\n";
    s += "weights = " + fmt_array({reward.weights.begin(), reward.weights.end()}) + "\n";
    s += "gamma = " + fmt_float(reward.gamma) + "\n";
    s += "\n[episode]\n";
    s += "steps_per_episode = " + std::to_string(episode.steps_per_episode) + "\n";
    s += "dt = " + fmt_float(episode.dt) + "\n";
    s += "\n[perception]\n";
    s += "dbscan_eps = " + fmt_float(dbscan_eps) + "\n";
    s += "dbscan_min_pts = " + std::to_string(dbscan_min_pts) + "\n";
    s += "cloud_density = " + fmt_float(cloud_density) + "\n";
    s += "cloud_noise_sd = " + fmt_float(cloud_noise_sd) + "\n";
    s += "label_flip_rate = " + fmt_float(label_flip_rate) + "\n";
    s += "include_table_obstacle = " + std::string(include_table_obstacle ? "true" : "false") + "\n";
    s += "\n[ppo]\n";
    s += "clip = " + fmt_float(ppo.clip) + "\n";
    s += "gae_lambda = " + fmt_float(ppo.gae_lambda) + "\n";
    s += "lr = " + fmt_float(ppo.lr) + "\n";
    s += "epochs = " + std::to_string(ppo.epochs) + "\n";
    s += "minibatch = " + std::to_string(ppo.minibatch) + "\n";
    s += "rollout_length = " + std::to_string(ppo.rollout_length) + "\n";
    s += "value_coef = " + fmt_float(ppo.value_coef) + "\n";
    s += "entropy_coef = " + fmt_float(ppo.entropy_coef) + "\n";
    s += "log_std_init = " + fmt_float(ppo.log_std_init) + "\n";
    s += "lstm_hidden = " + std::to_string(ppo.sizes.lstm_hidden) + "\n";
    s += "trunk_hidden = " + std::to_string(ppo.sizes.trunk_hidden) + "\n";
    return s;
}

} // namespace mldsim
