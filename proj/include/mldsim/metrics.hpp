#pragma once

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mldsim/errors.hpp"

namespace mldsim {

struct EpisodeRecord {
    long episode = 0;
    long timestep = 0;
    double cum_reward = 0.0;
    int steps = 0;
    int reached_goal = 0;
    double min_obstacle_dist = std::numeric_limits<double>::infinity();
    int branch_goal_count = 0;
};

inline const char* kMetricsHeader = "episode,timestep,cum_reward,steps,reached_goal,min_obstacle_dist,branch_goal_count";

namespace detail {

inline std::string csv_num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_csv_num(const std::string& s, const std::string& where) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ConfigError(where + ": bad number '" + s + "'");
    return v;
}

} // namespace detail

inline void write_metrics_csv(const std::string& path, const std::vector<EpisodeRecord>& records,
                              const std::string& config_hash = "") {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write metrics file: " + path);
    if (!config_hash.empty()) os << "# config_hash=" << config_hash << "\n";
    os << kMetricsHeader << "\n";
    for (const auto& r : records) {
        os << r.episode << ',' << r.timestep << ',' << detail::csv_num(r.cum_reward) << ','
           << r.steps << ',' << r.reached_goal << ',' << detail::csv_num(r.min_obstacle_dist)
           << ',' << r.branch_goal_count << "\n";
    }
}

inline std::vector<EpisodeRecord> read_metrics_csv(const std::string& path,
                                                   std::string* config_hash = nullptr) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open metrics file: " + path);
    std::vector<EpisodeRecord> out;
    std::string line;
    int lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            const std::string tag = "# config_hash=";
            if (config_hash && line.rfind(tag, 0) == 0) *config_hash = line.substr(tag.size());
            continue;
        }
        const std::string where = path + ":" + std::to_string(lineno);
        if (!header_seen) {
            if (line != kMetricsHeader)
                throw ConfigError(where + ": unexpected metrics header '" + line + "'");
            header_seen = true;
            continue;
        }
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) cols.push_back(col);
        if (cols.size() != 7) throw ConfigError(where + ": expected 7 columns");
        EpisodeRecord r;
        r.episode = std::stol(cols[0]);
        r.timestep = std::stol(cols[1]);
        r.cum_reward = detail::parse_csv_num(cols[2], where);
        r.steps = std::stoi(cols[3]);
        r.reached_goal = std::stoi(cols[4]);
        r.min_obstacle_dist = detail::parse_csv_num(cols[5], where);
        r.branch_goal_count = std::stoi(cols[6]);
        out.push_back(r);
    }
    if (!header_seen) throw ConfigError(path + ": missing metrics header");
    return out;
}

// Trailing moving average: out[i] averages the last `window` values up to
// and including i.
inline std::vector<double> moving_average(const std::vector<double>& values, int window) {
    if (window < 1) throw std::domain_error("moving_average: window must be >= 1");
    std::vector<double> out(values.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        acc += values[i];
        if (i >= static_cast<std::size_t>(window)) acc -= values[i - static_cast<std::size_t>(window)];
        const auto n = std::min<std::size_t>(i + 1, static_cast<std::size_t>(window));
        out[i] = acc / static_cast<double>(n);
    }
    return out;
}

} // namespace mldsim
