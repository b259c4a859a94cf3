#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "mldsim/checkpoint.hpp"
#include "mldsim/config.hpp"
#include "mldsim/env.hpp"
#include "mldsim/metrics.hpp"
#include "mldsim/ppo.hpp"
#include "mldsim/svg_plot.hpp"

namespace mldsim {

inline constexpr int kSmoothWindow = 50;
inline constexpr double kJointRange = 6.283185307179586; // +/- full turn

inline ArmModel build_arm(const RunConfig& cfg, const Vec3& base_pos, double base_yaw) {
    ArmModel arm;
    arm.dh = load_dh_table(cfg.dh_file);
    arm.base = Transform::yaw(base_yaw, base_pos);
    for (int j = 0; j < 6; ++j) {
        arm.joint_lo[static_cast<std::size_t>(j)] = -kJointRange;
        arm.joint_hi[static_cast<std::size_t>(j)] = kJointRange;
        arm.vel_limits[static_cast<std::size_t>(j)] = cfg.vel_limit;
    }
    std::copy(cfg.monitored_joints.begin(), cfg.monitored_joints.end(),
              arm.monitored_joints.begin());
    arm.validate();
    return arm;
}

inline WorldState build_world(const RunConfig& cfg) {
    WorldState w;
    w.table = {cfg.table_lo, cfg.table_hi};
    w.arms[0] = {build_arm(cfg, cfg.base0, cfg.base0_yaw), cfg.home0};
    w.arms[1] = {build_arm(cfg, cfg.base1, cfg.base1_yaw), cfg.home1};
    w.boxes[0] = {{cfg.box0_lo, cfg.box0_hi}, cfg.goal0};
    w.boxes[1] = {{cfg.box1_lo, cfg.box1_hi}, cfg.goal1};
    for (const auto& c : cfg.cube_centers) {
        const double h = cfg.cube_side / 2.0;
        w.cubes.push_back({{c.x - h, c.y - h, c.z - h}, {c.x + h, c.y + h, c.z + h}});
    }
    w.human.enabled = cfg.human_enabled;
    w.human.trajectory = {cfg.human_waypoints, cfg.human_speeds};
    w.human.phase = cfg.human_phase;
    w.human.box_extents = cfg.human_box;
    if (w.human.enabled) {
        w.human.trajectory.validate();
        w.human.position = advance_human(w.human.trajectory, w.human.phase);
    }
    w.rng_seed = cfg.seed;
    return w;
}

inline EnvParams build_env_params(const RunConfig& cfg) {
    EnvParams p;
    p.reward = cfg.reward;
    p.episode = cfg.episode;
    p.episode.total_timesteps = cfg.total_timesteps;
    p.dbscan_eps = cfg.dbscan_eps;
    p.dbscan_min_pts = cfg.dbscan_min_pts;
    p.cloud_density = cfg.cloud_density;
    p.cloud_noise_sd = cfg.cloud_noise_sd;
    p.label_flip_rate = cfg.label_flip_rate;
    p.include_table_obstacle = cfg.include_table_obstacle;
    return p;
}

inline DualEnv build_env(const RunConfig& cfg) {
    return DualEnv(build_world(cfg), build_env_params(cfg), {cfg.home0, cfg.home1}, cfg.seed);
}

namespace detail {

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

inline std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write file: " + path);
    os << text;
}

inline EpisodeRecord to_record(const EpisodeSummary& s) {
    EpisodeRecord r;
    r.episode = s.episode;
    r.timestep = s.timestep_end;
    r.cum_reward = s.cum_reward;
    r.steps = s.steps;
    r.reached_goal = s.reached_goal ? 1 : 0;
    r.min_obstacle_dist = s.min_obstacle_dist;
    r.branch_goal_count = s.goal_branch_count;
    return r;
}

inline double mean_tail(const std::vector<EpisodeRecord>& recs, std::size_t count,
                        double (*pick)(const EpisodeRecord&)) {
    if (recs.empty()) return 0.0;
    const std::size_t n = std::min(count, recs.size());
    double acc = 0.0;
    for (std::size_t i = recs.size() - n; i < recs.size(); ++i) acc += pick(recs[i]);
    return acc / static_cast<double>(n);
}

inline double mean_head(const std::vector<EpisodeRecord>& recs, std::size_t count,
                        double (*pick)(const EpisodeRecord&)) {
    if (recs.empty()) return 0.0;
    const std::size_t n = std::min(count, recs.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += pick(recs[i]);
    return acc / static_cast<double>(n);
}

inline double pick_return(const EpisodeRecord& r) { return r.cum_reward; }
inline double pick_goal(const EpisodeRecord& r) { return static_cast<double>(r.reached_goal); }

inline void write_learning_curves(const std::string& out_dir, const std::string& hash,
                                  const std::vector<std::vector<EpisodeRecord>>& per_agent) {
    (void)hash;
    std::vector<std::vector<double>> raw(per_agent.size()), smooth(per_agent.size());
    for (std::size_t i = 0; i < per_agent.size(); ++i) {
        for (const auto& r : per_agent[i]) raw[i].push_back(r.cum_reward);
        smooth[i] = moving_average(raw[i], kSmoothWindow);
    }

    std::vector<PlotSeries> everything;
    for (std::size_t i = 0; i < per_agent.size(); ++i) {
        everything.push_back({"", raw[i], "#000000", 1.0});
        everything.push_back({"", smooth[i], "#000000", 1.0});
    }
    const PlotLimits shared = plot_limits(everything);

    const std::array<const char*, 2> strong = {"#1f6fb5", "#b5541f"};
    for (std::size_t i = 0; i < per_agent.size(); ++i) {
        const std::string tag = "agent" + std::to_string(i);
        write_svg_plot(join(out_dir, "learning_curve_" + tag + ".svg"),
                       "Discounted return, " + tag, "episode", "discounted return",
                       {{"return", raw[i], "#c9d7e4", 1.0},
                        {"return (avg " + std::to_string(kSmoothWindow) + ")", smooth[i],
                         strong[i % 2], 2.0}},
                       shared);
    }
    if (per_agent.size() == 2) {
        write_svg_plot(join(out_dir, "learning_curves.svg"), "Discounted return per agent",
                       "episode", "discounted return",
                       {{"agent0 (avg " + std::to_string(kSmoothWindow) + ")", smooth[0],
                         strong[0], 2.0},
                        {"agent1 (avg " + std::to_string(kSmoothWindow) + ")", smooth[1],
                         strong[1], 2.0}},
                       shared);
    }
}

} // namespace detail

struct TrainOutputs {
    TrainResult result;
    std::vector<std::vector<EpisodeRecord>> per_agent;
};

inline TrainOutputs run_train(const RunConfig& cfg, const std::string& out_dir) {
    detail::ensure_dir(out_dir);
    const std::string hash = cfg.config_hash();
    detail::write_text(detail::join(out_dir, "config_used.toml"), cfg.canonical_toml());

    DualEnv env = build_env(cfg);
    std::array<Agent, 2> agents{Agent(cfg.ppo, cfg.seed, 0), Agent(cfg.ppo, cfg.seed, 1)};

    const int n_agents = cfg.mode == "single" ? 1 : 2;
    std::vector<std::vector<EpisodeRecord>> per_agent(static_cast<std::size_t>(n_agents));

    const long total_episodes = cfg.total_timesteps / cfg.episode.steps_per_episode;
    const auto t0 = std::chrono::steady_clock::now();

    TrainHooks hooks;
    hooks.agent_enabled = [n_agents](int i) { return i < n_agents; };
    hooks.on_episode = [&](int i, const EpisodeSummary& s) {
        per_agent[static_cast<std::size_t>(i)].push_back(detail::to_record(s));
        if (i == 0 && (s.episode + 1) % 200 == 0) {
            const double elapsed =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::printf("episode %ld/%ld  t=%ld  return %.3f  [%.0fs]\n", s.episode + 1,
                        total_episodes, s.timestep_end, s.cum_reward, elapsed);
            std::fflush(stdout);
        }
    };

    TrainOutputs out;
    out.result = train_dual(env, agents, cfg.ppo, cfg.total_timesteps, hooks);
    out.per_agent = per_agent;

    for (int i = 0; i < n_agents; ++i)
        write_metrics_csv(detail::join(out_dir, "metrics_agent" + std::to_string(i) + ".csv"),
                          per_agent[static_cast<std::size_t>(i)], hash);
    detail::write_learning_curves(out_dir, hash, per_agent);

    CheckpointMeta meta;
    meta.config_hash = hash;
    meta.seed = cfg.seed;
    meta.mode = cfg.mode;
    meta.episodes = out.result.episodes;
    meta.timesteps = out.result.timesteps;
    save_checkpoint(detail::join(out_dir, "checkpoint_final.json"), agents, meta);

    nlohmann::ordered_json summary;
    summary["config_hash"] = hash;
    summary["seed"] = cfg.seed;
    summary["mode"] = cfg.mode;
    summary["episodes"] = out.result.episodes;
    summary["timesteps"] = out.result.timesteps;
    summary["agents"] = nlohmann::ordered_json::array();
    for (int i = 0; i < n_agents; ++i) {
        const auto& recs = per_agent[static_cast<std::size_t>(i)];
        nlohmann::ordered_json a;
        a["updates"] = out.result.updates[static_cast<std::size_t>(i)];
        a["mean_return_first_100"] = detail::mean_head(recs, 100, detail::pick_return);
        a["mean_return_last_100"] = detail::mean_tail(recs, 100, detail::pick_return);
        a["success_rate_first_100"] = detail::mean_head(recs, 100, detail::pick_goal);
        a["success_rate_last_100"] = detail::mean_tail(recs, 100, detail::pick_goal);
        summary["agents"].push_back(std::move(a));
    }
    detail::write_text(detail::join(out_dir, "summary.json"), summary.dump(1) + "\n");
    return out;
}

inline void run_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                     const std::string& out_dir) {
    detail::ensure_dir(out_dir);
    const std::string hash = cfg.config_hash();

    DualEnv env = build_env(cfg);
    std::array<Agent, 2> agents{Agent(cfg.ppo, cfg.seed, 0), Agent(cfg.ppo, cfg.seed, 1)};
    const CheckpointMeta meta = load_checkpoint(checkpoint_path, agents);

    const int n_agents = cfg.mode == "single" ? 1 : 2;
    const int block_steps = cfg.episode.steps_per_episode;
    std::vector<std::vector<EpisodeRecord>> per_agent(static_cast<std::size_t>(n_agents));

    for (int ep = 0; ep < cfg.eval_episodes; ++ep) {
        auto obs = ep == 0 ? env.full_reset() : env.reset();
        std::array<std::vector<double>, 2> rewards;
        std::array<double, 2> min_dist{std::numeric_limits<double>::infinity(),
                                       std::numeric_limits<double>::infinity()};
        std::array<int, 2> goal_branches{};
        for (int step = 0; step < block_steps; ++step) {
            std::array<Action, 2> actions{};
            for (int i = 0; i < n_agents; ++i) {
                const auto enc = encode_observation(obs[static_cast<std::size_t>(i)]);
                actions[static_cast<std::size_t>(i)] =
                    agents[static_cast<std::size_t>(i)].policy.forward(enc).mean;
            }
            const auto results = env.step(actions);
            for (int i = 0; i < n_agents; ++i) {
                const auto& r = results[static_cast<std::size_t>(i)];
                obs[static_cast<std::size_t>(i)] = r.obs;
                rewards[static_cast<std::size_t>(i)].push_back(r.reward);
                min_dist[static_cast<std::size_t>(i)] =
                    std::min(min_dist[static_cast<std::size_t>(i)], r.min_obstacle_dist);
                if (r.branch == RewardBranch::Goal) ++goal_branches[static_cast<std::size_t>(i)];
            }
        }
        for (int i = 0; i < n_agents; ++i) {
            EpisodeRecord rec;
            rec.episode = ep;
            rec.timestep = static_cast<long>(ep + 1) * block_steps;
            rec.cum_reward = std::accumulate(rewards[static_cast<std::size_t>(i)].begin(),
                                             rewards[static_cast<std::size_t>(i)].end(), 0.0);
            rec.steps = static_cast<int>(rewards[static_cast<std::size_t>(i)].size());
            rec.reached_goal = env.goal_reached(i) ? 1 : 0;
            rec.min_obstacle_dist = min_dist[static_cast<std::size_t>(i)];
            rec.branch_goal_count = goal_branches[static_cast<std::size_t>(i)];
            per_agent[static_cast<std::size_t>(i)].push_back(rec);
        }
    }

    for (int i = 0; i < n_agents; ++i)
        write_metrics_csv(detail::join(out_dir, "eval_metrics_agent" + std::to_string(i) + ".csv"),
                          per_agent[static_cast<std::size_t>(i)], hash);

    nlohmann::ordered_json summary;
    summary["config_hash"] = hash;
    summary["checkpoint_config_hash"] = meta.config_hash;
    summary["checkpoint"] = checkpoint_path;
    summary["seed"] = cfg.seed;
    summary["mode"] = cfg.mode;
    summary["episodes"] = cfg.eval_episodes;
    summary["agents"] = nlohmann::ordered_json::array();
    for (int i = 0; i < n_agents; ++i) {
        const auto& recs = per_agent[static_cast<std::size_t>(i)];
        nlohmann::ordered_json a;
        a["mean_return"] = detail::mean_tail(recs, recs.size(), detail::pick_return);
        a["success_rate"] = detail::mean_tail(recs, recs.size(), detail::pick_goal);
        summary["agents"].push_back(std::move(a));
    }
    detail::write_text(detail::join(out_dir, "eval_summary.json"), summary.dump(1) + "\n");
}

// The labeled cloud the agents would see after `steps` world ticks with no
// arm motion.
inline void run_dump_cloud(const RunConfig& cfg, const std::string& out_dir, int steps) {
    if (steps < 0) throw ConfigError("dump-cloud: steps must be >= 0");
    detail::ensure_dir(out_dir);

    WorldState w = build_world(cfg);
    Rng cloud_rng(derive_seed(cfg.seed, "cloud"));
    for (int k = 0; k < steps; ++k) {
        // keep the random stream aligned with a live run
        (void)synth_cloud(w, cfg.cloud_density, cfg.cloud_noise_sd, cfg.label_flip_rate, cloud_rng);
        w = advance_world(w, {}, cfg.episode.dt);
    }
    const LabeledPointCloud cloud =
        synth_cloud(w, cfg.cloud_density, cfg.cloud_noise_sd, cfg.label_flip_rate, cloud_rng);

    const std::string path = detail::join(out_dir, "cloud.csv");
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write cloud file: " + path);
    write_cloud_csv(cloud, os, cfg.config_hash());
}

// Rebuild the SVG learning curves from the metrics files in a run directory.
inline void run_plot(const std::string& out_dir) {
    std::vector<std::vector<EpisodeRecord>> per_agent;
    std::string hash;
    for (int i = 0; i < 2; ++i) {
        const std::string path =
            detail::join(out_dir, "metrics_agent" + std::to_string(i) + ".csv");
        if (!std::filesystem::exists(path)) break;
        per_agent.push_back(read_metrics_csv(path, i == 0 ? &hash : nullptr));
    }
    if (per_agent.empty())
        throw ConfigError("plot: no metrics_agent0.csv in " + out_dir);
    detail::write_learning_curves(out_dir, hash, per_agent);
}

} // namespace mldsim
