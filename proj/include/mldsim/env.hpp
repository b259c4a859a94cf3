#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "mldsim/errors.hpp"
#include "mldsim/perception.hpp"
#include "mldsim/rng.hpp"
#include "mldsim/scene.hpp"

namespace mldsim {

struct RewardParams {
    double l1 = 0.05;        // clearance margin subtracted in the obstacle branch
    double l2 = 0.15;        // goal-reached radius around the target
    double sphere_radius = 0.40; // monitored-joint safety sphere
    JointWeights weights{0.1, 0.2, 0.3, 0.4};
    double gamma = 0.99;

    void validate() const {
        if (!(l1 > 0.0) || !(l2 > 0.0)) throw ConfigError("reward: l1 and l2 must be > 0");
        if (!(l1 < l2)) throw ConfigError("reward: l1 must be < l2");
        if (!(sphere_radius > 0.0)) throw ConfigError("reward: sphere_radius must be > 0");
        double sum = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw ConfigError("reward: weights must be >= 0");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("reward: weights must sum to 1");
        if (!(gamma > 0.0) || gamma > 1.0) throw ConfigError("reward: gamma must be in (0, 1]");
    }
};

enum class RewardBranch { Goal = 0, Obstacle = 1, Free = 2 };

struct RewardResult {
    double reward = 0.0;
    RewardBranch branch = RewardBranch::Free;
    double min_obstacle_dist = std::numeric_limits<double>::infinity();
};

// Piecewise step reward. Goal takes precedence; otherwise any obstacle with a
// monitored-joint distance inside the safety sphere switches on the obstacle
// branch, scored by the smallest weighted distance among such obstacles.
inline RewardResult compute_reward(double d_eg, const ObstacleSet& obstacles,
                                   const RewardParams& p) {
    RewardResult r;
    for (const auto& e : obstacles.entries)
        for (double dk : e.d) r.min_obstacle_dist = std::min(r.min_obstacle_dist, dk);

    if (d_eg <= p.l2) {
        r.branch = RewardBranch::Goal;
        r.reward = 2.0;
        return r;
    }

    double d_min = std::numeric_limits<double>::infinity();
    for (const auto& e : obstacles.entries) {
        const bool inside = std::any_of(e.d.begin(), e.d.end(),
                                        [&](double dk) { return dk < p.sphere_radius; });
        if (inside) d_min = std::min(d_min, e.weighted_distance);
    }

    if (std::isfinite(d_min)) {
        r.branch = RewardBranch::Obstacle;
        r.reward = 2.0 * d_min - p.l1 - d_eg / 2.0;
    } else {
        r.branch = RewardBranch::Free;
        r.reward = -d_eg / 2.0;
    }
    return r;
}

// G = sum_{k=1..N} gamma^k r_k
inline double discounted_return(const std::vector<double>& rewards, double gamma) {
    double g = 0.0;
    for (std::size_t k = rewards.size(); k > 0; --k) g = gamma * (rewards[k - 1] + g);
    return g;
}

struct Observation {
    JointVector q{};
    ObstacleSet obstacles; // sorted, closest last
    Vec3 goal;             // master base frame
};

// Farthest first so the recurrent encoder reads the closest obstacle most
// recently. Ties fall back to (kind, id) so the order is total.
inline void sort_obstacles(ObstacleSet& set) {
    std::stable_sort(set.entries.begin(), set.entries.end(),
                     [](const ObstacleEntry& a, const ObstacleEntry& b) {
                         if (a.weighted_distance != b.weighted_distance)
                             return a.weighted_distance > b.weighted_distance;
                         if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
                         return a.id < b.id;
                     });
}

// Flat network feed: one 12-vector per obstacle (4 surface points), plus the
// non-sequential part (joint angles and goal).
struct EncodedObs {
    std::vector<std::array<double, 12>> seq;
    std::array<double, 9> extra{};
};

inline EncodedObs encode_observation(const Observation& obs) {
    EncodedObs e;
    e.seq.reserve(obs.obstacles.entries.size());
    for (const auto& entry : obs.obstacles.entries) {
        std::array<double, 12> row{};
        for (int k = 0; k < 4; ++k) {
            row[static_cast<std::size_t>(3 * k) + 0] = entry.nearest_points[k].x;
            row[static_cast<std::size_t>(3 * k) + 1] = entry.nearest_points[k].y;
            row[static_cast<std::size_t>(3 * k) + 2] = entry.nearest_points[k].z;
        }
        e.seq.push_back(row);
    }
    for (int i = 0; i < 6; ++i) e.extra[static_cast<std::size_t>(i)] = obs.q[static_cast<std::size_t>(i)];
    e.extra[6] = obs.goal.x;
    e.extra[7] = obs.goal.y;
    e.extra[8] = obs.goal.z;
    return e;
}

using Action = std::array<double, 6>; // joint velocities, rad/s

struct EpisodeConfig {
    int steps_per_episode = 40;
    double dt = 0.1;
    long total_timesteps = 56000;

    void validate() const {
        if (steps_per_episode <= 0) throw ConfigError("episode: steps_per_episode must be > 0");
        if (!(dt > 0.0)) throw ConfigError("episode: dt must be > 0");
        if (total_timesteps <= 0) throw ConfigError("episode: total_timesteps must be > 0");
    }
};

struct EnvParams {
    RewardParams reward;
    EpisodeConfig episode;
    double dbscan_eps = 0.10;
    int dbscan_min_pts = 10;
    double cloud_density = 500.0;
    double cloud_noise_sd = 0.005;
    double label_flip_rate = 0.01;
    bool include_table_obstacle = false;

    void validate() const {
        reward.validate();
        episode.validate();
        if (!(dbscan_eps > 0.0)) throw ConfigError("perception: dbscan_eps must be > 0");
        if (dbscan_min_pts < 1) throw ConfigError("perception: dbscan_min_pts must be >= 1");
        if (!(cloud_density > 0.0)) throw ConfigError("perception: cloud_density must be > 0");
        if (cloud_noise_sd < 0.0) throw ConfigError("perception: cloud_noise_sd must be >= 0");
        if (label_flip_rate < 0.0 || label_flip_rate >= 1.0)
            throw ConfigError("perception: label_flip_rate must be in [0, 1)");
    }
};

struct StepResult {
    Observation obs;
    double reward = 0.0;
    bool done = false; // goal reached at or before this step, or block exhausted
    RewardBranch branch = RewardBranch::Free;
    double d_eg = 0.0;
    double min_obstacle_dist = std::numeric_limits<double>::infinity();
};

// Two arms over a shared table. Every episode block runs the full step count
// and both agents keep acting throughout: the goal region is absorbing in
// reward terms (each step spent inside it scores the goal branch again), not
// in control terms. The human keeps walking across block boundaries, so
// consecutive episodes see it at different phases.
class DualEnv {
public:
    DualEnv(WorldState initial, EnvParams params, std::array<JointVector, 2> home,
            std::uint64_t seed)
        : params_(std::move(params)), initial_(std::move(initial)), home_(home),
          cloud_rng_(derive_seed(seed, "cloud")) {
        params_.validate();
        for (auto& arm : initial_.arms) arm.model.validate();
        world_ = initial_;
        full_reset();
    }

    std::array<Observation, 2> full_reset() {
        world_ = initial_;
        for (int i = 0; i < 2; ++i) world_.arms[static_cast<std::size_t>(i)].q = home_[static_cast<std::size_t>(i)];
        if (world_.human.enabled) {
            world_.human.trajectory.validate();
            world_.human.position = advance_human(world_.human.trajectory, world_.human.phase);
        }
        done_ = {false, false};
        step_in_block_ = 0;
        return observe();
    }

    // Start the next block: re-home the arms, keep world time (human phase) running.
    std::array<Observation, 2> reset() {
        for (int i = 0; i < 2; ++i) world_.arms[static_cast<std::size_t>(i)].q = home_[static_cast<std::size_t>(i)];
        done_ = {false, false};
        step_in_block_ = 0;
        return observe();
    }

    std::array<StepResult, 2> step(const std::array<Action, 2>& actions) {
        if (step_in_block_ >= params_.episode.steps_per_episode)
            throw std::logic_error("DualEnv::step: episode block already finished, reset first");

        world_ = advance_world(world_, actions, params_.episode.dt);
        ++step_in_block_;

        auto obs = observe();
        std::array<StepResult, 2> out;
        for (int i = 0; i < 2; ++i) {
            auto& r = out[static_cast<std::size_t>(i)];
            r.obs = std::move(obs[static_cast<std::size_t>(i)]);
            r.d_eg = flange_goal_distance(i);
            const RewardResult rr = compute_reward(r.d_eg, r.obs.obstacles, params_.reward);
            r.reward = rr.reward;
            r.branch = rr.branch;
            r.min_obstacle_dist = rr.min_obstacle_dist;
            if (rr.branch == RewardBranch::Goal) done_[static_cast<std::size_t>(i)] = true;
            r.done = done_[static_cast<std::size_t>(i)] ||
                     step_in_block_ >= params_.episode.steps_per_episode;
        }
        return out;
    }

    bool block_finished() const { return step_in_block_ >= params_.episode.steps_per_episode; }
    bool goal_reached(int i) const { return done_[static_cast<std::size_t>(i)]; }
    int step_in_block() const { return step_in_block_; }
    const WorldState& world() const { return world_; }
    const EnvParams& params() const { return params_; }
    const LabeledPointCloud& last_cloud() const { return last_cloud_; }

    double flange_goal_distance(int i) const {
        const auto& arm = world_.arms[static_cast<std::size_t>(i)];
        const Vec3 flange = fk(arm.model, arm.q)[6].trans;
        return distance(flange, world_.boxes[static_cast<std::size_t>(i)].goal);
    }

    // Everything an agent senses about the scene, in its own base frame.
    Observation observe_agent(int i, const LabeledPointCloud& cloud) const {
        const auto pts = human_points(cloud);
        std::vector<Cluster> clusters;
        if (!pts.empty()) clusters = dbscan(pts, params_.dbscan_eps, params_.dbscan_min_pts).first;
        return observe_agent_clusters(i, clusters);
    }

private:
    Observation observe_agent_clusters(int i, const std::vector<Cluster>& clusters) const {
        const auto& arm = world_.arms[static_cast<std::size_t>(i)];
        const auto& partner = world_.arms[static_cast<std::size_t>(1 - i)];
        const Transform to_base = arm.model.base.inverse();

        Observation obs;
        obs.q = arm.q;
        obs.goal = to_base.apply(world_.boxes[static_cast<std::size_t>(i)].goal);

        ObstacleSet merged = dynamic_entries_from_clusters(clusters, arm.model, arm.q, to_base,
                                                           params_.reward.weights);
        ObstacleSet stat = static_obstacles(world_, arm.model, arm.q, to_base,
                                            params_.reward.weights, params_.include_table_obstacle);
        ObstacleSet robo = partner_robot_obstacles(partner.model, partner.q, arm.model, arm.q,
                                                   to_base, params_.reward.weights);
        for (auto& e : stat.entries) merged.entries.push_back(std::move(e));
        for (auto& e : robo.entries) merged.entries.push_back(std::move(e));
        sort_obstacles(merged);
        obs.obstacles = std::move(merged);
        return obs;
    }

    std::array<Observation, 2> observe() {
        last_cloud_ = synth_cloud(world_, params_.cloud_density, params_.cloud_noise_sd,
                                  params_.label_flip_rate, cloud_rng_);
        const auto pts = human_points(last_cloud_);
        std::vector<Cluster> clusters;
        if (!pts.empty()) clusters = dbscan(pts, params_.dbscan_eps, params_.dbscan_min_pts).first;
        return {observe_agent_clusters(0, clusters), observe_agent_clusters(1, clusters)};
    }

    EnvParams params_;
    WorldState initial_;
    std::array<JointVector, 2> home_;
    WorldState world_;
    LabeledPointCloud last_cloud_;
    std::array<bool, 2> done_{};
    int step_in_block_ = 0;
    Rng cloud_rng_;
};

} // namespace mldsim
