#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "mldsim/env.hpp"
#include "mldsim/neural.hpp"
#include "mldsim/rng.hpp"

namespace mldsim {

struct PpoConfig {
    double clip = 0.2;
    double gae_lambda = 0.95;
    double lr = 3e-4;
    int epochs = 10;
    int minibatch = 256;
    int rollout_length = 2048;
    double value_coef = 0.5;
    double entropy_coef = 0.0;
    double log_std_init = -0.6931471805599453; // log(0.5)
    NetSizes sizes;

    void validate() const {
        if (!(clip > 0.0)) throw ConfigError("ppo: clip must be > 0");
        if (gae_lambda < 0.0 || gae_lambda > 1.0) throw ConfigError("ppo: gae_lambda must be in [0, 1]");
        if (lr < 0.0) throw ConfigError("ppo: lr must be >= 0");
        if (epochs < 1) throw ConfigError("ppo: epochs must be >= 1");
        if (minibatch < 1) throw ConfigError("ppo: minibatch must be >= 1");
        if (rollout_length < 1) throw ConfigError("ppo: rollout_length must be >= 1");
        if (value_coef < 0.0) throw ConfigError("ppo: value_coef must be >= 0");
        if (entropy_coef < 0.0) throw ConfigError("ppo: entropy_coef must be >= 0");
        if (sizes.lstm_hidden < 1 || sizes.trunk_hidden < 1)
            throw ConfigError("ppo: net sizes must be >= 1");
    }
};

class Adam {
public:
    Adam() = default;
    Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

    void step(ParameterBlock& p) {
        if (p.size() != m_.size()) throw std::logic_error("Adam: parameter count mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < m_.size(); ++i) {
            const double g = p.grad[i];
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
            p.value[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
        }
    }

    long steps_taken() const { return t_; }

private:
    double lr_ = 3e-4;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::vector<double> m_, v_;
    long t_ = 0;
};

struct Transition {
    EncodedObs obs;
    Action action{};
    double logprob = 0.0;
    double value = 0.0;
    double reward = 0.0;
    bool done = false; // terminal for return purposes: goal reached or block ended
};

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};

// lambda-weighted advantage estimates over a rollout that may span several
// episodes; done cuts the recursion, a truncated tail bootstraps from
// bootstrap_value.
inline GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                             const std::vector<std::uint8_t>& dones, double bootstrap_value,
                             double gamma, double lambda) {
    const std::size_t n = rewards.size();
    if (values.size() != n || dones.size() != n)
        throw std::logic_error("compute_gae: length mismatch");
    GaeResult out;
    out.advantages.assign(n, 0.0);
    out.returns.assign(n, 0.0);
    double next_adv = 0.0;
    for (std::size_t t = n; t-- > 0;) {
        const double nonterm = dones[t] ? 0.0 : 1.0;
        const double next_value = (t + 1 == n) ? bootstrap_value : values[t + 1];
        const double delta = rewards[t] + gamma * next_value * nonterm - values[t];
        out.advantages[t] = delta + gamma * lambda * nonterm * next_adv;
        next_adv = out.advantages[t];
        out.returns[t] = out.advantages[t] + values[t];
    }
    return out;
}

struct UpdateStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
    double approx_kl = 0.0;
};

// One PPO update over a full rollout: normalized advantages, shuffled
// minibatches, clipped surrogate for the policy and squared error for the
// value net, each stepped by its own Adam.
inline UpdateStats ppo_update(PolicyNet& policy, ValueNet& value, Adam& popt, Adam& vopt,
                              const std::vector<Transition>& data, double bootstrap_value,
                              double gamma, const PpoConfig& cfg, Rng& shuffle_rng) {
    const std::size_t n = data.size();
    if (n == 0) throw std::logic_error("ppo_update: empty rollout");

    std::vector<double> rewards(n), values(n);
    std::vector<std::uint8_t> dones(n);
    for (std::size_t i = 0; i < n; ++i) {
        rewards[i] = data[i].reward;
        values[i] = data[i].value;
        dones[i] = data[i].done ? 1 : 0;
    }
    const GaeResult gae = compute_gae(rewards, values, dones, bootstrap_value, gamma,
                                      cfg.gae_lambda);

    double mean = 0.0;
    for (double a : gae.advantages) mean += a;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double a : gae.advantages) var += (a - mean) * (a - mean);
    var /= static_cast<double>(n);
    const double scale = 1.0 / (std::sqrt(var) + 1e-8);
    std::vector<double> adv(n);
    for (std::size_t i = 0; i < n; ++i) adv[i] = (gae.advantages[i] - mean) * scale;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    UpdateStats stats;
    std::size_t sample_count = 0, clip_count = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.minibatch)) {
            const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.minibatch));
            const double inv_b = 1.0 / static_cast<double>(end - start);
            policy.params.zero_grad();
            value.params.zero_grad();

            for (std::size_t s = start; s < end; ++s) {
                const Transition& tr = data[order[s]];
                const double a_hat = adv[order[s]];
                const double ret = gae.returns[order[s]];

                PolicyNet::Cache pc;
                const auto out = policy.forward(tr.obs, pc);
                const double lp = gaussian_logprob(tr.action, out.mean, out.log_std);
                const double ratio = std::exp(lp - tr.logprob);
                const double unclipped = ratio * a_hat;
                const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * a_hat;

                stats.policy_loss += -std::min(unclipped, clipped);
                stats.approx_kl += tr.logprob - lp;
                if (clipped < unclipped) ++clip_count;
                ++sample_count;

                std::array<double, 6> dmean{}, dls{};
                if (unclipped <= clipped)
                    gaussian_logprob_grad(tr.action, out.mean, out.log_std,
                                          -a_hat * ratio * inv_b, dmean, dls);
                stats.entropy += gaussian_entropy(out.log_std);
                if (cfg.entropy_coef != 0.0)
                    gaussian_entropy_grad(-cfg.entropy_coef * inv_b, dls);
                policy.backward(pc, dmean, dls);

                ValueNet::Cache vc;
                const double v = value.forward(tr.obs, vc);
                stats.value_loss += (v - ret) * (v - ret);
                value.backward(vc, cfg.value_coef * 2.0 * (v - ret) * inv_b);
            }
            popt.step(policy.params);
            vopt.step(value.params);
        }
    }

    const double inv_n = 1.0 / static_cast<double>(sample_count);
    stats.policy_loss *= inv_n;
    stats.value_loss *= inv_n;
    stats.entropy *= inv_n;
    stats.approx_kl *= inv_n;
    stats.clip_fraction = static_cast<double>(clip_count) * inv_n;
    return stats;
}

// Everything one learner owns: nets, optimizers, rollout storage and its
// private random streams.
struct Agent {
    PolicyNet policy;
    ValueNet value;
    Adam policy_opt;
    Adam value_opt;
    std::vector<Transition> buffer;
    Rng action_rng;
    Rng shuffle_rng;

    Agent(const PpoConfig& cfg, std::uint64_t master_seed, int index)
        : policy(cfg.sizes), value(cfg.sizes),
          action_rng(derive_seed(master_seed, "action", static_cast<std::uint64_t>(index))),
          shuffle_rng(derive_seed(master_seed, "shuffle", static_cast<std::uint64_t>(index))) {
        Rng pinit(derive_seed(master_seed, "policy_init", static_cast<std::uint64_t>(index)));
        Rng vinit(derive_seed(master_seed, "value_init", static_cast<std::uint64_t>(index)));
        policy.init(pinit, cfg.log_std_init);
        value.init(vinit);
        policy_opt = Adam(policy.params.size(), cfg.lr);
        value_opt = Adam(value.params.size(), cfg.lr);
        buffer.reserve(static_cast<std::size_t>(cfg.rollout_length));
    }
};

struct EpisodeSummary {
    long episode = 0;
    long timestep_end = 0;
    double cum_reward = 0.0; // plain sum of the episode's step rewards
    int steps = 0;
    bool reached_goal = false;
    double min_obstacle_dist = std::numeric_limits<double>::infinity();
    int goal_branch_count = 0;
};

struct TrainHooks {
    // Replace the sampled action; used to replay recorded trajectories.
    std::function<std::optional<Action>(int agent, long timestep)> forced_action;
    // Gate network updates per agent; rollouts still clear when full.
    std::function<bool(int agent)> update_mask;
    // A disabled agent keeps its arm parked and never learns.
    std::function<bool(int agent)> agent_enabled;
    std::function<void(int agent, const EpisodeSummary&)> on_episode;
    std::function<void(int agent, long timestep, const UpdateStats&)> on_update;
};

struct TrainResult {
    long episodes = 0;
    long timesteps = 0;
    std::array<long, 2> updates{0, 0};
};

// Both agents act every world step and contribute a transition per step;
// each one updates independently whenever its own rollout fills. Leftover
// partial rollouts at the end of training are dropped.
inline TrainResult train_dual(DualEnv& env, std::array<Agent, 2>& agents, const PpoConfig& cfg,
                              long total_timesteps, const TrainHooks& hooks = {}) {
    cfg.validate();
    const double gamma = env.params().reward.gamma;
    const int block_steps = env.params().episode.steps_per_episode;

    TrainResult result;
    std::array<Observation, 2> obs = env.full_reset();

    struct PerEpisode {
        std::vector<double> rewards;
        double min_dist = std::numeric_limits<double>::infinity();
        int goal_branches = 0;
    };

    long t = 0;
    while (t < total_timesteps) {
        if (result.episodes > 0) obs = env.reset();
        std::array<PerEpisode, 2> ep{};

        for (int step = 0; step < block_steps; ++step) {
            std::array<Action, 2> actions{};
            struct Pending {
                EncodedObs enc;
                double logprob = 0.0;
                double value = 0.0;
                bool active = false;
            };
            std::array<Pending, 2> pending;

            for (int i = 0; i < 2; ++i) {
                if (hooks.agent_enabled && !hooks.agent_enabled(i)) continue;
                auto& agent = agents[static_cast<std::size_t>(i)];
                auto& p = pending[static_cast<std::size_t>(i)];
                p.active = true;
                p.enc = encode_observation(obs[static_cast<std::size_t>(i)]);
                const auto out = agent.policy.forward(p.enc);
                Action a = sample_action(out, agent.action_rng);
                if (hooks.forced_action) {
                    if (auto forced = hooks.forced_action(i, t)) a = *forced;
                }
                p.logprob = gaussian_logprob(a, out.mean, out.log_std);
                p.value = agent.value.forward(p.enc);
                actions[static_cast<std::size_t>(i)] = a;
            }

            const auto results = env.step(actions);
            ++t;

            for (int i = 0; i < 2; ++i) {
                const auto& r = results[static_cast<std::size_t>(i)];
                auto& p = pending[static_cast<std::size_t>(i)];
                if (!p.active) {
                    obs[static_cast<std::size_t>(i)] = r.obs;
                    continue;
                }
                auto& agent = agents[static_cast<std::size_t>(i)];
                auto& e = ep[static_cast<std::size_t>(i)];

                Transition tr;
                tr.obs = std::move(p.enc);
                tr.action = actions[static_cast<std::size_t>(i)];
                tr.logprob = p.logprob;
                tr.value = p.value;
                tr.reward = r.reward;
                tr.done = step + 1 == block_steps;
                agent.buffer.push_back(std::move(tr));

                e.rewards.push_back(r.reward);
                e.min_dist = std::min(e.min_dist, r.min_obstacle_dist);
                if (r.branch == RewardBranch::Goal) ++e.goal_branches;

                if (static_cast<int>(agent.buffer.size()) >= cfg.rollout_length) {
                    const bool allowed = !hooks.update_mask || hooks.update_mask(i);
                    if (allowed) {
                        const double bootstrap =
                            agent.buffer.back().done ? 0.0
                                                     : agent.value.forward(encode_observation(r.obs));
                        const UpdateStats stats =
                            ppo_update(agent.policy, agent.value, agent.policy_opt,
                                       agent.value_opt, agent.buffer, bootstrap, gamma, cfg,
                                       agent.shuffle_rng);
                        ++result.updates[static_cast<std::size_t>(i)];
                        if (hooks.on_update) hooks.on_update(i, t, stats);
                    }
                    agent.buffer.clear();
                }
                obs[static_cast<std::size_t>(i)] = r.obs;
            }
        }

        ++result.episodes;
        for (int i = 0; i < 2; ++i) {
            if (hooks.agent_enabled && !hooks.agent_enabled(i)) continue;
            const auto& e = ep[static_cast<std::size_t>(i)];
            EpisodeSummary s;
            s.episode = result.episodes - 1;
            s.timestep_end = t;
            s.cum_reward = std::accumulate(e.rewards.begin(), e.rewards.end(), 0.0);
            s.steps = static_cast<int>(e.rewards.size());
            s.reached_goal = env.goal_reached(i);
            s.min_obstacle_dist = e.min_dist;
            s.goal_branch_count = e.goal_branches;
            if (hooks.on_episode) hooks.on_episode(i, s);
        }
    }

    result.timesteps = t;
    return result;
}

} // namespace mldsim
