#include <catch2/catch_amalgamated.hpp>

#include <mldsim/config.hpp>
#include <mldsim/env.hpp>
#include <mldsim/runner.hpp>

#include <cmath>

using namespace mldsim;

namespace {

ObstacleEntry entry_with(std::array<double, 4> d, ObstacleKind kind = ObstacleKind::Dynamic,
                         int id = 0) {
    ObstacleEntry e;
    e.d = d;
    e.kind = kind;
    e.id = id;
    const JointWeights w{0.1, 0.2, 0.3, 0.4};
    e.weighted_distance = 0.0;
    for (int k = 0; k < 4; ++k) e.weighted_distance += w[k] * d[k];
    return e;
}

} // namespace

TEST_CASE("reward branch precedence and values", "[env]") {
    const RewardParams p;

    SECTION("goal branch wins regardless of obstacles") {
        ObstacleSet close;
        close.entries.push_back(entry_with({0.01, 0.01, 0.01, 0.01}));
        const auto r = compute_reward(0.10, close, p);
        CHECK(r.branch == RewardBranch::Goal);
        CHECK(r.reward == 2.0);
        CHECK(r.min_obstacle_dist == Catch::Approx(0.01));

        // Boundary is inclusive.
        CHECK(compute_reward(0.15, {}, p).branch == RewardBranch::Goal);
        CHECK(compute_reward(0.150001, {}, p).branch == RewardBranch::Free);
    }

    SECTION("obstacle branch scores the nearest weighted intruder") {
        ObstacleSet set;
        set.entries.push_back(entry_with({0.3, 0.5, 0.6, 0.7})); // inside, wd 0.59
        const auto r = compute_reward(0.5, set, p);
        CHECK(r.branch == RewardBranch::Obstacle);
        CHECK(r.reward == Catch::Approx(2.0 * 0.59 - 0.05 - 0.25));
        CHECK(r.min_obstacle_dist == Catch::Approx(0.3));

        // A nearer-weighted entry that never pierces the sphere is ignored.
        set.entries.push_back(entry_with({0.41, 0.41, 0.41, 0.41})); // wd 0.41, outside
        const auto r2 = compute_reward(0.5, set, p);
        CHECK(r2.reward == Catch::Approx(2.0 * 0.59 - 0.05 - 0.25));

        // A second intruder with smaller weighted distance takes over.
        set.entries.push_back(entry_with({0.39, 0.39, 0.39, 0.39})); // wd 0.39, inside
        const auto r3 = compute_reward(0.5, set, p);
        CHECK(r3.reward == Catch::Approx(2.0 * 0.39 - 0.05 - 0.25));
        CHECK(r3.min_obstacle_dist == Catch::Approx(0.3));
    }

    SECTION("sphere boundary is strict") {
        ObstacleSet set;
        set.entries.push_back(entry_with({0.40, 0.41, 0.42, 0.43}));
        CHECK(compute_reward(0.5, set, p).branch == RewardBranch::Free);
        set.entries[0] = entry_with({0.399999, 0.41, 0.42, 0.43});
        CHECK(compute_reward(0.5, set, p).branch == RewardBranch::Obstacle);
    }

    SECTION("close contact is punished, grazing is rewarded") {
        ObstacleSet graze;
        graze.entries.push_back(entry_with({0.39, 0.6, 0.7, 0.8}));
        // wd = 0.039 + 0.12 + 0.21 + 0.32 = 0.689: big positive bonus.
        CHECK(compute_reward(0.5, graze, p).reward == Catch::Approx(2 * 0.689 - 0.05 - 0.25));

        ObstacleSet contact;
        contact.entries.push_back(entry_with({0.05, 0.05, 0.05, 0.05}));
        const double near_pay = compute_reward(0.5, contact, p).reward;
        CHECK(near_pay == Catch::Approx(2 * 0.05 - 0.05 - 0.25));
        CHECK(near_pay < 0.0);
        CHECK(compute_reward(0.5, graze, p).reward > 0.0);
        CHECK(near_pay < compute_reward(0.5, graze, p).reward);
    }

    SECTION("free branch") {
        const auto r = compute_reward(0.8, {}, p);
        CHECK(r.branch == RewardBranch::Free);
        CHECK(r.reward == Catch::Approx(-0.4));
        CHECK(std::isinf(r.min_obstacle_dist));

        ObstacleSet far;
        far.entries.push_back(entry_with({1.0, 1.1, 1.2, 1.3}));
        const auto r2 = compute_reward(0.8, far, p);
        CHECK(r2.branch == RewardBranch::Free);
        CHECK(r2.reward == Catch::Approx(-0.4));
        CHECK(r2.min_obstacle_dist == Catch::Approx(1.0));
    }
}

TEST_CASE("reward params validation", "[env]") {
    RewardParams p;
    p.l1 = 0.2; // >= l2
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.weights = {0.25, 0.25, 0.25, 0.3};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.weights = {-0.1, 0.4, 0.3, 0.4};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.gamma = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.gamma = 1.0;
    CHECK_NOTHROW(p.validate());
}

TEST_CASE("discounted return matches the direct sum", "[env]") {
    Rng rng(derive_seed(21, "env"));
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> rewards;
        const int n = 1 + static_cast<int>(rng.uniform_int(60));
        for (int i = 0; i < n; ++i) rewards.push_back(rng.uniform(-2.0, 2.0));
        const double gamma = rng.uniform(0.5, 1.0);

        double want = 0.0;
        for (int k = 0; k < n; ++k) want += std::pow(gamma, k + 1) * rewards[k];
        CHECK(discounted_return(rewards, gamma) == Catch::Approx(want).margin(1e-12));
    }

    CHECK(discounted_return({}, 0.99) == 0.0);
    CHECK(discounted_return({3.0}, 0.9) == Catch::Approx(2.7));
    // First reward is already discounted once.
    CHECK(discounted_return({1.0, 1.0}, 0.5) == Catch::Approx(0.5 + 0.25));
}

TEST_CASE("obstacles sort farthest first with total tie order", "[env]") {
    ObstacleSet set;
    set.entries.push_back(entry_with({0.5, 0.5, 0.5, 0.5}, ObstacleKind::Robot, 1));   // wd 0.5
    set.entries.push_back(entry_with({0.2, 0.2, 0.2, 0.2}, ObstacleKind::Dynamic, 0)); // wd 0.2
    set.entries.push_back(entry_with({0.5, 0.5, 0.5, 0.5}, ObstacleKind::Static, 2));  // wd 0.5
    set.entries.push_back(entry_with({0.9, 0.9, 0.9, 0.9}, ObstacleKind::Static, 0));  // wd 0.9
    set.entries.push_back(entry_with({0.5, 0.5, 0.5, 0.5}, ObstacleKind::Static, 0));  // wd 0.5

    sort_obstacles(set);
    REQUIRE(set.entries.size() == 5);
    CHECK(set.entries[0].weighted_distance == Catch::Approx(0.9));
    // Tied block: kind ascending, then id ascending.
    CHECK(set.entries[1].kind == ObstacleKind::Static);
    CHECK(set.entries[1].id == 0);
    CHECK(set.entries[2].kind == ObstacleKind::Static);
    CHECK(set.entries[2].id == 2);
    CHECK(set.entries[3].kind == ObstacleKind::Robot);
    // Closest comes last, ready to be read most recently.
    CHECK(set.entries[4].weighted_distance == Catch::Approx(0.2));
}

TEST_CASE("observation encoding layout", "[env]") {
    Observation obs;
    obs.q = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    obs.goal = {1.5, -2.5, 3.5};
    ObstacleEntry e = entry_with({0.5, 0.6, 0.7, 0.8});
    for (int k = 0; k < 4; ++k) e.nearest_points[k] = {k + 0.1, k + 0.2, k + 0.3};
    obs.obstacles.entries.push_back(e);

    const EncodedObs enc = encode_observation(obs);
    REQUIRE(enc.seq.size() == 1);
    for (int k = 0; k < 4; ++k) {
        CHECK(enc.seq[0][3 * k + 0] == Catch::Approx(k + 0.1));
        CHECK(enc.seq[0][3 * k + 1] == Catch::Approx(k + 0.2));
        CHECK(enc.seq[0][3 * k + 2] == Catch::Approx(k + 0.3));
    }
    for (int i = 0; i < 6; ++i) CHECK(enc.extra[i] == Catch::Approx(obs.q[i]));
    CHECK(enc.extra[6] == 1.5);
    CHECK(enc.extra[7] == -2.5);
    CHECK(enc.extra[8] == 3.5);

    const EncodedObs empty = encode_observation(Observation{});
    CHECK(empty.seq.empty());
}

TEST_CASE("live observations are consistent with the reward", "[env]") {
    RunConfig cfg;
    DualEnv env = build_env(cfg);

    std::array<Action, 2> actions{};
    actions[0] = {0.3, -0.2, 0.1, 0.0, 0.2, -0.1};
    actions[1] = {-0.1, 0.1, -0.3, 0.2, 0.0, 0.1};

    for (int s = 0; s < 5; ++s) {
        const auto results = env.step(actions);
        for (int i = 0; i < 2; ++i) {
            const auto& r = results[i];
            // Returned reward is a pure function of the returned observation.
            const RewardResult rr = compute_reward(r.d_eg, r.obs.obstacles, env.params().reward);
            REQUIRE(r.reward == rr.reward);
            REQUIRE(r.branch == rr.branch);
            REQUIRE(r.min_obstacle_dist == rr.min_obstacle_dist);

            // Entries arrive sorted, farthest first.
            const auto& ent = r.obs.obstacles.entries;
            for (std::size_t k = 1; k < ent.size(); ++k)
                REQUIRE(ent[k - 1].weighted_distance >= ent[k].weighted_distance);

            // Human, two boxes, two partner links.
            REQUIRE(ent.size() == 5);

            // Per-joint distances agree with the stored contact points.
            const auto& arm = env.world().arms[i];
            const auto joints = monitored_joint_positions(arm.model, arm.q);
            for (const auto& e : ent)
                for (int k = 0; k < 4; ++k) {
                    const Vec3 world_pt = arm.model.base.apply(e.nearest_points[k]);
                    REQUIRE(distance(world_pt, joints[k]) == Catch::Approx(e.d[k]).margin(1e-9));
                }

            // Goal is expressed in the agent base frame.
            const Vec3 goal_world = arm.model.base.apply(r.obs.goal);
            REQUIRE(distance(goal_world, env.world().boxes[i].goal) < 1e-12);
        }
    }
}

TEST_CASE("environment without the human sees only static and partner obstacles", "[env]") {
    RunConfig cfg;
    cfg.human_enabled = false;
    DualEnv env = build_env(cfg);
    const auto results = env.step({});
    for (int i = 0; i < 2; ++i) {
        const auto& ent = results[i].obs.obstacles.entries;
        REQUIRE(ent.size() == 4);
        for (const auto& e : ent) REQUIRE(e.kind != ObstacleKind::Dynamic);
    }
}

TEST_CASE("block runs a fixed step count and then demands a reset", "[env]") {
    RunConfig cfg;
    cfg.human_enabled = false;
    cfg.cloud_density = 300.0;
    DualEnv env = build_env(cfg);

    CHECK(env.step_in_block() == 0);
    for (int s = 0; s < cfg.episode.steps_per_episode; ++s) {
        CHECK_FALSE(env.block_finished());
        env.step({});
    }
    CHECK(env.block_finished());
    CHECK_THROWS_AS(env.step({}), std::logic_error);

    const double t_before = env.world().time;
    env.reset();
    CHECK(env.step_in_block() == 0);
    CHECK_FALSE(env.block_finished());
    // Soft reset keeps the clock running.
    CHECK(env.world().time == Catch::Approx(t_before));
    env.step({});

    env.full_reset();
    CHECK(env.world().time == 0.0);
    CHECK(env.step_in_block() == 0);
}

TEST_CASE("goal region scores every step spent inside it", "[env]") {
    RunConfig cfg;
    cfg.human_enabled = false;
    cfg.cloud_density = 300.0;

    // Plant the goal next to the home flange so the first step scores.
    {
        const WorldState w = build_world(cfg);
        ArmInstance arm = w.arms[0];
        arm.q = cfg.home0;
        const Vec3 flange = fk(arm.model, arm.q)[6].trans;
        cfg.goal0 = flange + Vec3{0.05, 0.0, 0.0};
    }

    DualEnv env = build_env(cfg);
    std::array<Action, 2> push{};
    push[0] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    push[1] = {0.2, 0.1, 0.0, 0.0, 0.0, 0.0};

    const auto r1 = env.step(push);
    CHECK(r1[0].branch == RewardBranch::Goal);
    CHECK(r1[0].reward == 2.0);
    CHECK(r1[0].done);
    CHECK(env.goal_reached(0));
    CHECK_FALSE(env.goal_reached(1));

    // Staying put inside the region keeps paying, and commands still move the arm.
    const auto r2 = env.step(push);
    CHECK(r2[0].branch == RewardBranch::Goal);
    CHECK(r2[0].reward == 2.0);
    CHECK(r2[0].done);

    const JointVector q_before = env.world().arms[0].q;
    push[0] = {3.0, 3.0, 3.0, 3.0, 3.0, 3.0};
    env.step(push);
    bool moved = false;
    for (int j = 0; j < 6; ++j)
        if (env.world().arms[0].q[j] != q_before[j]) moved = true;
    CHECK(moved);
    // The success flag latches for the rest of the block even after leaving.
    CHECK(env.goal_reached(0));
    // Partner keeps integrating too.
    CHECK(env.world().arms[1].q[0] != Catch::Approx(cfg.home1[0]));

    // The next block starts clean.
    while (!env.block_finished()) env.step(push);
    env.reset();
    CHECK_FALSE(env.goal_reached(0));
}

TEST_CASE("same seed reproduces the same clouds and observations", "[env]") {
    RunConfig cfg;
    cfg.cloud_density = 300.0;
    DualEnv a = build_env(cfg);
    DualEnv b = build_env(cfg);

    std::array<Action, 2> act{};
    act[0] = {0.2, -0.1, 0.3, 0.0, -0.2, 0.1};
    for (int s = 0; s < 3; ++s) {
        const auto ra = a.step(act);
        const auto rb = b.step(act);
        REQUIRE(a.last_cloud().points.size() == b.last_cloud().points.size());
        for (std::size_t i = 0; i < a.last_cloud().points.size(); ++i) {
            REQUIRE(a.last_cloud().points[i].position.x == b.last_cloud().points[i].position.x);
            REQUIRE(a.last_cloud().points[i].label == b.last_cloud().points[i].label);
        }
        for (int i = 0; i < 2; ++i) REQUIRE(ra[i].reward == rb[i].reward);
    }

    // A different seed changes the cloud.
    RunConfig cfg2 = cfg;
    cfg2.seed = cfg.seed + 1;
    DualEnv c = build_env(cfg2);
    const auto rc = c.step(act);
    (void)rc;
    bool any_diff = false;
    const auto& pa = a.last_cloud().points;
    const auto& pc = c.last_cloud().points;
    for (std::size_t i = 0; i < std::min(pa.size(), pc.size()) && !any_diff; ++i)
        any_diff = pa[i].position.x != pc[i].position.x;
    CHECK(any_diff);
}

TEST_CASE("env params validation", "[env]") {
    EnvParams p;
    p.dbscan_eps = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.dbscan_min_pts = 0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.label_flip_rate = 1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.cloud_density = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    CHECK_NOTHROW(p.validate());
}
