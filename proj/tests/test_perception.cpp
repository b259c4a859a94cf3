#include <catch2/catch_amalgamated.hpp>

#include <mldsim/config.hpp>
#include <mldsim/perception.hpp>
#include <mldsim/runner.hpp>

#include <vector>

using namespace mldsim;

namespace {

// Same algorithm as the library dbscan, but with quadratic neighbor
// search instead of the grid. Seed order and expansion order agree, so
// results must match exactly, labels included.
std::pair<std::vector<Cluster>, std::vector<Vec3>> dbscan_naive(const std::vector<Vec3>& points,
                                                                double eps, int min_pts) {
    const int n = static_cast<int>(points.size());
    const double eps2 = eps * eps;
    const auto neighbors_of = [&](int i) {
        std::vector<int> out;
        for (int j = 0; j < n; ++j)
            if ((points[j] - points[i]).norm2() <= eps2) out.push_back(j);
        return out;
    };

    constexpr int kUnvisited = -2, kNoise = -1;
    std::vector<int> label(points.size(), kUnvisited);
    int next_cluster = 0;
    std::vector<int> queue;
    for (int i = 0; i < n; ++i) {
        if (label[i] != kUnvisited) continue;
        auto neighbors = neighbors_of(i);
        if (static_cast<int>(neighbors.size()) < min_pts) {
            label[i] = kNoise;
            continue;
        }
        const int cid = next_cluster++;
        label[i] = cid;
        queue.assign(neighbors.begin(), neighbors.end());
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const int j = queue[qi];
            if (label[j] == kNoise) label[j] = cid;
            if (label[j] != kUnvisited) continue;
            label[j] = cid;
            auto more = neighbors_of(j);
            if (static_cast<int>(more.size()) >= min_pts)
                queue.insert(queue.end(), more.begin(), more.end());
        }
    }

    std::vector<Cluster> clusters(next_cluster);
    for (int c = 0; c < next_cluster; ++c) clusters[c].id = c;
    std::vector<Vec3> noise;
    for (int i = 0; i < n; ++i) {
        if (label[i] == kNoise)
            noise.push_back(points[i]);
        else
            clusters[label[i]].members.push_back(points[i]);
    }
    return {clusters, noise};
}

bool same_points(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].x != b[i].x || a[i].y != b[i].y || a[i].z != b[i].z) return false;
    return true;
}

void check_matches_naive(const std::vector<Vec3>& pts, double eps, int min_pts) {
    const auto [got_c, got_n] = dbscan(pts, eps, min_pts);
    const auto [want_c, want_n] = dbscan_naive(pts, eps, min_pts);
    REQUIRE(got_c.size() == want_c.size());
    for (std::size_t c = 0; c < got_c.size(); ++c) {
        REQUIRE(got_c[c].id == want_c[c].id);
        REQUIRE(same_points(got_c[c].members, want_c[c].members));
    }
    REQUIRE(same_points(got_n, want_n));
}

std::vector<Vec3> gaussian_blob(Rng& rng, const Vec3& center, double sd, int n) {
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i)
        pts.push_back(center + Vec3{rng.normal(0.0, sd), rng.normal(0.0, sd), rng.normal(0.0, sd)});
    return pts;
}

} // namespace

TEST_CASE("dbscan separates well-spaced blobs", "[perception]") {
    Rng rng(derive_seed(11, "perception"));
    std::vector<Vec3> pts;
    for (const Vec3& c : {Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 1}}) {
        const auto blob = gaussian_blob(rng, c, 0.02, 60);
        pts.insert(pts.end(), blob.begin(), blob.end());
    }
    // Far-away singletons become noise.
    pts.push_back({5, 5, 5});
    pts.push_back({-5, 5, 5});

    const auto [clusters, noise] = dbscan(pts, 0.1, 10);
    REQUIRE(clusters.size() == 3);
    CHECK(noise.size() == 2);
    for (const auto& c : clusters) CHECK(c.members.size() == 60);
    check_matches_naive(pts, 0.1, 10);
}

TEST_CASE("dbscan matches the quadratic reference on fuzzed inputs", "[perception]") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        Rng rng(derive_seed(seed, "perception-fuzz"));
        std::vector<Vec3> pts;
        const int blobs = 1 + static_cast<int>(rng.uniform_int(4));
        for (int b = 0; b < blobs; ++b) {
            const Vec3 c{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
            const double sd = rng.uniform(0.01, 0.2);
            const int count = 10 + static_cast<int>(rng.uniform_int(50));
            const auto blob = gaussian_blob(rng, c, sd, count);
            pts.insert(pts.end(), blob.begin(), blob.end());
        }
        for (int i = 0; i < 30; ++i)
            pts.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});

        const double eps = rng.uniform(0.05, 0.3);
        const int min_pts = 2 + static_cast<int>(rng.uniform_int(12));
        check_matches_naive(pts, eps, min_pts);
    }
}

TEST_CASE("dbscan edge cases", "[perception]") {
    const auto [c0, n0] = dbscan({}, 0.1, 5);
    CHECK(c0.empty());
    CHECK(n0.empty());

    // min_pts of one: every point is a core point, nothing is noise.
    std::vector<Vec3> sparse{{0, 0, 0}, {10, 0, 0}, {0, 10, 0}};
    const auto [c1, n1] = dbscan(sparse, 0.5, 1);
    CHECK(c1.size() == 3);
    CHECK(n1.empty());

    // Coincident points form one cluster once they reach min_pts.
    std::vector<Vec3> stacked(12, Vec3{1, 2, 3});
    const auto [c2, n2] = dbscan(stacked, 0.01, 12);
    REQUIRE(c2.size() == 1);
    CHECK(c2[0].members.size() == 12);
    CHECK(n2.empty());

    // Boundary inclusiveness: two points exactly eps apart are neighbors.
    std::vector<Vec3> pair_pts{{0, 0, 0}, {0.1, 0, 0}};
    const auto [c3, n3] = dbscan(pair_pts, 0.1, 2);
    REQUIRE(c3.size() == 1);
    CHECK(c3[0].members.size() == 2);

    CHECK_THROWS_AS(dbscan(sparse, 0.0, 5), std::domain_error);
    CHECK_THROWS_AS(dbscan(sparse, -1.0, 5), std::domain_error);
    CHECK_THROWS_AS(dbscan(sparse, 0.1, 0), std::domain_error);
}

TEST_CASE("chained border points stay one cluster", "[perception]") {
    // A dense bar of points spaced well under eps: one cluster end to end,
    // even though the bar is much longer than eps.
    std::vector<Vec3> pts;
    for (int i = 0; i < 200; ++i) pts.push_back({0.01 * i, 0.0, 0.0});
    const auto [clusters, noise] = dbscan(pts, 0.1, 5);
    REQUIRE(clusters.size() == 1);
    CHECK(clusters[0].members.size() == 200);
    CHECK(noise.empty());
    check_matches_naive(pts, 0.1, 5);
}

TEST_CASE("obstacle entries store per-joint nearest points", "[perception]") {
    RunConfig cfg;
    const WorldState w = build_world(cfg);
    const ArmModel& master = w.arms[0].model;
    const JointVector q = w.arms[0].q;
    const Transform to_base = master.base.inverse();
    const JointWeights weights{0.1, 0.2, 0.3, 0.4};

    Rng rng(derive_seed(3, "cloud"));
    const auto cloud = synth_cloud(w, 500.0, 0.0, 0.0, rng);
    const auto set = extract_dynamic_obstacles(cloud, master, q, 0.1, 10, to_base, weights);
    REQUIRE(set.entries.size() == 1); // one human, one cluster

    const auto& e = set.entries[0];
    CHECK(e.kind == ObstacleKind::Dynamic);

    // Brute force over the human-labeled points.
    const auto joints = monitored_joint_positions(master, q);
    const auto pts = human_points(cloud);
    for (int k = 0; k < 4; ++k) {
        double best = 1e18;
        for (const Vec3& p : pts) best = std::min(best, distance(p, joints[k]));
        CHECK(e.d[k] == Catch::Approx(best).margin(1e-12));
        // Stored point is in the master base frame; mapping back recovers
        // the distance.
        const Vec3 world_pt = master.base.apply(e.nearest_points[k]);
        CHECK(distance(world_pt, joints[k]) == Catch::Approx(e.d[k]).margin(1e-9));
    }

    double wd = 0.0;
    for (int k = 0; k < 4; ++k) wd += weights[k] * e.d[k];
    CHECK(e.weighted_distance == Catch::Approx(wd));
}

TEST_CASE("partner arm becomes two link obstacles", "[perception]") {
    RunConfig cfg;
    const WorldState w = build_world(cfg);
    const ArmModel& master = w.arms[0].model;
    const ArmModel& partner = w.arms[1].model;
    const Transform to_base = master.base.inverse();
    const JointWeights weights{0.1, 0.2, 0.3, 0.4};

    const auto set =
        partner_robot_obstacles(partner, w.arms[1].q, master, w.arms[0].q, to_base, weights);
    REQUIRE(set.entries.size() == 2);
    CHECK(set.entries[0].kind == ObstacleKind::Robot);
    CHECK(set.entries[0].id == 0);
    CHECK(set.entries[1].id == 1);

    // Cross-check each link against its own sampled centerline.
    const auto joints = monitored_joint_positions(master, w.arms[0].q);
    const auto frames = fk(partner, w.arms[1].q);
    const auto links = longest_two_links(partner);
    for (int li = 0; li < 2; ++li) {
        const auto samples = sample_link_points(frames[links[li].first].trans,
                                                frames[links[li].second].trans, kLinkSampleCount);
        for (int k = 0; k < 4; ++k) {
            double best = 1e18;
            for (const Vec3& p : samples) best = std::min(best, distance(p, joints[k]));
            REQUIRE(set.entries[li].d[k] == Catch::Approx(best).margin(1e-12));
        }
    }
}

TEST_CASE("static obstacles use exact box distances", "[perception]") {
    RunConfig cfg;
    const WorldState w = build_world(cfg);
    const ArmModel& master = w.arms[1].model;
    const JointVector q = w.arms[1].q;
    const Transform to_base = master.base.inverse();
    const JointWeights weights{0.1, 0.2, 0.3, 0.4};

    const auto set = static_obstacles(w, master, q, to_base, weights);
    REQUIRE(set.entries.size() == 2);
    for (const auto& e : set.entries) CHECK(e.kind == ObstacleKind::Static);

    // Analytic distance can never beat a dense surface sampling, and must
    // come close to it.
    const auto joints = monitored_joint_positions(master, q);
    for (int bi = 0; bi < 2; ++bi) {
        const Aabb& box = w.boxes[bi].shape;
        for (int k = 0; k < 4; ++k) {
            double sampled = 1e18;
            Rng local(derive_seed(17, "perception", bi * 4 + k));
            for (int s = 0; s < 20000; ++s)
                sampled = std::min(sampled, distance(detail::sample_box_surface(box, local), joints[k]));
            const double analytic = set.entries[bi].d[k];
            REQUIRE(analytic <= sampled + 1e-12);
            REQUIRE(sampled - analytic < 0.02);
        }
    }

    const auto with_table = static_obstacles(w, master, q, to_base, weights, true);
    REQUIRE(with_table.entries.size() == 3);
    CHECK(with_table.entries[2].id == 2);
    // The table is directly under the base, so it is the closest static
    // obstacle by far.
    CHECK(with_table.entries[2].weighted_distance < with_table.entries[0].weighted_distance);
    CHECK(with_table.entries[2].weighted_distance < with_table.entries[1].weighted_distance);
}

TEST_CASE("flipped labels only shed isolated points", "[perception]") {
    RunConfig cfg;
    const WorldState w = build_world(cfg);
    const ArmModel& master = w.arms[0].model;
    const Transform to_base = master.base.inverse();
    const JointWeights weights{0.1, 0.2, 0.3, 0.4};

    Rng rng(derive_seed(9, "cloud"));
    const auto cloud = synth_cloud(w, 500.0, 0.005, 0.05, rng);
    const auto set = extract_dynamic_obstacles(cloud, master, w.arms[0].q, 0.1, 10, to_base, weights);

    // Mislabeled stray points elsewhere in the scene fail the density
    // threshold; the human body itself still clusters.
    REQUIRE(set.entries.size() >= 1);
    const Vec3 human_center = w.human.body_box().center();
    bool found_body = false;
    for (const auto& e : set.entries) {
        const Vec3 p = master.base.apply(e.nearest_points[0]);
        if (distance(p, human_center) < 1.6) found_body = true;
    }
    CHECK(found_body);
}
