#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "mldsim/scene.hpp"

namespace mldsim {

struct Cluster {
    std::vector<Vec3> members;
    int id = 0;
};

enum class ObstacleKind { Dynamic = 0, Static = 1, Robot = 2 };

// One obstacle as the reward and the policy see it: the nearest surface
// point to each monitored joint, expressed in the master base frame.
struct ObstacleEntry {
    std::array<Vec3, 4> nearest_points;
    std::array<double, 4> d{};
    double weighted_distance = 0.0;
    ObstacleKind kind = ObstacleKind::Dynamic;
    int id = 0;
};

struct ObstacleSet {
    std::vector<ObstacleEntry> entries;
};

namespace detail {

// Uniform grid over cells of side eps; candidate neighbors come from the
// 27 surrounding cells.
class NeighborGrid {
public:
    NeighborGrid(const std::vector<Vec3>& pts, double eps) : pts_(pts), eps_(eps) {
        cells_.reserve(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(pts[i])].push_back(static_cast<int>(i));
    }

    // Indices within eps of pts[i], self included, ascending.
    std::vector<int> query(int i) const {
        std::vector<int> out;
        const Vec3& p = pts_[static_cast<std::size_t>(i)];
        const std::int64_t cx = coord(p.x), cy = coord(p.y), cz = coord(p.z);
        const double eps2 = eps_ * eps_;
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    const auto it = cells_.find(pack(cx + dx, cy + dy, cz + dz));
                    if (it == cells_.end()) continue;
                    for (int j : it->second)
                        if ((pts_[static_cast<std::size_t>(j)] - p).norm2() <= eps2) out.push_back(j);
                }
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    std::int64_t coord(double v) const { return static_cast<std::int64_t>(std::floor(v / eps_)); }
    std::uint64_t key(const Vec3& p) const { return pack(coord(p.x), coord(p.y), coord(p.z)); }
    static std::uint64_t pack(std::int64_t x, std::int64_t y, std::int64_t z) {
        return static_cast<std::uint64_t>(x) * 73856093ULL ^ static_cast<std::uint64_t>(y) * 19349663ULL ^
               static_cast<std::uint64_t>(z) * 83492791ULL;
    }

    const std::vector<Vec3>& pts_;
    double eps_;
    std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

} // namespace detail

// Euclidean DBSCAN. Core points have >= min_pts neighbors within eps (self
// included). Seeds are scanned in index order and each cluster expands fully
// before the next seed, so border points join the first claiming cluster.
inline std::pair<std::vector<Cluster>, std::vector<Vec3>> dbscan(const std::vector<Vec3>& points,
                                                                 double eps, int min_pts) {
    if (!(eps > 0.0)) throw std::domain_error("dbscan: eps must be > 0");
    if (min_pts < 1) throw std::domain_error("dbscan: min_pts must be >= 1");

    const int n = static_cast<int>(points.size());
    constexpr int kUnvisited = -2, kNoise = -1;
    std::vector<int> label(static_cast<std::size_t>(n), kUnvisited);
    const detail::NeighborGrid grid(points, eps);

    int next_cluster = 0;
    std::vector<int> queue;
    for (int i = 0; i < n; ++i) {
        if (label[static_cast<std::size_t>(i)] != kUnvisited) continue;
        auto neighbors = grid.query(i);
        if (static_cast<int>(neighbors.size()) < min_pts) {
            label[static_cast<std::size_t>(i)] = kNoise;
            continue;
        }
        const int cid = next_cluster++;
        label[static_cast<std::size_t>(i)] = cid;
        queue.assign(neighbors.begin(), neighbors.end());
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const int j = queue[qi];
            auto& lj = label[static_cast<std::size_t>(j)];
            if (lj == kNoise) lj = cid; // border point
            if (lj != kUnvisited) continue;
            lj = cid;
            auto more = grid.query(j);
            if (static_cast<int>(more.size()) >= min_pts)
                queue.insert(queue.end(), more.begin(), more.end());
        }
    }

    std::vector<Cluster> clusters(static_cast<std::size_t>(next_cluster));
    for (int c = 0; c < next_cluster; ++c) clusters[static_cast<std::size_t>(c)].id = c;
    std::vector<Vec3> noise;
    for (int i = 0; i < n; ++i) {
        const int l = label[static_cast<std::size_t>(i)];
        if (l == kNoise)
            noise.push_back(points[static_cast<std::size_t>(i)]);
        else
            clusters[static_cast<std::size_t>(l)].members.push_back(points[static_cast<std::size_t>(i)]);
    }
    return {std::move(clusters), std::move(noise)};
}

using JointWeights = std::array<double, 4>;

namespace detail {

// Build an entry from candidate obstacle points: per monitored joint, the
// candidate minimizing Euclidean distance. Joints arrive in world frame;
// stored points are mapped into the master base frame.
template <class PointRange>
ObstacleEntry make_entry(const PointRange& candidates, const std::array<Vec3, 4>& joints_world,
                         const JointWeights& weights, const Transform& to_master_base,
                         ObstacleKind kind, int id) {
    ObstacleEntry e;
    e.kind = kind;
    e.id = id;
    for (int k = 0; k < 4; ++k) {
        double best = std::numeric_limits<double>::infinity();
        Vec3 best_pt;
        for (const Vec3& c : candidates) {
            const double dist = (c - joints_world[k]).norm();
            if (dist < best) {
                best = dist;
                best_pt = c;
            }
        }
        e.d[k] = best;
        e.nearest_points[k] = to_master_base.apply(best_pt);
    }
    e.weighted_distance = 0.0;
    for (int k = 0; k < 4; ++k) e.weighted_distance += weights[k] * e.d[k];
    return e;
}

} // namespace detail

// One entry per cluster; clustering happens upstream so several agents can
// share the same clusters.
inline ObstacleSet dynamic_entries_from_clusters(const std::vector<Cluster>& clusters,
                                                 const ArmModel& master, const JointVector& q,
                                                 const Transform& to_master_base,
                                                 const JointWeights& weights) {
    ObstacleSet set;
    if (clusters.empty()) return set;
    const auto joints = monitored_joint_positions(master, q);
    for (const auto& cluster : clusters)
        set.entries.push_back(detail::make_entry(cluster.members, joints, weights, to_master_base,
                                                 ObstacleKind::Dynamic, cluster.id));
    return set;
}

inline std::vector<Vec3> human_points(const LabeledPointCloud& cloud) {
    std::vector<Vec3> pts;
    for (const auto& p : cloud.points)
        if (p.label == SemanticClass::Human) pts.push_back(p.position);
    return pts;
}

// Human-labeled points -> DBSCAN clusters -> one entry per cluster.
inline ObstacleSet extract_dynamic_obstacles(const LabeledPointCloud& cloud, const ArmModel& master,
                                             const JointVector& q, double eps, int min_pts,
                                             const Transform& to_master_base,
                                             const JointWeights& weights) {
    const auto pts = human_points(cloud);
    if (pts.empty()) return {};
    auto [clusters, noise] = dbscan(pts, eps, min_pts);
    (void)noise;
    return dynamic_entries_from_clusters(clusters, master, q, to_master_base, weights);
}

// The partner arm's two longest links, each reconstructed as 100 sampled
// central-line points; one entry per link.
inline ObstacleSet partner_robot_obstacles(const ArmModel& partner, const JointVector& q_partner,
                                           const ArmModel& master, const JointVector& q_master,
                                           const Transform& to_master_base,
                                           const JointWeights& weights) {
    const auto joints = monitored_joint_positions(master, q_master);
    const auto frames = fk(partner, q_partner);
    const auto links = longest_two_links(partner);

    ObstacleSet set;
    for (int li = 0; li < 2; ++li) {
        const auto samples = sample_link_points(frames[links[static_cast<std::size_t>(li)].first].trans,
                                                frames[links[static_cast<std::size_t>(li)].second].trans,
                                                kLinkSampleCount);
        set.entries.push_back(
            detail::make_entry(samples, joints, weights, to_master_base, ObstacleKind::Robot, li));
    }
    return set;
}

// Destination boxes via analytic closest-point-on-box; one entry per box.
// The table can optionally join the static set.
inline ObstacleSet static_obstacles(const WorldState& w, const ArmModel& master,
                                    const JointVector& q, const Transform& to_master_base,
                                    const JointWeights& weights, bool include_table = false) {
    const auto joints = monitored_joint_positions(master, q);
    ObstacleSet set;
    int id = 0;
    auto add_box = [&](const Aabb& box) {
        ObstacleEntry e;
        e.kind = ObstacleKind::Static;
        e.id = id++;
        for (int k = 0; k < 4; ++k) {
            const Vec3 cp = box.closest_surface_point(joints[k]);
            e.d[k] = distance(cp, joints[k]);
            e.nearest_points[k] = to_master_base.apply(cp);
        }
        e.weighted_distance = 0.0;
        for (int k = 0; k < 4; ++k) e.weighted_distance += weights[k] * e.d[k];
        set.entries.push_back(e);
    };
    for (const auto& box : w.boxes) add_box(box.shape);
    if (include_table) add_box(w.table);
    return set;
}

} // namespace mldsim
