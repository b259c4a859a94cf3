#pragma once

#include <array>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "mldsim/errors.hpp"
#include "mldsim/kinematics.hpp"
#include "mldsim/rng.hpp"
#include "mldsim/vec3.hpp"

namespace mldsim {

enum class SemanticClass { Table, Human, Box, Robot, Cube };

inline const char* to_string(SemanticClass c) {
    switch (c) {
        case SemanticClass::Table: return "table";
        case SemanticClass::Human: return "human";
        case SemanticClass::Box: return "box";
        case SemanticClass::Robot: return "robot";
        case SemanticClass::Cube: return "cube";
    }
    return "?";
}

inline SemanticClass semantic_class_from_string(const std::string& s) {
    if (s == "table") return SemanticClass::Table;
    if (s == "human") return SemanticClass::Human;
    if (s == "box") return SemanticClass::Box;
    if (s == "robot") return SemanticClass::Robot;
    if (s == "cube") return SemanticClass::Cube;
    throw ConfigError("unknown semantic class: " + s);
}

struct LabeledPoint {
    Vec3 position;
    SemanticClass label = SemanticClass::Table;
};

struct LabeledPointCloud {
    std::vector<LabeledPoint> points;
    std::string frame_tag = "world";
};

// Axis-aligned box.
struct Aabb {
    Vec3 lo;
    Vec3 hi;

    Vec3 center() const { return (lo + hi) * 0.5; }
    Vec3 extents() const { return hi - lo; }

    double surface_area() const {
        const Vec3 e = extents();
        return 2.0 * (e.x * e.y + e.y * e.z + e.x * e.z);
    }

    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z &&
               p.z <= hi.z;
    }

    // Closest point on the box surface. Interior points are pushed to the
    // nearest face; exterior points clamp componentwise.
    Vec3 closest_surface_point(const Vec3& p) const {
        if (!contains(p)) {
            return {std::clamp(p.x, lo.x, hi.x), std::clamp(p.y, lo.y, hi.y),
                    std::clamp(p.z, lo.z, hi.z)};
        }
        Vec3 q = p;
        const std::array<double, 6> gaps = {p.x - lo.x, hi.x - p.x, p.y - lo.y,
                                            hi.y - p.y, p.z - lo.z, hi.z - p.z};
        int best = 0;
        for (int i = 1; i < 6; ++i)
            if (gaps[i] < gaps[best]) best = i;
        switch (best) {
            case 0: q.x = lo.x; break;
            case 1: q.x = hi.x; break;
            case 2: q.y = lo.y; break;
            case 3: q.y = hi.y; break;
            case 4: q.z = lo.z; break;
            default: q.z = hi.z; break;
        }
        return q;
    }

    double surface_distance(const Vec3& p) const { return distance(p, closest_surface_point(p)); }
};

// Piecewise-linear path traversed forward then backward, indefinitely.
struct HumanTrajectory {
    std::vector<Vec3> waypoints;
    std::vector<double> segment_speeds; // m/s, one per segment

    void validate() const {
        if (waypoints.size() < 2) throw ConfigError("human trajectory: need at least 2 waypoints");
        if (segment_speeds.size() + 1 != waypoints.size())
            throw ConfigError("human trajectory: need one speed per segment");
        for (double s : segment_speeds)
            if (!(s > 0.0)) throw ConfigError("human trajectory: speeds must be > 0");
    }

    // Time to walk the path once, one way.
    double one_way_duration() const {
        double t = 0.0;
        for (std::size_t i = 0; i < segment_speeds.size(); ++i)
            t += distance(waypoints[i], waypoints[i + 1]) / segment_speeds[i];
        return t;
    }
};

inline Vec3 advance_human(const HumanTrajectory& traj, double t) {
    const double oneway = traj.one_way_duration();
    if (oneway <= 0.0) return traj.waypoints.front();
    double tau = std::fmod(t, 2.0 * oneway);
    if (tau < 0.0) tau += 2.0 * oneway;
    if (tau > oneway) tau = 2.0 * oneway - tau; // return leg
    for (std::size_t i = 0; i < traj.segment_speeds.size(); ++i) {
        const double seg_len = distance(traj.waypoints[i], traj.waypoints[i + 1]);
        const double seg_t = seg_len / traj.segment_speeds[i];
        if (tau <= seg_t || i + 1 == traj.segment_speeds.size()) {
            const double s = seg_t > 0.0 ? std::min(tau / seg_t, 1.0) : 1.0;
            return traj.waypoints[i] + (traj.waypoints[i + 1] - traj.waypoints[i]) * s;
        }
        tau -= seg_t;
    }
    return traj.waypoints.back();
}

struct DestinationBox {
    Aabb shape;
    Vec3 goal; // place target just above the opening
};

struct HumanState {
    bool enabled = true;
    HumanTrajectory trajectory;
    double phase = 0.0;      // seed-derived offset applied to world time
    Vec3 position;           // ground point under the human
    Vec3 box_extents{0.6, 0.6, 1.8};

    Aabb body_box() const {
        const Vec3 h = box_extents * 0.5;
        return {{position.x - h.x, position.y - h.y, position.z},
                {position.x + h.x, position.y + h.y, position.z + box_extents.z}};
    }
};

struct ArmInstance {
    ArmModel model;
    JointVector q{};
};

struct WorldState {
    double time = 0.0;
    std::array<ArmInstance, 2> arms;
    HumanState human;
    std::array<DestinationBox, 2> boxes;
    Aabb table;
    std::vector<Aabb> cubes;
    std::uint64_t rng_seed = 0;
};

// Lockstep world step: both arms integrate their velocity commands, the
// human follows its path as a function of absolute time.
inline WorldState advance_world(WorldState w, const std::array<std::array<double, 6>, 2>& actions,
                                double dt) {
    if (!(dt > 0.0)) throw std::domain_error("advance_world: dt must be > 0");
    for (int i = 0; i < 2; ++i)
        w.arms[i].q = integrate_joints(w.arms[i].model, w.arms[i].q, actions[i], dt);
    w.time += dt;
    if (w.human.enabled)
        w.human.position = advance_human(w.human.trajectory, w.time + w.human.phase);
    return w;
}

namespace detail {

// Uniform sample on the surface of a box: pick a face with probability
// proportional to its area, then uniform within the face.
inline Vec3 sample_box_surface(const Aabb& box, Rng& rng) {
    const Vec3 e = box.extents();
    const std::array<double, 6> areas = {e.y * e.z, e.y * e.z, e.x * e.z,
                                         e.x * e.z, e.x * e.y, e.x * e.y};
    double total = 0.0;
    for (double a : areas) total += a;
    double pick = rng.uniform() * total;
    int face = 0;
    for (; face < 5; ++face) {
        if (pick < areas[face]) break;
        pick -= areas[face];
    }
    const double u = rng.uniform(), v = rng.uniform();
    switch (face) {
        case 0: return {box.lo.x, box.lo.y + u * e.y, box.lo.z + v * e.z};
        case 1: return {box.hi.x, box.lo.y + u * e.y, box.lo.z + v * e.z};
        case 2: return {box.lo.x + u * e.x, box.lo.y, box.lo.z + v * e.z};
        case 3: return {box.lo.x + u * e.x, box.hi.y, box.lo.z + v * e.z};
        case 4: return {box.lo.x + u * e.x, box.lo.y + v * e.y, box.lo.z};
        default: return {box.lo.x + u * e.x, box.lo.y + v * e.y, box.hi.z};
    }
}

inline void emit_box(std::vector<LabeledPoint>& out, const Aabb& box, SemanticClass label,
                     double density, Rng& rng) {
    const int n = static_cast<int>(std::ceil(box.surface_area() * density));
    for (int i = 0; i < n; ++i) out.push_back({sample_box_surface(box, rng), label});
}

} // namespace detail

inline constexpr int kLinkSampleCount = 100;

// Synthesized stand-in for the depth-camera + segmentation stage: every
// scene surface emits labeled points, arm links emit their sampled central
// lines, then sensor noise and label noise are applied.
inline LabeledPointCloud synth_cloud(const WorldState& w, double density, double noise_sd,
                                     double label_flip_rate, Rng& rng) {
    if (!(density > 0.0)) throw std::domain_error("synth_cloud: density must be > 0");
    if (!(label_flip_rate >= 0.0 && label_flip_rate < 1.0))
        throw std::domain_error("synth_cloud: label_flip_rate must be in [0, 1)");

    LabeledPointCloud cloud;
    cloud.frame_tag = "world";
    auto& pts = cloud.points;

    detail::emit_box(pts, w.table, SemanticClass::Table, density, rng);
    for (const auto& box : w.boxes) detail::emit_box(pts, box.shape, SemanticClass::Box, density, rng);
    for (const auto& cube : w.cubes) detail::emit_box(pts, cube, SemanticClass::Cube, density, rng);
    if (w.human.enabled)
        detail::emit_box(pts, w.human.body_box(), SemanticClass::Human, density, rng);

    for (const auto& arm : w.arms) {
        const auto frames = fk(arm.model, arm.q);
        for (const auto& [k0, k1] : longest_two_links(arm.model)) {
            for (const Vec3& p :
                 sample_link_points(frames[k0].trans, frames[k1].trans, kLinkSampleCount))
                pts.push_back({p, SemanticClass::Robot});
        }
    }

    for (auto& pt : pts) {
        pt.position.x += rng.normal(0.0, noise_sd);
        pt.position.y += rng.normal(0.0, noise_sd);
        pt.position.z += rng.normal(0.0, noise_sd);
        if (label_flip_rate > 0.0 && rng.uniform() < label_flip_rate) {
            // replace with a uniformly random *other* class
            const int skip = static_cast<int>(pt.label);
            int pick = static_cast<int>(rng.uniform_int(4));
            if (pick >= skip) ++pick;
            pt.label = static_cast<SemanticClass>(pick);
        }
    }
    return cloud;
}

inline void write_cloud_csv(const LabeledPointCloud& cloud, std::ostream& os,
                            const std::string& config_hash = "") {
    if (!config_hash.empty()) os << "# config_hash=" << config_hash << "\n";
    os << "x,y,z,label\n";
    char buf[128];
    for (const auto& p : cloud.points) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%s\n", p.position.x, p.position.y,
                      p.position.z, to_string(p.label));
        os << buf;
    }
}

} // namespace mldsim
