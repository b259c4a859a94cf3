#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mldsim/errors.hpp"
#include "mldsim/transform.hpp"
#include "mldsim/vec3.hpp"

namespace mldsim {

// One row of a standard Denavit-Hartenberg table.
struct DhRow {
    double a = 0.0;            // link length, m
    double d = 0.0;            // link offset, m
    double alpha = 0.0;        // link twist, rad
    double theta_offset = 0.0; // fixed joint-angle offset, rad
};

using JointVector = std::array<double, 6>;

struct ArmModel {
    std::array<DhRow, 6> dh{};
    Transform base = Transform::identity();
    std::array<double, 6> joint_lo{};
    std::array<double, 6> joint_hi{};
    std::array<double, 6> vel_limits{};
    std::array<int, 4> monitored_joints{1, 2, 3, 5};

    void validate() const {
        for (int j = 0; j < 6; ++j) {
            if (!(joint_lo[j] < joint_hi[j]))
                throw ConfigError("arm model: joint " + std::to_string(j) + " limits not ordered");
            if (!(vel_limits[j] > 0.0))
                throw ConfigError("arm model: joint " + std::to_string(j) + " velocity limit must be > 0");
            if (!std::isfinite(dh[j].a) || !std::isfinite(dh[j].d) || !std::isfinite(dh[j].alpha) ||
                !std::isfinite(dh[j].theta_offset))
                throw ConfigError("arm model: non-finite DH row " + std::to_string(j));
        }
        for (int k = 0; k < 4; ++k) {
            const int j = monitored_joints[k];
            if (j < 0 || j >= 6) throw ConfigError("arm model: monitored joint index out of range");
            if (k > 0 && monitored_joints[k - 1] >= j)
                throw ConfigError("arm model: monitored joints must be strictly increasing");
        }
    }

    bool in_limits(const JointVector& q, double slack = 1e-9) const {
        for (int j = 0; j < 6; ++j)
            if (!(q[j] >= joint_lo[j] - slack && q[j] <= joint_hi[j] + slack)) return false;
        return true;
    }
};

// Frame transform of one DH row at joint angle theta:
// Rz(theta) * Tz(d) * Tx(a) * Rx(alpha), fused.
inline Transform dh_transform(const DhRow& row, double theta) {
    const double ct = std::cos(theta), st = std::sin(theta);
    const double ca = std::cos(row.alpha), sa = std::sin(row.alpha);
    Transform t;
    t.rot = {{ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca}};
    t.trans = {row.a * ct, row.a * st, row.d};
    return t;
}

// Forward kinematics: frame 0 is the arm base, frame k the frame after
// joint k, frame 6 the tool flange. All in the frame the base is given in.
inline std::array<Transform, 7> fk(const ArmModel& arm, const JointVector& q) {
    if (!arm.in_limits(q)) throw std::domain_error("fk: joint vector outside limits");
    std::array<Transform, 7> frames;
    frames[0] = arm.base;
    for (int j = 0; j < 6; ++j) {
        frames[j + 1] = frames[j] * dh_transform(arm.dh[j], q[j] + arm.dh[j].theta_offset);
    }
    return frames;
}

inline std::array<Vec3, 4> monitored_joint_positions(const ArmModel& arm, const JointVector& q) {
    const auto frames = fk(arm, q);
    std::array<Vec3, 4> out;
    for (int k = 0; k < 4; ++k) out[k] = frames[arm.monitored_joints[k] + 1].trans;
    return out;
}

// n points from p_a to p_b inclusive, evenly spaced on the segment.
inline std::vector<Vec3> sample_link_points(const Vec3& p_a, const Vec3& p_b, int n) {
    if (n < 2) throw std::domain_error("sample_link_points: need at least 2 points");
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(n));
    const double denom = static_cast<double>(n - 1);
    for (int i = 0; i < n; ++i) {
        const double s = static_cast<double>(i) / denom;
        pts.push_back(p_a + (p_b - p_a) * s);
    }
    return pts;
}

// Velocity command integration: clamp the command to the per-joint velocity
// limit, Euler-step, clamp the result to the joint limits.
inline JointVector integrate_joints(const ArmModel& arm, const JointVector& q,
                                    const std::array<double, 6>& qdot, double dt) {
    if (!(dt > 0.0)) throw std::domain_error("integrate_joints: dt must be > 0");
    JointVector out;
    for (int j = 0; j < 6; ++j) {
        if (!std::isfinite(qdot[j])) throw std::domain_error("integrate_joints: non-finite command");
        const double v = std::clamp(qdot[j], -arm.vel_limits[j], arm.vel_limits[j]);
        out[j] = std::clamp(q[j] + v * dt, arm.joint_lo[j], arm.joint_hi[j]);
    }
    return out;
}

// Distance between consecutive frame origins is invariant in the joint
// angles: sqrt(a^2 + d^2) per row.
inline std::array<double, 6> link_lengths(const ArmModel& arm) {
    std::array<double, 6> len;
    for (int j = 0; j < 6; ++j) len[j] = std::hypot(arm.dh[j].a, arm.dh[j].d);
    return len;
}

// Frame-index pairs (k, k+1) of the two longest links, longest first.
inline std::array<std::pair<int, int>, 2> longest_two_links(const ArmModel& arm) {
    const auto len = link_lengths(arm);
    int first = 0, second = -1;
    for (int j = 1; j < 6; ++j)
        if (len[j] > len[first]) first = j;
    for (int j = 0; j < 6; ++j) {
        if (j == first) continue;
        if (second < 0 || len[j] > len[second]) second = j;
    }
    return {{{first, first + 1}, {second, second + 1}}};
}

// DH table file: one row per joint, columns a d alpha theta_offset,
// whitespace separated, '#' starts a comment.
inline std::array<DhRow, 6> load_dh_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open DH table file: " + path);
    std::array<DhRow, 6> rows;
    int count = 0;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        DhRow row;
        if (!(ls >> row.a)) continue; // blank or comment-only line
        if (!(ls >> row.d >> row.alpha >> row.theta_offset))
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 4 columns (a d alpha theta_offset)");
        double extra;
        if (ls >> extra)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": too many columns");
        if (count >= 6) throw ConfigError(path + ": more than 6 joint rows");
        rows[count++] = row;
    }
    if (count != 6) throw ConfigError(path + ": expected 6 joint rows, got " + std::to_string(count));
    return rows;
}

} // namespace mldsim
