#pragma once

#include <array>
#include <cmath>

#include "mldsim/vec3.hpp"

namespace mldsim {

// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }

    static Mat3 rot_z(double a) {
        const double c = std::cos(a), s = std::sin(a);
        return {{c, -s, 0, s, c, 0, 0, 0, 1}};
    }

    static Mat3 rot_x(double a) {
        const double c = std::cos(a), s = std::sin(a);
        return {{1, 0, 0, 0, c, -s, 0, s, c}};
    }

    double operator()(int r, int c) const { return m[3 * r + c]; }
    double& operator()(int r, int c) { return m[3 * r + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    Mat3 transposed() const {
        return {{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }
};

// Rigid transform: p' = rot * p + trans.
struct Transform {
    Mat3 rot;
    Vec3 trans;

    static Transform identity() { return {}; }

    static Transform translation(const Vec3& t) { return {Mat3::identity(), t}; }

    static Transform yaw(double angle, const Vec3& t = {}) { return {Mat3::rot_z(angle), t}; }

    Vec3 apply(const Vec3& p) const { return rot * p + trans; }

    Transform operator*(const Transform& o) const { return {rot * o.rot, rot * o.trans + trans}; }

    Transform inverse() const {
        const Mat3 rt = rot.transposed();
        const Vec3 t = rt * trans;
        return {rt, {-t.x, -t.y, -t.z}};
    }

    // Max deviation of rot * rot^T from the identity.
    double orthonormality_error() const {
        const Mat3 p = rot * rot.transposed();
        double e = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                e = std::max(e, std::abs(p(i, j) - (i == j ? 1.0 : 0.0)));
        return e;
    }

    bool orthonormal(double tol = 1e-9) const {
        return orthonormality_error() <= tol && std::abs(rot.det() - 1.0) <= tol;
    }
};

} // namespace mldsim
