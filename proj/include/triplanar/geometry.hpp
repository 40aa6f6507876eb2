#pragma once
// Oriented plane triplets through a nodule center.
//
// A triplet holds three mutually orthogonal 2D frames. At theta = 0 the
// frames are the canonical axial, coronal and sagittal views; any other
// triplet is produced by rotating all three frames with the composite
// rotation Rz(theta) * Ry(theta) * Rx(theta), which keeps the planes
// mutually orthogonal for every angle.

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace triplanar {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

using WorldPoint = Vec3; // world millimetres

struct Mat3 {
    // row-major
    double m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

    Vec3 operator*(const Vec3& v) const {
        return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
                m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
                m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                r.m[i][j] = m[i][0] * o.m[0][j] + m[i][1] * o.m[1][j] + m[i][2] * o.m[2][j];
        return r;
    }
};

inline Mat3 rot_x(double t) {
    const double c = std::cos(t), s = std::sin(t);
    return Mat3{{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
}
inline Mat3 rot_y(double t) {
    const double c = std::cos(t), s = std::sin(t);
    return Mat3{{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
}
inline Mat3 rot_z(double t) {
    const double c = std::cos(t), s = std::sin(t);
    return Mat3{{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
}

// In-plane axes of one oriented cross-section.
struct PlaneFrame {
    Vec3 u; // unit, first in-plane axis
    Vec3 v; // unit, second in-plane axis

    Vec3 normal() const { return cross(u, v); }
};

struct PlaneTriplet {
    WorldPoint center;
    std::array<PlaneFrame, 3> frames; // axial-like, coronal-like, sagittal-like
    double theta = 0.0;
};

// theta_n = (n-1)*pi/(2N), n = 1..N. Strictly increasing, all in [0, pi/2).
inline std::vector<double> theta_schedule(int n_angles) {
    if (n_angles < 1) throw std::invalid_argument("theta_schedule: N must be >= 1");
    std::vector<double> thetas(static_cast<std::size_t>(n_angles));
    for (int n = 1; n <= n_angles; ++n)
        thetas[static_cast<std::size_t>(n - 1)] =
            static_cast<double>(n - 1) * std::numbers::pi / (2.0 * n_angles);
    return thetas;
}

inline PlaneTriplet triplet_planes(const WorldPoint& q, double theta) {
    if (!std::isfinite(theta)) throw std::invalid_argument("triplet_planes: theta must be finite");
    static const std::array<PlaneFrame, 3> canonical = {{
        {{1, 0, 0}, {0, 1, 0}}, // axial
        {{1, 0, 0}, {0, 0, 1}}, // coronal
        {{0, 1, 0}, {0, 0, 1}}, // sagittal
    }};
    PlaneTriplet t;
    t.center = q;
    t.theta = theta;
    if (theta == 0.0) {
        t.frames = canonical; // exact canonical frames, no trigonometric drift
        return t;
    }
    const Mat3 r = rot_z(theta) * rot_y(theta) * rot_x(theta);
    for (int i = 0; i < 3; ++i) {
        t.frames[static_cast<std::size_t>(i)].u = r * canonical[static_cast<std::size_t>(i)].u;
        t.frames[static_cast<std::size_t>(i)].v = r * canonical[static_cast<std::size_t>(i)].v;
    }
    return t;
}

// Largest orthonormality violation across the triplet: in-plane axis
// lengths, u.v within each frame, and pairwise normal dot products.
inline double orthonormality_residual(const PlaneTriplet& t) {
    double worst = 0.0;
    for (const auto& f : t.frames) {
        worst = std::max(worst, std::abs(norm(f.u) - 1.0));
        worst = std::max(worst, std::abs(norm(f.v) - 1.0));
        worst = std::max(worst, std::abs(dot(f.u, f.v)));
    }
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j)
            worst = std::max(worst, std::abs(dot(t.frames[static_cast<std::size_t>(i)].normal(),
                                                 t.frames[static_cast<std::size_t>(j)].normal())));
    return worst;
}

} // namespace triplanar
