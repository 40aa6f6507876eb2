#pragma once
// Multi-scale patch extraction.
//
// For one plane frame: sample an intermediate square grid over the plane
// (step = the volume's min in-plane spacing) via trilinear 3D lookup,
// resize it to 64x64 with Catmull-Rom bicubic interpolation, then map HU
// through the fixed intensity window [-1200, 400] -> [0, 1].

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "triplanar/geometry.hpp"
#include "triplanar/rng.hpp"
#include "triplanar/volume.hpp"

namespace triplanar {

inline constexpr int kPatchSide = 64;

inline double normalize_intensity(double hu) {
    const double clamped = std::clamp(hu, -1200.0, 400.0);
    return (clamped + 1200.0) / 1600.0;
}

struct Patch {
    std::array<float, kPatchSide * kPatchSide> pixels{}; // row-major, in [0, 1]
    double scale_mm = 0.0;
    int view_index = 0;

    float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * kPatchSide + col]; }
    float& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * kPatchSide + col]; }
};

enum class Flip : std::uint8_t { none = 0, vertical = 1, horizontal = 2, both = 3 };

struct AugmentationTag {
    std::uint8_t shift_index = 0; // 0 = unshifted center
    std::uint8_t flip_index = 0;  // Flip enum value
};

struct MultiScaleSample {
    std::vector<Patch> patches; // scale-major, view-minor: 3 patches per scale
    std::vector<double> scales_mm;
    NoduleLabel label = NoduleLabel::solid;
    double theta = 0.0;
    AugmentationTag tag{};
    Vec3 shift_mm{}; // augmentation center offset, in-memory only

    const Patch& patch(int scale_idx, int view_idx) const {
        return patches[static_cast<std::size_t>(scale_idx) * 3 + view_idx];
    }
};

inline const std::vector<double>& default_scales() {
    static const std::vector<double> s{10.0, 20.0, 40.0};
    return s;
}

namespace detail {

// Catmull-Rom kernel (a = -0.5)
inline double cubic_weight(double t) {
    t = std::abs(t);
    if (t < 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
    if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
    return 0.0;
}

// Separable bicubic resize of an n x n grid to kPatchSide x kPatchSide,
// pixel-center aligned, borders clamped.
inline void bicubic_resize(const std::vector<double>& src, int n, Patch& out) {
    const double ratio = static_cast<double>(n) / kPatchSide;
    std::array<double, kPatchSide> centers;
    std::array<int, kPatchSide> bases;
    std::array<std::array<double, 4>, kPatchSide> weights;
    for (int d = 0; d < kPatchSide; ++d) {
        const double sc = (d + 0.5) * ratio - 0.5;
        const int base = static_cast<int>(std::floor(sc)) - 1;
        centers[static_cast<std::size_t>(d)] = sc;
        bases[static_cast<std::size_t>(d)] = base;
        for (int k = 0; k < 4; ++k)
            weights[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)] =
                cubic_weight(sc - (base + k));
    }
    // rows first
    std::vector<double> tmp(static_cast<std::size_t>(n) * kPatchSide);
    for (int r = 0; r < n; ++r) {
        const double* row = src.data() + static_cast<std::size_t>(r) * n;
        for (int c = 0; c < kPatchSide; ++c) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) {
                const int s = std::clamp(bases[static_cast<std::size_t>(c)] + k, 0, n - 1);
                acc += weights[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)] * row[s];
            }
            tmp[static_cast<std::size_t>(r) * kPatchSide + c] = acc;
        }
    }
    for (int r = 0; r < kPatchSide; ++r) {
        for (int c = 0; c < kPatchSide; ++c) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) {
                const int s = std::clamp(bases[static_cast<std::size_t>(r)] + k, 0, n - 1);
                acc += weights[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] *
                       tmp[static_cast<std::size_t>(s) * kPatchSide + c];
            }
            out.at(r, c) = static_cast<float>(normalize_intensity(acc));
        }
    }
}

inline void flip_patch(Patch& p, Flip f) {
    if (f == Flip::none) return;
    const bool flip_rows = (f == Flip::vertical || f == Flip::both);
    const bool flip_cols = (f == Flip::horizontal || f == Flip::both);
    Patch orig = p;
    for (int r = 0; r < kPatchSide; ++r)
        for (int c = 0; c < kPatchSide; ++c)
            p.at(r, c) = orig.at(flip_rows ? kPatchSide - 1 - r : r,
                                 flip_cols ? kPatchSide - 1 - c : c);
}

} // namespace detail

// Number of intermediate grid points for a patch of physical side d.
inline int intermediate_grid_points(const Volume& v, double d_mm) {
    const double step = std::min(v.spacing()[0], v.spacing()[1]);
    return std::max(2, static_cast<int>(std::llround(d_mm / step)));
}

inline Patch extract_patch(const Volume& v, const PlaneFrame& frame, const WorldPoint& q,
                           double d_mm) {
    if (!(d_mm > 0.0)) throw std::invalid_argument("extract_patch: d must be > 0");
    const double step = std::min(v.spacing()[0], v.spacing()[1]);
    const int n = intermediate_grid_points(v, d_mm);
    const double half = 0.5 * (n - 1);

    std::vector<double> grid(static_cast<std::size_t>(n) * n);
    for (int r = 0; r < n; ++r) {
        const double b = (r - half) * step;
        for (int c = 0; c < n; ++c) {
            const double a = (c - half) * step;
            const WorldPoint p = q + frame.u * a + frame.v * b;
            grid[static_cast<std::size_t>(r) * n + c] = v.sample_trilinear(p);
        }
    }
    Patch out;
    out.scale_mm = d_mm;
    detail::bicubic_resize(grid, n, out);
    return out;
}

inline MultiScaleSample extract_sample(const Volume& v, const NoduleRecord& rec, double theta,
                                       const std::vector<double>& scales = default_scales()) {
    if (scales.empty()) throw std::invalid_argument("extract_sample: scales must be nonempty");
    for (double s : scales)
        if (!(s > 0.0)) throw std::invalid_argument("extract_sample: scales must be > 0");

    const PlaneTriplet triplet = triplet_planes(rec.center, theta);
    MultiScaleSample sample;
    sample.scales_mm = scales;
    sample.label = rec.label;
    sample.theta = theta;
    sample.patches.reserve(scales.size() * 3);
    for (double d : scales) {
        for (int view = 0; view < 3; ++view) {
            Patch p = extract_patch(v, triplet.frames[static_cast<std::size_t>(view)], rec.center, d);
            p.view_index = view;
            sample.patches.push_back(std::move(p));
        }
    }
    return sample;
}

// 16 views: (original center + 3 random shifts) x (4 flips).
// Shifts are per-axis normal with sigma = 1/(3*sqrt(3)) mm, redrawn until
// the shift vector lies within the 1 mm sphere. Flips are applied
// coherently to all patches of a sample.
inline std::vector<MultiScaleSample> augment_sample(const Volume& v, const NoduleRecord& rec,
                                                    double theta, std::uint64_t rng_seed,
                                                    const std::vector<double>& scales =
                                                        default_scales()) {
    constexpr double kSigma = 1.0 / (3.0 * 1.7320508075688772); // 1/(3*sqrt(3))
    Rng rng(rng_seed);

    std::array<Vec3, 4> offsets{};
    for (int s = 1; s < 4; ++s) {
        Vec3 delta;
        do {
            delta = {rng.normal(0.0, kSigma), rng.normal(0.0, kSigma), rng.normal(0.0, kSigma)};
        } while (norm(delta) > 1.0);
        offsets[static_cast<std::size_t>(s)] = delta;
    }

    std::vector<MultiScaleSample> out;
    out.reserve(16);
    for (int s = 0; s < 4; ++s) {
        NoduleRecord shifted = rec;
        shifted.center = rec.center + offsets[static_cast<std::size_t>(s)];
        const MultiScaleSample base = extract_sample(v, shifted, theta, scales);
        for (int f = 0; f < 4; ++f) {
            MultiScaleSample m = base;
            for (auto& p : m.patches) detail::flip_patch(p, static_cast<Flip>(f));
            m.tag = {static_cast<std::uint8_t>(s), static_cast<std::uint8_t>(f)};
            m.shift_mm = offsets[static_cast<std::size_t>(s)];
            out.push_back(std::move(m));
        }
    }
    return out;
}

} // namespace triplanar
