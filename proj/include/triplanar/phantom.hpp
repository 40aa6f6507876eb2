#pragma once
// Procedural phantom volumes with class-conditional nodules.
//
// A phantom is lung-like background noise plus vessel/fissure clutter and
// one nodule at the volume center, rendered per class:
//   solid        sphere around -50 HU
//   non-solid    sphere around -525 HU
//   part-solid   non-solid sphere with a solid core of 30-60% radius
//   calcified    sphere around 500 HU
//   perifissural solid sphere crossed by a thin (<= 1 mm) -600 HU plane
//                extending across the whole volume
//   spiculated   solid sphere with 6-14 radial spikes, 0.5-1.5x radius
// Everything is drawn from one seeded generator; identical specs produce
// bit-identical volumes. Voxels are rounded to integral HU so that the
// int16 file round-trip is exact.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "triplanar/rng.hpp"
#include "triplanar/volume.hpp"

namespace triplanar {

struct PhantomSpec {
    NoduleLabel label = NoduleLabel::solid;
    std::uint64_t seed = 0;
    double nodule_radius_mm = 5.0;         // in [2, 20]
    double background_hu_mean = -850.0;
    double background_hu_std = 50.0;
    double clutter_density = 0.15;         // vessel segments per cm^3
    std::array<int, 3> dims{96, 96, 56};
    std::array<double, 3> spacing{0.67, 0.67, 1.0};
};

namespace detail {

inline double smooth_weight(double distance, double boundary, double edge_mm = 0.5) {
    // 1 well inside the shape, 0 beyond boundary + edge
    const double t = (boundary + edge_mm - distance) / (2.0 * edge_mm);
    return std::clamp(t, 0.0, 1.0);
}

struct BBox {
    int lo[3], hi[3];
};

inline BBox world_bbox(const Volume& v, const Vec3& center, double radius_mm) {
    BBox b{};
    const Vec3 g = v.world_to_voxel(center);
    const double gc[3] = {g.x, g.y, g.z};
    for (int a = 0; a < 3; ++a) {
        const double rv = radius_mm / v.spacing()[static_cast<std::size_t>(a)];
        b.lo[a] = std::max(0, static_cast<int>(std::floor(gc[a] - rv)) - 1);
        b.hi[a] = std::min(v.dims()[static_cast<std::size_t>(a)] - 1,
                           static_cast<int>(std::ceil(gc[a] + rv)) + 1);
    }
    return b;
}

template <typename F>
inline void for_each_voxel(const Volume& v, const BBox& b, F&& f) {
    for (int k = b.lo[2]; k <= b.hi[2]; ++k)
        for (int j = b.lo[1]; j <= b.hi[1]; ++j)
            for (int i = b.lo[0]; i <= b.hi[0]; ++i) {
                const WorldPoint p = v.voxel_to_world({static_cast<double>(i),
                                                       static_cast<double>(j),
                                                       static_cast<double>(k)});
                f(i, j, k, p);
            }
}

inline void paint_sphere(Volume& v, Rng& rng, const Vec3& c, double radius, double level,
                         double texture_std) {
    for_each_voxel(v, world_bbox(v, c, radius + 1.0), [&](int i, int j, int k, const WorldPoint& p) {
        const double n = rng.normal(0.0, texture_std); // consumed for every bbox voxel
        const double w = smooth_weight(norm(p - c), radius);
        if (w > 0.0) v.at(i, j, k) = static_cast<float>((1.0 - w) * v.at(i, j, k) + w * (level + n));
    });
}

inline void paint_segment(Volume& v, const Vec3& a, const Vec3& b, double radius, double level) {
    const Vec3 mid = (a + b) * 0.5;
    const double half = 0.5 * norm(b - a);
    for_each_voxel(v, world_bbox(v, mid, half + radius + 1.0),
                   [&](int i, int j, int k, const WorldPoint& p) {
                       const Vec3 ab = b - a;
                       const double len2 = dot(ab, ab);
                       const double t = len2 > 0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
                       const double d = norm(p - (a + ab * t));
                       const double w = smooth_weight(d, radius, 0.35);
                       if (w > 0.0)
                           v.at(i, j, k) = static_cast<float>((1.0 - w) * v.at(i, j, k) + w * level);
                   });
}

inline void paint_plane(Volume& v, const Vec3& point, const Vec3& unit_normal, double thickness,
                        double level) {
    const int* d = v.dims().data();
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i) {
                const WorldPoint p = v.voxel_to_world({static_cast<double>(i),
                                                       static_cast<double>(j),
                                                       static_cast<double>(k)});
                const double dist = std::abs(dot(p - point, unit_normal));
                const double w = smooth_weight(dist, 0.5 * thickness, 0.3);
                if (w > 0.0)
                    v.at(i, j, k) = static_cast<float>((1.0 - w) * v.at(i, j, k) + w * level);
            }
}

inline Vec3 random_unit(Rng& rng) {
    while (true) {
        const Vec3 u{2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0,
                     2.0 * rng.uniform() - 1.0};
        const double n = norm(u);
        if (n > 1e-3 && n <= 1.0) return u * (1.0 / n);
    }
}

} // namespace detail

inline std::pair<Volume, NoduleRecord> generate_phantom(const PhantomSpec& spec) {
    if (spec.nodule_radius_mm < 2.0 || spec.nodule_radius_mm > 20.0)
        throw VolumeError("phantom nodule radius must be in [2, 20] mm");

    Volume vol(spec.dims, spec.spacing, {0.0, 0.0, 0.0});
    const double half_extent =
        std::min({0.5 * (spec.dims[0] - 1) * spec.spacing[0],
                  0.5 * (spec.dims[1] - 1) * spec.spacing[1],
                  0.5 * (spec.dims[2] - 1) * spec.spacing[2]});
    if (spec.nodule_radius_mm >= half_extent)
        throw VolumeError("phantom nodule radius exceeds volume extent");

    Rng rng(spec.seed);

    // lung background
    for (auto& x : vol.values())
        x = static_cast<float>(rng.normal(spec.background_hu_mean, spec.background_hu_std));

    const Vec3 center = vol.world_center() +
                        Vec3{rng.uniform(-0.3, 0.3) * spec.spacing[0],
                             rng.uniform(-0.3, 0.3) * spec.spacing[1],
                             rng.uniform(-0.3, 0.3) * spec.spacing[2]};
    const double r = spec.nodule_radius_mm;

    // vessel clutter: finite bright segments scattered through the lung
    {
        const double volume_cm3 = (spec.dims[0] * spec.spacing[0]) *
                                  (spec.dims[1] * spec.spacing[1]) *
                                  (spec.dims[2] * spec.spacing[2]) / 1000.0;
        const int n_vessels = static_cast<int>(std::llround(spec.clutter_density * volume_cm3));
        for (int s = 0; s < n_vessels; ++s) {
            const Vec3 p{rng.uniform(0.0, (spec.dims[0] - 1) * spec.spacing[0]),
                         rng.uniform(0.0, (spec.dims[1] - 1) * spec.spacing[1]),
                         rng.uniform(0.0, (spec.dims[2] - 1) * spec.spacing[2])};
            const Vec3 dir = detail::random_unit(rng);
            const double len = rng.uniform(10.0, 35.0);
            const double radius = rng.uniform(0.4, 1.1);
            const double level = rng.normal(-60.0, 30.0);
            detail::paint_segment(vol, p - dir * (0.5 * len), p + dir * (0.5 * len), radius, level);
        }
        // occasional distant fissure, present for every class, kept well away
        // from the nodule so the perifissural cue stays the attached plane
        const int n_far_planes = static_cast<int>(rng.uniform_index(2));
        for (int s = 0; s < n_far_planes; ++s) {
            const Vec3 n = detail::random_unit(rng);
            const double offset = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(r + 12.0, r + 20.0);
            detail::paint_plane(vol, center + n * offset, n, rng.uniform(0.6, 1.0), -600.0);
        }
    }

    // nodule
    const double solid_level = -50.0, solid_std = 80.0;
    const double nonsolid_level = -525.0, nonsolid_std = 100.0;
    switch (spec.label) {
        case NoduleLabel::solid:
            detail::paint_sphere(vol, rng, center, r, solid_level, solid_std);
            break;
        case NoduleLabel::non_solid:
            detail::paint_sphere(vol, rng, center, r, nonsolid_level, nonsolid_std);
            break;
        case NoduleLabel::part_solid: {
            detail::paint_sphere(vol, rng, center, r, nonsolid_level, nonsolid_std);
            const double core_r = rng.uniform(0.3, 0.6) * r;
            const Vec3 core_c = center + detail::random_unit(rng) * (0.5 * (r - core_r) * rng.uniform());
            detail::paint_sphere(vol, rng, core_c, core_r, solid_level, solid_std);
            break;
        }
        case NoduleLabel::calcified:
            detail::paint_sphere(vol, rng, center, r, 500.0, 150.0);
            break;
        case NoduleLabel::perifissural: {
            detail::paint_sphere(vol, rng, center, r, solid_level, solid_std);
            const Vec3 n = detail::random_unit(rng);
            const double offset = rng.uniform(-0.5, 0.5) * r;
            detail::paint_plane(vol, center + n * offset, n, rng.uniform(0.7, 1.0), -600.0);
            break;
        }
        case NoduleLabel::spiculated: {
            detail::paint_sphere(vol, rng, center, r, solid_level, solid_std);
            const int n_spikes = 6 + static_cast<int>(rng.uniform_index(9)); // 6..14
            for (int s = 0; s < n_spikes; ++s) {
                const Vec3 dir = detail::random_unit(rng);
                const double len = rng.uniform(0.7, 1.5) * r;
                const double base = rng.uniform(0.2, 0.35) * r;
                const double reach = r + len;
                // full thickness out to the sphere surface, tapering beyond it
                detail::for_each_voxel(
                    vol, detail::world_bbox(vol, center + dir * (0.5 * reach), 0.5 * reach + base + 1.0),
                    [&](int i, int j, int k, const WorldPoint& p) {
                        const double t = dot(p - center, dir);
                        if (t < 0.0 || t > reach) return;
                        const double radial = norm(p - center - dir * t);
                        const double taper = t <= r ? 1.0 : 1.0 - (t - r) / (reach - r);
                        const double w = detail::smooth_weight(radial, base * taper, 0.35);
                        if (w > 0.0)
                            vol.at(i, j, k) = static_cast<float>((1.0 - w) * vol.at(i, j, k) +
                                                                 w * solid_level);
                    });
            }
            break;
        }
    }

    // integral HU so the int16 file round-trip is exact
    for (auto& x : vol.values())
        x = static_cast<float>(std::clamp<double>(std::llround(x), -32768.0, 32767.0));

    NoduleRecord rec;
    rec.center = center;
    rec.label = spec.label;
    rec.diameter_mm = 2.0 * r;
    return {std::move(vol), rec};
}

// Mean HU over voxels within the nodule radius; used by tests and sanity checks.
inline double mean_hu_inside(const Volume& v, const Vec3& center, double radius) {
    double sum = 0.0;
    std::size_t count = 0;
    detail::for_each_voxel(v, detail::world_bbox(v, center, radius),
                           [&](int i, int j, int k, const WorldPoint& p) {
                               if (norm(p - center) <= radius) {
                                   sum += v.at(i, j, k);
                                   ++count;
                               }
                           });
    return count ? sum / static_cast<double>(count) : 0.0;
}

} // namespace triplanar
