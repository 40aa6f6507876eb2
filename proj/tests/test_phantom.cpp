#include <catch2/catch.hpp>

#include <filesystem>

#include "triplanar/phantom.hpp"

using namespace triplanar;

namespace {
PhantomSpec small_spec(NoduleLabel label, std::uint64_t seed) {
    PhantomSpec s;
    s.label = label;
    s.seed = seed;
    s.nodule_radius_mm = 5.0;
    s.dims = {48, 48, 32};
    return s;
}
} // namespace

TEST_CASE("phantom determinism: identical spec, identical bytes") {
    auto [v1, r1] = generate_phantom(small_spec(NoduleLabel::spiculated, 99));
    auto [v2, r2] = generate_phantom(small_spec(NoduleLabel::spiculated, 99));
    CHECK(v1.values() == v2.values());
    CHECK(r1.center.x == r2.center.x);
    CHECK(r1.diameter_mm == r2.diameter_mm);

    auto [v3, r3] = generate_phantom(small_spec(NoduleLabel::spiculated, 100));
    CHECK(v1.values() != v3.values());
}

TEST_CASE("phantom class intensity contracts") {
    SECTION("solid mean HU above -450") {
        auto [v, r] = generate_phantom(small_spec(NoduleLabel::solid, 1));
        CHECK(mean_hu_inside(v, r.center, 0.5 * r.diameter_mm) > -450.0);
    }
    SECTION("non-solid mean HU in [-750, -300]") {
        auto [v, r] = generate_phantom(small_spec(NoduleLabel::non_solid, 1));
        const double m = mean_hu_inside(v, r.center, 0.5 * r.diameter_mm);
        CHECK(m >= -750.0);
        CHECK(m <= -300.0);
    }
    SECTION("ordering calcified > solid > non-solid for every seed") {
        for (std::uint64_t seed : {1ull, 2ull, 3ull, 17ull, 123456789ull}) {
            auto [vc, rc] = generate_phantom(small_spec(NoduleLabel::calcified, seed));
            auto [vs, rs] = generate_phantom(small_spec(NoduleLabel::solid, seed));
            auto [vn, rn] = generate_phantom(small_spec(NoduleLabel::non_solid, seed));
            const double mc = mean_hu_inside(vc, rc.center, 0.5 * rc.diameter_mm);
            const double ms = mean_hu_inside(vs, rs.center, 0.5 * rs.diameter_mm);
            const double mn = mean_hu_inside(vn, rn.center, 0.5 * rn.diameter_mm);
            CHECK(mc > ms);
            CHECK(ms > mn);
        }
    }
}

TEST_CASE("part-solid phantom has a denser core") {
    auto [v, r] = generate_phantom(small_spec(NoduleLabel::part_solid, 5));
    const double r_mm = 0.5 * r.diameter_mm;
    const double core = mean_hu_inside(v, r.center, 0.2 * r_mm);
    const double whole = mean_hu_inside(v, r.center, r_mm);
    CHECK(whole > -750.0);
    CHECK(whole < -100.0);
    // the 20% inner ball is inside the solid core more often than not
    CHECK(core > whole);
}

TEST_CASE("perifissural phantom carries a dark plane through the nodule region") {
    auto [v, r] = generate_phantom(small_spec(NoduleLabel::perifissural, 9));
    auto [vs, rs] = generate_phantom(small_spec(NoduleLabel::solid, 9));
    // the attached fissure lowers the mean inside the sphere vs pure solid
    const double mp = mean_hu_inside(v, r.center, 0.5 * r.diameter_mm);
    const double ms = mean_hu_inside(vs, rs.center, 0.5 * rs.diameter_mm);
    CHECK(mp < ms);
    CHECK(mp > -450.0); // still solid density overall
}

TEST_CASE("spiculated phantom is brighter than solid outside the sphere") {
    // spikes extend beyond the nodule radius, raising the shell mean
    auto shell_mean = [](const Volume& v, const Vec3& c, double r0, double r1) {
        double sum = 0;
        std::size_t n = 0;
        detail::for_each_voxel(v, detail::world_bbox(v, c, r1),
                               [&](int i, int j, int k, const WorldPoint& p) {
                                   const double d = norm(p - c);
                                   if (d > r0 && d <= r1) {
                                       sum += v.at(i, j, k);
                                       ++n;
                                   }
                               });
        return sum / static_cast<double>(n);
    };
    double excess = 0.0;
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
        auto [vp, rp] = generate_phantom(small_spec(NoduleLabel::spiculated, seed));
        auto [vs, rs] = generate_phantom(small_spec(NoduleLabel::solid, seed));
        const double rad = 0.5 * rp.diameter_mm;
        // same seed means identical background; only the spikes differ
        const double sp = shell_mean(vp, rp.center, rad + 1.0, 2.0 * rad);
        const double ss = shell_mean(vs, rs.center, rad + 1.0, 2.0 * rad);
        CHECK(sp > ss);
        excess += sp - ss;
    }
    CHECK(excess / 3.0 > 5.0);
}

TEST_CASE("phantom radius limits") {
    auto spec = small_spec(NoduleLabel::solid, 1);
    spec.nodule_radius_mm = 1.0;
    CHECK_THROWS_AS(generate_phantom(spec), VolumeError);
    spec.nodule_radius_mm = 19.0; // volume half-extent is ~15 mm
    CHECK_THROWS_AS(generate_phantom(spec), VolumeError);
}

TEST_CASE("phantom volumes survive the int16 file round trip bit-exactly") {
    auto dir = std::filesystem::temp_directory_path() / "triplanar_phantom_tests";
    std::filesystem::create_directories(dir);
    auto [v, r] = generate_phantom(small_spec(NoduleLabel::calcified, 21));
    const auto path = (dir / "p.mha").string();
    save_volume(v, path);
    Volume loaded = load_volume(path);
    CHECK(loaded.values() == v.values());
}
