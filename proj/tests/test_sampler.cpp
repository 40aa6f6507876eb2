#include <catch2/catch.hpp>

#include <cmath>

#include "triplanar/rng.hpp"
#include "triplanar/sampler.hpp"

using namespace triplanar;

namespace {

Volume constant_volume(double hu) {
    Volume v({32, 32, 32}, {1, 1, 1}, {0, 0, 0});
    for (auto& x : v.values()) x = static_cast<float>(hu);
    return v;
}

// Smooth spherically symmetric field spanning the intensity window.
Volume radial_volume() {
    Volume v({96, 96, 96}, {0.7, 0.7, 0.7}, {0, 0, 0});
    const Vec3 c = v.world_center();
    for (int k = 0; k < 96; ++k)
        for (int j = 0; j < 96; ++j)
            for (int i = 0; i < 96; ++i) {
                const auto p = v.voxel_to_world({double(i), double(j), double(k)});
                const double r = norm(p - c);
                v.at(i, j, k) = static_cast<float>(-1200.0 + 1600.0 * std::exp(-r * r / 200.0));
            }
    return v;
}

NoduleRecord record_at(const Vec3& c) {
    NoduleRecord r;
    r.volume_id = "mem";
    r.center = c;
    r.label = NoduleLabel::solid;
    r.diameter_mm = 8.0;
    return r;
}

} // namespace

TEST_CASE("normalize_intensity window") {
    CHECK(normalize_intensity(-1200.0) == 0.0);
    CHECK(normalize_intensity(400.0) == 1.0);
    CHECK(normalize_intensity(-400.0) == Approx(0.5));
    CHECK(normalize_intensity(2000.0) == 1.0);  // dense calcification clamps
    CHECK(normalize_intensity(-3000.0) == 0.0); // below air clamps
    SECTION("monotone nondecreasing") {
        Rng rng(5);
        for (int i = 0; i < 500; ++i) {
            const double a = rng.uniform(-2500, 2500), b = a + rng.uniform(0, 500);
            CHECK(normalize_intensity(a) <= normalize_intensity(b));
        }
    }
}

TEST_CASE("intermediate grid sizing") {
    Volume v({32, 32, 32}, {0.67, 0.67, 1.0}, {0, 0, 0});
    CHECK(intermediate_grid_points(v, 40.0) == 60); // ~60x60 then resized to 64x64
    CHECK(intermediate_grid_points(v, 20.0) == 30);
    CHECK(intermediate_grid_points(v, 10.0) == 15);
}

TEST_CASE("extract_patch on a constant volume is constant") {
    Volume v = constant_volume(-400.0);
    const auto t = triplet_planes(v.world_center(), 0.37);
    for (const auto& frame : t.frames) {
        Patch p = extract_patch(v, frame, v.world_center(), 10.0);
        for (float px : p.pixels) CHECK(px == Approx(0.5).margin(1e-6));
    }
}

TEST_CASE("patch near the border contains padding zeros") {
    Volume v = constant_volume(400.0); // normalizes to 1
    const auto t = triplet_planes({1.0, 1.0, 16.0}, 0.0);
    Patch p = extract_patch(v, t.frames[0], {1.0, 1.0, 16.0}, 40.0);
    int zeros = 0, ones = 0;
    for (float px : p.pixels) {
        if (px < 0.05f) ++zeros;
        if (px > 0.95f) ++ones;
    }
    CHECK(zeros > 100); // out-of-volume area fills toward 0
    CHECK(ones > 100);  // in-volume area stays bright
}

TEST_CASE("patch pixels always lie in [0,1]") {
    Volume v({24, 24, 24}, {0.8, 0.8, 1.2}, {0, 0, 0});
    Rng rng(17);
    for (auto& x : v.values()) x = static_cast<float>(rng.uniform(-2000, 3000));
    const auto t = triplet_planes(v.world_center(), 0.9);
    for (double d : {10.0, 20.0, 40.0}) {
        Patch p = extract_patch(v, t.frames[1], v.world_center(), d);
        for (float px : p.pixels) {
            CHECK(px >= 0.0f);
            CHECK(px <= 1.0f);
        }
    }
}

TEST_CASE("extract_sample shapes and determinism") {
    Volume v = constant_volume(0.0);
    const auto rec = record_at(v.world_center());
    SECTION("default scales give 9 patches, 3 per scale") {
        auto s = extract_sample(v, rec, 0.2);
        REQUIRE(s.patches.size() == 9);
        CHECK(s.patch(0, 0).scale_mm == 10.0);
        CHECK(s.patch(1, 2).scale_mm == 20.0);
        CHECK(s.patch(2, 1).scale_mm == 40.0);
        CHECK(s.patch(2, 1).view_index == 1);
    }
    SECTION("single-scale ablation gives 3 patches") {
        auto s = extract_sample(v, rec, 0.2, {40.0});
        REQUIRE(s.patches.size() == 3);
    }
    SECTION("equal arguments, identical pixels") {
        auto a = extract_sample(v, rec, 0.7);
        auto b = extract_sample(v, rec, 0.7);
        for (std::size_t i = 0; i < a.patches.size(); ++i)
            CHECK(a.patches[i].pixels == b.patches[i].pixels);
    }
    SECTION("empty or nonpositive scales rejected") {
        CHECK_THROWS_AS(extract_sample(v, rec, 0.0, {}), std::invalid_argument);
        CHECK_THROWS_AS(extract_sample(v, rec, 0.0, {-5.0}), std::invalid_argument);
    }
}

TEST_CASE("rotating a spherically symmetric volume barely changes patches") {
    Volume v = radial_volume();
    const auto rec = record_at(v.world_center());
    const auto base = extract_sample(v, rec, 0.0);
    for (double theta : {0.3, 0.8, 1.3}) {
        const auto rot = extract_sample(v, rec, theta);
        double sum_abs = 0.0;
        std::size_t n = 0;
        for (std::size_t p = 0; p < base.patches.size(); ++p)
            for (std::size_t i = 0; i < base.patches[p].pixels.size(); ++i) {
                sum_abs += std::abs(base.patches[p].pixels[i] - rot.patches[p].pixels[i]);
                ++n;
            }
        CHECK(sum_abs / static_cast<double>(n) <= 0.02);
    }
}

TEST_CASE("augment_sample emits exactly 16 coherent views") {
    Volume v = radial_volume();
    const auto rec = record_at(v.world_center());
    auto views = augment_sample(v, rec, 0.1, 77);
    REQUIRE(views.size() == 16);

    SECTION("tags enumerate 4 shifts x 4 flips") {
        int seen[4][4] = {};
        for (const auto& s : views) seen[s.tag.shift_index][s.tag.flip_index]++;
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) CHECK(seen[a][b] == 1);
    }
    SECTION("every shift stays within the 1 mm sphere") {
        for (const auto& s : views) CHECK(norm(s.shift_mm) <= 1.0);
    }
    SECTION("identity view equals plain extraction") {
        const auto plain = extract_sample(v, rec, 0.1);
        const auto& ident = views[0];
        REQUIRE(ident.tag.shift_index == 0);
        REQUIRE(ident.tag.flip_index == 0);
        for (std::size_t i = 0; i < plain.patches.size(); ++i)
            CHECK(ident.patches[i].pixels == plain.patches[i].pixels);
    }
    SECTION("flips are coherent: double flip restores the patch") {
        const auto& both = views[3]; // shift 0, flip both
        for (std::size_t p = 0; p < both.patches.size(); ++p) {
            const auto& a = views[0].patches[p];
            const auto& b = both.patches[p];
            for (int r = 0; r < kPatchSide; ++r)
                for (int c = 0; c < kPatchSide; ++c)
                    CHECK(b.at(r, c) == a.at(kPatchSide - 1 - r, kPatchSide - 1 - c));
        }
    }
    SECTION("fixed seed reproduces bit-exactly") {
        auto again = augment_sample(v, rec, 0.1, 77);
        for (std::size_t i = 0; i < views.size(); ++i)
            CHECK(views[i].patches[4].pixels == again[i].patches[4].pixels);
        auto other = augment_sample(v, rec, 0.1, 78);
        CHECK(views[4].patches[0].pixels != other[4].patches[0].pixels);
    }
}
