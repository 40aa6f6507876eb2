#include <catch2/catch.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "triplanar/rng.hpp"
#include "triplanar/volume.hpp"

using namespace triplanar;

namespace {
std::filesystem::path tmp_dir() {
    auto p = std::filesystem::temp_directory_path() / "triplanar_volume_tests";
    std::filesystem::create_directories(p);
    return p;
}
} // namespace

TEST_CASE("world/voxel coordinate mapping") {
    Volume v({4, 4, 4}, {0.5, 0.5, 1.0}, {0.0, 0.0, 0.0});
    SECTION("origin maps to voxel (0,0,0)") {
        auto g = v.world_to_voxel({0, 0, 0});
        CHECK(g.x == 0.0);
        CHECK(g.y == 0.0);
        CHECK(g.z == 0.0);
    }
    SECTION("spacing arithmetic") {
        auto g = v.world_to_voxel({1.0, 1.0, 2.0});
        CHECK(g.x == Approx(2.0));
        CHECK(g.y == Approx(2.0));
        CHECK(g.z == Approx(2.0));
    }
    SECTION("round trip to 1e-9") {
        Rng rng(7);
        for (int i = 0; i < 100; ++i) {
            WorldPoint p{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)};
            auto q = v.voxel_to_world(v.world_to_voxel(p));
            CHECK(std::abs(q.x - p.x) < 1e-9);
            CHECK(std::abs(q.y - p.y) < 1e-9);
            CHECK(std::abs(q.z - p.z) < 1e-9);
        }
    }
}

TEST_CASE("trilinear sampling") {
    Volume v({8, 8, 8}, {1, 1, 1}, {0, 0, 0});
    SECTION("exact at voxel centers") {
        v.at(3, 4, 5) = 123.0f;
        CHECK(v.sample_trilinear({3, 4, 5}) == Approx(123.0));
    }
    SECTION("midpoint of two voxels") {
        for (auto& x : v.values()) x = 0.0f;
        // column i=4 all 100, i=3 all 0: midpoint x=3.5 blends to 50
        for (int k = 0; k < 8; ++k)
            for (int j = 0; j < 8; ++j) v.at(4, j, k) = 100.0f;
        CHECK(v.sample_trilinear({3.5, 4, 4}) == Approx(50.0));
    }
    SECTION("far outside returns padding") {
        CHECK(v.sample_trilinear({1000, 0, 0}) == Approx(kPaddingHu));
        CHECK(v.sample_trilinear({-50, -50, -50}) == Approx(kPaddingHu));
    }
    SECTION("exact on affine fields at 1000 interior points") {
        const double a = 3.0, b = -2.0, c = 0.5, d = 40.0;
        Volume w({16, 16, 16}, {0.7, 0.7, 1.1}, {-3.0, 2.0, 1.0});
        for (int k = 0; k < 16; ++k)
            for (int j = 0; j < 16; ++j)
                for (int i = 0; i < 16; ++i) {
                    auto p = w.voxel_to_world({double(i), double(j), double(k)});
                    w.at(i, j, k) = static_cast<float>(a * p.x + b * p.y + c * p.z + d);
                }
        Rng rng(3);
        double worst = 0.0;
        for (int n = 0; n < 1000; ++n) {
            // interior: stay a voxel away from the border
            auto p = w.voxel_to_world({rng.uniform(1.0, 14.0), rng.uniform(1.0, 14.0),
                                       rng.uniform(1.0, 14.0)});
            const double expect = a * p.x + b * p.y + c * p.z + d;
            worst = std::max(worst, std::abs(w.sample_trilinear(p) - expect));
        }
        CHECK(worst <= 1e-3); // float storage; 1e-6 relative to the ~100 HU field values
        CHECK(worst / 100.0 <= 1e-5);
    }
}

TEST_CASE("volume invariants") {
    CHECK_THROWS_AS(Volume({1, 4, 4}, {1, 1, 1}, {0, 0, 0}), VolumeError);
    CHECK_THROWS_AS(Volume({4, 4, 4}, {0.0, 1, 1}, {0, 0, 0}), VolumeError);
    CHECK_THROWS_AS(Volume({4, 4, 4}, {-1.0, 1, 1}, {0, 0, 0}), VolumeError);
}

TEST_CASE("volume file round trip") {
    auto dir = tmp_dir();
    Volume v({6, 5, 4}, {0.67, 0.67, 1.0}, {1.0, -2.0, 3.0});
    Rng rng(11);
    for (auto& x : v.values()) x = static_cast<float>(static_cast<int>(rng.uniform(-1200, 3000)));

    SECTION("metaimage (LOCAL payload)") {
        const auto path = (dir / "rt.mha").string();
        save_volume(v, path, VolumeFormat::metaimage);
        Volume r = load_volume(path);
        REQUIRE(r.dims() == v.dims());
        CHECK(r.spacing()[0] == Approx(0.67));
        CHECK(r.spacing()[2] == Approx(1.0));
        CHECK(r.origin()[1] == Approx(-2.0));
        CHECK(r.values() == v.values());
    }
    SECTION("raw + sidecar header") {
        const auto path = (dir / "rt.mhd").string();
        save_volume(v, path, VolumeFormat::raw_sidecar);
        Volume r = load_volume(path);
        REQUIRE(r.dims() == v.dims());
        CHECK(r.values() == v.values());
    }
}

TEST_CASE("volume load errors are distinct") {
    auto dir = tmp_dir();
    SECTION("missing file") {
        CHECK_THROWS_WITH(load_volume((dir / "nope.mha").string()),
                          Catch::Contains("not found"));
    }
    SECTION("element count mismatch") {
        const auto path = (dir / "short.mha").string();
        {
            std::ofstream os(path, std::ios::binary);
            os << "NDims = 3\nDimSize = 10 10 10\nElementSpacing = 1 1 1\nOffset = 0 0 0\n"
               << "ElementType = MET_SHORT\nElementDataFile = LOCAL\n";
            std::vector<std::int16_t> too_few(999, 0);
            os.write(reinterpret_cast<const char*>(too_few.data()), 999 * 2);
        }
        CHECK_THROWS_WITH(load_volume(path), Catch::Contains("element count mismatch"));
    }
    SECTION("malformed header") {
        const auto path = (dir / "bad.mha").string();
        {
            std::ofstream os(path, std::ios::binary);
            os << "DimSize = banana\n";
        }
        CHECK_THROWS_WITH(load_volume(path), Catch::Contains("malformed"));
    }
    SECTION("incomplete header") {
        const auto path = (dir / "inc.mha").string();
        {
            std::ofstream os(path, std::ios::binary);
            os << "NDims = 3\nDimSize = 2 2 2\nElementDataFile = LOCAL\n";
        }
        CHECK_THROWS_WITH(load_volume(path), Catch::Contains("incomplete"));
    }
}

TEST_CASE("label parsing") {
    NoduleLabel l;
    CHECK(parse_label("solid", l));
    CHECK(l == NoduleLabel::solid);
    CHECK(parse_label("part-solid", l));
    CHECK(l == NoduleLabel::part_solid);
    CHECK(parse_label("part_solid", l));
    CHECK(parse_label("perifissural", l));
    CHECK_FALSE(parse_label("granuloma", l));
}
