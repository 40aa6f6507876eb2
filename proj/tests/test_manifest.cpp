#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>

#include "triplanar/manifest.hpp"

using namespace triplanar;

namespace {
std::filesystem::path tmp_dir() {
    auto p = std::filesystem::temp_directory_path() / "triplanar_manifest_tests";
    std::filesystem::create_directories(p);
    return p;
}

std::string write_file(const std::string& name, const std::string& content) {
    auto path = (tmp_dir() / name).string();
    std::ofstream os(path);
    os << content;
    return path;
}
} // namespace

TEST_CASE("manifest parsing") {
    SECTION("six valid rows give six records") {
        auto path = write_file("ok.csv",
                               "# comment line\n"
                               "a.mha,1,2,3,solid,8.0,train\n"
                               "b.mha,1,2,3,calcified,6.5,train\n"
                               "c.mha,1,2,3,part-solid,5.0,validation\n"
                               "d.mha,1,2,3,non-solid,4.2,test\n"
                               "e.mha,1,2,3,perifissural,9.0,test\n"
                               "f.mha,1,2,3,spiculated,12.0,train\n");
        auto m = parse_manifest(path);
        REQUIRE(m.records.size() == 6);
        CHECK(m.dropped_small == 0);
        CHECK(m.records[0].label == NoduleLabel::solid);
        CHECK(m.records[2].center.z == Approx(3.0));
        CHECK(m.splits[2] == Split::validation);
        CHECK(m.indices_of(Split::test).size() == 2);
        CHECK(m.class_counts(Split::train).at(NoduleLabel::spiculated) == 1);
    }
    SECTION("sub-4mm rows are dropped and counted") {
        auto path = write_file("small.csv",
                               "a.mha,0,0,0,solid,3.2,train\n"
                               "b.mha,0,0,0,solid,4.0,train\n"
                               "c.mha,0,0,0,solid,3.9999,train\n");
        auto m = parse_manifest(path);
        CHECK(m.records.size() == 1);
        CHECK(m.dropped_small == 2);
    }
    SECTION("bad label names the line") {
        auto path = write_file("badlabel.csv",
                               "a.mha,0,0,0,solid,5,train\n"
                               "b.mha,0,0,0,granuloma,5,train\n");
        CHECK_THROWS_WITH(parse_manifest(path), Catch::Contains("line 2"));
    }
    SECTION("malformed number names the line") {
        auto path = write_file("badnum.csv", "a.mha,zero,0,0,solid,5,train\n");
        CHECK_THROWS_WITH(parse_manifest(path), Catch::Contains("line 1"));
    }
    SECTION("wrong field count names the line") {
        auto path = write_file("badfields.csv", "a.mha,0,0,solid,5\n");
        CHECK_THROWS_WITH(parse_manifest(path), Catch::Contains("line 1"));
    }
    SECTION("unknown split names the line") {
        auto path = write_file("badsplit.csv", "a.mha,0,0,0,solid,5,holdout\n");
        CHECK_THROWS_WITH(parse_manifest(path), Catch::Contains("line 1"));
    }
    SECTION("missing file") {
        CHECK_THROWS_WITH(parse_manifest((tmp_dir() / "absent.csv").string()),
                          Catch::Contains("not found"));
    }
}

TEST_CASE("manifest save/parse round trip") {
    DatasetManifest m;
    NoduleRecord r;
    r.volume_id = "vols/x.mha";
    r.center = {1.5, -2.25, 3.75};
    r.label = NoduleLabel::non_solid;
    r.diameter_mm = 7.5;
    m.records.push_back(r);
    m.splits.push_back(Split::validation);

    auto path = (tmp_dir() / "rt.csv").string();
    save_manifest(m, path);
    auto back = parse_manifest(path);
    REQUIRE(back.records.size() == 1);
    CHECK(back.records[0].volume_id == "vols/x.mha");
    CHECK(back.records[0].center.y == Approx(-2.25));
    CHECK(back.records[0].label == NoduleLabel::non_solid);
    CHECK(back.splits[0] == Split::validation);
}
