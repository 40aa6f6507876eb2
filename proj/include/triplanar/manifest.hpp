#pragma once
// Dataset manifests: one nodule per line,
//   volume_path,x_mm,y_mm,z_mm,label,diameter_mm[,split]
// '#' starts a comment. Records with diameter < 4 mm are dropped (and
// counted); a bad label or malformed field is an error naming the line.

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "triplanar/volume.hpp"

namespace triplanar {

struct ManifestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Split : std::uint8_t { train = 0, validation = 1, test = 2 };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

inline bool parse_split(const std::string& s, Split& out) {
    if (s == "train") { out = Split::train; return true; }
    if (s == "validation" || s == "val") { out = Split::validation; return true; }
    if (s == "test") { out = Split::test; return true; }
    return false;
}

struct DatasetManifest {
    std::vector<NoduleRecord> records;
    std::vector<Split> splits;          // parallel to records
    std::size_t dropped_small = 0;      // diameter < 4 mm filter count

    std::vector<std::size_t> indices_of(Split s) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < records.size(); ++i)
            if (splits[i] == s) idx.push_back(i);
        return idx;
    }

    std::map<NoduleLabel, std::size_t> class_counts(Split s) const {
        std::map<NoduleLabel, std::size_t> counts;
        for (std::size_t i = 0; i < records.size(); ++i)
            if (splits[i] == s) counts[records[i].label]++;
        return counts;
    }
};

inline constexpr double kMinDiameterMm = 4.0;

inline DatasetManifest parse_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ManifestError("manifest not found: " + path);

    DatasetManifest m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;

        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 6 && fields.size() != 7)
            throw ManifestError("manifest line " + std::to_string(line_no) +
                                ": expected 6 or 7 fields, got " + std::to_string(fields.size()));

        NoduleRecord rec;
        rec.volume_id = fields[0];
        try {
            rec.center = {std::stod(fields[1]), std::stod(fields[2]), std::stod(fields[3])};
            rec.diameter_mm = std::stod(fields[5]);
        } catch (const std::exception&) {
            throw ManifestError("manifest line " + std::to_string(line_no) + ": malformed number");
        }
        if (!parse_label(fields[4], rec.label))
            throw ManifestError("manifest line " + std::to_string(line_no) + ": unknown label '" +
                                fields[4] + "'");
        Split split = Split::train;
        if (fields.size() == 7 && !parse_split(fields[6], split))
            throw ManifestError("manifest line " + std::to_string(line_no) + ": unknown split '" +
                                fields[6] + "'");
        if (rec.diameter_mm < kMinDiameterMm) {
            ++m.dropped_small;
            continue;
        }
        m.records.push_back(std::move(rec));
        m.splits.push_back(split);
    }
    return m;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ManifestError("cannot open for writing: " + path);
    os << "# volume_path,x_mm,y_mm,z_mm,label,diameter_mm,split\n";
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto& r = m.records[i];
        os << r.volume_id << ',' << r.center.x << ',' << r.center.y << ',' << r.center.z << ','
           << to_string(r.label) << ',' << r.diameter_mm << ',' << to_string(m.splits[i]) << '\n';
    }
}

} // namespace triplanar
