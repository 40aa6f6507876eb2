#pragma once
// 3D CT volumes: addressing, trilinear sampling and file I/O.
//
// File format: MetaImage-style text header (NDims, DimSize, ElementSpacing,
// Offset, ElementType MET_SHORT, ElementDataFile) with a little-endian
// signed 16-bit HU payload, either appended to the header (LOCAL) or in a
// sidecar .raw file.

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "triplanar/geometry.hpp"

namespace triplanar {

// Out-of-grid padding. Equals the lower edge of the intensity window, so
// padded pixels normalize to 0.
inline constexpr double kPaddingHu = -1200.0;

struct VolumeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Volume {
public:
    Volume() = default;
    Volume(std::array<int, 3> dims, std::array<double, 3> spacing, std::array<double, 3> origin)
        : dims_(dims), spacing_(spacing), origin_(origin),
          values_(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0.0f) {
        validate();
    }

    const std::array<int, 3>& dims() const { return dims_; }
    const std::array<double, 3>& spacing() const { return spacing_; }
    const std::array<double, 3>& origin() const { return origin_; }
    std::size_t size() const { return values_.size(); }

    // x fastest, z slowest
    float& at(int i, int j, int k) { return values_[index(i, j, k)]; }
    float at(int i, int j, int k) const { return values_[index(i, j, k)]; }
    const std::vector<float>& values() const { return values_; }
    std::vector<float>& values() { return values_; }

    WorldPoint world_center() const {
        return {origin_[0] + 0.5 * (dims_[0] - 1) * spacing_[0],
                origin_[1] + 0.5 * (dims_[1] - 1) * spacing_[1],
                origin_[2] + 0.5 * (dims_[2] - 1) * spacing_[2]};
    }

    Vec3 world_to_voxel(const WorldPoint& p) const {
        return {(p.x - origin_[0]) / spacing_[0], (p.y - origin_[1]) / spacing_[1],
                (p.z - origin_[2]) / spacing_[2]};
    }

    WorldPoint voxel_to_world(const Vec3& v) const {
        return {origin_[0] + v.x * spacing_[0], origin_[1] + v.y * spacing_[1],
                origin_[2] + v.z * spacing_[2]};
    }

    // Trilinear interpolation over the 8 surrounding voxels. Voxels outside
    // the grid contribute the padding value, so a point far outside returns
    // exactly kPaddingHu.
    double sample_trilinear(const WorldPoint& p) const {
        const Vec3 g = world_to_voxel(p);
        const double fx = std::floor(g.x), fy = std::floor(g.y), fz = std::floor(g.z);
        const int i0 = static_cast<int>(fx), j0 = static_cast<int>(fy), k0 = static_cast<int>(fz);
        const double tx = g.x - fx, ty = g.y - fy, tz = g.z - fz;

        auto fetch = [&](int i, int j, int k) -> double {
            if (i < 0 || j < 0 || k < 0 || i >= dims_[0] || j >= dims_[1] || k >= dims_[2])
                return kPaddingHu;
            return values_[index(i, j, k)];
        };

        const double c00 = fetch(i0, j0, k0) * (1 - tx) + fetch(i0 + 1, j0, k0) * tx;
        const double c10 = fetch(i0, j0 + 1, k0) * (1 - tx) + fetch(i0 + 1, j0 + 1, k0) * tx;
        const double c01 = fetch(i0, j0, k0 + 1) * (1 - tx) + fetch(i0 + 1, j0, k0 + 1) * tx;
        const double c11 = fetch(i0, j0 + 1, k0 + 1) * (1 - tx) + fetch(i0 + 1, j0 + 1, k0 + 1) * tx;
        const double c0 = c00 * (1 - ty) + c10 * ty;
        const double c1 = c01 * (1 - ty) + c11 * ty;
        return c0 * (1 - tz) + c1 * tz;
    }

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (dims_[static_cast<std::size_t>(a)] < 2)
                throw VolumeError("volume dims must be >= 2 on every axis");
            const double s = spacing_[static_cast<std::size_t>(a)];
            if (!(s > 0.0) || !std::isfinite(s))
                throw VolumeError("volume spacing must be positive and finite");
        }
        if (values_.size() != static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2])
            throw VolumeError("volume element count does not match dims");
    }

private:
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(k) * dims_[1] * dims_[0] +
               static_cast<std::size_t>(j) * dims_[0] + static_cast<std::size_t>(i);
    }

    std::array<int, 3> dims_{2, 2, 2};
    std::array<double, 3> spacing_{1.0, 1.0, 1.0};
    std::array<double, 3> origin_{0.0, 0.0, 0.0};
    std::vector<float> values_;
};

enum class NoduleLabel : std::uint8_t {
    solid = 0,
    calcified = 1,
    part_solid = 2,
    non_solid = 3,
    perifissural = 4,
    spiculated = 5,
};

inline constexpr int kNumClasses = 6;

inline const char* to_string(NoduleLabel l) {
    switch (l) {
        case NoduleLabel::solid: return "solid";
        case NoduleLabel::calcified: return "calcified";
        case NoduleLabel::part_solid: return "part-solid";
        case NoduleLabel::non_solid: return "non-solid";
        case NoduleLabel::perifissural: return "perifissural";
        case NoduleLabel::spiculated: return "spiculated";
    }
    return "?";
}

inline bool parse_label(const std::string& s, NoduleLabel& out) {
    for (int k = 0; k < kNumClasses; ++k) {
        if (s == to_string(static_cast<NoduleLabel>(k))) {
            out = static_cast<NoduleLabel>(k);
            return true;
        }
    }
    // underscore spelling accepted as well
    if (s == "part_solid") { out = NoduleLabel::part_solid; return true; }
    if (s == "non_solid") { out = NoduleLabel::non_solid; return true; }
    return false;
}

struct NoduleRecord {
    std::string volume_id; // path of the volume file
    WorldPoint center;
    NoduleLabel label = NoduleLabel::solid;
    double diameter_mm = 0.0;
};

enum class VolumeFormat { metaimage, raw_sidecar };

namespace detail {

inline void write_le16(std::ostream& os, const std::vector<float>& values) {
    std::vector<std::int16_t> buf(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        double v = std::llround(values[i]);
        if (v < -32768) v = -32768;
        if (v > 32767) v = 32767;
        buf[i] = static_cast<std::int16_t>(v);
    }
    // int16 little-endian, matching the host here; header declares LE
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(std::int16_t)));
}

inline std::string header_text(const Volume& v, const std::string& data_file) {
    std::ostringstream h;
    h << "ObjectType = Image\n";
    h << "NDims = 3\n";
    h << "DimSize = " << v.dims()[0] << " " << v.dims()[1] << " " << v.dims()[2] << "\n";
    h << "ElementSpacing = " << v.spacing()[0] << " " << v.spacing()[1] << " " << v.spacing()[2]
      << "\n";
    h << "Offset = " << v.origin()[0] << " " << v.origin()[1] << " " << v.origin()[2] << "\n";
    h << "BinaryDataByteOrderMSB = False\n";
    h << "ElementType = MET_SHORT\n";
    h << "ElementDataFile = " << data_file << "\n";
    return h.str();
}

} // namespace detail

inline void save_volume(const Volume& v, const std::string& path,
                        VolumeFormat format = VolumeFormat::metaimage) {
    namespace fs = std::filesystem;
    if (format == VolumeFormat::metaimage) {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw VolumeError("cannot open for writing: " + path);
        os << detail::header_text(v, "LOCAL");
        detail::write_le16(os, v.values());
    } else {
        fs::path hp(path);
        fs::path rp = hp;
        rp.replace_extension(".raw");
        std::ofstream os(path, std::ios::binary);
        if (!os) throw VolumeError("cannot open for writing: " + path);
        os << detail::header_text(v, rp.filename().string());
        std::ofstream rs(rp, std::ios::binary);
        if (!rs) throw VolumeError("cannot open for writing: " + rp.string());
        detail::write_le16(rs, v.values());
    }
}

inline Volume load_volume(const std::string& path) {
    namespace fs = std::filesystem;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw VolumeError("volume file not found: " + path);

    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing{0, 0, 0};
    std::array<double, 3> origin{0, 0, 0};
    std::string data_file;
    bool have_dims = false, have_spacing = false, have_type = false;

    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw VolumeError("malformed header line in " + path);
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
            while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t'))
                s.pop_back();
        };
        trim(key);
        trim(val);
        if (key == "DimSize") {
            std::istringstream ss(val);
            if (!(ss >> dims[0] >> dims[1] >> dims[2]))
                throw VolumeError("malformed DimSize in " + path);
            have_dims = true;
        } else if (key == "ElementSpacing") {
            std::istringstream ss(val);
            if (!(ss >> spacing[0] >> spacing[1] >> spacing[2]))
                throw VolumeError("malformed ElementSpacing in " + path);
            have_spacing = true;
        } else if (key == "Offset") {
            std::istringstream ss(val);
            if (!(ss >> origin[0] >> origin[1] >> origin[2]))
                throw VolumeError("malformed Offset in " + path);
        } else if (key == "ElementType") {
            if (val != "MET_SHORT")
                throw VolumeError("unsupported ElementType '" + val + "' in " + path);
            have_type = true;
        } else if (key == "ElementDataFile") {
            data_file = val;
            break; // payload (or nothing) follows
        }
    }
    if (!have_dims || !have_spacing || !have_type || data_file.empty())
        throw VolumeError("incomplete header in " + path);

    Volume v(dims, spacing, origin);
    const std::size_t n = v.size();
    std::vector<std::int16_t> buf(n);
    if (data_file == "LOCAL") {
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(n * sizeof(std::int16_t)));
        if (static_cast<std::size_t>(is.gcount()) != n * sizeof(std::int16_t))
            throw VolumeError("element count mismatch with dims in " + path);
        char extra;
        if (is.read(&extra, 1))
            throw VolumeError("element count mismatch with dims in " + path);
    } else {
        fs::path rp = fs::path(path).parent_path() / data_file;
        std::ifstream rs(rp, std::ios::binary);
        if (!rs) throw VolumeError("raw payload not found: " + rp.string());
        rs.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(n * sizeof(std::int16_t)));
        if (static_cast<std::size_t>(rs.gcount()) != n * sizeof(std::int16_t))
            throw VolumeError("element count mismatch with dims in " + rp.string());
        char extra;
        if (rs.read(&extra, 1))
            throw VolumeError("element count mismatch with dims in " + rp.string());
    }
    for (std::size_t i = 0; i < n; ++i) v.values()[i] = static_cast<float>(buf[i]);
    return v;
}

} // namespace triplanar
