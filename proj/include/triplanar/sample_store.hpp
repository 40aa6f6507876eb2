#pragma once
// Binary sample store.
//
// Layout (little-endian):
//   magic "TPST", version u32, sample count u64, scale count u32,
//   scales f32[scale count], patch side u32
//   per sample: label u8, shift u8, flip u8, reserved u8, theta f32,
//               (3 * scale count) patches of side*side f32

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "triplanar/sampler.hpp"

namespace triplanar {

struct StoreError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr char kStoreMagic[4] = {'T', 'P', 'S', 'T'};
inline constexpr std::uint32_t kStoreVersion = 1;

struct SampleStore {
    std::vector<double> scales_mm;
    std::vector<MultiScaleSample> samples;

    std::size_t size() const { return samples.size(); }
};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v, const char* what) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (is.gcount() != static_cast<std::streamsize>(sizeof(T)))
        throw StoreError(std::string("sample store truncated while reading ") + what);
}

} // namespace detail

inline void save_store(const SampleStore& store, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw StoreError("cannot open for writing: " + path);
    os.write(kStoreMagic, 4);
    detail::write_pod(os, kStoreVersion);
    detail::write_pod(os, static_cast<std::uint64_t>(store.samples.size()));
    detail::write_pod(os, static_cast<std::uint32_t>(store.scales_mm.size()));
    for (double s : store.scales_mm) detail::write_pod(os, static_cast<float>(s));
    detail::write_pod(os, static_cast<std::uint32_t>(kPatchSide));
    for (const auto& sample : store.samples) {
        detail::write_pod(os, static_cast<std::uint8_t>(sample.label));
        detail::write_pod(os, sample.tag.shift_index);
        detail::write_pod(os, sample.tag.flip_index);
        detail::write_pod(os, static_cast<std::uint8_t>(0));
        detail::write_pod(os, static_cast<float>(sample.theta));
        for (const auto& p : sample.patches)
            os.write(reinterpret_cast<const char*>(p.pixels.data()),
                     static_cast<std::streamsize>(p.pixels.size() * sizeof(float)));
    }
    if (!os) throw StoreError("write failed: " + path);
}

inline SampleStore load_store(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw StoreError("sample store not found: " + path);

    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kStoreMagic, 4) != 0)
        throw StoreError("bad sample store magic in " + path);
    std::uint32_t version = 0;
    detail::read_pod(is, version, "version");
    if (version != kStoreVersion)
        throw StoreError("unsupported sample store version in " + path);

    std::uint64_t count = 0;
    std::uint32_t scale_count = 0, side = 0;
    detail::read_pod(is, count, "sample count");
    detail::read_pod(is, scale_count, "scale count");
    SampleStore store;
    for (std::uint32_t i = 0; i < scale_count; ++i) {
        float s = 0;
        detail::read_pod(is, s, "scales");
        store.scales_mm.push_back(s);
    }
    detail::read_pod(is, side, "patch side");
    if (side != kPatchSide) throw StoreError("unexpected patch side in " + path);

    const std::size_t patches_per_sample = static_cast<std::size_t>(scale_count) * 3;
    store.samples.resize(count);
    for (auto& sample : store.samples) {
        std::uint8_t label = 0, shift = 0, flip = 0, reserved = 0;
        float theta = 0;
        detail::read_pod(is, label, "label");
        detail::read_pod(is, shift, "shift index");
        detail::read_pod(is, flip, "flip index");
        detail::read_pod(is, reserved, "reserved byte");
        detail::read_pod(is, theta, "theta");
        if (label >= kNumClasses) throw StoreError("invalid label byte in " + path);
        sample.label = static_cast<NoduleLabel>(label);
        sample.tag = {shift, flip};
        sample.theta = theta;
        sample.scales_mm = store.scales_mm;
        sample.patches.resize(patches_per_sample);
        for (std::size_t pi = 0; pi < patches_per_sample; ++pi) {
            auto& p = sample.patches[pi];
            p.scale_mm = store.scales_mm[pi / 3];
            p.view_index = static_cast<int>(pi % 3);
            is.read(reinterpret_cast<char*>(p.pixels.data()),
                    static_cast<std::streamsize>(p.pixels.size() * sizeof(float)));
            if (is.gcount() != static_cast<std::streamsize>(p.pixels.size() * sizeof(float)))
                throw StoreError("sample store truncated while reading pixels in " + path);
        }
    }
    return store;
}

} // namespace triplanar
