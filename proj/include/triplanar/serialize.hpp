#pragma once
// Tensor-directory container used by model checkpoints ("TPLN") and the
// serialized baselines ("TPSV", "TPKM"). Little-endian throughout:
//   magic[4], version u32, meta block (u64 count + key/value doubles and
//   strings), tensor directory (name, shape, payload offset), then one
//   f32 payload blob.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "triplanar/tensor.hpp"

namespace triplanar {

struct SerializeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TensorFile {
    std::string magic; // 4 chars
    std::uint32_t version = 1;
    std::map<std::string, double> meta_numbers;
    std::map<std::string, std::string> meta_strings;
    // insertion-ordered tensor list
    std::vector<std::pair<std::string, Tensor<float>>> tensors;

    Tensor<float>* find(const std::string& name) {
        for (auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
    const Tensor<float>* find(const std::string& name) const {
        for (auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
    Tensor<float>& require(const std::string& name) {
        if (auto* t = find(name)) return *t;
        throw SerializeError("missing tensor '" + name + "'");
    }
};

namespace detail {

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void get(std::istream& is, T& v, const char* what) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (is.gcount() != static_cast<std::streamsize>(sizeof(T)))
        throw SerializeError(std::string("truncated file while reading ") + what);
}

inline void put_string(std::ostream& os, const std::string& s) {
    put(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, const char* what) {
    std::uint32_t n = 0;
    get(is, n, what);
    if (n > (1u << 20)) throw SerializeError(std::string("implausible string length in ") + what);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (is.gcount() != static_cast<std::streamsize>(n))
        throw SerializeError(std::string("truncated file while reading ") + what);
    return s;
}

} // namespace detail

inline void save_tensor_file(const TensorFile& tf, const std::string& path) {
    if (tf.magic.size() != 4) throw SerializeError("magic must be 4 characters");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw SerializeError("cannot open for writing: " + path);
    os.write(tf.magic.data(), 4);
    detail::put(os, tf.version);

    detail::put(os, static_cast<std::uint64_t>(tf.meta_numbers.size()));
    for (const auto& [k, v] : tf.meta_numbers) {
        detail::put_string(os, k);
        detail::put(os, v);
    }
    detail::put(os, static_cast<std::uint64_t>(tf.meta_strings.size()));
    for (const auto& [k, v] : tf.meta_strings) {
        detail::put_string(os, k);
        detail::put_string(os, v);
    }

    detail::put(os, static_cast<std::uint64_t>(tf.tensors.size()));
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tf.tensors) {
        detail::put_string(os, name);
        detail::put(os, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) detail::put(os, static_cast<std::uint32_t>(d));
        detail::put(os, offset);
        offset += t.numel() * sizeof(float);
    }
    for (const auto& [name, t] : tf.tensors)
        os.write(reinterpret_cast<const char*>(t.ptr()),
                 static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!os) throw SerializeError("write failed: " + path);
}

inline TensorFile load_tensor_file(const std::string& path, const std::string& expected_magic) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw SerializeError("file not found: " + path);

    TensorFile tf;
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4) throw SerializeError("truncated file while reading magic in " + path);
    tf.magic.assign(magic, 4);
    if (!expected_magic.empty() && tf.magic != expected_magic)
        throw SerializeError("bad magic in " + path + ": expected " + expected_magic + ", got '" +
                             tf.magic + "'");
    detail::get(is, tf.version, "version");
    if (tf.version != 1) throw SerializeError("unsupported version in " + path);

    std::uint64_t n_num = 0;
    detail::get(is, n_num, "meta count");
    for (std::uint64_t i = 0; i < n_num; ++i) {
        std::string k = detail::get_string(is, "meta key");
        double v = 0;
        detail::get(is, v, "meta value");
        tf.meta_numbers[k] = v;
    }
    std::uint64_t n_str = 0;
    detail::get(is, n_str, "meta string count");
    for (std::uint64_t i = 0; i < n_str; ++i) {
        std::string k = detail::get_string(is, "meta key");
        tf.meta_strings[k] = detail::get_string(is, "meta value");
    }

    std::uint64_t n_tensors = 0;
    detail::get(is, n_tensors, "tensor count");
    std::vector<std::uint64_t> offsets;
    for (std::uint64_t i = 0; i < n_tensors; ++i) {
        std::string name = detail::get_string(is, "tensor name");
        std::uint32_t ndim = 0;
        detail::get(is, ndim, "tensor rank");
        if (ndim == 0 || ndim > 8) throw SerializeError("implausible tensor rank in " + path);
        std::vector<int> shape(ndim);
        for (auto& d : shape) {
            std::uint32_t u = 0;
            detail::get(is, u, "tensor dim");
            d = static_cast<int>(u);
        }
        std::uint64_t off = 0;
        detail::get(is, off, "tensor offset");
        offsets.push_back(off);
        tf.tensors.emplace_back(std::move(name), Tensor<float>(shape));
    }
    for (std::uint64_t i = 0; i < n_tensors; ++i) {
        auto& t = tf.tensors[i].second;
        is.read(reinterpret_cast<char*>(t.ptr()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
        if (is.gcount() != static_cast<std::streamsize>(t.numel() * sizeof(float)))
            throw SerializeError("truncated payload in " + path);
    }
    return tf;
}

} // namespace triplanar
