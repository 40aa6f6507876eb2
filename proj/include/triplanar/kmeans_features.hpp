#pragma once
// Single-layer unsupervised features: random 12x12 sub-windows are
// brightness/contrast normalized and ZCA-whitened, a spherical K-means
// codebook of 1600 unit centroids is learned, and a patch encodes to
// 1600 x 4 = 6400 values by triangle activation with 2x2 quadrant
// sum-pooling over the dense window grid.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "triplanar/rng.hpp"
#include "triplanar/sampler.hpp"
#include "triplanar/serialize.hpp"
#include "triplanar/tensor.hpp"

namespace triplanar {

struct KmeansError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct KmeansConfig {
    int receptive_field = 12;
    int n_centroids = 1600;
    int iterations = 10;
    double whiten_eps = 0.01;
    double contrast_eps = 1e-4;
    std::size_t codebook_windows = 100000;
    std::uint64_t seed = 1;
};

struct KmeansCodebook {
    int receptive_field = 12;
    int n_centroids = 1600;
    std::vector<float> window_mean; // rf*rf
    std::vector<float> whiten;      // (rf*rf) x (rf*rf) ZCA matrix
    std::vector<float> centroids;   // n_centroids x rf*rf, unit norm
    std::vector<double> objective_trace; // sum of assignment distances per iteration

    int window_dim() const { return receptive_field * receptive_field; }
};

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
// eigenvalues in `eig` and eigenvectors in the columns of `vecs`.
inline void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& eig,
                         std::vector<double>& vecs) {
    vecs.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) vecs[static_cast<std::size_t>(i) * n + i] = 1.0;
    auto At = [&](int r, int c) -> double& { return a[static_cast<std::size_t>(r) * n + c]; };
    auto Vt = [&](int r, int c) -> double& { return vecs[static_cast<std::size_t>(r) * n + c]; };

    for (int sweep = 0; sweep < 50; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += At(p, q) * At(p, q);
        if (off < 1e-22) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = At(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (At(q, q) - At(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = At(i, p), aiq = At(i, q);
                    At(i, p) = c * aip - s * aiq;
                    At(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = At(p, i), aqi = At(q, i);
                    At(p, i) = c * api - s * aqi;
                    At(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = Vt(i, p), viq = Vt(i, q);
                    Vt(i, p) = c * vip - s * viq;
                    Vt(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    eig.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = At(i, i);
}

// (w - mean(w)) / sqrt(var(w) + eps), in place
inline void contrast_normalize(std::vector<double>& w, double eps) {
    double mean = 0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(w.size());
    double var = 0;
    for (double v : w) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.size());
    const double denom = std::sqrt(var + eps);
    for (double& v : w) v = (v - mean) / denom;
}

inline std::vector<double> extract_window(const Patch& p, int row, int col, int rf) {
    std::vector<double> w(static_cast<std::size_t>(rf) * rf);
    for (int r = 0; r < rf; ++r)
        for (int c = 0; c < rf; ++c)
            w[static_cast<std::size_t>(r) * rf + c] = p.at(row + r, col + c);
    return w;
}

} // namespace detail

inline std::vector<float> whiten_window(const KmeansCodebook& cb, const std::vector<double>& w) {
    const int dim = cb.window_dim();
    std::vector<float> out(static_cast<std::size_t>(dim));
    std::vector<double> centered(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i)
        centered[static_cast<std::size_t>(i)] =
            w[static_cast<std::size_t>(i)] - cb.window_mean[static_cast<std::size_t>(i)];
    for (int r = 0; r < dim; ++r) {
        const float* row = cb.whiten.data() + static_cast<std::size_t>(r) * dim;
        double s = 0;
        #pragma omp simd reduction(+ : s)
        for (int c = 0; c < dim; ++c) s += static_cast<double>(row[c]) * centered[static_cast<std::size_t>(c)];
        out[static_cast<std::size_t>(r)] = static_cast<float>(s);
    }
    return out;
}

inline KmeansCodebook kmeans_learn_codebook(const std::vector<const Patch*>& patches,
                                            const KmeansConfig& cfg = {}) {
    const int rf = cfg.receptive_field;
    const int dim = rf * rf;
    if (patches.size() < static_cast<std::size_t>(cfg.n_centroids))
        throw KmeansError("codebook needs at least as many patches as centroids");

    Rng rng(cfg.seed);
    KmeansCodebook cb;
    cb.receptive_field = rf;
    cb.n_centroids = cfg.n_centroids;

    // 1. sample and normalize training windows
    const std::size_t n_windows = cfg.codebook_windows;
    std::vector<std::vector<double>> windows(n_windows);
    for (auto& w : windows) {
        const Patch& p = *patches[rng.uniform_index(patches.size())];
        const int row = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(kPatchSide - rf + 1)));
        const int col = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(kPatchSide - rf + 1)));
        w = detail::extract_window(p, row, col, rf);
        detail::contrast_normalize(w, cfg.contrast_eps);
    }

    // 2. ZCA whitening transform from the window covariance
    std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
    for (const auto& w : windows)
        for (int i = 0; i < dim; ++i) mean[static_cast<std::size_t>(i)] += w[static_cast<std::size_t>(i)];
    for (auto& m : mean) m /= static_cast<double>(n_windows);
    std::vector<double> cov(static_cast<std::size_t>(dim) * dim, 0.0);
    for (const auto& w : windows)
        for (int r = 0; r < dim; ++r) {
            const double cr = w[static_cast<std::size_t>(r)] - mean[static_cast<std::size_t>(r)];
            for (int c = r; c < dim; ++c)
                cov[static_cast<std::size_t>(r) * dim + c] +=
                    cr * (w[static_cast<std::size_t>(c)] - mean[static_cast<std::size_t>(c)]);
        }
    for (int r = 0; r < dim; ++r)
        for (int c = r; c < dim; ++c) {
            cov[static_cast<std::size_t>(r) * dim + c] /= static_cast<double>(n_windows);
            cov[static_cast<std::size_t>(c) * dim + r] = cov[static_cast<std::size_t>(r) * dim + c];
        }
    std::vector<double> eig, vecs;
    detail::jacobi_eigen(cov, dim, eig, vecs);
    // W = U diag((lambda + eps)^-1/2) U^T
    cb.window_mean.resize(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) cb.window_mean[static_cast<std::size_t>(i)] = static_cast<float>(mean[static_cast<std::size_t>(i)]);
    cb.whiten.assign(static_cast<std::size_t>(dim) * dim, 0.0f);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) {
            double s = 0;
            for (int k = 0; k < dim; ++k)
                s += vecs[static_cast<std::size_t>(r) * dim + k] *
                     vecs[static_cast<std::size_t>(c) * dim + k] /
                     std::sqrt(std::max(eig[static_cast<std::size_t>(k)], 0.0) + cfg.whiten_eps);
            cb.whiten[static_cast<std::size_t>(r) * dim + c] = static_cast<float>(s);
        }

    // 3. whiten the training windows once
    std::vector<float> data(n_windows * static_cast<std::size_t>(dim));
    std::vector<double> norms(n_windows, 0.0);
    for (std::size_t i = 0; i < n_windows; ++i) {
        const auto z = whiten_window(cb, windows[i]);
        double n2 = 0;
        for (int d = 0; d < dim; ++d) {
            data[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(d)] = z[static_cast<std::size_t>(d)];
            n2 += static_cast<double>(z[static_cast<std::size_t>(d)]) * z[static_cast<std::size_t>(d)];
        }
        norms[i] = n2;
    }

    // 4. spherical K-means, unit-norm centroids, max-dot assignment
    const int K = cfg.n_centroids;
    cb.centroids.assign(static_cast<std::size_t>(K) * dim, 0.0f);
    for (int k = 0; k < K; ++k) {
        double n2 = 0;
        std::vector<double> g(static_cast<std::size_t>(dim));
        for (auto& v : g) {
            v = rng.normal();
            n2 += v * v;
        }
        const double inv = 1.0 / std::sqrt(std::max(n2, 1e-30));
        for (int d = 0; d < dim; ++d)
            cb.centroids[static_cast<std::size_t>(k) * dim + d] = static_cast<float>(g[static_cast<std::size_t>(d)] * inv);
    }

    std::vector<int> assign(n_windows, 0);
    std::vector<float> dots(n_windows * static_cast<std::size_t>(K));
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        // assignment by max dot product (distance uses |x|^2 + 1 - 2 dot)
        std::fill(dots.begin(), dots.end(), 0.0f);
        gemm_nt(static_cast<int>(n_windows), K, dim, data.data(), cb.centroids.data(), dots.data());
        double objective = 0.0;
        for (std::size_t i = 0; i < n_windows; ++i) {
            const float* row = dots.data() + i * static_cast<std::size_t>(K);
            int best = 0;
            for (int k = 1; k < K; ++k)
                if (row[k] > row[best]) best = k;
            assign[i] = best;
            objective += norms[i] + 1.0 - 2.0 * static_cast<double>(row[best]);
        }
        cb.objective_trace.push_back(objective);

        // mean update, renormalized to the sphere; empty clusters reseed
        std::vector<double> sums(static_cast<std::size_t>(K) * dim, 0.0);
        std::vector<std::size_t> counts(static_cast<std::size_t>(K), 0);
        for (std::size_t i = 0; i < n_windows; ++i) {
            const std::size_t k = static_cast<std::size_t>(assign[i]);
            const float* row = data.data() + i * static_cast<std::size_t>(dim);
            double* srow = sums.data() + k * static_cast<std::size_t>(dim);
            for (int d = 0; d < dim; ++d) srow[d] += row[d];
            ++counts[k];
        }
        for (int k = 0; k < K; ++k) {
            double n2 = 0;
            const double* srow = sums.data() + static_cast<std::size_t>(k) * dim;
            if (counts[static_cast<std::size_t>(k)] == 0) {
                const std::size_t pick = rng.uniform_index(n_windows);
                const float* row = data.data() + pick * static_cast<std::size_t>(dim);
                for (int d = 0; d < dim; ++d) n2 += static_cast<double>(row[d]) * row[d];
                const double inv = 1.0 / std::sqrt(std::max(n2, 1e-30));
                for (int d = 0; d < dim; ++d)
                    cb.centroids[static_cast<std::size_t>(k) * dim + d] = static_cast<float>(row[d] * inv);
                continue;
            }
            for (int d = 0; d < dim; ++d) n2 += srow[d] * srow[d];
            const double inv = 1.0 / std::sqrt(std::max(n2, 1e-30));
            for (int d = 0; d < dim; ++d)
                cb.centroids[static_cast<std::size_t>(k) * dim + d] = static_cast<float>(srow[d] * inv);
        }
    }
    return cb;
}

// Dense stride-1 windows -> whiten -> triangle activation max(0, mu - z_k)
// -> sum-pool over the 2x2 spatial quadrants -> n_centroids * 4 features.
inline std::vector<float> kmeans_encode(const KmeansCodebook& cb, const Patch& patch,
                                        double contrast_eps = 1e-4) {
    const int rf = cb.receptive_field;
    const int dim = cb.window_dim();
    const int grid = kPatchSide - rf + 1; // 53 for rf = 12
    const int K = cb.n_centroids;
    const int half = (grid + 1) / 2;

    std::vector<float> data(static_cast<std::size_t>(grid) * grid * static_cast<std::size_t>(dim));
    std::vector<double> norms(static_cast<std::size_t>(grid) * grid);
    std::size_t wi = 0;
    for (int row = 0; row < grid; ++row) {
        for (int col = 0; col < grid; ++col, ++wi) {
            auto w = detail::extract_window(patch, row, col, rf);
            detail::contrast_normalize(w, contrast_eps);
            const auto z = whiten_window(cb, w);
            double n2 = 0;
            for (int d = 0; d < dim; ++d) {
                data[wi * static_cast<std::size_t>(dim) + static_cast<std::size_t>(d)] = z[static_cast<std::size_t>(d)];
                n2 += static_cast<double>(z[static_cast<std::size_t>(d)]) * z[static_cast<std::size_t>(d)];
            }
            norms[wi] = n2;
        }
    }

    const int n_windows = grid * grid;
    std::vector<float> dots(static_cast<std::size_t>(n_windows) * static_cast<std::size_t>(K), 0.0f);
    gemm_nt(n_windows, K, dim, data.data(), cb.centroids.data(), dots.data());

    std::vector<float> features(static_cast<std::size_t>(K) * 4, 0.0f);
    std::vector<double> z(static_cast<std::size_t>(K));
    wi = 0;
    for (int row = 0; row < grid; ++row) {
        for (int col = 0; col < grid; ++col, ++wi) {
            const float* drow = dots.data() + wi * static_cast<std::size_t>(K);
            double mu = 0;
            for (int k = 0; k < K; ++k) {
                const double d2 = std::max(norms[wi] + 1.0 - 2.0 * static_cast<double>(drow[k]), 0.0);
                z[static_cast<std::size_t>(k)] = std::sqrt(d2);
                mu += z[static_cast<std::size_t>(k)];
            }
            mu /= static_cast<double>(K);
            const int quadrant = (row < half ? 0 : 2) + (col < half ? 0 : 1);
            for (int k = 0; k < K; ++k) {
                const double act = mu - z[static_cast<std::size_t>(k)];
                if (act > 0.0)
                    features[static_cast<std::size_t>(k) * 4 + static_cast<std::size_t>(quadrant)] +=
                        static_cast<float>(act);
            }
        }
    }
    return features;
}

// ---------------------------------------------------------------------------
// Serialization ("TPKM")
// ---------------------------------------------------------------------------

inline constexpr char kKmeansMagic[] = "TPKM";

inline void save_codebook(const KmeansCodebook& cb, const std::string& path) {
    TensorFile tf;
    tf.magic = kKmeansMagic;
    tf.meta_numbers["receptive_field"] = cb.receptive_field;
    tf.meta_numbers["n_centroids"] = cb.n_centroids;
    const int dim = cb.window_dim();
    Tensor<float> mean({dim}), whiten({dim, dim}), centroids({cb.n_centroids, dim});
    mean.data.assign(cb.window_mean.begin(), cb.window_mean.end());
    whiten.data.assign(cb.whiten.begin(), cb.whiten.end());
    centroids.data.assign(cb.centroids.begin(), cb.centroids.end());
    tf.tensors.emplace_back("window_mean", std::move(mean));
    tf.tensors.emplace_back("whiten", std::move(whiten));
    tf.tensors.emplace_back("centroids", std::move(centroids));
    save_tensor_file(tf, path);
}

inline KmeansCodebook load_codebook(const std::string& path) {
    TensorFile tf = load_tensor_file(path, kKmeansMagic);
    KmeansCodebook cb;
    cb.receptive_field = static_cast<int>(tf.meta_numbers.at("receptive_field"));
    cb.n_centroids = static_cast<int>(tf.meta_numbers.at("n_centroids"));
    const auto& mean = tf.require("window_mean");
    const auto& whiten = tf.require("whiten");
    const auto& centroids = tf.require("centroids");
    cb.window_mean.assign(mean.data.begin(), mean.data.end());
    cb.whiten.assign(whiten.data.begin(), whiten.data.end());
    cb.centroids.assign(centroids.data.begin(), centroids.data.end());
    return cb;
}

} // namespace triplanar
