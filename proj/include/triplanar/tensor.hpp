#pragma once
// Dense tensors and the small register-tiled GEMM kernels behind the
// convolution layers. Row-major throughout. float is the training type;
// the same templates instantiate with double for gradient checking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace triplanar {

struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), T(0)) {}

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw TensorError("tensor dims must be positive");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t numel() const { return data.size(); }
    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// GEMM kernels. All accumulate into C (callers zero C when needed).
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr int kTileM = 4;
inline constexpr int kTileN = 64;
}

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C) {
    constexpr int MR = detail::kTileM, NR = detail::kTileN;
    for (int m0 = 0; m0 < M; m0 += MR) {
        const int mr = std::min(MR, M - m0);
        for (int n0 = 0; n0 < N; n0 += NR) {
            const int nr = std::min(NR, N - n0);
            T acc[MR][NR] = {};
            if (mr == MR && nr == NR) {
                for (int k = 0; k < K; ++k) {
                    const T* b = B + static_cast<std::size_t>(k) * N + n0;
                    for (int r = 0; r < MR; ++r) {
                        const T a = A[static_cast<std::size_t>(m0 + r) * K + k];
                        #pragma omp simd
                        for (int c = 0; c < NR; ++c) acc[r][c] += a * b[c];
                    }
                }
            } else {
                for (int k = 0; k < K; ++k) {
                    const T* b = B + static_cast<std::size_t>(k) * N + n0;
                    for (int r = 0; r < mr; ++r) {
                        const T a = A[static_cast<std::size_t>(m0 + r) * K + k];
                        for (int c = 0; c < nr; ++c) acc[r][c] += a * b[c];
                    }
                }
            }
            for (int r = 0; r < mr; ++r) {
                T* crow = C + static_cast<std::size_t>(m0 + r) * N + n0;
                for (int c = 0; c < nr; ++c) crow[c] += acc[r][c];
            }
        }
    }
}

// C[M,N] += A^T * B with A stored [K,M]
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C) {
    constexpr int MR = detail::kTileM, NR = detail::kTileN;
    for (int m0 = 0; m0 < M; m0 += MR) {
        const int mr = std::min(MR, M - m0);
        for (int n0 = 0; n0 < N; n0 += NR) {
            const int nr = std::min(NR, N - n0);
            T acc[MR][NR] = {};
            if (mr == MR && nr == NR) {
                for (int k = 0; k < K; ++k) {
                    const T* b = B + static_cast<std::size_t>(k) * N + n0;
                    const T* arow = A + static_cast<std::size_t>(k) * M + m0;
                    for (int r = 0; r < MR; ++r) {
                        const T a = arow[r];
                        #pragma omp simd
                        for (int c = 0; c < NR; ++c) acc[r][c] += a * b[c];
                    }
                }
            } else {
                for (int k = 0; k < K; ++k) {
                    const T* b = B + static_cast<std::size_t>(k) * N + n0;
                    const T* arow = A + static_cast<std::size_t>(k) * M + m0;
                    for (int r = 0; r < mr; ++r) {
                        const T a = arow[r];
                        for (int c = 0; c < nr; ++c) acc[r][c] += a * b[c];
                    }
                }
            }
            for (int r = 0; r < mr; ++r) {
                T* crow = C + static_cast<std::size_t>(m0 + r) * N + n0;
                for (int c = 0; c < nr; ++c) crow[c] += acc[r][c];
            }
        }
    }
}

// C[M,N] += A * B^T with A stored [M,K], B stored [N,K].
// Dot products run over K; per-lane accumulators keep the FMA chains
// independent so the k loop vectorizes.
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C) {
    constexpr int MR = 2, NRT = 4, VL = 16;
    const int k_main = K - K % VL;
    for (int m0 = 0; m0 < M; m0 += MR) {
        const int mr = std::min(MR, M - m0);
        for (int n0 = 0; n0 < N; n0 += NRT) {
            const int nr = std::min(NRT, N - n0);
            T lanes[MR][NRT][VL] = {};
            for (int k = 0; k < k_main; k += VL) {
                for (int r = 0; r < mr; ++r) {
                    const T* a = A + static_cast<std::size_t>(m0 + r) * K + k;
                    for (int c = 0; c < nr; ++c) {
                        const T* b = B + static_cast<std::size_t>(n0 + c) * K + k;
                        T* acc = lanes[r][c];
                        #pragma omp simd
                        for (int l = 0; l < VL; ++l) acc[l] += a[l] * b[l];
                    }
                }
            }
            for (int r = 0; r < mr; ++r)
                for (int c = 0; c < nr; ++c) {
                    T s = 0;
                    for (int l = 0; l < VL; ++l) s += lanes[r][c][l];
                    const T* a = A + static_cast<std::size_t>(m0 + r) * K;
                    const T* b = B + static_cast<std::size_t>(n0 + c) * K;
                    for (int k = k_main; k < K; ++k) s += a[k] * b[k];
                    C[static_cast<std::size_t>(m0 + r) * N + (n0 + c)] += s;
                }
        }
    }
}

// Reference implementation used by the kernel tests.
template <typename T>
void gemm_naive(int M, int N, int K, const T* A, const T* B, T* C) {
    for (int m = 0; m < M; ++m)
        for (int k = 0; k < K; ++k) {
            const T a = A[static_cast<std::size_t>(m) * K + k];
            for (int n = 0; n < N; ++n)
                C[static_cast<std::size_t>(m) * N + n] += a * B[static_cast<std::size_t>(k) * N + n];
        }
}

} // namespace triplanar
