#pragma once
// Layer forward/backward passes, loss, initialization and the ADAM update.
// Every backward pass here is checked against central finite differences by
// the test suite (double instantiation).

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "triplanar/rng.hpp"
#include "triplanar/tensor.hpp"

namespace triplanar {

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, odd kernel, zero "same" padding (k-1)/2.
// input [C,H,W], weights [F,C,k,k], bias [F], output [F,H,W].
// ---------------------------------------------------------------------------

template <typename T>
struct ConvWorkspace {
    std::vector<T> cols;  // [C*k*k, H*W]
    std::vector<T> dcols;
};

template <typename T>
void im2col(const T* input, int C, int H, int W, int k, T* cols) {
    const int pad = (k - 1) / 2;
    const int hw = H * W;
    std::size_t row = 0;
    for (int c = 0; c < C; ++c) {
        const T* img = input + static_cast<std::size_t>(c) * hw;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj, ++row) {
                T* dst = cols + row * static_cast<std::size_t>(hw);
                const int dy = ki - pad, dx = kj - pad;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + dy;
                    T* drow = dst + static_cast<std::size_t>(y) * W;
                    if (sy < 0 || sy >= H) {
                        for (int x = 0; x < W; ++x) drow[x] = T(0);
                        continue;
                    }
                    const T* srow = img + static_cast<std::size_t>(sy) * W;
                    const int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
                    for (int x = 0; x < x_lo; ++x) drow[x] = T(0);
                    for (int x = x_lo; x < x_hi; ++x) drow[x] = srow[x + dx];
                    for (int x = x_hi; x < W; ++x) drow[x] = T(0);
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, int C, int H, int W, int k, T* input_grad) {
    const int pad = (k - 1) / 2;
    const int hw = H * W;
    std::size_t row = 0;
    for (int c = 0; c < C; ++c) {
        T* img = input_grad + static_cast<std::size_t>(c) * hw;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj, ++row) {
                const T* src = cols + row * static_cast<std::size_t>(hw);
                const int dy = ki - pad, dx = kj - pad;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= H) continue;
                    const T* srow = src + static_cast<std::size_t>(y) * W;
                    T* drow = img + static_cast<std::size_t>(sy) * W;
                    const int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
                    for (int x = x_lo; x < x_hi; ++x) drow[x + dx] += srow[x];
                }
            }
        }
    }
}

template <typename T>
void conv2d_forward(const T* input, int C, int H, int W, const T* weights, const T* bias, int F,
                    int k, T* output, ConvWorkspace<T>& ws) {
    if (k % 2 == 0) throw TensorError("conv2d requires an odd kernel");
    const int hw = H * W;
    const std::size_t K = static_cast<std::size_t>(C) * k * k;
    ws.cols.resize(K * static_cast<std::size_t>(hw));
    im2col(input, C, H, W, k, ws.cols.data());
    for (int f = 0; f < F; ++f) {
        T* orow = output + static_cast<std::size_t>(f) * hw;
        std::fill(orow, orow + hw, bias[f]);
    }
    gemm_nn(F, hw, static_cast<int>(K), weights, ws.cols.data(), output);
}

// input_grad may be null (first layer). weight/bias grads are accumulated.
template <typename T>
void conv2d_backward(const T* input, int C, int H, int W, const T* weights, int F, int k,
                     const T* output_grad, T* input_grad, T* weight_grad, T* bias_grad,
                     ConvWorkspace<T>& ws) {
    const int hw = H * W;
    const std::size_t K = static_cast<std::size_t>(C) * k * k;
    ws.cols.resize(K * static_cast<std::size_t>(hw));
    im2col(input, C, H, W, k, ws.cols.data());

    // dW[F,K] += dY[F,hw] * cols[K,hw]^T
    gemm_nt(F, static_cast<int>(K), hw, output_grad, ws.cols.data(), weight_grad);
    for (int f = 0; f < F; ++f) {
        const T* grow = output_grad + static_cast<std::size_t>(f) * hw;
        T s = 0;
        for (int i = 0; i < hw; ++i) s += grow[i];
        bias_grad[f] += s;
    }
    if (input_grad) {
        ws.dcols.assign(K * static_cast<std::size_t>(hw), T(0));
        // dcols[K,hw] = W[F,K]^T * dY[F,hw]
        gemm_tn(static_cast<int>(K), hw, F, weights, output_grad, ws.dcols.data());
        col2im_add(ws.dcols.data(), C, H, W, k, input_grad);
    }
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Ties keep the first index in scan order.
// ---------------------------------------------------------------------------

template <typename T>
void maxpool2_forward(const T* input, int C, int H, int W, T* output, std::uint8_t* argmax) {
    if (H % 2 != 0 || W % 2 != 0) throw TensorError("maxpool2 requires even spatial dims");
    const int OH = H / 2, OW = W / 2;
    for (int c = 0; c < C; ++c) {
        const T* img = input + static_cast<std::size_t>(c) * H * W;
        T* out = output + static_cast<std::size_t>(c) * OH * OW;
        std::uint8_t* am = argmax + static_cast<std::size_t>(c) * OH * OW;
        for (int y = 0; y < OH; ++y) {
            for (int x = 0; x < OW; ++x) {
                const int iy = 2 * y, ix = 2 * x;
                const T v[4] = {img[iy * W + ix], img[iy * W + ix + 1], img[(iy + 1) * W + ix],
                                img[(iy + 1) * W + ix + 1]};
                int best = 0;
                for (int i = 1; i < 4; ++i)
                    if (v[i] > v[best]) best = i;
                out[y * OW + x] = v[best];
                am[y * OW + x] = static_cast<std::uint8_t>(best);
            }
        }
    }
}

template <typename T>
void maxpool2_backward(const T* output_grad, const std::uint8_t* argmax, int C, int H, int W,
                       T* input_grad) {
    const int OH = H / 2, OW = W / 2;
    std::fill(input_grad, input_grad + static_cast<std::size_t>(C) * H * W, T(0));
    for (int c = 0; c < C; ++c) {
        const T* g = output_grad + static_cast<std::size_t>(c) * OH * OW;
        const std::uint8_t* am = argmax + static_cast<std::size_t>(c) * OH * OW;
        T* ig = input_grad + static_cast<std::size_t>(c) * H * W;
        for (int y = 0; y < OH; ++y)
            for (int x = 0; x < OW; ++x) {
                const int which = am[y * OW + x];
                const int iy = 2 * y + which / 2, ix = 2 * x + which % 2;
                ig[iy * W + ix] += g[y * OW + x];
            }
    }
}

// ---------------------------------------------------------------------------
// dense: out[m] = W[m,n] * in[n] + b[m]
// ---------------------------------------------------------------------------

template <typename T>
void dense_forward(const T* input, int n, const T* weights, const T* bias, int m, T* output) {
    for (int r = 0; r < m; ++r) {
        const T* wrow = weights + static_cast<std::size_t>(r) * n;
        T s = bias[r];
        #pragma omp simd reduction(+ : s)
        for (int c = 0; c < n; ++c) s += wrow[c] * input[c];
        output[r] = s;
    }
}

// input_grad may be null. weight/bias grads accumulated.
template <typename T>
void dense_backward(const T* input, int n, const T* weights, int m, const T* output_grad,
                    T* input_grad, T* weight_grad, T* bias_grad) {
    for (int r = 0; r < m; ++r) {
        const T g = output_grad[r];
        bias_grad[r] += g;
        T* wg = weight_grad + static_cast<std::size_t>(r) * n;
        #pragma omp simd
        for (int c = 0; c < n; ++c) wg[c] += g * input[c];
    }
    if (input_grad) {
        std::fill(input_grad, input_grad + n, T(0));
        for (int r = 0; r < m; ++r) {
            const T g = output_grad[r];
            const T* wrow = weights + static_cast<std::size_t>(r) * n;
            #pragma omp simd
            for (int c = 0; c < n; ++c) input_grad[c] += g * wrow[c];
        }
    }
}

// ---------------------------------------------------------------------------
// relu (in place), mask by output > 0
// ---------------------------------------------------------------------------

template <typename T>
void relu_forward(T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* output, T* grad, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!(output[i] > T(0))) grad[i] = T(0);
}

// ---------------------------------------------------------------------------
// softmax + categorical cross-entropy. Returns loss; probs has size k;
// logit gradient is probs - onehot(target).
// ---------------------------------------------------------------------------

template <typename T>
T softmax_xent(const T* logits, int k, int target, T* probs) {
    T mx = logits[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
    T sum = 0;
    for (int i = 0; i < k; ++i) {
        probs[i] = std::exp(logits[i] - mx);
        sum += probs[i];
    }
    for (int i = 0; i < k; ++i) probs[i] /= sum;
    const T p = std::max(probs[target], std::numeric_limits<T>::min());
    return -std::log(p);
}

template <typename T>
void softmax_xent_backward(const T* probs, int k, int target, T* logit_grad) {
    for (int i = 0; i < k; ++i) logit_grad[i] = probs[i] - (i == target ? T(1) : T(0));
}

// ---------------------------------------------------------------------------
// inverted dropout: train mode zeroes units with probability rate and
// scales survivors by 1/(1-rate); eval mode is the identity.
// ---------------------------------------------------------------------------

template <typename T>
void dropout_forward(T* x, std::size_t n, double rate, bool train, Rng& rng, std::uint8_t* mask) {
    if (!(rate >= 0.0 && rate < 1.0)) throw TensorError("dropout rate must be in [0,1)");
    if (!train || rate == 0.0) {
        if (mask) std::fill(mask, mask + n, std::uint8_t(1));
        return;
    }
    const T scale = T(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < n; ++i) {
        const bool keep = rng.uniform() >= rate;
        if (mask) mask[i] = keep ? 1 : 0;
        x[i] = keep ? x[i] * scale : T(0);
    }
}

template <typename T>
void dropout_backward(T* grad, std::size_t n, double rate, const std::uint8_t* mask) {
    const T scale = T(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < n; ++i) grad[i] = mask[i] ? grad[i] * scale : T(0);
}

// ---------------------------------------------------------------------------
// Glorot uniform initialization, U(+-sqrt(6/(fan_in+fan_out)))
// ---------------------------------------------------------------------------

template <typename T>
void glorot_init(Tensor<T>& t, int fan_in, int fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------
// ADAM with bias correction.
// ---------------------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
    std::vector<T> m, v;
    std::int64_t t = 0;
    AdamConfig config{};

    explicit AdamState(std::size_t n = 0, AdamConfig cfg = {})
        : m(n, T(0)), v(n, T(0)), config(cfg) {}
};

template <typename T>
void adam_step(T* params, const T* grads, std::size_t n, AdamState<T>& state, double lr) {
    if (state.m.size() != n || state.v.size() != n)
        throw TensorError("adam state size does not match parameters");
    state.t += 1;
    const T b1 = T(state.config.beta1), b2 = T(state.config.beta2);
    const T eps = T(state.config.epsilon);
    const T bc1 = T(1) - static_cast<T>(std::pow(state.config.beta1, state.t));
    const T bc2 = T(1) - static_cast<T>(std::pow(state.config.beta2, state.t));
    const T alpha = T(lr);
    T* m = state.m.data();
    T* v = state.v.data();
    #pragma omp simd
    for (std::size_t i = 0; i < n; ++i) {
        const T g = grads[i];
        m[i] = b1 * m[i] + (T(1) - b1) * g;
        v[i] = b2 * v[i] + (T(1) - b2) * g * g;
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        params[i] -= alpha * mhat / (std::sqrt(vhat) + eps);
    }
}

// Adds decay * w to weight gradients (biases are excluded by the caller).
template <typename T>
void l2_penalty(const T* weights, T* weight_grads, std::size_t n, double decay) {
    if (decay < 0.0) throw TensorError("l2 decay must be >= 0");
    if (decay == 0.0) return;
    const T d = T(decay);
    #pragma omp simd
    for (std::size_t i = 0; i < n; ++i) weight_grads[i] += d * weights[i];
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check harness. Samples up to max_checks
// parameters, perturbs each by +-h, and compares the central difference
// against the analytic gradient. Returns the max relative error.
// ---------------------------------------------------------------------------

template <typename T>
double grad_check(std::span<T> params, std::span<const T> analytic,
                  const std::function<double()>& loss_fn, int max_checks, std::uint64_t seed,
                  double h = 1e-5) {
    if (params.size() != analytic.size())
        throw TensorError("grad_check: gradient size does not match parameters");
    Rng rng(seed);
    const std::size_t n = params.size();
    const std::size_t checks = std::min<std::size_t>(n, static_cast<std::size_t>(max_checks));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_index(i)]);

    double worst = 0.0;
    for (std::size_t c = 0; c < checks; ++c) {
        const std::size_t i = order[c];
        const T saved = params[i];
        params[i] = saved + T(h);
        const double fp = loss_fn();
        params[i] = saved - T(h);
        const double fm = loss_fn();
        params[i] = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = static_cast<double>(analytic[i]);
        const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-4);
        worst = std::max(worst, rel);
    }
    return worst;
}

} // namespace triplanar
