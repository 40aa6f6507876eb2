#pragma once
// Exact O(n^2) t-SNE to 2D.
//
// Per-point Gaussian bandwidths are matched to the target perplexity by
// bisection (tolerance 1e-5 on the entropy), P is symmetrized, Q is the
// Student-t kernel. The first phase runs momentum + adaptive gains with
// early exaggeration; the final `monotone_tail` iterations switch to plain
// gradient descent with a backtracking step, which makes the KL trace
// non-increasing by construction.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "triplanar/rng.hpp"

namespace triplanar {

struct TsneError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TsneConfig {
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    int momentum_switch_iter = 250;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    int monotone_tail = 200;
    std::uint64_t seed = 1;
};

struct TsneResult {
    std::vector<std::array<double, 2>> points;
    std::vector<double> kl_trace; // KL divergence per iteration of the monotone tail
};

namespace detail {

inline std::vector<double> pairwise_sq_dists(const std::vector<double>& x, std::size_t n,
                                             std::size_t dim) {
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0;
            const double* a = x.data() + i * dim;
            const double* b = x.data() + j * dim;
            #pragma omp simd reduction(+ : s)
            for (std::size_t k = 0; k < dim; ++k) {
                const double diff = a[k] - b[k];
                s += diff * diff;
            }
            d[i * n + j] = s;
            d[j * n + i] = s;
        }
    }
    return d;
}

// Row-stochastic conditional P with bandwidth beta found by bisection so
// that the entropy matches log(perplexity) within 1e-5.
inline void conditional_p(const std::vector<double>& dists, std::size_t n, std::size_t row,
                          double perplexity, std::vector<double>& p_row) {
    const double target_entropy = std::log(perplexity);
    double beta = 1.0, beta_min = -1.0, beta_max = -1.0;
    const double* drow = dists.data() + row * n;

    double max_dist = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        if (j != row) max_dist = std::max(max_dist, drow[j]);
    if (max_dist <= 0.0)
        throw TsneError("degenerate input: all points identical to point " + std::to_string(row));

    for (int iter = 0; iter < 60; ++iter) {
        double sum = 0.0, weighted = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == row) {
                p_row[j] = 0.0;
                continue;
            }
            const double v = std::exp(-beta * drow[j]);
            p_row[j] = v;
            sum += v;
            weighted += v * drow[j];
        }
        if (sum <= 0.0 || !std::isfinite(sum))
            throw TsneError("degenerate input: a point has no finite neighbors");
        // H = log(sum) + beta * E[d]
        const double entropy = std::log(sum) + beta * weighted / sum;
        const double diff = entropy - target_entropy;
        if (std::abs(diff) < 1e-5) {
            for (std::size_t j = 0; j < n; ++j) p_row[j] /= sum;
            return;
        }
        if (diff > 0) { // entropy too high: sharpen
            beta_min = beta;
            beta = beta_max < 0 ? beta * 2.0 : 0.5 * (beta + beta_max);
        } else {
            beta_max = beta;
            beta = beta_min < 0 ? beta * 0.5 : 0.5 * (beta + beta_min);
        }
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += p_row[j];
    if (sum <= 0.0 || !std::isfinite(sum))
        throw TsneError("degenerate input: identical points defeat the perplexity search");
    for (std::size_t j = 0; j < n; ++j) p_row[j] /= sum;
}

// Student-t Q (unnormalized weights in `w`, normalizer returned) and the KL
// divergence against P.
inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& y,
                            std::size_t n, std::vector<double>& w) {
    double sum_w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = y[2 * i] - y[2 * j];
            const double dy = y[2 * i + 1] - y[2 * j + 1];
            const double v = 1.0 / (1.0 + dx * dx + dy * dy);
            w[i * n + j] = v;
            w[j * n + i] = v;
            sum_w += 2.0 * v;
        }
        w[i * n + i] = 0.0;
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double pij = p[i * n + j];
            if (pij <= 0.0) continue;
            const double qij = std::max(w[i * n + j] / sum_w, 1e-300);
            kl += pij * std::log(pij / qij);
        }
    return kl;
}

inline void gradient(const std::vector<double>& p, const std::vector<double>& y, std::size_t n,
                     const std::vector<double>& w, double sum_w, std::vector<double>& grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double mult =
                4.0 * (p[i * n + j] - w[i * n + j] / sum_w) * w[i * n + j];
            grad[2 * i] += mult * (y[2 * i] - y[2 * j]);
            grad[2 * i + 1] += mult * (y[2 * i + 1] - y[2 * j + 1]);
        }
    }
}

inline double sum_of(const std::vector<double>& w, std::size_t n) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * w[i * n + j];
    return s;
}

} // namespace detail

inline TsneResult tsne_embed(const std::vector<double>& features, std::size_t n, std::size_t dim,
                             const TsneConfig& cfg = {}) {
    if (n < 5) throw TsneError("t-SNE needs at least 5 points");
    if (features.size() != n * dim) throw TsneError("feature buffer does not match n x dim");
    if (!(cfg.perplexity > 0.0) || cfg.perplexity >= static_cast<double>(n) / 3.0)
        throw TsneError("perplexity must be positive and below n/3");
    if (cfg.iterations <= cfg.monotone_tail)
        throw TsneError("iterations must exceed the monotone tail length");

    const auto dists = detail::pairwise_sq_dists(features, n, dim);

    // symmetrized joint P
    std::vector<double> p(n * n, 0.0);
    {
        std::vector<double> row(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            detail::conditional_p(dists, n, i, cfg.perplexity, row);
            for (std::size_t j = 0; j < n; ++j) p[i * n + j] = row[j];
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double v = (p[i * n + j] + p[j * n + i]) / (2.0 * static_cast<double>(n));
                p[i * n + j] = v;
                p[j * n + i] = v;
            }
    }

    Rng rng(cfg.seed);
    std::vector<double> y(2 * n);
    for (auto& v : y) v = rng.normal(0.0, 1e-4);

    std::vector<double> w(n * n, 0.0), grad(2 * n, 0.0), inc(2 * n, 0.0), gains(2 * n, 1.0);
    std::vector<double> p_active = p;

    // phase 1: early exaggeration, momentum and adaptive gains
    const int head_iters = cfg.iterations - cfg.monotone_tail;
    for (auto& v : p_active) v *= cfg.early_exaggeration;
    for (int iter = 0; iter < head_iters; ++iter) {
        if (iter == cfg.exaggeration_iters)
            for (std::size_t i = 0; i < p_active.size(); ++i) p_active[i] = p[i];
        detail::kl_divergence(p_active, y, n, w); // fills w
        const double sum_w = detail::sum_of(w, n);
        detail::gradient(p_active, y, n, w, sum_w, grad);

        const double momentum =
            iter < cfg.momentum_switch_iter ? cfg.momentum_initial : cfg.momentum_final;
        for (std::size_t i = 0; i < 2 * n; ++i) {
            gains[i] = (grad[i] > 0) != (inc[i] > 0) ? gains[i] + 0.2
                                                     : std::max(gains[i] * 0.8, 0.01);
            inc[i] = momentum * inc[i] - cfg.learning_rate * gains[i] * grad[i];
            y[i] += inc[i];
        }
        // recenter
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += y[2 * i];
            my += y[2 * i + 1];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[2 * i] -= mx;
            y[2 * i + 1] -= my;
        }
    }

    // phase 2: plain descent with backtracking, KL non-increasing
    TsneResult result;
    double kl = detail::kl_divergence(p, y, n, w);
    for (int iter = 0; iter < cfg.monotone_tail; ++iter) {
        const double sum_w = detail::sum_of(w, n);
        detail::gradient(p, y, n, w, sum_w, grad);
        double step = cfg.learning_rate;
        std::vector<double> y_try(2 * n);
        double kl_try = kl;
        for (int attempt = 0; attempt < 40; ++attempt) {
            for (std::size_t i = 0; i < 2 * n; ++i) y_try[i] = y[i] - step * grad[i];
            kl_try = detail::kl_divergence(p, y_try, n, w);
            if (kl_try <= kl) break;
            step *= 0.5;
        }
        if (kl_try <= kl) {
            y.swap(y_try);
            kl = kl_try;
        } else {
            detail::kl_divergence(p, y, n, w); // restore w for the next gradient
        }
        result.kl_trace.push_back(kl);
    }

    result.points.resize(n);
    for (std::size_t i = 0; i < n; ++i) result.points[i] = {y[2 * i], y[2 * i + 1]};
    return result;
}

} // namespace triplanar
