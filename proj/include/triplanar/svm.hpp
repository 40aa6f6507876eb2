#pragma once
// Linear one-vs-one SVM on standardized features.
//
// Each of the C(k,2) binary machines minimizes the L1-loss SVM dual by
// coordinate descent (bias learned through an augmented constant feature).
// Features are standardized with training-set statistics only.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "triplanar/rng.hpp"
#include "triplanar/serialize.hpp"
#include "triplanar/volume.hpp"

namespace triplanar {

struct SvmError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SvmConfig {
    double C = 1.0;
    double tolerance = 1e-4;
    int max_passes = 1000;
    std::uint64_t seed = 1;
};

struct BinarySvm {
    int class_a = 0; // decision > 0 votes for class_a
    int class_b = 1;
    std::vector<float> weights;
    float bias = 0.0f;
};

struct LinearSvmModel {
    int dim = 0;
    int n_classes = 0;
    std::vector<float> feature_mean;
    std::vector<float> feature_std;
    std::vector<BinarySvm> machines; // (a,b) pairs, a < b, lexicographic

    std::vector<float> standardize(const std::vector<float>& x) const {
        if (static_cast<int>(x.size()) != dim) throw SvmError("feature dimension mismatch");
        std::vector<float> z(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            z[i] = (x[i] - feature_mean[i]) / feature_std[i];
        return z;
    }
};

namespace detail {

// LIBLINEAR-style dual coordinate descent for min 0.5|w|^2 + C sum hinge.
// Rows of `x` are standardized and already carry the augmented 1.
inline std::vector<double> dcd_train(const std::vector<const float*>& x,
                                     const std::vector<int>& y, int dim, const SvmConfig& cfg) {
    const std::size_t n = x.size();
    std::vector<double> w(static_cast<std::size_t>(dim), 0.0);
    std::vector<double> alpha(n, 0.0);
    std::vector<double> qii(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (int d = 0; d < dim; ++d) s += static_cast<double>(x[i][d]) * x[i][d];
        qii[i] = s;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));
    Rng rng(cfg.seed);

    for (int pass = 0; pass < cfg.max_passes; ++pass) {
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_index(i)]);
        double max_violation = 0.0;
        for (std::size_t oi = 0; oi < n; ++oi) {
            const std::size_t i = order[oi];
            double wx = 0;
            #pragma omp simd reduction(+ : wx)
            for (int d = 0; d < dim; ++d) wx += w[static_cast<std::size_t>(d)] * x[i][d];
            const double g = y[i] * wx - 1.0;
            double pg = g;
            if (alpha[i] <= 0.0)
                pg = std::min(g, 0.0);
            else if (alpha[i] >= cfg.C)
                pg = std::max(g, 0.0);
            max_violation = std::max(max_violation, std::abs(pg));
            if (std::abs(pg) > 1e-12) {
                const double old = alpha[i];
                alpha[i] = std::min(std::max(old - g / qii[i], 0.0), cfg.C);
                const double delta = (alpha[i] - old) * y[i];
                #pragma omp simd
                for (int d = 0; d < dim; ++d) w[static_cast<std::size_t>(d)] += delta * x[i][d];
            }
        }
        if (max_violation < cfg.tolerance) break;
    }
    return w;
}

} // namespace detail

// Primal objective of one binary machine on its (standardized, augmented)
// training rows; the long-run oracle test compares short and long runs.
inline double svm_primal_objective(const std::vector<double>& w,
                                   const std::vector<const float*>& x, const std::vector<int>& y,
                                   int dim, double C) {
    double obj = 0.0;
    for (int d = 0; d < dim; ++d) obj += 0.5 * w[static_cast<std::size_t>(d)] * w[static_cast<std::size_t>(d)];
    for (std::size_t i = 0; i < x.size(); ++i) {
        double wx = 0;
        for (int d = 0; d < dim; ++d) wx += w[static_cast<std::size_t>(d)] * x[i][d];
        obj += C * std::max(0.0, 1.0 - y[i] * wx);
    }
    return obj;
}

inline LinearSvmModel svm_train(const std::vector<std::vector<float>>& features,
                                const std::vector<int>& labels, int n_classes,
                                const SvmConfig& cfg = {}) {
    if (features.size() != labels.size()) throw SvmError("features/labels length mismatch");
    if (features.empty()) throw SvmError("empty training set");
    const int dim = static_cast<int>(features[0].size());
    for (const auto& f : features)
        if (static_cast<int>(f.size()) != dim) throw SvmError("inconsistent feature dimensions");

    std::vector<bool> present(static_cast<std::size_t>(n_classes), false);
    for (int l : labels) {
        if (l < 0 || l >= n_classes) throw SvmError("label out of range");
        present[static_cast<std::size_t>(l)] = true;
    }
    int n_present = 0;
    for (bool p : present) n_present += p ? 1 : 0;
    if (n_present < 2) throw SvmError("training set must contain at least two classes");

    LinearSvmModel model;
    model.dim = dim;
    model.n_classes = n_classes;
    model.feature_mean.assign(static_cast<std::size_t>(dim), 0.0f);
    model.feature_std.assign(static_cast<std::size_t>(dim), 1.0f);

    // standardization statistics from the training set only
    std::vector<double> mean(static_cast<std::size_t>(dim), 0.0), var(static_cast<std::size_t>(dim), 0.0);
    for (const auto& f : features)
        for (int d = 0; d < dim; ++d) mean[static_cast<std::size_t>(d)] += f[static_cast<std::size_t>(d)];
    for (auto& m : mean) m /= static_cast<double>(features.size());
    for (const auto& f : features)
        for (int d = 0; d < dim; ++d) {
            const double c = f[static_cast<std::size_t>(d)] - mean[static_cast<std::size_t>(d)];
            var[static_cast<std::size_t>(d)] += c * c;
        }
    for (int d = 0; d < dim; ++d) {
        const double sd = std::sqrt(var[static_cast<std::size_t>(d)] / features.size());
        model.feature_mean[static_cast<std::size_t>(d)] = static_cast<float>(mean[static_cast<std::size_t>(d)]);
        model.feature_std[static_cast<std::size_t>(d)] = sd > 1e-7 ? static_cast<float>(sd) : 1.0f;
    }

    // standardized rows with the augmented constant
    std::vector<std::vector<float>> rows(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        rows[i].resize(static_cast<std::size_t>(dim) + 1);
        for (int d = 0; d < dim; ++d)
            rows[i][static_cast<std::size_t>(d)] =
                (features[i][static_cast<std::size_t>(d)] - model.feature_mean[static_cast<std::size_t>(d)]) /
                model.feature_std[static_cast<std::size_t>(d)];
        rows[i][static_cast<std::size_t>(dim)] = 1.0f;
    }

    int pair_idx = 0;
    for (int a = 0; a < n_classes; ++a) {
        for (int b = a + 1; b < n_classes; ++b) {
            BinarySvm machine;
            machine.class_a = a;
            machine.class_b = b;
            std::vector<const float*> x;
            std::vector<int> y;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (labels[i] == a) {
                    x.push_back(rows[i].data());
                    y.push_back(+1);
                } else if (labels[i] == b) {
                    x.push_back(rows[i].data());
                    y.push_back(-1);
                }
            }
            if (x.empty()) {
                machine.weights.assign(static_cast<std::size_t>(dim), 0.0f);
                machine.bias = 0.0f;
            } else {
                SvmConfig pair_cfg = cfg;
                pair_cfg.seed = derive_seed(cfg.seed, 0x5f3, static_cast<std::uint64_t>(pair_idx));
                const auto w = detail::dcd_train(x, y, dim + 1, pair_cfg);
                machine.weights.resize(static_cast<std::size_t>(dim));
                for (int d = 0; d < dim; ++d)
                    machine.weights[static_cast<std::size_t>(d)] = static_cast<float>(w[static_cast<std::size_t>(d)]);
                machine.bias = static_cast<float>(w[static_cast<std::size_t>(dim)]);
            }
            model.machines.push_back(std::move(machine));
            ++pair_idx;
        }
    }
    return model;
}

// One-vs-one vote over all machines for one standardized feature vector.
// Returns per-class vote counts.
inline std::vector<int> svm_votes(const LinearSvmModel& model, const std::vector<float>& feature) {
    const auto z = model.standardize(feature);
    std::vector<int> votes(static_cast<std::size_t>(model.n_classes), 0);
    for (const auto& m : model.machines) {
        double d = m.bias;
        for (std::size_t i = 0; i < z.size(); ++i) d += static_cast<double>(m.weights[i]) * z[i];
        ++votes[static_cast<std::size_t>(d > 0.0 ? m.class_a : m.class_b)];
    }
    return votes;
}

inline int svm_predict(const LinearSvmModel& model, const std::vector<float>& feature) {
    const auto votes = svm_votes(model, feature);
    int best = 0;
    for (int k = 1; k < model.n_classes; ++k)
        if (votes[static_cast<std::size_t>(k)] > votes[static_cast<std::size_t>(best)]) best = k;
    return best;
}

// Majority vote over per-patch labels. Ties break by total pairwise vote
// count across the patches, then by lowest class index.
inline int majority_vote(const std::vector<int>& patch_labels,
                         const std::vector<std::vector<int>>& patch_votes, int n_classes) {
    if (patch_labels.empty()) throw SvmError("majority vote over zero patches");
    std::vector<int> tally(static_cast<std::size_t>(n_classes), 0);
    std::vector<long> aggregate(static_cast<std::size_t>(n_classes), 0);
    for (std::size_t i = 0; i < patch_labels.size(); ++i) {
        ++tally[static_cast<std::size_t>(patch_labels[i])];
        for (int k = 0; k < n_classes; ++k)
            aggregate[static_cast<std::size_t>(k)] += patch_votes[i][static_cast<std::size_t>(k)];
    }
    int best = 0;
    for (int k = 1; k < n_classes; ++k) {
        const std::size_t ku = static_cast<std::size_t>(k), bu = static_cast<std::size_t>(best);
        if (tally[ku] > tally[bu] || (tally[ku] == tally[bu] && aggregate[ku] > aggregate[bu]))
            best = k;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Serialization ("TPSV")
// ---------------------------------------------------------------------------

inline constexpr char kSvmMagic[] = "TPSV";

inline void save_svm(const LinearSvmModel& model, const std::string& path) {
    TensorFile tf;
    tf.magic = kSvmMagic;
    tf.meta_numbers["dim"] = model.dim;
    tf.meta_numbers["n_classes"] = model.n_classes;
    Tensor<float> mean({model.dim}), sd({model.dim});
    mean.data.assign(model.feature_mean.begin(), model.feature_mean.end());
    sd.data.assign(model.feature_std.begin(), model.feature_std.end());
    tf.tensors.emplace_back("feature_mean", std::move(mean));
    tf.tensors.emplace_back("feature_std", std::move(sd));
    Tensor<float> weights({static_cast<int>(model.machines.size()), model.dim});
    Tensor<float> bias({static_cast<int>(model.machines.size())});
    Tensor<float> pairs({static_cast<int>(model.machines.size()), 2});
    for (std::size_t i = 0; i < model.machines.size(); ++i) {
        const auto& m = model.machines[i];
        std::copy(m.weights.begin(), m.weights.end(),
                  weights.data.begin() + static_cast<std::ptrdiff_t>(i) * model.dim);
        bias.data[i] = m.bias;
        pairs.data[2 * i] = static_cast<float>(m.class_a);
        pairs.data[2 * i + 1] = static_cast<float>(m.class_b);
    }
    tf.tensors.emplace_back("weights", std::move(weights));
    tf.tensors.emplace_back("bias", std::move(bias));
    tf.tensors.emplace_back("pairs", std::move(pairs));
    save_tensor_file(tf, path);
}

inline LinearSvmModel load_svm(const std::string& path) {
    TensorFile tf = load_tensor_file(path, kSvmMagic);
    LinearSvmModel model;
    model.dim = static_cast<int>(tf.meta_numbers.at("dim"));
    model.n_classes = static_cast<int>(tf.meta_numbers.at("n_classes"));
    const auto& mean = tf.require("feature_mean");
    const auto& sd = tf.require("feature_std");
    model.feature_mean.assign(mean.data.begin(), mean.data.end());
    model.feature_std.assign(sd.data.begin(), sd.data.end());
    const auto& weights = tf.require("weights");
    const auto& bias = tf.require("bias");
    const auto& pairs = tf.require("pairs");
    const int n_machines = weights.shape.at(0);
    for (int i = 0; i < n_machines; ++i) {
        BinarySvm m;
        m.class_a = static_cast<int>(pairs.data[static_cast<std::size_t>(2 * i)]);
        m.class_b = static_cast<int>(pairs.data[static_cast<std::size_t>(2 * i + 1)]);
        m.weights.assign(weights.data.begin() + static_cast<std::ptrdiff_t>(i) * model.dim,
                         weights.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * model.dim);
        m.bias = bias.data[static_cast<std::size_t>(i)];
        model.machines.push_back(std::move(m));
    }
    return model;
}

} // namespace triplanar
