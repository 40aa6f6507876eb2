#pragma once
// Classical comparators: raw-intensity and K-means features feeding the
// one-vs-one linear SVM, with 30-patch majority-vote nodule prediction.
// Baseline patches are the first (axial-like) view at the 40 mm scale,
// one per rotation angle.

#include <functional>
#include <vector>

#include "triplanar/kmeans_features.hpp"
#include "triplanar/sampler.hpp"
#include "triplanar/svm.hpp"

namespace triplanar {

inline constexpr double kBaselineScaleMm = 40.0;

// Row-major flatten of the 64x64 patch: 4096 values.
inline std::vector<float> intensity_features(const Patch& p) {
    return std::vector<float>(p.pixels.begin(), p.pixels.end());
}

inline Patch unflatten_patch(const std::vector<float>& v) {
    if (v.size() != static_cast<std::size_t>(kPatchSide) * kPatchSide)
        throw SvmError("intensity feature vector must have 4096 values");
    Patch p;
    std::copy(v.begin(), v.end(), p.pixels.begin());
    return p;
}

// The baseline patch for one rotation angle.
inline Patch baseline_patch(const Volume& volume, const NoduleRecord& record, double theta) {
    const PlaneTriplet t = triplet_planes(record.center, theta);
    Patch p = extract_patch(volume, t.frames[0], record.center, kBaselineScaleMm);
    p.view_index = 0;
    return p;
}

using FeatureExtractor = std::function<std::vector<float>(const Patch&)>;

// Classify n_patches rotated patches and take the majority label.
inline int svm_predict_vote(const LinearSvmModel& model, const Volume& volume,
                            const NoduleRecord& record, const FeatureExtractor& features,
                            int n_patches = 30) {
    const auto thetas = theta_schedule(n_patches);
    std::vector<int> labels(thetas.size());
    std::vector<std::vector<int>> votes(thetas.size());
    #pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(thetas.size()); ++i) {
        const Patch p = baseline_patch(volume, record, thetas[static_cast<std::size_t>(i)]);
        const auto f = features(p);
        votes[static_cast<std::size_t>(i)] = svm_votes(model, f);
        int best = 0;
        for (int k = 1; k < model.n_classes; ++k)
            if (votes[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] >
                votes[static_cast<std::size_t>(i)][static_cast<std::size_t>(best)])
                best = k;
        labels[static_cast<std::size_t>(i)] = best;
    }
    return majority_vote(labels, votes, model.n_classes);
}

} // namespace triplanar
