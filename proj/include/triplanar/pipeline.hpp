#pragma once
// Dataset assembly, the training loop with validation-driven model
// selection, and rotation-fused prediction.

#include <omp.h>

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "triplanar/manifest.hpp"
#include "triplanar/metrics.hpp"
#include "triplanar/model.hpp"
#include "triplanar/sample_store.hpp"
#include "triplanar/sampler.hpp"

namespace triplanar {

struct PipelineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    std::vector<double> scales{10.0, 20.0, 40.0};
    std::array<int, kNumClasses> plane_counts{0, 0, 0, 0, 0, 0}; // 0 = derive from target
    int target_samples_per_class = 5000; // pre-augmentation extraction target
    int batch_size = 256;
    double initial_lr = 1e-3;
    double lr_decay_factor = 3.0;
    int lr_decay_epochs = 50;
    int epochs = 200;
    double dropout = 0.5;
    double weight_decay = 1e-6;
    int validation_fusion_n = 30;
    std::uint64_t seed = 1;
    int max_store_per_class = 0; // 0 = keep everything; desk profile caps this
    int workers = 0;             // 0 = all hardware threads

    // CI-friendly preset: ~200 stored samples per class, short schedule
    // with a proportionally shortened decay interval.
    static TrainConfig desk_profile() {
        TrainConfig c;
        c.target_samples_per_class = 200;
        c.max_store_per_class = 200;
        c.batch_size = 64;
        c.epochs = 10;
        c.lr_decay_epochs = 5;
        c.validation_fusion_n = 5;
        return c;
    }
};

// lr(e) = initial / decay^(e / decay_epochs), a pure function of the epoch.
inline double lr_at_epoch(const TrainConfig& c, int epoch) {
    return c.initial_lr / std::pow(c.lr_decay_factor, epoch / c.lr_decay_epochs);
}

// N_c = ceil(target / nodules_c), at least 1. Explicit plane_counts win.
inline std::array<int, kNumClasses> derive_plane_counts(
    const TrainConfig& config, const std::array<std::size_t, kNumClasses>& nodules_per_class) {
    std::array<int, kNumClasses> n{};
    for (int c = 0; c < kNumClasses; ++c) {
        if (config.plane_counts[static_cast<std::size_t>(c)] > 0) {
            n[static_cast<std::size_t>(c)] = config.plane_counts[static_cast<std::size_t>(c)];
            continue;
        }
        const std::size_t nodules = nodules_per_class[static_cast<std::size_t>(c)];
        if (nodules == 0)
            throw PipelineError(std::string("no training nodules for class ") +
                                to_string(static_cast<NoduleLabel>(c)));
        n[static_cast<std::size_t>(c)] = static_cast<int>(
            (static_cast<std::size_t>(config.target_samples_per_class) + nodules - 1) / nodules);
        if (n[static_cast<std::size_t>(c)] < 1) n[static_cast<std::size_t>(c)] = 1;
    }
    return n;
}

// Count-only assembly arithmetic: per-class store size = nodules * N_c * 16.
inline std::array<std::size_t, kNumClasses> assemble_counts(
    const std::array<std::size_t, kNumClasses>& nodules_per_class,
    const std::array<int, kNumClasses>& plane_counts) {
    std::array<std::size_t, kNumClasses> out{};
    for (int c = 0; c < kNumClasses; ++c)
        out[static_cast<std::size_t>(c)] =
            nodules_per_class[static_cast<std::size_t>(c)] *
            static_cast<std::size_t>(plane_counts[static_cast<std::size_t>(c)]) * 16u;
    return out;
}

inline std::array<std::size_t, kNumClasses> split_class_counts(const DatasetManifest& m, Split s) {
    std::array<std::size_t, kNumClasses> counts{};
    for (std::size_t i = 0; i < m.records.size(); ++i)
        if (m.splits[i] == s) ++counts[static_cast<std::size_t>(m.records[i].label)];
    return counts;
}

// Restrict a store to a subset of its scales (keeps patch order).
inline SampleStore slice_store(const SampleStore& store, const std::vector<double>& scales) {
    std::vector<std::size_t> scale_idx;
    for (double s : scales) {
        bool found = false;
        for (std::size_t i = 0; i < store.scales_mm.size(); ++i)
            if (store.scales_mm[i] == s) {
                scale_idx.push_back(i);
                found = true;
            }
        if (!found) throw PipelineError("store does not contain the requested scale");
    }
    SampleStore out;
    out.scales_mm = scales;
    out.samples.reserve(store.samples.size());
    for (const auto& sample : store.samples) {
        MultiScaleSample s;
        s.scales_mm = scales;
        s.label = sample.label;
        s.theta = sample.theta;
        s.tag = sample.tag;
        s.shift_mm = sample.shift_mm;
        for (std::size_t si : scale_idx)
            for (int v = 0; v < 3; ++v) s.patches.push_back(sample.patches[si * 3 + static_cast<std::size_t>(v)]);
        out.samples.push_back(std::move(s));
    }
    return out;
}

// Deterministic stride subsampling used by the desk-scale store cap.
inline std::vector<std::size_t> stride_subsample(std::size_t available, std::size_t keep) {
    std::vector<std::size_t> idx;
    if (keep == 0 || available == 0) return idx;
    keep = std::min(keep, available);
    idx.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) idx.push_back(i * available / keep);
    return idx;
}

// Assemble the training sample store: for every train nodule of class c,
// theta_schedule(N_c) angles x 16 augmented views, then the optional
// per-class cap.
inline SampleStore assemble_training_set(const DatasetManifest& manifest,
                                         const TrainConfig& config,
                                         const std::string& volume_root = "") {
    const auto nodule_counts = split_class_counts(manifest, Split::train);
    const auto plane_counts = derive_plane_counts(config, nodule_counts);
    for (int c = 0; c < kNumClasses; ++c)
        if (nodule_counts[static_cast<std::size_t>(c)] == 0)
            throw PipelineError(std::string("no training nodules for class ") +
                                to_string(static_cast<NoduleLabel>(c)));

    // per-class list of (record index, theta index, aug index) in canonical order
    struct Task {
        std::size_t record;
        int theta_idx;
        std::uint64_t extraction_seed;
    };
    std::array<std::vector<Task>, kNumClasses> tasks;
    const auto train_idx = manifest.indices_of(Split::train);
    std::array<std::size_t, kNumClasses> nodule_counter{};
    for (std::size_t ri : train_idx) {
        const int c = static_cast<int>(manifest.records[ri].label);
        const int n_angles = plane_counts[static_cast<std::size_t>(c)];
        const std::uint64_t nodule_ord = nodule_counter[static_cast<std::size_t>(c)]++;
        for (int t = 0; t < n_angles; ++t)
            tasks[static_cast<std::size_t>(c)].push_back(
                {ri, t,
                 derive_seed(config.seed, static_cast<std::uint64_t>(c), nodule_ord,
                             static_cast<std::uint64_t>(t))});
    }

    // which (task, aug) pairs survive the cap, per class
    SampleStore store;
    store.scales_mm = config.scales;
    std::vector<std::pair<Task, int>> selected; // (task, aug index)
    for (int c = 0; c < kNumClasses; ++c) {
        const auto& cls = tasks[static_cast<std::size_t>(c)];
        const std::size_t full = cls.size() * 16u;
        const std::size_t keep =
            config.max_store_per_class > 0
                ? std::min<std::size_t>(full, static_cast<std::size_t>(config.max_store_per_class))
                : full;
        for (std::size_t flat : stride_subsample(full, keep))
            selected.emplace_back(cls[flat / 16], static_cast<int>(flat % 16));
    }

    store.samples.resize(selected.size());
    const int workers = config.workers > 0 ? config.workers : omp_get_max_threads();

    // group selected entries by record so each volume is loaded once per task group
    std::map<std::size_t, std::vector<std::size_t>> by_record;
    for (std::size_t i = 0; i < selected.size(); ++i)
        by_record[selected[i].first.record].push_back(i);
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> groups(by_record.begin(),
                                                                         by_record.end());

    std::string first_error;
    #pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::ptrdiff_t g = 0; g < static_cast<std::ptrdiff_t>(groups.size()); ++g) {
        const auto& [record_idx, slots] = groups[static_cast<std::size_t>(g)];
        const NoduleRecord& rec = manifest.records[record_idx];
        try {
            const Volume vol = load_volume(volume_root.empty() ? rec.volume_id
                                                               : volume_root + "/" + rec.volume_id);
            // extract every needed (theta, aug) for this record
            std::map<int, std::vector<MultiScaleSample>> by_theta;
            for (std::size_t slot : slots) {
                const auto& [task, aug] = selected[slot];
                auto it = by_theta.find(task.theta_idx);
                if (it == by_theta.end()) {
                    const int n_angles =
                        plane_counts[static_cast<std::size_t>(static_cast<int>(rec.label))];
                    const double theta =
                        theta_schedule(n_angles)[static_cast<std::size_t>(task.theta_idx)];
                    it = by_theta
                             .emplace(task.theta_idx,
                                      augment_sample(vol, rec, theta, task.extraction_seed,
                                                     config.scales))
                             .first;
                }
                store.samples[slot] = it->second[static_cast<std::size_t>(aug)];
            }
        } catch (const std::exception& e) {
            #pragma omp critical
            if (first_error.empty()) first_error = e.what();
        }
    }
    if (!first_error.empty()) throw PipelineError("sample extraction failed: " + first_error);
    return store;
}

// ---------------------------------------------------------------------------
// Prediction with rotation fusion
// ---------------------------------------------------------------------------

struct Prediction {
    NoduleLabel label = NoduleLabel::solid;
    std::array<double, kNumClasses> probabilities{};
};

inline Prediction fuse_predictions(const std::vector<std::array<double, kNumClasses>>& per_angle) {
    if (per_angle.empty()) throw PipelineError("fuse_predictions: no probabilities");
    Prediction p;
    for (const auto& probs : per_angle)
        for (int k = 0; k < kNumClasses; ++k)
            p.probabilities[static_cast<std::size_t>(k)] += probs[static_cast<std::size_t>(k)];
    for (auto& v : p.probabilities) v /= static_cast<double>(per_angle.size());
    int best = 0;
    for (int k = 1; k < kNumClasses; ++k)
        if (p.probabilities[static_cast<std::size_t>(k)] >
            p.probabilities[static_cast<std::size_t>(best)])
            best = k;
    p.label = static_cast<NoduleLabel>(best);
    return p;
}

// Mean class probability over theta_schedule(N) un-augmented samples;
// argmax with lowest-index tie break. Accumulation is ordered by angle
// index, so the result does not depend on scheduling.
template <typename T>
Prediction predict_nodule(MultiScaleModel<T>& model, const Volume& volume,
                          const NoduleRecord& record, int n_angles) {
    if (n_angles < 1) throw PipelineError("predict_nodule: N must be >= 1");
    const auto thetas = theta_schedule(n_angles);
    std::vector<std::array<double, kNumClasses>> per_angle(thetas.size());

    #pragma omp parallel
    {
        ModelWorkspace<T> ws;
        #pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(thetas.size()); ++i) {
            const MultiScaleSample s =
                extract_sample(volume, record, thetas[static_cast<std::size_t>(i)],
                               model.scales_mm);
            const SampleView<T> view = to_view<T>(s);
            auto probs = forward(model, view, RunMode::eval, ws);
            for (int k = 0; k < kNumClasses; ++k)
                per_angle[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
                    static_cast<double>(probs[static_cast<std::size_t>(k)]);
        }
    }
    return fuse_predictions(per_angle);
}

// ---------------------------------------------------------------------------
// Split evaluation
// ---------------------------------------------------------------------------

struct EvaluationResult {
    ConfusionMatrix confusion{kNumClasses};
    std::vector<std::size_t> record_indices;
    std::vector<Prediction> predictions;                      // parallel to record_indices
    std::vector<std::pair<std::size_t, std::string>> errors;  // unreadable volumes etc.
};

template <typename T>
EvaluationResult evaluate_manifest(MultiScaleModel<T>& model, const DatasetManifest& manifest,
                                   Split split, int n_angles,
                                   const std::string& volume_root = "") {
    EvaluationResult result;
    result.record_indices = manifest.indices_of(split);
    if (result.record_indices.empty()) throw PipelineError("evaluation split is empty");
    result.predictions.resize(result.record_indices.size());
    std::vector<int> status(result.record_indices.size(), 0);
    std::vector<std::string> errmsg(result.record_indices.size());

    // Parallelism lives inside predict_nodule; records run sequentially to
    // bound memory (one volume resident at a time).
    for (std::size_t i = 0; i < result.record_indices.size(); ++i) {
        const NoduleRecord& rec = manifest.records[result.record_indices[i]];
        try {
            const Volume vol = load_volume(
                volume_root.empty() ? rec.volume_id : volume_root + "/" + rec.volume_id);
            result.predictions[i] = predict_nodule(model, vol, rec, n_angles);
        } catch (const std::exception& e) {
            status[i] = 1;
            errmsg[i] = e.what();
        }
    }
    for (std::size_t i = 0; i < result.record_indices.size(); ++i) {
        if (status[i]) {
            result.errors.emplace_back(result.record_indices[i], errmsg[i]);
            continue;
        }
        const NoduleRecord& rec = manifest.records[result.record_indices[i]];
        ++result.confusion.at(static_cast<int>(rec.label),
                              static_cast<int>(result.predictions[i].label));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochLog {
    int epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;
    std::array<double, kNumClasses> f_per_class{};
    double mean_f = 0.0;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    int best_epoch = -1;
    double best_mean_f = -1.0;
};

inline void save_train_log(const TrainLog& log, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw PipelineError("cannot open for writing: " + path);
    os << "# epoch,mean_loss,lr";
    for (int c = 0; c < kNumClasses; ++c) os << ",f_" << to_string(static_cast<NoduleLabel>(c));
    os << ",mean_f\n";
    os.precision(10);
    for (const auto& e : log.epochs) {
        os << e.epoch << ',' << e.mean_loss << ',' << e.lr;
        for (double f : e.f_per_class) os << ',' << f;
        os << ',' << e.mean_f << '\n';
    }
    os << "# best_epoch = " << log.best_epoch << "\n";
}

// Trains on the store; after every epoch predicts every validation nodule
// with N = validation_fusion_n and keeps the checkpoint with the highest
// mean F-measure across classes.
template <typename T>
TrainLog train(MultiScaleModel<T>& model, const SampleStore& store,
               const DatasetManifest& manifest, const TrainConfig& config,
               const std::string& volume_root = "") {
    if (store.samples.empty()) throw PipelineError("training store is empty");
    const auto val_idx = manifest.indices_of(Split::validation);
    if (val_idx.empty()) throw PipelineError("validation split is empty");

    // validation volumes stay resident across epochs
    std::vector<Volume> val_volumes;
    val_volumes.reserve(val_idx.size());
    for (std::size_t ri : val_idx)
        val_volumes.push_back(load_volume(volume_root.empty()
                                              ? manifest.records[ri].volume_id
                                              : volume_root + "/" + manifest.records[ri].volume_id));

    std::vector<SampleView<T>> views;
    views.reserve(store.samples.size());
    for (const auto& s : store.samples) views.push_back(to_view<T>(s));

    Trainer<T> trainer(model, config.weight_decay, config.workers);
    model.dropout_rate = config.dropout;

    TrainLog log;
    MultiScaleModel<T> best = model; // snapshot storage
    const std::size_t n = store.samples.size();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_at_epoch(config, epoch);

        // seeded shuffle, then fixed-size batches (final partial batch kept)
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t(0));
        Rng shuffle_rng(derive_seed(config.seed, 0xe70c5, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

        double loss_sum = 0.0;
        std::size_t pos = 0, counted = 0;
        while (pos < n) {
            const std::size_t take = std::min<std::size_t>(config.batch_size, n - pos);
            std::vector<TrainItem<T>> batch;
            batch.reserve(take);
            for (std::size_t i = 0; i < take; ++i) {
                const std::size_t si = order[pos + i];
                batch.push_back({&views[si], static_cast<int>(store.samples[si].label),
                                 derive_seed(config.seed, 0xd20u,
                                             static_cast<std::uint64_t>(epoch),
                                             static_cast<std::uint64_t>(pos + i))});
            }
            loss_sum += trainer.train_step(batch, lr) * static_cast<double>(take);
            pos += take;
            counted += take;
        }

        EpochLog el;
        el.epoch = epoch;
        el.mean_loss = loss_sum / static_cast<double>(counted);
        el.lr = lr;

        // validation with rotation fusion
        std::vector<int> truth, predicted;
        truth.reserve(val_idx.size());
        predicted.reserve(val_idx.size());
        for (std::size_t i = 0; i < val_idx.size(); ++i) {
            const NoduleRecord& rec = manifest.records[val_idx[i]];
            const Prediction p =
                predict_nodule(model, val_volumes[i], rec, config.validation_fusion_n);
            truth.push_back(static_cast<int>(rec.label));
            predicted.push_back(static_cast<int>(p.label));
        }
        const auto cm = confusion_from_labels(truth, predicted, kNumClasses);
        const auto report = classification_metrics(cm);
        for (int c = 0; c < kNumClasses; ++c)
            el.f_per_class[static_cast<std::size_t>(c)] =
                report.per_class[static_cast<std::size_t>(c)].f_measure;
        el.mean_f = report.mean_f;
        log.epochs.push_back(el);

        if (el.mean_f > log.best_mean_f) {
            log.best_mean_f = el.mean_f;
            log.best_epoch = epoch;
            best = model;
        }
    }

    model = best;
    return log;
}

} // namespace triplanar
