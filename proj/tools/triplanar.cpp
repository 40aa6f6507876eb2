// triplanar: phantom-scale nodule-type classification pipeline.
//
// Subcommands: phantom-gen, extract, train, predict, evaluate,
// baseline-svm, baseline-kmeans, embed, kappa. Every artifact-producing
// run writes a .run.txt echo of its resolved configuration; identical
// config + seed reproduces identical artifact bytes.

#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "triplanar/baselines.hpp"
#include "triplanar/kmeans_features.hpp"
#include "triplanar/manifest.hpp"
#include "triplanar/metrics.hpp"
#include "triplanar/model.hpp"
#include "triplanar/phantom.hpp"
#include "triplanar/pipeline.hpp"
#include "triplanar/report.hpp"
#include "triplanar/sample_store.hpp"
#include "triplanar/svm.hpp"
#include "triplanar/tsne.hpp"

namespace fs = std::filesystem;
using namespace triplanar;

namespace {

void write_run_config(const std::string& artifact_path,
                      const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream os(artifact_path + ".run.txt");
    for (const auto& [k, v] : entries) os << k << '=' << v << '\n';
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

std::vector<double> parse_scales(const std::string& csv) {
    std::vector<double> scales;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) scales.push_back(std::stod(item));
    return scales;
}

Split split_of(const std::string& name) {
    Split s;
    if (!parse_split(name, s)) throw PipelineError("unknown split '" + name + "'");
    return s;
}

void emit_reports(const std::string& report_path, const std::string& machine_path,
                  const ConfusionMatrix& cm, const ClassificationReport& r,
                  std::size_t error_count) {
    std::ofstream human(report_path);
    if (!human) throw PipelineError("cannot open for writing: " + report_path);
    human << human_report(cm, r, error_count);
    std::ofstream machine(machine_path);
    if (!machine) throw PipelineError("cannot open for writing: " + machine_path);
    machine << machine_report(cm, r, error_count);
}

// Patch index of the baseline scale inside a store sample.
std::size_t baseline_patch_index(const SampleStore& store) {
    for (std::size_t s = 0; s < store.scales_mm.size(); ++s)
        if (store.scales_mm[s] == kBaselineScaleMm) return s * 3; // view 0 of that scale
    throw PipelineError("sample store lacks the 40 mm baseline scale");
}

// ---------------------------------------------------------------------------
// phantom-gen
// ---------------------------------------------------------------------------

struct PhantomGenArgs {
    std::string out_dir;
    std::uint64_t seed = 0;
    int per_class = 0;
    int train = 0, validation = 0, test = 0;
    double radius_min = 3.5, radius_max = 8.0;
    double clutter = 0.15;
    int workers = 0;
};

int run_phantom_gen(const PhantomGenArgs& a) {
    int n_train = a.train, n_val = a.validation, n_test = a.test;
    if (a.per_class > 0 && n_train + n_val + n_test == 0) n_train = a.per_class;
    const int per_class = n_train + n_val + n_test;
    if (per_class <= 0) throw PipelineError("phantom-gen: nothing to generate");

    fs::create_directories(fs::path(a.out_dir) / "vols");
    DatasetManifest manifest;
    manifest.records.resize(static_cast<std::size_t>(per_class) * kNumClasses);
    manifest.splits.resize(manifest.records.size());

    const int workers = a.workers > 0 ? a.workers : omp_get_max_threads();
    std::string first_error;
    #pragma omp parallel for collapse(2) schedule(dynamic) num_threads(workers)
    for (int c = 0; c < kNumClasses; ++c) {
        for (int i = 0; i < per_class; ++i) {
            try {
                PhantomSpec spec;
                spec.label = static_cast<NoduleLabel>(c);
                spec.seed = derive_seed(a.seed, static_cast<std::uint64_t>(c),
                                        static_cast<std::uint64_t>(i));
                spec.clutter_density = a.clutter;
                Rng radius_rng(derive_seed(a.seed, 0xadu, static_cast<std::uint64_t>(c),
                                           static_cast<std::uint64_t>(i)));
                spec.nodule_radius_mm = radius_rng.uniform(a.radius_min, a.radius_max);
                auto [vol, rec] = generate_phantom(spec);
                const std::string name = "vols/phantom_" +
                                         std::string(to_string(spec.label)) + "_" +
                                         std::to_string(i) + ".mha";
                save_volume(vol, a.out_dir + "/" + name);
                rec.volume_id = name;
                const std::size_t slot =
                    static_cast<std::size_t>(c) * per_class + static_cast<std::size_t>(i);
                manifest.records[slot] = rec;
                manifest.splits[slot] = i < n_train           ? Split::train
                                        : i < n_train + n_val ? Split::validation
                                                              : Split::test;
            } catch (const std::exception& e) {
                #pragma omp critical
                if (first_error.empty()) first_error = e.what();
            }
        }
    }
    if (!first_error.empty()) throw PipelineError("phantom generation failed: " + first_error);

    const std::string manifest_path = a.out_dir + "/manifest.csv";
    save_manifest(manifest, manifest_path);
    write_run_config(manifest_path, {{"command", "phantom-gen"},
                                     {"seed", std::to_string(a.seed)},
                                     {"train", std::to_string(n_train)},
                                     {"validation", std::to_string(n_val)},
                                     {"test", std::to_string(n_test)},
                                     {"radius_min", fmt(a.radius_min)},
                                     {"radius_max", fmt(a.radius_max)},
                                     {"clutter", fmt(a.clutter)}});
    std::cout << "wrote " << manifest.records.size() << " phantom volumes and " << manifest_path
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

struct ExtractArgs {
    std::string manifest, volumes, out;
    std::uint64_t seed = 0;
    std::string scales = "10,20,40";
    int target = 5000;
    int cap = 0;
    std::vector<int> plane_counts;
    int workers = 0;
};

int run_extract(const ExtractArgs& a) {
    TrainConfig cfg;
    cfg.scales = parse_scales(a.scales);
    cfg.seed = a.seed;
    cfg.target_samples_per_class = a.target;
    cfg.max_store_per_class = a.cap;
    cfg.workers = a.workers;
    if (!a.plane_counts.empty()) {
        if (a.plane_counts.size() != kNumClasses)
            throw PipelineError("--plane-counts needs exactly 6 values");
        for (int c = 0; c < kNumClasses; ++c)
            cfg.plane_counts[static_cast<std::size_t>(c)] =
                a.plane_counts[static_cast<std::size_t>(c)];
    }
    const auto manifest = parse_manifest(a.manifest);
    if (manifest.dropped_small > 0)
        std::cout << "dropped " << manifest.dropped_small << " records below " << kMinDiameterMm
                  << " mm\n";
    const SampleStore store = assemble_training_set(manifest, cfg, a.volumes);
    save_store(store, a.out);
    write_run_config(a.out, {{"command", "extract"},
                             {"manifest", a.manifest},
                             {"scales", a.scales},
                             {"seed", std::to_string(a.seed)},
                             {"target", std::to_string(a.target)},
                             {"cap", std::to_string(a.cap)}});
    std::cout << "wrote " << store.samples.size() << " samples to " << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string manifest, volumes, store, out, log;
    std::uint64_t seed = 0;
    std::string scales = "10,20,40";
    std::string profile = "full";
    int epochs = -1;
    int batch = -1;
    double lr = -1;
    int val_fusion = -1;
    double dropout = -1;
    double weight_decay = -1;
    int workers = 0;
};

int run_train(const TrainArgs& a) {
    TrainConfig cfg = a.profile == "desk" ? TrainConfig::desk_profile() : TrainConfig{};
    cfg.scales = parse_scales(a.scales);
    cfg.seed = a.seed;
    cfg.workers = a.workers;
    if (a.epochs >= 0) cfg.epochs = a.epochs;
    if (a.batch > 0) cfg.batch_size = a.batch;
    if (a.lr > 0) cfg.initial_lr = a.lr;
    if (a.val_fusion > 0) cfg.validation_fusion_n = a.val_fusion;
    if (a.dropout >= 0) cfg.dropout = a.dropout;
    if (a.weight_decay >= 0) cfg.weight_decay = a.weight_decay;

    const auto manifest = parse_manifest(a.manifest);
    const SampleStore store = load_store(a.store);
    if (store.scales_mm != cfg.scales)
        throw PipelineError("sample store scales do not match --scales");

    auto model = build_model<float>(cfg.scales, cfg.seed);
    const TrainLog log = train(model, store, manifest, cfg, a.volumes);

    CheckpointMeta meta;
    meta.epoch = log.best_epoch;
    meta.seed = cfg.seed;
    meta.validation_mean_f = log.best_mean_f;
    save_checkpoint(model, a.out, meta);
    const std::string log_path = a.log.empty() ? a.out + ".log.csv" : a.log;
    save_train_log(log, log_path);
    write_run_config(a.out, {{"command", "train"},
                             {"manifest", a.manifest},
                             {"store", a.store},
                             {"scales", a.scales},
                             {"profile", a.profile},
                             {"seed", std::to_string(cfg.seed)},
                             {"epochs", std::to_string(cfg.epochs)},
                             {"batch", std::to_string(cfg.batch_size)},
                             {"lr", fmt(cfg.initial_lr)},
                             {"val_fusion", std::to_string(cfg.validation_fusion_n)},
                             {"dropout", fmt(cfg.dropout)},
                             {"weight_decay", fmt(cfg.weight_decay)},
                             {"workers", std::to_string(cfg.workers)}});
    std::cout << "best epoch " << log.best_epoch << " with validation mean F " << log.best_mean_f
              << "; checkpoint " << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// predict / evaluate
// ---------------------------------------------------------------------------

struct PredictArgs {
    std::string model, manifest, volumes, out;
    std::string split = "test";
    int n = 30;
};

int run_predict(const PredictArgs& a) {
    auto model = load_checkpoint<float>(a.model);
    const auto manifest = parse_manifest(a.manifest);
    const auto result = evaluate_manifest(model, manifest, split_of(a.split), a.n, a.volumes);

    std::ofstream os(a.out);
    if (!os) throw PipelineError("cannot open for writing: " + a.out);
    os << "# volume_id,reference,predicted";
    for (int k = 0; k < kNumClasses; ++k) os << ",p_" << class_token(k);
    os << '\n';
    os.precision(10);
    for (std::size_t i = 0; i < result.record_indices.size(); ++i) {
        const auto& rec = manifest.records[result.record_indices[i]];
        os << rec.volume_id << ',' << to_string(rec.label) << ','
           << to_string(result.predictions[i].label);
        for (double p : result.predictions[i].probabilities) os << ',' << p;
        os << '\n';
    }
    for (const auto& [idx, msg] : result.errors)
        std::cerr << "record " << manifest.records[idx].volume_id << ": " << msg << "\n";
    write_run_config(a.out, {{"command", "predict"},
                             {"model", a.model},
                             {"manifest", a.manifest},
                             {"split", a.split},
                             {"n", std::to_string(a.n)}});
    std::cout << "wrote per-nodule predictions to " << a.out << "\n";
    return result.errors.empty() ? 0 : 2;
}

struct EvaluateArgs {
    std::string model, manifest, volumes, report, machine;
    std::string split = "test";
    int n = 30;
};

int run_evaluate(const EvaluateArgs& a) {
    auto model = load_checkpoint<float>(a.model);
    const auto manifest = parse_manifest(a.manifest);
    const auto result = evaluate_manifest(model, manifest, split_of(a.split), a.n, a.volumes);
    const auto report = classification_metrics(result.confusion);
    const std::string machine_path = a.machine.empty() ? a.report + ".kv" : a.machine;
    emit_reports(a.report, machine_path, result.confusion, report, result.errors.size());
    for (const auto& [idx, msg] : result.errors)
        std::cerr << "record " << manifest.records[idx].volume_id << ": " << msg << "\n";
    write_run_config(a.report, {{"command", "evaluate"},
                                {"model", a.model},
                                {"manifest", a.manifest},
                                {"split", a.split},
                                {"n", std::to_string(a.n)}});
    std::cout << "accuracy " << report.accuracy << ", mean F " << report.mean_f << "; report "
              << a.report << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// baselines
// ---------------------------------------------------------------------------

struct BaselineSvmArgs {
    std::string manifest, volumes, store, out, report, machine;
    std::string split = "test";
    int n = 30;
    double C = 1.0;
    std::uint64_t seed = 0;
};

int run_baseline_svm(const BaselineSvmArgs& a) {
    const auto manifest = parse_manifest(a.manifest);
    const SampleStore store = load_store(a.store);
    const std::size_t pi = baseline_patch_index(store);

    std::vector<std::vector<float>> features;
    std::vector<int> labels;
    features.reserve(store.samples.size());
    for (const auto& s : store.samples) {
        features.push_back(intensity_features(s.patches[pi]));
        labels.push_back(static_cast<int>(s.label));
    }
    SvmConfig cfg;
    cfg.C = a.C;
    cfg.seed = a.seed;
    const auto model = svm_train(features, labels, kNumClasses, cfg);
    save_svm(model, a.out);

    // majority-vote evaluation on the requested split
    const auto idx = manifest.indices_of(split_of(a.split));
    if (idx.empty()) throw PipelineError("evaluation split is empty");
    ConfusionMatrix cm(kNumClasses);
    for (std::size_t i : idx) {
        const auto& rec = manifest.records[i];
        const Volume vol =
            load_volume(a.volumes.empty() ? rec.volume_id : a.volumes + "/" + rec.volume_id);
        const int pred = svm_predict_vote(model, vol, rec, intensity_features, a.n);
        ++cm.at(static_cast<int>(rec.label), pred);
    }
    const auto report = classification_metrics(cm);
    const std::string machine_path = a.machine.empty() ? a.report + ".kv" : a.machine;
    emit_reports(a.report, machine_path, cm, report, 0);
    write_run_config(a.out, {{"command", "baseline-svm"},
                             {"manifest", a.manifest},
                             {"store", a.store},
                             {"split", a.split},
                             {"n", std::to_string(a.n)},
                             {"C", fmt(a.C)},
                             {"seed", std::to_string(a.seed)}});
    std::cout << "intensity-SVM accuracy " << report.accuracy << "; report " << a.report << "\n";
    return 0;
}

struct BaselineKmeansArgs {
    std::string manifest, volumes, store, codebook_out, svm_out, report, machine;
    std::string split = "test";
    int n = 30;
    int centroids = 1600;
    std::size_t windows = 100000;
    double C = 1.0;
    std::uint64_t seed = 0;
};

int run_baseline_kmeans(const BaselineKmeansArgs& a) {
    const auto manifest = parse_manifest(a.manifest);
    const SampleStore store = load_store(a.store);
    const std::size_t pi = baseline_patch_index(store);

    std::vector<const Patch*> patches;
    patches.reserve(store.samples.size());
    for (const auto& s : store.samples) patches.push_back(&s.patches[pi]);

    KmeansConfig kcfg;
    kcfg.n_centroids = a.centroids;
    kcfg.codebook_windows = a.windows;
    kcfg.seed = a.seed;
    const auto codebook = kmeans_learn_codebook(patches, kcfg);
    save_codebook(codebook, a.codebook_out);

    std::vector<std::vector<float>> features;
    std::vector<int> labels;
    features.resize(store.samples.size());
    labels.resize(store.samples.size());
    #pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(store.samples.size()); ++i) {
        features[static_cast<std::size_t>(i)] =
            kmeans_encode(codebook, store.samples[static_cast<std::size_t>(i)].patches[pi]);
        labels[static_cast<std::size_t>(i)] =
            static_cast<int>(store.samples[static_cast<std::size_t>(i)].label);
    }
    SvmConfig scfg;
    scfg.C = a.C;
    scfg.seed = a.seed;
    const auto model = svm_train(features, labels, kNumClasses, scfg);
    save_svm(model, a.svm_out);

    const auto encode = [&](const Patch& p) { return kmeans_encode(codebook, p); };
    const auto idx = manifest.indices_of(split_of(a.split));
    if (idx.empty()) throw PipelineError("evaluation split is empty");
    ConfusionMatrix cm(kNumClasses);
    for (std::size_t i : idx) {
        const auto& rec = manifest.records[i];
        const Volume vol =
            load_volume(a.volumes.empty() ? rec.volume_id : a.volumes + "/" + rec.volume_id);
        const int pred = svm_predict_vote(model, vol, rec, encode, a.n);
        ++cm.at(static_cast<int>(rec.label), pred);
    }
    const auto report = classification_metrics(cm);
    const std::string machine_path = a.machine.empty() ? a.report + ".kv" : a.machine;
    emit_reports(a.report, machine_path, cm, report, 0);
    write_run_config(a.svm_out, {{"command", "baseline-kmeans"},
                                 {"manifest", a.manifest},
                                 {"store", a.store},
                                 {"split", a.split},
                                 {"n", std::to_string(a.n)},
                                 {"centroids", std::to_string(a.centroids)},
                                 {"windows", std::to_string(a.windows)},
                                 {"C", fmt(a.C)},
                                 {"seed", std::to_string(a.seed)}});
    std::cout << "unsupervised-feature SVM accuracy " << report.accuracy << "; report "
              << a.report << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// embed
// ---------------------------------------------------------------------------

struct EmbedArgs {
    std::string model, manifest, volumes, out, svg;
    std::string split = "test";
    double perplexity = 30.0;
    int iterations = 1000;
    std::uint64_t seed = 0;
};

int run_embed(const EmbedArgs& a) {
    auto model = load_checkpoint<float>(a.model);
    const auto manifest = parse_manifest(a.manifest);
    const auto idx = manifest.indices_of(split_of(a.split));
    if (idx.empty()) throw PipelineError("embedding split is empty");

    // one 256-dim embedding per nodule from the canonical (theta = 0) views
    std::vector<double> features(idx.size() * kStreamWidth);
    std::string first_error;
    #pragma omp parallel
    {
        ModelWorkspace<float> ws;
        #pragma omp for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(idx.size()); ++i) {
            try {
                const auto& rec = manifest.records[idx[static_cast<std::size_t>(i)]];
                const Volume vol = load_volume(
                    a.volumes.empty() ? rec.volume_id : a.volumes + "/" + rec.volume_id);
                const auto sample = extract_sample(vol, rec, 0.0, model.scales_mm);
                const auto view = to_view<float>(sample);
                const auto e = embed(model, view, ws);
                for (int d = 0; d < kStreamWidth; ++d)
                    features[static_cast<std::size_t>(i) * kStreamWidth +
                             static_cast<std::size_t>(d)] = static_cast<double>(
                        e[static_cast<std::size_t>(d)]);
            } catch (const std::exception& ex) {
                #pragma omp critical
                if (first_error.empty()) first_error = ex.what();
            }
        }
    }
    if (!first_error.empty()) throw PipelineError("embedding failed: " + first_error);

    TsneConfig tcfg;
    tcfg.perplexity = a.perplexity;
    tcfg.iterations = a.iterations;
    tcfg.seed = a.seed;
    const auto result = tsne_embed(features, idx.size(), kStreamWidth, tcfg);

    std::vector<EmbeddingPoint> points(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        points[i].id = manifest.records[idx[i]].volume_id;
        points[i].x = result.points[i][0];
        points[i].y = result.points[i][1];
        points[i].label = static_cast<int>(manifest.records[idx[i]].label);
    }
    save_embedding_csv(points, a.out);
    if (!a.svg.empty()) save_embedding_svg(points, a.svg);
    write_run_config(a.out, {{"command", "embed"},
                             {"model", a.model},
                             {"manifest", a.manifest},
                             {"split", a.split},
                             {"perplexity", fmt(a.perplexity)},
                             {"iterations", std::to_string(a.iterations)},
                             {"seed", std::to_string(a.seed)}});
    std::cout << "embedded " << points.size() << " nodules to " << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// kappa
// ---------------------------------------------------------------------------

struct KappaArgs {
    std::string a_path, b_path, report, machine;
};

int run_kappa(const KappaArgs& a) {
    const auto la = read_observer_labels(a.a_path);
    auto lb_aligned = ingest_observer_labels(a.b_path, la.ids);
    bool extra = la.has_not_a_nodule;
    for (int l : lb_aligned) extra = extra || l == kNotANodule;
    const int classes = extra ? kNumClasses + 1 : kNumClasses;
    const auto cm = confusion_from_labels(la.labels, lb_aligned, classes);
    const auto k = cohen_kappa_ci(cm);

    std::ofstream human(a.report);
    if (!human) throw PipelineError("cannot open for writing: " + a.report);
    human << human_kappa_report(k, cm.total(), classes);
    const std::string machine_path = a.machine.empty() ? a.report + ".kv" : a.machine;
    std::ofstream machine(machine_path);
    machine << machine_kappa_report(k, cm.total(), classes);
    std::cout << "kappa " << k.kappa << " (" << k.ci_low << " -- " << k.ci_high << "); report "
              << a.report << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"triplanar nodule-type classification pipeline"};
    app.require_subcommand(1);
    app.set_config("--config");

    int workers = 0;
    app.add_option("--workers", workers, "cap worker threads (0 = all cores)");

    PhantomGenArgs pg;
    auto* sc_pg = app.add_subcommand("phantom-gen", "generate a class-balanced phantom dataset");
    sc_pg->add_option("--out", pg.out_dir, "output directory")->required();
    sc_pg->add_option("--seed", pg.seed, "generation seed")->required();
    sc_pg->add_option("--per-class", pg.per_class, "volumes per class (all assigned to train)");
    sc_pg->add_option("--train", pg.train, "training volumes per class");
    sc_pg->add_option("--val", pg.validation, "validation volumes per class");
    sc_pg->add_option("--test", pg.test, "test volumes per class");
    sc_pg->add_option("--radius-min", pg.radius_min, "minimum nodule radius, mm");
    sc_pg->add_option("--radius-max", pg.radius_max, "maximum nodule radius, mm");
    sc_pg->add_option("--clutter", pg.clutter, "vessel clutter density per cm^3");

    ExtractArgs ex;
    auto* sc_ex = app.add_subcommand("extract", "extract a training sample store");
    sc_ex->add_option("--manifest", ex.manifest, "dataset manifest")->required();
    sc_ex->add_option("--volumes", ex.volumes, "volume root directory");
    sc_ex->add_option("--out", ex.out, "output sample store")->required();
    sc_ex->add_option("--seed", ex.seed, "extraction seed")->required();
    sc_ex->add_option("--scales", ex.scales, "patch scales in mm, comma separated");
    sc_ex->add_option("--target", ex.target, "pre-augmentation samples per class");
    sc_ex->add_option("--cap", ex.cap, "max stored samples per class (0 = unlimited)");
    sc_ex->add_option("--plane-counts", ex.plane_counts,
                      "explicit per-class plane counts (6 values)");

    TrainArgs tr;
    auto* sc_tr = app.add_subcommand("train", "train the multi-stream multi-scale network");
    sc_tr->add_option("--manifest", tr.manifest, "dataset manifest")->required();
    sc_tr->add_option("--volumes", tr.volumes, "volume root directory");
    sc_tr->add_option("--store", tr.store, "training sample store")->required();
    sc_tr->add_option("--out", tr.out, "output checkpoint")->required();
    sc_tr->add_option("--log", tr.log, "training log path (default <out>.log.csv)");
    sc_tr->add_option("--seed", tr.seed, "training seed")->required();
    sc_tr->add_option("--scales", tr.scales, "patch scales in mm, comma separated");
    sc_tr->add_option("--profile", tr.profile, "config preset: full or desk")
        ->check(CLI::IsMember({"full", "desk"}));
    sc_tr->add_option("--epochs", tr.epochs, "training epochs");
    sc_tr->add_option("--batch", tr.batch, "batch size");
    sc_tr->add_option("--lr", tr.lr, "initial learning rate");
    sc_tr->add_option("--val-fusion", tr.val_fusion, "validation fusion angles N");
    sc_tr->add_option("--dropout", tr.dropout, "combiner dropout rate");
    sc_tr->add_option("--weight-decay", tr.weight_decay, "L2 weight decay");

    PredictArgs pr;
    auto* sc_pr = app.add_subcommand("predict", "per-nodule fused probabilities");
    sc_pr->add_option("--model", pr.model, "checkpoint")->required();
    sc_pr->add_option("--manifest", pr.manifest, "dataset manifest")->required();
    sc_pr->add_option("--volumes", pr.volumes, "volume root directory");
    sc_pr->add_option("--out", pr.out, "output CSV")->required();
    sc_pr->add_option("--split", pr.split, "split to predict");
    sc_pr->add_option("--n", pr.n, "fusion angles N");

    EvaluateArgs ev;
    auto* sc_ev = app.add_subcommand("evaluate", "confusion matrix and metrics report");
    sc_ev->add_option("--model", ev.model, "checkpoint")->required();
    sc_ev->add_option("--manifest", ev.manifest, "dataset manifest")->required();
    sc_ev->add_option("--volumes", ev.volumes, "volume root directory");
    sc_ev->add_option("--report", ev.report, "human-readable report path")->required();
    sc_ev->add_option("--machine", ev.machine,
                      "machine-readable report path (default <report>.kv)");
    sc_ev->add_option("--split", ev.split, "split to evaluate");
    sc_ev->add_option("--n", ev.n, "fusion angles N");

    BaselineSvmArgs bs;
    auto* sc_bs = app.add_subcommand("baseline-svm", "intensity features + linear SVM baseline");
    sc_bs->add_option("--manifest", bs.manifest, "dataset manifest")->required();
    sc_bs->add_option("--volumes", bs.volumes, "volume root directory");
    sc_bs->add_option("--store", bs.store, "training sample store")->required();
    sc_bs->add_option("--out", bs.out, "output SVM model")->required();
    sc_bs->add_option("--report", bs.report, "report path")->required();
    sc_bs->add_option("--machine", bs.machine, "machine-readable report path");
    sc_bs->add_option("--split", bs.split, "split to evaluate");
    sc_bs->add_option("--n", bs.n, "patches per nodule for the vote");
    sc_bs->add_option("--C", bs.C, "SVM regularization C");
    sc_bs->add_option("--seed", bs.seed, "solver shuffle seed")->required();

    BaselineKmeansArgs bk;
    auto* sc_bk =
        app.add_subcommand("baseline-kmeans", "unsupervised K-means features + SVM baseline");
    sc_bk->add_option("--manifest", bk.manifest, "dataset manifest")->required();
    sc_bk->add_option("--volumes", bk.volumes, "volume root directory");
    sc_bk->add_option("--store", bk.store, "training sample store")->required();
    sc_bk->add_option("--codebook-out", bk.codebook_out, "output codebook")->required();
    sc_bk->add_option("--svm-out", bk.svm_out, "output SVM model")->required();
    sc_bk->add_option("--report", bk.report, "report path")->required();
    sc_bk->add_option("--machine", bk.machine, "machine-readable report path");
    sc_bk->add_option("--split", bk.split, "split to evaluate");
    sc_bk->add_option("--n", bk.n, "patches per nodule for the vote");
    sc_bk->add_option("--centroids", bk.centroids, "codebook size");
    sc_bk->add_option("--windows", bk.windows, "windows used to learn the codebook");
    sc_bk->add_option("--C", bk.C, "SVM regularization C");
    sc_bk->add_option("--seed", bk.seed, "codebook/solver seed")->required();

    EmbedArgs em;
    auto* sc_em = app.add_subcommand("embed", "t-SNE projection of nodule embeddings");
    sc_em->add_option("--model", em.model, "checkpoint")->required();
    sc_em->add_option("--manifest", em.manifest, "dataset manifest")->required();
    sc_em->add_option("--volumes", em.volumes, "volume root directory");
    sc_em->add_option("--out", em.out, "output CSV")->required();
    sc_em->add_option("--svg", em.svg, "output SVG scatter");
    sc_em->add_option("--split", em.split, "split to embed");
    sc_em->add_option("--perplexity", em.perplexity, "t-SNE perplexity");
    sc_em->add_option("--iters", em.iterations, "t-SNE iterations");
    sc_em->add_option("--seed", em.seed, "t-SNE seed")->required();

    KappaArgs ka;
    auto* sc_ka = app.add_subcommand("kappa", "agreement report between two label files");
    sc_ka->add_option("--a", ka.a_path, "first label file")->required();
    sc_ka->add_option("--b", ka.b_path, "second label file")->required();
    sc_ka->add_option("--report", ka.report, "report path")->required();
    sc_ka->add_option("--machine", ka.machine, "machine-readable report path");

    CLI11_PARSE(app, argc, argv);

    if (workers > 0) omp_set_num_threads(workers);
    try {
        if (sc_pg->parsed()) {
            pg.workers = workers;
            return run_phantom_gen(pg);
        }
        if (sc_ex->parsed()) {
            ex.workers = workers;
            return run_extract(ex);
        }
        if (sc_tr->parsed()) {
            tr.workers = workers;
            return run_train(tr);
        }
        if (sc_pr->parsed()) return run_predict(pr);
        if (sc_ev->parsed()) return run_evaluate(ev);
        if (sc_bs->parsed()) return run_baseline_svm(bs);
        if (sc_bk->parsed()) return run_baseline_kmeans(bk);
        if (sc_em->parsed()) return run_embed(em);
        if (sc_ka->parsed()) return run_kappa(ka);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand given\n";
    return 1;
}
