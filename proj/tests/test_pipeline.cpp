#include <catch2/catch.hpp>

#include <filesystem>

#include "triplanar/phantom.hpp"
#include "triplanar/pipeline.hpp"

using namespace triplanar;

namespace {

// Tiny on-disk phantom dataset shared by the pipeline tests.
struct TinyDataset {
    std::string root;
    DatasetManifest manifest;
};

TinyDataset make_tiny_dataset(int train_per_class, int val_per_class, int test_per_class,
                              std::uint64_t seed) {
    static int counter = 0;
    auto dir = std::filesystem::temp_directory_path() /
               ("triplanar_pipeline_" + std::to_string(counter++));
    std::filesystem::create_directories(dir);

    TinyDataset ds;
    ds.root = dir.string();
    std::uint64_t n = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        const int total = train_per_class + val_per_class + test_per_class;
        for (int i = 0; i < total; ++i) {
            PhantomSpec spec;
            spec.label = static_cast<NoduleLabel>(c);
            spec.seed = derive_seed(seed, static_cast<std::uint64_t>(c),
                                    static_cast<std::uint64_t>(i));
            spec.nodule_radius_mm = 4.0;
            spec.dims = {40, 40, 28};
            auto [vol, rec] = generate_phantom(spec);
            const std::string name = "v" + std::to_string(n++) + ".mha";
            save_volume(vol, ds.root + "/" + name);
            rec.volume_id = name;
            ds.manifest.records.push_back(rec);
            ds.manifest.splits.push_back(i < train_per_class ? Split::train
                                         : i < train_per_class + val_per_class
                                             ? Split::validation
                                             : Split::test);
        }
    }
    return ds;
}

} // namespace

TEST_CASE("published sample-count arithmetic, count-only mode") {
    // class order here: solid, calcified, part-solid, non-solid, perifissural, spiculated
    const std::array<std::size_t, kNumClasses> nodules{694, 233, 63, 152, 181, 29};
    const std::array<int, kNumClasses> planes{8, 22, 80, 33, 28, 167};
    const auto counts = assemble_counts(nodules, planes);
    CHECK(counts[0] == 88832u);
    CHECK(counts[1] == 82016u);
    CHECK(counts[2] == 80640u);
    CHECK(counts[3] == 80256u);
    CHECK(counts[4] == 81088u);
    CHECK(counts[5] == 77488u);
    std::size_t total = 0;
    for (auto c : counts) total += c;
    CHECK(total == 490320u);
}

TEST_CASE("plane count derivation targets at least the requested samples") {
    TrainConfig cfg;
    cfg.target_samples_per_class = 5000;
    const std::array<std::size_t, kNumClasses> nodules{694, 233, 63, 152, 181, 29};
    const auto n = derive_plane_counts(cfg, nodules);
    CHECK(n[0] == 8);
    CHECK(n[1] == 22);
    CHECK(n[2] == 80);
    CHECK(n[3] == 33);
    CHECK(n[4] == 28);
    for (int c = 0; c < kNumClasses; ++c)
        CHECK(static_cast<std::size_t>(n[static_cast<std::size_t>(c)]) *
                  nodules[static_cast<std::size_t>(c)] >=
              5000u);

    SECTION("explicit overrides win") {
        cfg.plane_counts = {8, 22, 80, 33, 28, 167};
        const auto m = derive_plane_counts(cfg, nodules);
        CHECK(m[5] == 167);
    }
    SECTION("zero nodules in a class is an error") {
        const std::array<std::size_t, kNumClasses> bad{10, 10, 0, 10, 10, 10};
        CHECK_THROWS_WITH(derive_plane_counts(cfg, bad), Catch::Contains("part-solid"));
    }
}

TEST_CASE("learning rate schedule is a pure function of the epoch") {
    TrainConfig cfg; // defaults: 1e-3, factor 3 every 50
    CHECK(lr_at_epoch(cfg, 0) == Approx(1e-3));
    CHECK(lr_at_epoch(cfg, 49) == Approx(1e-3));
    CHECK(lr_at_epoch(cfg, 50) == Approx(1e-3 / 3.0));
    CHECK(lr_at_epoch(cfg, 99) == Approx(1e-3 / 3.0));
    CHECK(lr_at_epoch(cfg, 100) == Approx(1e-3 / 9.0));
    CHECK(lr_at_epoch(cfg, 149) == Approx(1e-3 / 9.0));
}

TEST_CASE("stride subsampling") {
    CHECK(stride_subsample(10, 10) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(stride_subsample(16, 4) == std::vector<std::size_t>{0, 4, 8, 12});
    CHECK(stride_subsample(10, 3) == std::vector<std::size_t>{0, 3, 6});
    CHECK(stride_subsample(5, 100).size() == 5);
    CHECK(stride_subsample(100, 0).empty());
}

TEST_CASE("fusion is permutation invariant and degenerates to a single pass") {
    Rng rng(3);
    std::vector<std::array<double, kNumClasses>> per_angle;
    for (int i = 0; i < 30; ++i) {
        std::array<double, kNumClasses> p{};
        double s = 0;
        for (auto& v : p) s += (v = rng.uniform());
        for (auto& v : p) v /= s;
        per_angle.push_back(p);
    }
    const auto base = fuse_predictions(per_angle);

    SECTION("shuffled angle order, same output") {
        auto shuffled = per_angle;
        Rng shuffle_rng(9);
        for (std::size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[shuffle_rng.uniform_index(i)]);
        const auto out = fuse_predictions(shuffled);
        CHECK(out.label == base.label);
        for (int k = 0; k < kNumClasses; ++k)
            CHECK(std::abs(out.probabilities[static_cast<std::size_t>(k)] -
                           base.probabilities[static_cast<std::size_t>(k)]) <= 1e-12);
    }
    SECTION("N=1 fusion returns the single vector") {
        std::vector<std::array<double, kNumClasses>> one{per_angle[0]};
        const auto out = fuse_predictions(one);
        for (int k = 0; k < kNumClasses; ++k)
            CHECK(out.probabilities[static_cast<std::size_t>(k)] ==
                  per_angle[0][static_cast<std::size_t>(k)]);
    }
    SECTION("argmax ties break to the lowest index") {
        std::vector<std::array<double, kNumClasses>> tie{{0.3, 0.3, 0.1, 0.1, 0.1, 0.1}};
        CHECK(fuse_predictions(tie).label == NoduleLabel::solid);
    }
}

TEST_CASE("assemble_training_set on a tiny phantom dataset") {
    auto ds = make_tiny_dataset(2, 1, 0, 555);
    TrainConfig cfg;
    cfg.seed = 7;
    cfg.target_samples_per_class = 4; // N_c = ceil(4/2) = 2
    cfg.workers = 2;

    SECTION("store counts follow nodules x N x 16") {
        auto store = assemble_training_set(ds.manifest, cfg, ds.root);
        CHECK(store.samples.size() == 6u * 2u * 2u * 16u);
        std::array<std::size_t, kNumClasses> per_class{};
        for (const auto& s : store.samples) ++per_class[static_cast<std::size_t>(s.label)];
        for (int c = 0; c < kNumClasses; ++c) CHECK(per_class[static_cast<std::size_t>(c)] == 64u);
        // thetas come from theta_schedule(N_c = 2)
        for (const auto& s : store.samples)
            CHECK((s.theta == Approx(0.0).margin(1e-12) ||
                   s.theta == Approx(std::numbers::pi / 4.0).margin(1e-6)));
    }
    SECTION("per-class cap subsamples deterministically") {
        cfg.max_store_per_class = 10;
        auto store = assemble_training_set(ds.manifest, cfg, ds.root);
        CHECK(store.samples.size() == 60u);
        auto again = assemble_training_set(ds.manifest, cfg, ds.root);
        REQUIRE(again.samples.size() == store.samples.size());
        for (std::size_t i = 0; i < store.samples.size(); ++i)
            CHECK(store.samples[i].patches[0].pixels == again.samples[i].patches[0].pixels);
    }
    SECTION("missing class is an error") {
        DatasetManifest missing = ds.manifest;
        for (std::size_t i = 0; i < missing.records.size(); ++i)
            if (missing.records[i].label == NoduleLabel::spiculated)
                missing.splits[i] = Split::test;
        CHECK_THROWS_WITH(assemble_training_set(missing, cfg, ds.root),
                          Catch::Contains("spiculated"));
    }
}

TEST_CASE("predict_nodule fusion semantics") {
    auto ds = make_tiny_dataset(0, 0, 1, 777);
    auto model = build_model<float>({10.0, 20.0, 40.0}, 42);
    const auto& rec = ds.manifest.records[0];
    Volume vol = load_volume(ds.root + "/" + rec.volume_id);

    SECTION("N=1 equals a single forward pass at theta 0") {
        const auto fused = predict_nodule(model, vol, rec, 1);
        ModelWorkspace<float> ws;
        const auto sample = extract_sample(vol, rec, 0.0, model.scales_mm);
        const auto view = to_view<float>(sample);
        const auto probs = forward(model, view, RunMode::eval, ws);
        for (int k = 0; k < kNumClasses; ++k)
            CHECK(fused.probabilities[static_cast<std::size_t>(k)] ==
                  Approx(static_cast<double>(probs[static_cast<std::size_t>(k)])).margin(1e-12));
    }
    SECTION("deterministic across calls") {
        const auto a = predict_nodule(model, vol, rec, 5);
        const auto b = predict_nodule(model, vol, rec, 5);
        CHECK(a.label == b.label);
        for (int k = 0; k < kNumClasses; ++k)
            CHECK(a.probabilities[static_cast<std::size_t>(k)] ==
                  b.probabilities[static_cast<std::size_t>(k)]);
    }
    SECTION("N must be positive") {
        CHECK_THROWS_AS(predict_nodule(model, vol, rec, 0), PipelineError);
    }
}

TEST_CASE("evaluate_manifest conserves record counts") {
    auto ds = make_tiny_dataset(0, 0, 2, 999);
    auto model = build_model<float>({40.0}, 4);
    auto result = evaluate_manifest(model, ds.manifest, Split::test, 2, ds.root);
    CHECK(result.errors.empty());
    CHECK(result.confusion.total() == 12);
    for (int c = 0; c < kNumClasses; ++c) CHECK(result.confusion.row_sum(c) == 2);

    SECTION("unreadable volume is reported, evaluation continues") {
        DatasetManifest broken = ds.manifest;
        broken.records[0].volume_id = "missing.mha";
        auto r2 = evaluate_manifest(model, broken, Split::test, 2, ds.root);
        REQUIRE(r2.errors.size() == 1);
        CHECK(r2.errors[0].first == 0);
        CHECK(r2.confusion.total() == 11);
    }
    SECTION("empty split is an error") {
        CHECK_THROWS_AS(evaluate_manifest(model, ds.manifest, Split::train, 2, ds.root),
                        PipelineError);
    }
}

TEST_CASE("train loop: schedule, selection and bit-exact reproducibility") {
    auto ds = make_tiny_dataset(2, 1, 0, 1234);
    TrainConfig cfg;
    cfg.scales = {40.0};
    cfg.seed = 99;
    cfg.target_samples_per_class = 4;
    cfg.batch_size = 64;
    cfg.epochs = 2;
    cfg.validation_fusion_n = 2;
    cfg.workers = 2;
    auto store = assemble_training_set(ds.manifest, cfg, ds.root);

    auto m1 = build_model<float>(cfg.scales, cfg.seed);
    auto log1 = train(m1, store, ds.manifest, cfg, ds.root);
    REQUIRE(log1.epochs.size() == 2);
    CHECK(log1.best_epoch >= 0);
    CHECK(log1.best_mean_f == log1.epochs[static_cast<std::size_t>(log1.best_epoch)].mean_f);
    CHECK(log1.epochs[0].lr == Approx(1e-3));
    for (const auto& e : log1.epochs) {
        CHECK(e.mean_loss > 0.0);
        CHECK(e.mean_f >= 0.0);
    }
    // best checkpoint has the max mean F over epochs
    double max_f = -1;
    for (const auto& e : log1.epochs) max_f = std::max(max_f, e.mean_f);
    CHECK(log1.best_mean_f == max_f);

    SECTION("same seed and config reproduce the loss trace bit-exactly") {
        auto m2 = build_model<float>(cfg.scales, cfg.seed);
        auto log2 = train(m2, store, ds.manifest, cfg, ds.root);
        REQUIRE(log2.epochs.size() == log1.epochs.size());
        for (std::size_t e = 0; e < log1.epochs.size(); ++e) {
            CHECK(log1.epochs[e].mean_loss == log2.epochs[e].mean_loss);
            CHECK(log1.epochs[e].mean_f == log2.epochs[e].mean_f);
        }
        CHECK(m1.combiner_w.data == m2.combiner_w.data);
    }
}
