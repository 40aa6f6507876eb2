#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>

#include "triplanar/model.hpp"

using namespace triplanar;

namespace {

template <typename T>
SampleView<T> random_view(int n_scales, int side, std::uint64_t seed) {
    Rng rng(seed);
    SampleView<T> v;
    v.side = side;
    for (int p = 0; p < n_scales * 3; ++p) {
        std::vector<T> plane(static_cast<std::size_t>(side) * side);
        for (auto& x : plane) x = static_cast<T>(rng.uniform());
        v.add_owned(std::move(plane));
    }
    return v;
}

std::filesystem::path tmp_dir() {
    auto p = std::filesystem::temp_directory_path() / "triplanar_model_tests";
    std::filesystem::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("build_model geometry") {
    SECTION("three scales give a 2304-input combiner") {
        auto m = build_model<float>({10, 20, 40}, 1);
        CHECK(m.combiner_w.shape == std::vector<int>{256, 2304});
        CHECK(m.head_w.shape == std::vector<int>{6, 256});
        CHECK(m.streams.size() == 3);
        CHECK(m.streams[0].fc_w.shape == std::vector<int>{256, 8192});
    }
    SECTION("one scale gives a 768-input combiner") {
        auto m = build_model<float>({40}, 1);
        CHECK(m.combiner_w.shape == std::vector<int>{256, 768});
    }
    SECTION("same seed, identical parameters") {
        auto a = build_model<float>({10, 20, 40}, 7);
        auto b = build_model<float>({10, 20, 40}, 7);
        CHECK(a.combiner_w.data == b.combiner_w.data);
        CHECK(a.streams[2].conv3_w.data == b.streams[2].conv3_w.data);
        auto c = build_model<float>({10, 20, 40}, 8);
        CHECK(a.combiner_w.data != c.combiner_w.data);
    }
    SECTION("bad scale lists rejected") {
        CHECK_THROWS_AS(build_model<float>({}, 1), ModelError);
        CHECK_THROWS_AS(build_model<float>({15.0}, 1), ModelError);
        CHECK_THROWS_AS(build_model<float>({10, 20, 40, 40}, 1), ModelError);
    }
}

TEST_CASE("forward pass contracts") {
    auto m = build_model<float>({10, 20, 40}, 3);
    ModelWorkspace<float> ws;
    auto view = random_view<float>(3, 64, 5);

    SECTION("probabilities sum to 1") {
        auto probs = forward(m, view, RunMode::eval, ws);
        double s = 0;
        for (auto p : probs) {
            CHECK(p >= 0.0f);
            s += p;
        }
        CHECK(s == Approx(1.0).margin(1e-6));
    }
    SECTION("view order within a scale matters") {
        auto base = forward(m, view, RunMode::eval, ws);
        auto swapped = view;
        std::swap(swapped.planes[0], swapped.planes[1]);
        auto out = forward(m, swapped, RunMode::eval, ws);
        bool any_diff = false;
        for (int i = 0; i < kNumClasses; ++i)
            if (base[static_cast<std::size_t>(i)] != out[static_cast<std::size_t>(i)])
                any_diff = true;
        CHECK(any_diff);
    }
    SECTION("weight sharing: identical patches give identical stream outputs") {
        SampleView<float> same;
        same.side = 64;
        for (int p = 0; p < 9; ++p) same.planes.push_back(view.planes[0]);
        forward(m, same, RunMode::eval, ws);
        for (int scale = 0; scale < 3; ++scale) {
            const float* s0 = ws.concat.data() + (scale * 3 + 0) * kStreamWidth;
            const float* s1 = ws.concat.data() + (scale * 3 + 1) * kStreamWidth;
            const float* s2 = ws.concat.data() + (scale * 3 + 2) * kStreamWidth;
            for (int i = 0; i < kStreamWidth; ++i) {
                CHECK(s0[i] == s1[i]);
                CHECK(s0[i] == s2[i]);
            }
        }
    }
    SECTION("sample/model mismatch rejected") {
        auto one = random_view<float>(1, 64, 6);
        CHECK_THROWS_AS(forward(m, one, RunMode::eval, ws), ModelError);
    }
}

TEST_CASE("loss at initialization is near ln 6") {
    auto m = build_model<float>({10, 20, 40}, 11);
    ModelWorkspace<float> ws;
    double total = 0;
    const int n = 12;
    MultiScaleModel<float> grads = zeros_like(m);
    for (int i = 0; i < n; ++i) {
        auto view = random_view<float>(3, 64, 100 + static_cast<std::uint64_t>(i));
        forward(m, view, RunMode::eval, ws);
        total += backward(m, view, i % 6, ws, grads);
    }
    CHECK(total / n == Approx(std::log(6.0)).margin(0.2));
}

TEST_CASE("embedding contract") {
    auto m = build_model<float>({40}, 13);
    ModelWorkspace<float> ws;
    auto view = random_view<float>(1, 64, 21);
    auto e1 = embed(m, view, ws);
    auto e2 = embed(m, view, ws);
    REQUIRE(e1.size() == 256);
    CHECK(e1 == e2);
    for (float v : e1) CHECK(v >= 0.0f);
}

TEST_CASE("training steps") {
    // reduced geometry keeps this quick
    auto m = build_model<float>({40}, 17, 16);
    Trainer<float> trainer(m, 1e-6);
    std::vector<SampleView<float>> views;
    for (int i = 0; i < 12; ++i) views.push_back(random_view<float>(1, 16, 400 + i));

    std::vector<TrainItem<float>> batch;
    for (int i = 0; i < 12; ++i)
        batch.push_back({&views[static_cast<std::size_t>(i)], i % 6,
                         900 + static_cast<std::uint64_t>(i)});

    SECTION("lr = 0 leaves parameters unchanged") {
        auto before = m.combiner_w.data;
        trainer.train_step(batch, 0.0);
        CHECK(m.combiner_w.data == before);
    }
    SECTION("overfits a 12-sample toy set within 300 steps") {
        double loss = 1e9;
        for (int step = 0; step < 300; ++step) {
            loss = trainer.train_step(batch, 1e-3);
            if (loss < 0.05) break;
        }
        CHECK(loss < 0.05);
    }
    SECTION("weight sharing survives training") {
        for (int step = 0; step < 3; ++step) trainer.train_step(batch, 1e-3);
        ModelWorkspace<float> ws;
        SampleView<float> same;
        same.side = 16;
        for (int p = 0; p < 3; ++p) same.planes.push_back(views[0].planes[0]);
        forward(m, same, RunMode::eval, ws);
        for (int i = 0; i < kStreamWidth; ++i) {
            CHECK(ws.concat[static_cast<std::size_t>(i)] ==
                  ws.concat[static_cast<std::size_t>(kStreamWidth + i)]);
            CHECK(ws.concat[static_cast<std::size_t>(i)] ==
                  ws.concat[static_cast<std::size_t>(2 * kStreamWidth + i)]);
        }
    }
    SECTION("empty batch rejected") {
        std::vector<TrainItem<float>> empty;
        CHECK_THROWS_AS(trainer.train_step(empty, 1e-3), ModelError);
    }
}

TEST_CASE("checkpoint round trip") {
    auto dir = tmp_dir();
    auto m = build_model<float>({10, 40}, 23);
    ModelWorkspace<float> ws;
    auto view = random_view<float>(2, 64, 31);
    auto before = forward(m, view, RunMode::eval, ws);

    const auto path = (dir / "m.tpln").string();
    CheckpointMeta meta;
    meta.epoch = 17;
    meta.seed = 23;
    meta.validation_mean_f = 0.875;
    save_checkpoint(m, path, meta);

    SECTION("forward after reload is bit-exact") {
        CheckpointMeta got;
        auto r = load_checkpoint<float>(path, {}, &got);
        CHECK(got.epoch == 17);
        CHECK(got.validation_mean_f == Approx(0.875));
        auto after = forward(r, view, RunMode::eval, ws);
        for (int i = 0; i < kNumClasses; ++i)
            CHECK(before[static_cast<std::size_t>(i)] == after[static_cast<std::size_t>(i)]);
    }
    SECTION("corrupt magic rejected") {
        std::string bytes;
        {
            std::ifstream is(path, std::ios::binary);
            bytes.assign((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        }
        bytes[1] = 'Z';
        const auto bad = (dir / "bad.tpln").string();
        std::ofstream(bad, std::ios::binary).write(bytes.data(), (std::streamsize)bytes.size());
        CHECK_THROWS_WITH(load_checkpoint<float>(bad), Catch::Contains("magic"));
    }
    SECTION("scale configuration guard") {
        CHECK_THROWS_WITH(load_checkpoint<float>(path, {10.0, 20.0, 40.0}),
                          Catch::Contains("scale configuration mismatch"));
        CHECK_NOTHROW(load_checkpoint<float>(path, {10.0, 40.0}));
    }
    SECTION("truncated checkpoint rejected") {
        std::string bytes;
        {
            std::ifstream is(path, std::ios::binary);
            bytes.assign((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        }
        bytes.resize(bytes.size() - 1000);
        const auto bad = (dir / "trunc.tpln").string();
        std::ofstream(bad, std::ios::binary).write(bytes.data(), (std::streamsize)bytes.size());
        CHECK_THROWS_WITH(load_checkpoint<float>(bad), Catch::Contains("truncated"));
    }
}

TEST_CASE("end-to-end gradient check on the reduced 1-scale model") {
    auto m = build_model<double>({40}, 29, 16);
    m.dropout_rate = 0.0; // deterministic loss for finite differences
    ModelWorkspace<double> ws;
    auto view = random_view<double>(1, 16, 77);
    const int target = 2;

    auto loss_fn = [&]() {
        forward(m, view, RunMode::eval, ws);
        return -std::log(std::max(static_cast<double>(ws.probs[target]), 1e-300));
    };

    MultiScaleModel<double> grads = zeros_like(m);
    forward(m, view, RunMode::eval, ws);
    backward(m, view, target, ws, grads);

    double worst = 0.0;
    std::vector<Tensor<double>*> ps, gs;
    m.visit([&](const std::string&, Tensor<double>& t, bool) { ps.push_back(&t); });
    grads.visit([&](const std::string&, Tensor<double>& t, bool) { gs.push_back(&t); });
    for (std::size_t i = 0; i < ps.size(); ++i) {
        // ~20 checks per tensor keeps the full sweep above 200 parameters.
        // Step 1e-6: bias perturbations shift whole feature maps, and the
        // larger default step can push a map value across a pool/ReLU kink.
        worst = std::max(worst,
                         grad_check<double>(std::span(ps[i]->data),
                                            std::span<const double>(gs[i]->data), loss_fn, 20,
                                            1000 + static_cast<std::uint64_t>(i), 1e-6));
    }
    CHECK(worst <= 1e-4);
}
