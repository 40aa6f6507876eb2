#pragma once
// The multi-stream multi-scale network.
//
// One stream: conv5x5(32) / pool / conv3x3(64) / conv3x3(64) / pool /
// conv3x3(128) / pool / dense(256), ReLU after every conv and dense.
// The three views of a scale share one parameter set; scales do not share.
// Stream outputs are concatenated scale-major, view-minor into a 256-unit
// combiner (ReLU, dropout 0.5) feeding the 6-class softmax head.

#include <omp.h>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "triplanar/nn.hpp"
#include "triplanar/rng.hpp"
#include "triplanar/sampler.hpp"
#include "triplanar/serialize.hpp"
#include "triplanar/tensor.hpp"

namespace triplanar {

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kStreamWidth = 256;

template <typename T>
struct StreamParams {
    Tensor<T> conv1_w, conv1_b; // [32,1,5,5]
    Tensor<T> conv2_w, conv2_b; // [64,32,3,3]
    Tensor<T> conv3_w, conv3_b; // [64,64,3,3]
    Tensor<T> conv4_w, conv4_b; // [128,64,3,3]
    Tensor<T> fc_w, fc_b;       // [256, (side/8)^2 * 128]
};

template <typename T>
struct MultiScaleModel {
    std::vector<double> scales_mm;       // 1..3 values from {10, 20, 40}
    int patch_side = kPatchSide;         // 16 for the reduced gradient-check variant
    std::vector<StreamParams<T>> streams; // one per scale, shared across views
    Tensor<T> combiner_w, combiner_b;    // [256, 3 * n_scales * 256]
    Tensor<T> head_w, head_b;            // [6, 256]
    double dropout_rate = 0.5;

    int n_scales() const { return static_cast<int>(scales_mm.size()); }
    int combiner_input() const { return 3 * n_scales() * kStreamWidth; }
    int fc_input() const { return (patch_side / 8) * (patch_side / 8) * 128; }

    // Fixed enumeration order shared by gradients, ADAM state and checkpoints.
    template <typename Fn>
    void visit(Fn&& fn) {
        for (std::size_t s = 0; s < streams.size(); ++s) {
            const std::string p = "s" + std::to_string(s) + ".";
            auto& st = streams[s];
            fn(p + "conv1.w", st.conv1_w, false);
            fn(p + "conv1.b", st.conv1_b, true);
            fn(p + "conv2.w", st.conv2_w, false);
            fn(p + "conv2.b", st.conv2_b, true);
            fn(p + "conv3.w", st.conv3_w, false);
            fn(p + "conv3.b", st.conv3_b, true);
            fn(p + "conv4.w", st.conv4_w, false);
            fn(p + "conv4.b", st.conv4_b, true);
            fn(p + "fc.w", st.fc_w, false);
            fn(p + "fc.b", st.fc_b, true);
        }
        fn("combiner.w", combiner_w, false);
        fn("combiner.b", combiner_b, true);
        fn("head.w", head_w, false);
        fn("head.b", head_b, true);
    }
};

namespace detail {

inline void check_scales(const std::vector<double>& scales) {
    if (scales.empty() || scales.size() > 3)
        throw ModelError("model requires 1 to 3 scales");
    for (double s : scales)
        if (s != 10.0 && s != 20.0 && s != 40.0)
            throw ModelError("scales must come from {10, 20, 40} mm");
}

} // namespace detail

template <typename T>
MultiScaleModel<T> build_model(const std::vector<double>& scales, std::uint64_t seed,
                               int patch_side = kPatchSide) {
    detail::check_scales(scales);
    if (patch_side % 8 != 0 || patch_side < 8)
        throw ModelError("patch side must be a positive multiple of 8");

    MultiScaleModel<T> m;
    m.scales_mm = scales;
    m.patch_side = patch_side;
    Rng rng(seed);

    const int fc_in = m.fc_input();
    for (std::size_t s = 0; s < scales.size(); ++s) {
        StreamParams<T> st;
        st.conv1_w = Tensor<T>({32, 1, 5, 5});
        st.conv1_b = Tensor<T>({32});
        st.conv2_w = Tensor<T>({64, 32, 3, 3});
        st.conv2_b = Tensor<T>({64});
        st.conv3_w = Tensor<T>({64, 64, 3, 3});
        st.conv3_b = Tensor<T>({64});
        st.conv4_w = Tensor<T>({128, 64, 3, 3});
        st.conv4_b = Tensor<T>({128});
        st.fc_w = Tensor<T>({kStreamWidth, fc_in});
        st.fc_b = Tensor<T>({kStreamWidth});
        glorot_init(st.conv1_w, 1 * 25, 32 * 25, rng);
        glorot_init(st.conv2_w, 32 * 9, 64 * 9, rng);
        glorot_init(st.conv3_w, 64 * 9, 64 * 9, rng);
        glorot_init(st.conv4_w, 64 * 9, 128 * 9, rng);
        glorot_init(st.fc_w, fc_in, kStreamWidth, rng);
        m.streams.push_back(std::move(st));
    }
    m.combiner_w = Tensor<T>({kStreamWidth, m.combiner_input()});
    m.combiner_b = Tensor<T>({kStreamWidth});
    m.head_w = Tensor<T>({kNumClasses, kStreamWidth});
    m.head_b = Tensor<T>({kNumClasses});
    glorot_init(m.combiner_w, m.combiner_input(), kStreamWidth, rng);
    glorot_init(m.head_w, kStreamWidth, kNumClasses, rng);
    return m;
}

// Gradient buffers with the same shapes as the model parameters.
template <typename T>
MultiScaleModel<T> zeros_like(MultiScaleModel<T>& m) {
    MultiScaleModel<T> g;
    g.scales_mm = m.scales_mm;
    g.patch_side = m.patch_side;
    g.dropout_rate = m.dropout_rate;
    g.streams.resize(m.streams.size());
    for (std::size_t s = 0; s < m.streams.size(); ++s) {
        auto& src = m.streams[s];
        auto& dst = g.streams[s];
        dst.conv1_w = Tensor<T>(src.conv1_w.shape);
        dst.conv1_b = Tensor<T>(src.conv1_b.shape);
        dst.conv2_w = Tensor<T>(src.conv2_w.shape);
        dst.conv2_b = Tensor<T>(src.conv2_b.shape);
        dst.conv3_w = Tensor<T>(src.conv3_w.shape);
        dst.conv3_b = Tensor<T>(src.conv3_b.shape);
        dst.conv4_w = Tensor<T>(src.conv4_w.shape);
        dst.conv4_b = Tensor<T>(src.conv4_b.shape);
        dst.fc_w = Tensor<T>(src.fc_w.shape);
        dst.fc_b = Tensor<T>(src.fc_b.shape);
    }
    g.combiner_w = Tensor<T>(m.combiner_w.shape);
    g.combiner_b = Tensor<T>(m.combiner_b.shape);
    g.head_w = Tensor<T>(m.head_w.shape);
    g.head_b = Tensor<T>(m.head_b.shape);
    return g;
}

template <typename T>
void zero_grads(MultiScaleModel<T>& g) {
    g.visit([](const std::string&, Tensor<T>& t, bool) { t.fill(T(0)); });
}

template <typename T>
void accumulate_grads(MultiScaleModel<T>& into, MultiScaleModel<T>& from) {
    std::vector<Tensor<T>*> dst, src;
    into.visit([&](const std::string&, Tensor<T>& t, bool) { dst.push_back(&t); });
    from.visit([&](const std::string&, Tensor<T>& t, bool) { src.push_back(&t); });
    for (std::size_t i = 0; i < dst.size(); ++i)
        for (std::size_t j = 0; j < dst[i]->numel(); ++j) dst[i]->data[j] += src[i]->data[j];
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

// A sample seen as raw patch planes (scale-major, view-minor, side*side
// each). Adapts MultiScaleSample without copying in the float case and lets
// tests feed reduced-size inputs directly via owned storage.
template <typename T>
struct SampleView {
    std::vector<const T*> planes;
    int side = kPatchSide;
    std::vector<std::vector<T>> storage; // backs owned planes

    void add_owned(std::vector<T> plane) {
        storage.push_back(std::move(plane));
        planes.push_back(storage.back().data());
    }
};

template <typename T>
SampleView<T> to_view(const MultiScaleSample& s) {
    SampleView<T> v;
    v.side = kPatchSide;
    if constexpr (std::is_same_v<T, float>) {
        for (const auto& p : s.patches) v.planes.push_back(p.pixels.data());
    } else {
        for (const auto& p : s.patches) {
            std::vector<T> plane(p.pixels.size());
            for (std::size_t i = 0; i < p.pixels.size(); ++i) plane[i] = static_cast<T>(p.pixels[i]);
            v.add_owned(std::move(plane));
        }
    }
    return v;
}

template <typename T>
struct StreamActivations {
    std::vector<T> y1, p1, y2, y3, p2, y4, p3, h;
    std::vector<std::uint8_t> am1, am2, am3;
    std::vector<T> d_buf_a, d_buf_b; // backward scratch, layer-sized
};

template <typename T>
struct ModelWorkspace {
    std::vector<StreamActivations<T>> acts; // one per patch slot
    std::vector<T> concat, comb, comb_dropped, logits, probs, embed;
    std::vector<T> d_concat, d_comb, d_logits;
    std::vector<std::uint8_t> drop_mask;
    bool dropout_applied = false; // whether the last forward ran train-mode dropout
    ConvWorkspace<T> cws;
};

enum class RunMode { train, eval };

namespace detail {

template <typename T>
void stream_forward(const StreamParams<T>& sp, const T* patch, int side,
                    StreamActivations<T>& a, ConvWorkspace<T>& cws) {
    const int s1 = side, s2 = side / 2, s3 = side / 4, s4 = side / 8;
    a.y1.resize(static_cast<std::size_t>(32) * s1 * s1);
    a.p1.resize(static_cast<std::size_t>(32) * s2 * s2);
    a.am1.resize(a.p1.size());
    a.y2.resize(static_cast<std::size_t>(64) * s2 * s2);
    a.y3.resize(static_cast<std::size_t>(64) * s2 * s2);
    a.p2.resize(static_cast<std::size_t>(64) * s3 * s3);
    a.am2.resize(a.p2.size());
    a.y4.resize(static_cast<std::size_t>(128) * s3 * s3);
    a.p3.resize(static_cast<std::size_t>(128) * s4 * s4);
    a.am3.resize(a.p3.size());
    a.h.resize(kStreamWidth);

    conv2d_forward(patch, 1, s1, s1, sp.conv1_w.ptr(), sp.conv1_b.ptr(), 32, 5, a.y1.data(), cws);
    relu_forward(a.y1.data(), a.y1.size());
    maxpool2_forward(a.y1.data(), 32, s1, s1, a.p1.data(), a.am1.data());
    conv2d_forward(a.p1.data(), 32, s2, s2, sp.conv2_w.ptr(), sp.conv2_b.ptr(), 64, 3, a.y2.data(),
                   cws);
    relu_forward(a.y2.data(), a.y2.size());
    conv2d_forward(a.y2.data(), 64, s2, s2, sp.conv3_w.ptr(), sp.conv3_b.ptr(), 64, 3, a.y3.data(),
                   cws);
    relu_forward(a.y3.data(), a.y3.size());
    maxpool2_forward(a.y3.data(), 64, s2, s2, a.p2.data(), a.am2.data());
    conv2d_forward(a.p2.data(), 64, s3, s3, sp.conv4_w.ptr(), sp.conv4_b.ptr(), 128, 3,
                   a.y4.data(), cws);
    relu_forward(a.y4.data(), a.y4.size());
    maxpool2_forward(a.y4.data(), 128, s3, s3, a.p3.data(), a.am3.data());
    dense_forward(a.p3.data(), static_cast<int>(a.p3.size()), sp.fc_w.ptr(), sp.fc_b.ptr(),
                  kStreamWidth, a.h.data());
    relu_forward(a.h.data(), a.h.size());
}

template <typename T>
void stream_backward(const StreamParams<T>& sp, const T* patch, int side,
                     StreamActivations<T>& a, const T* dh_in, StreamParams<T>& grads,
                     ConvWorkspace<T>& cws) {
    const int s1 = side, s2 = side / 2, s3 = side / 4;
    std::vector<T>& buf_a = a.d_buf_a;
    std::vector<T>& buf_b = a.d_buf_b;

    std::vector<T> dh(dh_in, dh_in + kStreamWidth);
    relu_backward(a.h.data(), dh.data(), dh.size());

    buf_a.resize(a.p3.size());
    dense_backward(a.p3.data(), static_cast<int>(a.p3.size()), sp.fc_w.ptr(), kStreamWidth,
                   dh.data(), buf_a.data(), grads.fc_w.ptr(), grads.fc_b.ptr());

    buf_b.resize(a.y4.size());
    maxpool2_backward(buf_a.data(), a.am3.data(), 128, s3, s3, buf_b.data());
    relu_backward(a.y4.data(), buf_b.data(), buf_b.size());

    buf_a.resize(a.p2.size());
    std::fill(buf_a.begin(), buf_a.end(), T(0));
    conv2d_backward(a.p2.data(), 64, s3, s3, sp.conv4_w.ptr(), 128, 3, buf_b.data(), buf_a.data(),
                    grads.conv4_w.ptr(), grads.conv4_b.ptr(), cws);

    buf_b.resize(a.y3.size());
    maxpool2_backward(buf_a.data(), a.am2.data(), 64, s2, s2, buf_b.data());
    relu_backward(a.y3.data(), buf_b.data(), buf_b.size());

    buf_a.resize(a.y2.size());
    std::fill(buf_a.begin(), buf_a.end(), T(0));
    conv2d_backward(a.y2.data(), 64, s2, s2, sp.conv3_w.ptr(), 64, 3, buf_b.data(), buf_a.data(),
                    grads.conv3_w.ptr(), grads.conv3_b.ptr(), cws);
    relu_backward(a.y2.data(), buf_a.data(), buf_a.size());

    buf_b.resize(a.p1.size());
    std::fill(buf_b.begin(), buf_b.end(), T(0));
    conv2d_backward(a.p1.data(), 32, s2, s2, sp.conv2_w.ptr(), 64, 3, buf_a.data(), buf_b.data(),
                    grads.conv2_w.ptr(), grads.conv2_b.ptr(), cws);

    buf_a.resize(a.y1.size());
    maxpool2_backward(buf_b.data(), a.am1.data(), 32, s1, s1, buf_a.data());
    relu_backward(a.y1.data(), buf_a.data(), buf_a.size());
    conv2d_backward(patch, 1, s1, s1, sp.conv1_w.ptr(), 32, 5, buf_a.data(),
                    static_cast<T*>(nullptr), grads.conv1_w.ptr(), grads.conv1_b.ptr(), cws);
}

} // namespace detail

// Forward pass. In train mode the dropout mask comes from `rng`; eval mode
// never touches it. Returns the softmax probabilities.
template <typename T>
std::array<T, kNumClasses> forward(MultiScaleModel<T>& m, const SampleView<T>& s, RunMode mode,
                                   ModelWorkspace<T>& ws, Rng* rng = nullptr) {
    const std::size_t n_patches = static_cast<std::size_t>(m.n_scales()) * 3;
    if (s.planes.size() != n_patches)
        throw ModelError("sample has " + std::to_string(s.planes.size()) + " patches, model wants " +
                         std::to_string(n_patches));
    if (s.side != m.patch_side) throw ModelError("sample patch side does not match model");

    ws.acts.resize(n_patches);
    ws.concat.resize(n_patches * kStreamWidth);
    for (std::size_t p = 0; p < n_patches; ++p) {
        const auto& stream = m.streams[p / 3];
        detail::stream_forward(stream, s.planes[p], m.patch_side, ws.acts[p], ws.cws);
        std::copy(ws.acts[p].h.begin(), ws.acts[p].h.end(),
                  ws.concat.begin() + static_cast<std::ptrdiff_t>(p * kStreamWidth));
    }

    ws.comb.resize(kStreamWidth);
    dense_forward(ws.concat.data(), static_cast<int>(ws.concat.size()), m.combiner_w.ptr(),
                  m.combiner_b.ptr(), kStreamWidth, ws.comb.data());
    relu_forward(ws.comb.data(), ws.comb.size());
    ws.embed = ws.comb; // post-ReLU, pre-dropout

    ws.comb_dropped = ws.comb;
    ws.drop_mask.resize(kStreamWidth);
    ws.dropout_applied = (mode == RunMode::train && m.dropout_rate > 0.0);
    if (ws.dropout_applied) {
        if (!rng) throw ModelError("train-mode forward needs an rng for dropout");
        dropout_forward(ws.comb_dropped.data(), ws.comb_dropped.size(), m.dropout_rate, true, *rng,
                        ws.drop_mask.data());
    } else {
        std::fill(ws.drop_mask.begin(), ws.drop_mask.end(), std::uint8_t(1));
    }

    ws.logits.resize(kNumClasses);
    dense_forward(ws.comb_dropped.data(), kStreamWidth, m.head_w.ptr(), m.head_b.ptr(),
                  kNumClasses, ws.logits.data());
    ws.probs.resize(kNumClasses);
    std::array<T, kNumClasses> probs{};
    // softmax without loss (target unknown here)
    T mx = ws.logits[0];
    for (int i = 1; i < kNumClasses; ++i) mx = std::max(mx, ws.logits[i]);
    T sum = 0;
    for (int i = 0; i < kNumClasses; ++i) {
        ws.probs[static_cast<std::size_t>(i)] = std::exp(ws.logits[static_cast<std::size_t>(i)] - mx);
        sum += ws.probs[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < kNumClasses; ++i) {
        ws.probs[static_cast<std::size_t>(i)] /= sum;
        probs[static_cast<std::size_t>(i)] = ws.probs[static_cast<std::size_t>(i)];
    }
    return probs;
}

// Backward for the most recent forward(ws) call. Accumulates into `grads`
// and returns the cross-entropy loss for `target`.
template <typename T>
double backward(MultiScaleModel<T>& m, const SampleView<T>& s, int target,
                ModelWorkspace<T>& ws, MultiScaleModel<T>& grads) {
    const double loss =
        -std::log(std::max(static_cast<double>(ws.probs[static_cast<std::size_t>(target)]),
                           1e-300));

    ws.d_logits.resize(kNumClasses);
    for (int i = 0; i < kNumClasses; ++i)
        ws.d_logits[static_cast<std::size_t>(i)] =
            ws.probs[static_cast<std::size_t>(i)] - (i == target ? T(1) : T(0));

    // head
    ws.d_comb.resize(kStreamWidth);
    dense_backward(ws.comb_dropped.data(), kStreamWidth, m.head_w.ptr(), kNumClasses,
                   ws.d_logits.data(), ws.d_comb.data(), grads.head_w.ptr(), grads.head_b.ptr());
    // dropout + combiner ReLU
    if (ws.dropout_applied)
        dropout_backward(ws.d_comb.data(), ws.d_comb.size(), m.dropout_rate, ws.drop_mask.data());
    relu_backward(ws.comb.data(), ws.d_comb.data(), ws.d_comb.size());

    ws.d_concat.resize(ws.concat.size());
    dense_backward(ws.concat.data(), static_cast<int>(ws.concat.size()), m.combiner_w.ptr(),
                   kStreamWidth, ws.d_comb.data(), ws.d_concat.data(), grads.combiner_w.ptr(),
                   grads.combiner_b.ptr());

    const std::size_t n_patches = static_cast<std::size_t>(m.n_scales()) * 3;
    for (std::size_t p = 0; p < n_patches; ++p)
        detail::stream_backward(m.streams[p / 3], s.planes[p], m.patch_side, ws.acts[p],
                                ws.d_concat.data() + p * kStreamWidth, grads.streams[p / 3],
                                ws.cws);
    return loss;
}

// 256-dim embedding: combiner activations, post-ReLU, pre-dropout, eval mode.
template <typename T>
std::vector<T> embed(MultiScaleModel<T>& m, const SampleView<T>& s, ModelWorkspace<T>& ws) {
    forward(m, s, RunMode::eval, ws);
    return ws.embed;
}

// ---------------------------------------------------------------------------
// Training step: batch gradient accumulation (plus L2 weight decay) and one
// ADAM update. Samples fan out across threads with per-thread gradient
// buffers, reduced in thread order, so a run is reproducible for a fixed
// worker count.
// ---------------------------------------------------------------------------

template <typename T>
struct TrainItem {
    const SampleView<T>* view = nullptr;
    int label = 0;
    std::uint64_t dropout_seed = 0;
};

template <typename T>
class Trainer {
public:
    explicit Trainer(MultiScaleModel<T>& model, double weight_decay = 1e-6, int workers = 0)
        : model_(&model), weight_decay_(weight_decay) {
        workers_ = workers > 0 ? workers : omp_get_max_threads();
        model.visit([&](const std::string&, Tensor<T>& t, bool) {
            adam_.emplace_back(t.numel());
        });
        for (int w = 0; w < workers_; ++w) {
            thread_grads_.push_back(zeros_like(model));
            thread_ws_.emplace_back();
            thread_loss_.push_back(0.0);
        }
        total_grads_ = zeros_like(model);
    }

    int workers() const { return workers_; }

    // Returns the mean pre-step cross-entropy loss over the batch.
    double train_step(const std::vector<TrainItem<T>>& batch, double lr) {
        if (batch.empty()) throw ModelError("train_step: batch must be nonempty");
        for (auto& g : thread_grads_) zero_grads(g);
        std::fill(thread_loss_.begin(), thread_loss_.end(), 0.0);

        const int n = static_cast<int>(batch.size());
        #pragma omp parallel num_threads(workers_)
        {
            const int tid = omp_get_thread_num();
            #pragma omp for schedule(static)
            for (int i = 0; i < n; ++i) {
                const auto& item = batch[static_cast<std::size_t>(i)];
                Rng drop_rng(item.dropout_seed);
                forward(*model_, *item.view, RunMode::train, thread_ws_[static_cast<std::size_t>(tid)],
                        &drop_rng);
                thread_loss_[static_cast<std::size_t>(tid)] +=
                    backward(*model_, *item.view, item.label,
                             thread_ws_[static_cast<std::size_t>(tid)],
                             thread_grads_[static_cast<std::size_t>(tid)]);
            }
        }

        zero_grads(total_grads_);
        double loss_sum = 0.0;
        for (int w = 0; w < workers_; ++w) {
            accumulate_grads(total_grads_, thread_grads_[static_cast<std::size_t>(w)]);
            loss_sum += thread_loss_[static_cast<std::size_t>(w)];
        }

        // mean over the batch, weight decay on weights only, one ADAM step
        const T inv_n = T(1) / T(n);
        std::vector<Tensor<T>*> params, grads;
        std::vector<bool> is_bias;
        model_->visit([&](const std::string&, Tensor<T>& t, bool bias) {
            params.push_back(&t);
            is_bias.push_back(bias);
        });
        total_grads_.visit([&](const std::string&, Tensor<T>& t, bool) { grads.push_back(&t); });
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor<T>& g = *grads[i];
            for (auto& v : g.data) v *= inv_n;
            if (!is_bias[i]) l2_penalty(params[i]->ptr(), g.ptr(), g.numel(), weight_decay_);
            adam_step(params[i]->ptr(), g.ptr(), g.numel(), adam_[i], lr);
        }
        return loss_sum / n;
    }

private:
    MultiScaleModel<T>* model_;
    double weight_decay_;
    int workers_;
    std::vector<AdamState<T>> adam_;
    std::vector<MultiScaleModel<T>> thread_grads_;
    std::vector<ModelWorkspace<T>> thread_ws_;
    std::vector<double> thread_loss_;
    MultiScaleModel<T> total_grads_;
};

// ---------------------------------------------------------------------------
// Checkpoints ("TPLN")
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "TPLN";

struct CheckpointMeta {
    int epoch = 0;
    std::uint64_t seed = 0;
    double validation_mean_f = 0.0;
};

template <typename T>
void save_checkpoint(MultiScaleModel<T>& m, const std::string& path,
                     const CheckpointMeta& meta = {}) {
    TensorFile tf;
    tf.magic = kCheckpointMagic;
    tf.meta_numbers["n_scales"] = static_cast<double>(m.n_scales());
    for (int i = 0; i < m.n_scales(); ++i)
        tf.meta_numbers["scale" + std::to_string(i)] = m.scales_mm[static_cast<std::size_t>(i)];
    tf.meta_numbers["patch_side"] = m.patch_side;
    tf.meta_numbers["dropout"] = m.dropout_rate;
    tf.meta_numbers["epoch"] = meta.epoch;
    tf.meta_numbers["seed"] = static_cast<double>(meta.seed);
    tf.meta_numbers["validation_mean_f"] = meta.validation_mean_f;
    m.visit([&](const std::string& name, Tensor<T>& t, bool) {
        Tensor<float> ft(t.shape);
        for (std::size_t i = 0; i < t.numel(); ++i) ft.data[i] = static_cast<float>(t.data[i]);
        tf.tensors.emplace_back(name, std::move(ft));
    });
    save_tensor_file(tf, path);
}

template <typename T = float>
MultiScaleModel<T> load_checkpoint(const std::string& path,
                                   const std::vector<double>& expected_scales = {},
                                   CheckpointMeta* meta_out = nullptr) {
    TensorFile tf = load_tensor_file(path, kCheckpointMagic);
    const int n_scales = static_cast<int>(tf.meta_numbers.at("n_scales"));
    std::vector<double> scales;
    for (int i = 0; i < n_scales; ++i) scales.push_back(tf.meta_numbers.at("scale" + std::to_string(i)));
    if (!expected_scales.empty() && scales != expected_scales) {
        std::string msg = "checkpoint scale configuration mismatch: file has {";
        for (double s : scales) msg += " " + std::to_string(s);
        msg += " }";
        throw ModelError(msg);
    }
    MultiScaleModel<T> m = build_model<T>(scales, 0,
                                          static_cast<int>(tf.meta_numbers.at("patch_side")));
    m.dropout_rate = tf.meta_numbers.at("dropout");
    m.visit([&](const std::string& name, Tensor<T>& t, bool) {
        const Tensor<float>& src = tf.require(name);
        if (src.shape != t.shape) throw ModelError("checkpoint tensor shape mismatch for " + name);
        for (std::size_t i = 0; i < t.numel(); ++i) t.data[i] = static_cast<T>(src.data[i]);
    });
    if (meta_out) {
        meta_out->epoch = static_cast<int>(tf.meta_numbers.at("epoch"));
        meta_out->seed = static_cast<std::uint64_t>(tf.meta_numbers.at("seed"));
        meta_out->validation_mean_f = tf.meta_numbers.at("validation_mean_f");
    }
    return m;
}

} // namespace triplanar
