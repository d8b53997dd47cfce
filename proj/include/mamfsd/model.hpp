#pragma once

// Full MAM-FSD model: staged residual frame extractor with motor attention
// blocks after each stage, D-block projections for self-distillation, and the
// 1D-conv + BiLSTM + classifier temporal head.

#include <array>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mamfsd/error.hpp"
#include "mamfsd/graph.hpp"
#include "mamfsd/mam.hpp"
#include "mamfsd/ops.hpp"
#include "mamfsd/rng.hpp"
#include "mamfsd/tensor.hpp"

namespace mamfsd {

struct ModelConfig {
    int in_channels = 3;
    int resolution = 32;
    int stem_channels = 8;
    std::vector<int> channels = {8, 16, 32, 64};
    std::vector<int> strides = {1, 2, 2, 2};
    int blocks_per_stage = 1;
    int mam_count = 4;  // MAM blocks, filled from the input side
    MamConfig mam;
    int lstm_hidden = 64;
    int tconv_kernel = 5;
    int vocab = 10;  // gloss count G; classifier width is vocab+1, blank id 0

    int feature_dim() const { return channels.back(); }

    void validate() const {
        check(channels.size() == 4 && strides.size() == 4, "model: four stages required");
        int cum = 1;
        for (int s : strides) cum *= s;
        check(resolution % cum == 0, "model: resolution not divisible by cumulative stride");
        check(mam_count >= 0 && mam_count <= 4, "model: mam_count must be in 0..4");
        check(vocab >= 1, "model: vocabulary must be non-empty");
        check(tconv_kernel % 2 == 1, "model: temporal conv kernel must be odd");
    }
};

// Ordered named parameters; order defines checkpoint and gradient layout.
template <class S>
struct ParamSet {
    std::vector<std::pair<std::string, Tensor<S>>> items;
    std::unordered_map<std::string, int> index;

    Tensor<S>& add(const std::string& name, Tensor<S> t) {
        check(index.find(name) == index.end(), "param name collision: " + name);
        t.requires_grad = true;
        index.emplace(name, static_cast<int>(items.size()));
        items.emplace_back(name, std::move(t));
        return items.back().second;
    }

    Tensor<S>& get(const std::string& name) {
        auto it = index.find(name);
        check(it != index.end(), "unknown parameter: " + name);
        return items[static_cast<size_t>(it->second)].second;
    }

    const Tensor<S>& get(const std::string& name) const {
        auto it = index.find(name);
        check(it != index.end(), "unknown parameter: " + name);
        return items[static_cast<size_t>(it->second)].second;
    }

    bool has(const std::string& name) const { return index.find(name) != index.end(); }
};

namespace init {

template <class S>
Tensor<S> kaiming_uniform(std::vector<int> dims, int fan_in, Rng rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    return Tensor<S>::uniform(std::move(dims), rng, -bound, bound);
}

// Orthonormal [H,H] via modified Gram-Schmidt on a random normal matrix.
template <class S>
void orthogonal_block(S* dst, int H, Rng& rng) {
    std::vector<double> q(static_cast<size_t>(H) * H);
    for (auto& v : q) v = rng.normal();
    for (int i = 0; i < H; ++i) {
        double* qi = q.data() + static_cast<int64_t>(i) * H;
        for (int j = 0; j < i; ++j) {
            const double* qj = q.data() + static_cast<int64_t>(j) * H;
            double dot = 0;
            for (int k = 0; k < H; ++k) dot += qi[k] * qj[k];
            for (int k = 0; k < H; ++k) qi[k] -= dot * qj[k];
        }
        double norm = 0;
        for (int k = 0; k < H; ++k) norm += qi[k] * qi[k];
        norm = std::sqrt(norm);
        check(norm > 1e-8, "orthogonal init: degenerate matrix");
        for (int k = 0; k < H; ++k) qi[k] /= norm;
    }
    for (int64_t i = 0; i < static_cast<int64_t>(H) * H; ++i) dst[i] = static_cast<S>(q[static_cast<size_t>(i)]);
}

}  // namespace init

template <class S>
struct ModelForward {
    VarId logprobs = -1;      // [T', V+1]
    VarId aux_logprobs = -1;  // [T', V+1], -1 when the aux head is off
    VarId conv_out = -1;      // [T', D] output of the 1D-conv blocks
    VarId f_spatial = -1;     // [T, D]
    std::array<VarId, 4> stage{-1, -1, -1, -1};  // S1..S4, [T,C_i,H_i,W_i]
    std::array<VarId, 4> attn{-1, -1, -1, -1};   // f^p_motor per MAM block
    std::vector<VarId> param_leaves;             // aligned with Model::params
    int t_out = 0;
};

template <class S>
class Model {
  public:
    ModelConfig cfg;
    ParamSet<S> params;

    static Model build(const ModelConfig& cfg, uint64_t seed) {
        cfg.validate();
        Model m;
        m.cfg = cfg;
        auto& P = m.params;
        const int C0 = cfg.stem_channels;
        add_conv(P, seed, "stem", {C0, cfg.in_channels, 3, 3});
        int cin = C0;
        for (int i = 0; i < 4; ++i) {
            const int co = cfg.channels[static_cast<size_t>(i)];
            const int stride = cfg.strides[static_cast<size_t>(i)];
            for (int j = 0; j < cfg.blocks_per_stage; ++j) {
                const std::string base = "stage" + std::to_string(i + 1) + ".block" + std::to_string(j + 1);
                const int bc_in = j == 0 ? cin : co;
                const int bs = j == 0 ? stride : 1;
                add_conv(P, seed, base + ".conv1", {co, bc_in, 3, 3});
                add_conv(P, seed, base + ".conv2", {co, co, 3, 3});
                if (bs != 1 || bc_in != co) add_conv(P, seed, base + ".skip", {co, bc_in, 1, 1});
            }
            if (i < cfg.mam_count) {
                auto plan = mam_channel_plan(co, cfg.mam);
                for (int l = 0; l < cfg.mam.layers; ++l) {
                    const std::string base =
                        "mam" + std::to_string(i + 1) + ".conv" + std::to_string(l + 1);
                    if (cfg.mam.depthwise)
                        add_conv(P, seed, base, {plan[static_cast<size_t>(l)].second, 1, cfg.mam.kernel});
                    else
                        add_conv(P, seed, base,
                                 {plan[static_cast<size_t>(l)].second, plan[static_cast<size_t>(l)].first, cfg.mam.kernel});
                }
            }
            if (i < 3) {
                add_conv(P, seed, "dblock" + std::to_string(i + 1),
                         {cfg.channels[static_cast<size_t>(i + 1)], co, 3, 3});
            }
            cin = co;
        }
        const int D = cfg.feature_dim();
        add_conv(P, seed, "tconv1", {D, D, cfg.tconv_kernel});
        add_conv(P, seed, "tconv2", {D, D, cfg.tconv_kernel});
        const int H = cfg.lstm_hidden;
        for (const char* dir : {"fwd", "bwd"}) {
            const std::string base = std::string("lstm.") + dir;
            P.add(base + ".wx", init::kaiming_uniform<S>({4 * H, D}, D, Rng::stream(seed, "init", Rng::hash_str(base + ".wx"))));
            Tensor<S> wh = Tensor<S>::zeros({4 * H, H});
            {
                Rng r = Rng::stream(seed, "init", Rng::hash_str(base + ".wh"));
                for (int gb = 0; gb < 4; ++gb)
                    init::orthogonal_block(wh.data.data() + static_cast<int64_t>(gb) * H * H, H, r);
            }
            P.add(base + ".wh", std::move(wh));
            Tensor<S> bx = Tensor<S>::zeros({4 * H});
            for (int k = H; k < 2 * H; ++k) bx.data[static_cast<size_t>(k)] = S(1);  // forget gate bias
            P.add(base + ".bx", std::move(bx));
            P.add(base + ".bh", Tensor<S>::zeros({4 * H}));
        }
        const int V1 = cfg.vocab + 1;
        P.add("cls.w", init::kaiming_uniform<S>({V1, 2 * H}, 2 * H, Rng::stream(seed, "init", Rng::hash_str("cls.w"))));
        P.add("cls.b", Tensor<S>::zeros({V1}));
        P.add("auxcls.w", init::kaiming_uniform<S>({V1, D}, D, Rng::stream(seed, "init", Rng::hash_str("auxcls.w"))));
        P.add("auxcls.b", Tensor<S>::zeros({V1}));
        return m;
    }

    // Pre-pushed leaves to use in place of named parameters (the gradient
    // suite perturbs and differentiates selected tensors this way).
    using Overrides = std::vector<std::pair<std::string, VarId>>;

    // Pushes every parameter as a tape leaf (fixed order) and runs the net.
    // video: [T, C, R, R]. with_aux adds the auxiliary classifier head.
    ModelForward<S> forward(Tape<S>& t, const Tensor<S>& video, bool with_aux,
                            const Overrides* overrides = nullptr) const {
        check(video.rank() == 4, "extract: video must be [T,C,H,W]");
        const int T = video.dims[0];
        check(video.dims[1] == cfg.in_channels, "extract: wrong channel count");
        check(video.dims[2] == cfg.resolution && video.dims[3] == cfg.resolution,
              "extract: resolution mismatch");
        check(T >= 4, "temporal_forward: T must be >= 4");

        ModelForward<S> out;
        std::unordered_map<std::string, VarId> pv;
        out.param_leaves.reserve(params.items.size());
        for (const auto& [name, tensor] : params.items) {
            VarId id = -1;
            if (overrides != nullptr) {
                for (const auto& [oname, oid] : *overrides)
                    if (oname == name) {
                        id = oid;
                        break;
                    }
            }
            if (id < 0) id = t.leaf(tensor);
            pv.emplace(name, id);
            out.param_leaves.push_back(id);
        }
        auto p = [&](const std::string& n) {
            auto it = pv.find(n);
            check(it != pv.end(), "missing parameter: " + n);
            return it->second;
        };

        VarId x = t.constant(video);
        VarId h = ops::conv2d(t, x, p("stem.w"), p("stem.b"), 1, 1, /*fuse_relu=*/true);
        for (int i = 0; i < 4; ++i) {
            const int stride = cfg.strides[static_cast<size_t>(i)];
            for (int j = 0; j < cfg.blocks_per_stage; ++j) {
                const std::string base = "stage" + std::to_string(i + 1) + ".block" + std::to_string(j + 1);
                const int bs = j == 0 ? stride : 1;
                VarId c1 = ops::conv2d(t, h, p(base + ".conv1.w"), p(base + ".conv1.b"), bs, 1,
                                       /*fuse_relu=*/true);
                VarId c2 = ops::conv2d(t, c1, p(base + ".conv2.w"), p(base + ".conv2.b"), 1, 1);
                VarId skip = params.has(base + ".skip.w")
                                 ? ops::conv2d(t, h, p(base + ".skip.w"), p(base + ".skip.b"), bs, 0)
                                 : h;
                h = ops::add_relu(t, c2, skip);
            }
            if (i < cfg.mam_count) {
                std::vector<VarId> ws, bs2;
                for (int l = 0; l < cfg.mam.layers; ++l) {
                    const std::string base = "mam" + std::to_string(i + 1) + ".conv" + std::to_string(l + 1);
                    ws.push_back(p(base + ".w"));
                    bs2.push_back(p(base + ".b"));
                }
                if (cfg.mam.depthwise) {
                    VarId hc = ops::transpose01(t, h);  // depthwise runs in [C,T,H,W]
                    VarId map = mam_attention_map(t, hc, ws, bs2, cfg.mam);
                    out.attn[static_cast<size_t>(i)] = map;
                    h = ops::transpose01(t, ops::mul(t, map, hc));
                } else {
                    // frame-major layout end to end; the map is [T,C,H,W]
                    VarId map = mam_attention_map(t, h, ws, bs2, cfg.mam, /*tc_layout=*/true);
                    out.attn[static_cast<size_t>(i)] = map;
                    h = ops::mul(t, map, h);
                }
            }
            out.stage[static_cast<size_t>(i)] = h;
        }
        out.f_spatial = ops::global_avg_pool_2d(t, out.stage[3]);  // [T, D]

        // short-term: two conv(k)-relu-pool blocks
        VarId c1 = ops::relu(t, ops::conv1d(t, out.f_spatial, p("tconv1.w"), p("tconv1.b")));
        VarId p1 = ops::max_pool_1d(t, c1);
        VarId c2 = ops::relu(t, ops::conv1d(t, p1, p("tconv2.w"), p("tconv2.b")));
        out.conv_out = ops::max_pool_1d(t, c2);
        out.t_out = t.val(out.conv_out).dims[0];

        // long-term: BiLSTM over conv_out
        VarId fwd = lstm_direction(t, out.conv_out, p("lstm.fwd.wx"), p("lstm.fwd.wh"),
                                   p("lstm.fwd.bx"), p("lstm.fwd.bh"), false);
        VarId bwd = lstm_direction(t, out.conv_out, p("lstm.bwd.wx"), p("lstm.bwd.wh"),
                                   p("lstm.bwd.bx"), p("lstm.bwd.bh"), true);
        VarId bi = ops::concat_cols(t, fwd, bwd);
        out.logprobs = ops::log_softmax(t, ops::linear(t, bi, p("cls.w"), p("cls.b")));
        if (with_aux)
            out.aux_logprobs =
                ops::log_softmax(t, ops::linear(t, out.conv_out, p("auxcls.w"), p("auxcls.b")));
        return out;
    }

    // Gate recurrence in (i, f, g, o) block order; reverse=true runs the
    // backward direction and returns rows in original time order.
    static VarId lstm_direction(Tape<S>& t, VarId x, VarId wx, VarId wh, VarId bx, VarId bh,
                                bool reverse) {
        const int T = t.val(x).dims[0];
        const int H = t.val(wh).dims[1];
        VarId in = reverse ? ops::reverse_rows(t, x) : x;
        VarId h_prev = t.constant(Tensor<S>::zeros({1, H}));
        VarId c_prev = t.constant(Tensor<S>::zeros({1, H}));
        std::vector<VarId> outs;
        outs.reserve(static_cast<size_t>(T));
        for (int step = 0; step < T; ++step) {
            VarId xt = ops::slice_rows(t, in, step, 1);
            VarId gates = ops::add(t, ops::linear(t, xt, wx, bx), ops::linear(t, h_prev, wh, bh));
            VarId gi = ops::sigmoid(t, ops::slice_cols(t, gates, 0, H));
            VarId gf = ops::sigmoid(t, ops::slice_cols(t, gates, H, H));
            VarId gg = ops::tanh_(t, ops::slice_cols(t, gates, 2 * H, H));
            VarId go = ops::sigmoid(t, ops::slice_cols(t, gates, 3 * H, H));
            VarId c = ops::add(t, ops::mul(t, gf, c_prev), ops::mul(t, gi, gg));
            VarId h = ops::mul(t, go, ops::tanh_(t, c));
            outs.push_back(h);
            h_prev = h;
            c_prev = c;
        }
        VarId stacked = ops::concat_rows(t, outs);
        return reverse ? ops::reverse_rows(t, stacked) : stacked;
    }

    // Output length of the temporal head for a T-frame input.
    static int t_out_for(int T) { return (T / 2) / 2; }

  private:
    static void add_conv(ParamSet<S>& P, uint64_t seed, const std::string& base,
                         std::vector<int> wdims) {
        int fan_in = 1;
        for (size_t i = 1; i < wdims.size(); ++i) fan_in *= wdims[i];
        const int co = wdims[0];
        P.add(base + ".w",
              init::kaiming_uniform<S>(std::move(wdims), fan_in, Rng::stream(seed, "init", Rng::hash_str(base + ".w"))));
        P.add(base + ".b", Tensor<S>::zeros({co}));
    }
};

// D-block projection of stage i (1-based, i in 1..3): strided 3x3 conv whose
// output dims match stage i+1. Stage 4 is teacher-only.
template <class S>
VarId dblock_project(Tape<S>& t, const Model<S>& model, const ModelForward<S>& fwd, int i) {
    check(i >= 1 && i <= 3, "dblock_project: stage 4 is only used as the teacher features");
    // params are leaves in fixed order; find the dblock leaf by name
    const std::string base = "dblock" + std::to_string(i);
    auto wi = model.params.index.find(base + ".w");
    auto bi = model.params.index.find(base + ".b");
    check(wi != model.params.index.end() && bi != model.params.index.end(),
          "dblock_project: missing parameters");
    VarId w = fwd.param_leaves[static_cast<size_t>(wi->second)];
    VarId b = fwd.param_leaves[static_cast<size_t>(bi->second)];
    const int stride = model.cfg.strides[static_cast<size_t>(i)];
    return ops::conv2d(t, fwd.stage[static_cast<size_t>(i - 1)], w, b, stride, 1);
}

}  // namespace mamfsd
