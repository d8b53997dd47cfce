// Temporal head: output-length arithmetic, uniform-logit identities, the
// scalar BiLSTM oracle, direction symmetry, and aux head contracts.

#include <cmath>

#include "doctest.h"
#include "mamfsd/model.hpp"
#include "mamfsd/ops.hpp"
#include "testutil.hpp"

using namespace mamfsd;
using testutil::rand_tensor;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig c;
    c.resolution = 16;
    c.stem_channels = 4;
    c.channels = {4, 4, 8, 8};
    c.strides = {1, 2, 2, 2};
    c.mam_count = 0;
    c.lstm_hidden = 6;
    c.vocab = 4;
    return c;
}

// independent scalar recurrence for one LSTM direction
std::vector<double> scalar_lstm(const std::vector<double>& x, int T, int D, int H,
                                const std::vector<double>& wx, const std::vector<double>& wh,
                                const std::vector<double>& bx, const std::vector<double>& bh) {
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    std::vector<double> h(static_cast<size_t>(H), 0.0), c(static_cast<size_t>(H), 0.0);
    std::vector<double> out;
    for (int t = 0; t < T; ++t) {
        std::vector<double> gates(static_cast<size_t>(4 * H), 0.0);
        for (int g = 0; g < 4 * H; ++g) {
            double acc = bx[static_cast<size_t>(g)] + bh[static_cast<size_t>(g)];
            for (int d = 0; d < D; ++d) acc += x[static_cast<size_t>(t * D + d)] * wx[static_cast<size_t>(g * D + d)];
            for (int k = 0; k < H; ++k) acc += h[static_cast<size_t>(k)] * wh[static_cast<size_t>(g * H + k)];
            gates[static_cast<size_t>(g)] = acc;
        }
        for (int k = 0; k < H; ++k) {
            double gi = sig(gates[static_cast<size_t>(k)]);
            double gf = sig(gates[static_cast<size_t>(H + k)]);
            double gg = std::tanh(gates[static_cast<size_t>(2 * H + k)]);
            double go = sig(gates[static_cast<size_t>(3 * H + k)]);
            c[static_cast<size_t>(k)] = gf * c[static_cast<size_t>(k)] + gi * gg;
            h[static_cast<size_t>(k)] = go * std::tanh(c[static_cast<size_t>(k)]);
        }
        for (int k = 0; k < H; ++k) out.push_back(h[static_cast<size_t>(k)]);
    }
    return out;
}

}  // namespace

TEST_CASE("output length is floor(floor(T/2)/2) and content-independent") {
    CHECK(Model<float>::t_out_for(16) == 4);
    CHECK(Model<float>::t_out_for(17) == 4);
    CHECK(Model<float>::t_out_for(19) == 4);
    CHECK(Model<float>::t_out_for(20) == 5);
    Model<float> m = Model<float>::build(tiny_cfg(), 3);
    Rng rng(51);
    for (int T : {16, 17}) {
        Tape<float> t;
        auto fwd = m.forward(t, rand_tensor<float>({T, 3, 16, 16}, rng, 0.0, 1.0), true);
        CHECK(t.val(fwd.logprobs).dims == std::vector<int>{4, m.cfg.vocab + 1});
        CHECK(t.val(fwd.aux_logprobs).dims == std::vector<int>{4, m.cfg.vocab + 1});
    }
    Tape<float> t;
    CHECK_THROWS_AS(m.forward(t, rand_tensor<float>({3, 3, 16, 16}, rng), false), ShapeError);
}

TEST_CASE("zero input and zero classifier give uniform per-step distributions") {
    ModelConfig c = tiny_cfg();
    Model<float> m = Model<float>::build(c, 5);
    auto& cw = m.params.get("cls.w");
    std::fill(cw.data.begin(), cw.data.end(), 0.0f);
    auto& aw = m.params.get("auxcls.w");
    std::fill(aw.data.begin(), aw.data.end(), 0.0f);
    Tape<float> t;
    auto fwd = m.forward(t, TensorF::zeros({8, 3, 16, 16}), true);
    const double expect = -std::log(double(c.vocab + 1));
    for (float v : t.val(fwd.logprobs).data) CHECK(v == doctest::Approx(expect));
    for (float v : t.val(fwd.aux_logprobs).data) CHECK(v == doctest::Approx(expect));
}

TEST_CASE("per-step probabilities sum to one within 1e-6") {
    Model<float> m = Model<float>::build(tiny_cfg(), 6);
    Rng rng(52);
    Tape<float> t;
    auto fwd = m.forward(t, rand_tensor<float>({12, 3, 16, 16}, rng, 0.0, 1.0), true);
    for (VarId id : {fwd.logprobs, fwd.aux_logprobs}) {
        const auto& lp = t.val(id);
        for (int r = 0; r < lp.dims[0]; ++r) {
            double s = 0;
            for (int k = 0; k < lp.dims[1]; ++k) s += std::exp(double(lp.data[size_t(r * lp.dims[1] + k)]));
            CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("BiLSTM gate recurrences match an independent scalar implementation (2-unit cell)") {
    const int T = 5, D = 3, H = 2;
    Rng rng(53);
    TensorD x = rand_tensor<double>({T, D}, rng);
    TensorD wx = rand_tensor<double>({4 * H, D}, rng);
    TensorD wh = rand_tensor<double>({4 * H, H}, rng);
    TensorD bx = rand_tensor<double>({4 * H}, rng);
    TensorD bh = rand_tensor<double>({4 * H}, rng);
    Tape<double> t;
    VarId out = Model<double>::lstm_direction(t, t.leaf(x), t.leaf(wx), t.leaf(wh), t.leaf(bx),
                                              t.leaf(bh), false);
    auto expect = scalar_lstm(x.data, T, D, H, wx.data, wh.data, bx.data, bh.data);
    const auto& got = t.val(out);
    REQUIRE(got.dims == std::vector<int>{T, H});
    for (size_t i = 0; i < expect.size(); ++i)
        CHECK(std::fabs(got.data[i] - expect[i]) < 1e-6);
}

TEST_CASE("swapping direction parameter sets and reversing input mirrors the BiLSTM") {
    const int T = 6, D = 4, H = 3;
    Rng rng(54);
    TensorD x = rand_tensor<double>({T, D}, rng);
    TensorD pf_wx = rand_tensor<double>({4 * H, D}, rng), pf_wh = rand_tensor<double>({4 * H, H}, rng);
    TensorD pf_bx = rand_tensor<double>({4 * H}, rng), pf_bh = rand_tensor<double>({4 * H}, rng);
    TensorD pb_wx = rand_tensor<double>({4 * H, D}, rng), pb_wh = rand_tensor<double>({4 * H, H}, rng);
    TensorD pb_bx = rand_tensor<double>({4 * H}, rng), pb_bh = rand_tensor<double>({4 * H}, rng);

    auto bi = [&](const TensorD& input, const TensorD& fwx, const TensorD& fwh, const TensorD& fbx,
                  const TensorD& fbh, const TensorD& bwx, const TensorD& bwh, const TensorD& bbx,
                  const TensorD& bbh) {
        Tape<double> t;
        VarId xi = t.leaf(input);
        VarId f = Model<double>::lstm_direction(t, xi, t.leaf(fwx), t.leaf(fwh), t.leaf(fbx), t.leaf(fbh), false);
        VarId b = Model<double>::lstm_direction(t, xi, t.leaf(bwx), t.leaf(bwh), t.leaf(bbx), t.leaf(bbh), true);
        return t.val(ops::concat_cols(t, f, b));
    };

    TensorD xrev = x;
    for (int tt = 0; tt < T; ++tt)
        for (int d = 0; d < D; ++d) xrev.data[size_t(tt * D + d)] = x.data[size_t((T - 1 - tt) * D + d)];

    auto orig = bi(x, pf_wx, pf_wh, pf_bx, pf_bh, pb_wx, pb_wh, pb_bx, pb_bh);
    auto swapped = bi(xrev, pb_wx, pb_wh, pb_bx, pb_bh, pf_wx, pf_wh, pf_bx, pf_bh);
    // orig[t] = [fwd_pf(x)[t], bwd_pb(x)[t]]; swapped[T-1-t] = [bwd_pb(x)[t], fwd_pf(x)[t]]
    for (int tt = 0; tt < T; ++tt)
        for (int k = 0; k < H; ++k) {
            CHECK(orig.data[size_t(tt * 2 * H + k)] ==
                  doctest::Approx(swapped.data[size_t((T - 1 - tt) * 2 * H + H + k)]));
            CHECK(orig.data[size_t(tt * 2 * H + H + k)] ==
                  doctest::Approx(swapped.data[size_t((T - 1 - tt) * 2 * H + k)]));
        }
}

TEST_CASE("KL of a distribution against itself is exactly zero") {
    Rng rng(55);
    Tape<float> t;
    VarId lp = ops::log_softmax(t, t.leaf(rand_tensor<float>({4, 5}, rng)));
    VarId diff = ops::sub(t, lp, lp);
    VarId kl = ops::scale(t, ops::mean_all(t, ops::mul(t, ops::exp_(t, lp), diff)), 5.0f);
    CHECK(t.val(kl).data[0] == 0.0f);
}

TEST_CASE("LSTM direction gradient against central differences") {
    const int T = 4, D = 3, H = 2;
    Rng rng(56);
    std::vector<TensorD> params = {
        rand_tensor<double>({T, D}, rng),      rand_tensor<double>({4 * H, D}, rng),
        rand_tensor<double>({4 * H, H}, rng),  rand_tensor<double>({4 * H}, rng),
        rand_tensor<double>({4 * H}, rng),
    };
    auto build = [](Tape<double>& t, const std::vector<VarId>& p) {
        VarId out = Model<double>::lstm_direction(t, p[0], p[1], p[2], p[3], p[4], false);
        return ops::mean_all(t, ops::mul(t, out, out));
    };
    auto rep = testutil::fd_check(params, build, rng, 80);
    CHECK(rep.max_rel_err < 1e-4);
}
