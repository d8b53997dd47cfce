// Pointwise/reduction op values, gradient checks against central finite
// differences on the double engine, and tape mechanics (sum of uses,
// reverse order, double-backward error).

#include <cmath>

#include "doctest.h"
#include "mamfsd/graph.hpp"
#include "mamfsd/ops.hpp"
#include "testutil.hpp"

using namespace mamfsd;
using testutil::fd_check;
using testutil::rand_tensor;

TEST_CASE("pointwise values") {
    Tape<double> t;
    VarId x = t.leaf(TensorD({3}, {0.0, -1.0, 2.0}));
    CHECK(t.val(ops::sigmoid(t, x)).data[0] == doctest::Approx(0.5));
    VarId r = ops::relu(t, x);
    CHECK(t.val(r).data[1] == 0.0);
    CHECK(t.val(r).data[2] == 2.0);
    VarId ones = t.leaf(TensorD::full({3}, 1.0));
    VarId m = ops::mul(t, x, ones);
    for (int i = 0; i < 3; ++i) CHECK(t.val(m).data[size_t(i)] == t.val(x).data[size_t(i)]);
    CHECK_THROWS_AS(ops::add(t, x, t.leaf(TensorD::zeros({4}))), ShapeError);
}

TEST_CASE("sigmoid output stays strictly inside (0,1)") {
    Tape<float> t;
    VarId x = t.leaf(TensorF({4}, {-200.0f, -30.0f, 30.0f, 200.0f}));
    const auto& y = t.val(ops::sigmoid(t, x));
    for (float v : y.data) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("simple derivative identities") {
    // d sigmoid/dx at 0 = 0.25; d relu/dx at 2 = 1, at -1 = 0
    Tape<double> t;
    TensorD x({3}, {0.0, 2.0, -1.0});
    x.requires_grad = true;
    VarId xi = t.leaf(x);
    VarId sig = ops::sigmoid(t, xi);
    VarId rel = ops::relu(t, xi);
    VarId total = ops::mean_all(t, ops::add(t, sig, rel));
    t.backward(total);
    auto dsig = [](double v) {
        double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 - s);
    };
    const auto& g = t.grad(xi);
    CHECK(g.data[0] == doctest::Approx((0.25 + 0.0) / 3.0));
    CHECK(g.data[1] == doctest::Approx((dsig(2.0) + 1.0) / 3.0));
    CHECK(g.data[2] == doctest::Approx((dsig(-1.0) + 0.0) / 3.0));
}

TEST_CASE("reduction values") {
    Tape<double> t;
    // constant map pools to the constant
    VarId c = t.leaf(TensorD::full({2, 3, 3}, 4.25));
    const auto& gap = t.val(ops::global_avg_pool_2d(t, c));
    CHECK(gap.dims == std::vector<int>{2});
    CHECK(gap.data[0] == doctest::Approx(4.25));
    // max_pool_1d([1,3,2,0]) -> [3,2]
    VarId p = t.leaf(TensorD({4}, {1.0, 3.0, 2.0, 0.0}));
    const auto& pooled = t.val(ops::max_pool_1d(t, p));
    REQUIRE(pooled.dims == std::vector<int>{2});
    CHECK(pooled.data[0] == 3.0);
    CHECK(pooled.data[1] == 2.0);
    // uniform logits -> -ln(V)
    const int V = 7;
    VarId u = t.leaf(TensorD::zeros({V}));
    const auto& lsm = t.val(ops::log_softmax(t, u));
    for (double v : lsm.data) CHECK(v == doctest::Approx(-std::log(double(V))));
    CHECK_THROWS_AS(ops::log_softmax(t, t.leaf(TensorD::zeros({0}))), ShapeError);
}

TEST_CASE("log_softmax rows normalize: exp sums to 1 within 1e-6") {
    Rng rng(21);
    Tape<double> t;
    VarId x = t.leaf(rand_tensor<double>({5, 9}, rng, -8.0, 8.0));
    const auto& y = t.val(ops::log_softmax(t, x));
    for (int r = 0; r < 5; ++r) {
        double s = 0;
        for (int c = 0; c < 9; ++c) s += std::exp(y.data[size_t(r * 9 + c)]);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("mse values and scalar-loop oracle") {
    Tape<double> t;
    VarId a = t.leaf(TensorD({2}, {1.0, 2.0}));
    VarId b = t.leaf(TensorD({2}, {0.0, 0.0}));
    CHECK(t.val(ops::mse(t, a, a)).data[0] == 0.0);
    CHECK(t.val(ops::mse(t, a, b)).data[0] == doctest::Approx(2.5));
    Rng rng(22);
    TensorD y = rand_tensor<double>({4, 5}, rng);
    TensorD z = rand_tensor<double>({4, 5}, rng);
    double expect = 0;
    for (size_t i = 0; i < y.data.size(); ++i) expect += (y.data[i] - z.data[i]) * (y.data[i] - z.data[i]);
    expect /= double(y.numel());
    VarId got = ops::mse(t, t.leaf(y), t.leaf(z));
    CHECK(std::fabs(t.val(got).data[0] - expect) < 1e-7);
    CHECK_THROWS_AS(ops::mse(t, a, t.leaf(TensorD::zeros({3}))), ShapeError);
}

TEST_CASE("gradients: every op against central differences") {
    Rng rng(23);
    auto run = [&](const char* name, std::vector<TensorD> params, const testutil::BuildFn& build) {
        auto rep = fd_check(std::move(params), build, rng, 60);
        INFO(name);
        CHECK(rep.max_rel_err < 1e-4);
    };

    run("conv3d_temporal",
        {rand_tensor<double>({2, 5, 3, 3}, rng), rand_tensor<double>({2, 2, 3}, rng),
         rand_tensor<double>({2}, rng)},
        [](Tape<double>& t, const std::vector<VarId>& p) {
            return ops::mean_all(t, ops::tanh_(t, ops::conv3d_temporal(t, p[0], p[1], p[2])));
        });

    run("conv2d strided",
        {rand_tensor<double>({2, 3, 6, 6}, rng), rand_tensor<double>({4, 3, 3, 3}, rng),
         rand_tensor<double>({4}, rng)},
        [](Tape<double>& t, const std::vector<VarId>& p) {
            return ops::mean_all(t, ops::tanh_(t, ops::conv2d(t, p[0], p[1], p[2], 2, 1)));
        });

    run("conv1d",
        {rand_tensor<double>({7, 4}, rng), rand_tensor<double>({5, 4, 5}, rng),
         rand_tensor<double>({5}, rng)},
        [](Tape<double>& t, const std::vector<VarId>& p) {
            return ops::mean_all(t, ops::tanh_(t, ops::conv1d(t, p[0], p[1], p[2])));
        });

    run("linear",
        {rand_tensor<double>({3, 6}, rng), rand_tensor<double>({4, 6}, rng),
         rand_tensor<double>({4}, rng)},
        [](Tape<double>& t, const std::vector<VarId>& p) {
            return ops::mean_all(t, ops::sigmoid(t, ops::linear(t, p[0], p[1], p[2])));
        });

    run("pointwise chain", {rand_tensor<double>({4, 4}, rng, 0.2, 1.5), rand_tensor<double>({4, 4}, rng, 0.2, 1.5)},
        [](Tape<double>& t, const std::vector<VarId>& p) {
            VarId a = ops::mul(t, ops::sigmoid(t, p[0]), ops::tanh_(t, p[1]));
            VarId b = ops::sub(t, a, ops::scale(t, ops::exp_(t, p[1]), 0.3));
            return ops::mean_all(t, b);
        });

    run("pools + log_softmax", {rand_tensor<double>({8, 6}, rng)},
        [](Tape<double>& t, const std::vector<VarId>& p) {
            VarId pooled = ops::max_pool_1d(t, p[0]);
            return ops::mean_all(t, ops::log_softmax(t, pooled));
        });

    run("gap + transpose + slices", {rand_tensor<double>({3, 2, 4, 4}, rng)},
        [](Tape<double>& t, const std::vector<VarId>& p) {
            VarId tr = ops::transpose01(t, p[0]);             // [2,3,4,4]
            VarId g = ops::global_avg_pool_2d(t, tr);         // [2,3]
            VarId s = ops::slice_cols(t, g, 1, 2);            // [2,2]
            VarId r = ops::concat_cols(t, s, ops::reverse_rows(t, s));
            return ops::mean_all(t, ops::mul(t, r, r));
        });

    run("mse pair", {rand_tensor<double>({3, 5}, rng), rand_tensor<double>({3, 5}, rng)},
        [](Tape<double>& t, const std::vector<VarId>& p) { return ops::mse(t, p[0], p[1]); });
}

TEST_CASE("composite net gradient: conv3d -> relu -> conv2d -> sigmoid -> mse") {
    Rng rng(24);
    std::vector<TensorD> params = {
        rand_tensor<double>({2, 6, 5, 5}, rng, 0.1, 1.0),  // input, positive so relu kinks are avoided
        rand_tensor<double>({2, 2, 3}, rng),               // temporal kernel
        rand_tensor<double>({2}, rng, 0.1, 0.5),           // temporal bias
        rand_tensor<double>({3, 2, 3, 3}, rng),            // conv2d kernel
        rand_tensor<double>({3}, rng, 0.1, 0.5),           // conv2d bias
    };
    Rng target_rng(99);
    TensorD target = rand_tensor<double>({6, 3, 5, 5}, target_rng, 0.0, 1.0);
    auto build = [target](Tape<double>& t, const std::vector<VarId>& p) {
        VarId h = ops::relu(t, ops::conv3d_temporal(t, p[0], p[1], p[2]));  // [2,6,5,5]
        VarId frames = ops::transpose01(t, h);                              // [6,2,5,5]
        VarId c = ops::sigmoid(t, ops::conv2d(t, frames, p[3], p[4], 1, 1));
        VarId tgt = t.constant(target);
        return ops::mse(t, tgt, c);
    };
    auto rep = fd_check(params, build, rng, 100);
    CHECK(rep.probes == 100);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("fused conv+relu nodes match the composed ops bitwise, values and gradients") {
    Rng rng(26);
    TensorD x = rand_tensor<double>({3, 2, 5, 5}, rng);
    TensorD w = rand_tensor<double>({4, 2, 3, 3}, rng);
    TensorD b = rand_tensor<double>({4}, rng);
    x.requires_grad = w.requires_grad = b.requires_grad = true;
    auto run = [&](bool fused, TensorD* gw, TensorD* gx) {
        Tape<double> t;
        VarId xi = t.leaf(x), wi = t.leaf(w), bi = t.leaf(b);
        VarId y = fused ? ops::conv2d(t, xi, wi, bi, 1, 1, true)
                        : ops::relu(t, ops::conv2d(t, xi, wi, bi, 1, 1));
        TensorD val = t.val(y);
        t.backward(ops::mean_all(t, ops::mul(t, y, y)));
        *gw = t.grad(wi);
        *gx = t.grad(xi);
        return val;
    };
    TensorD gw1, gx1, gw2, gx2;
    TensorD v1 = run(true, &gw1, &gx1);
    TensorD v2 = run(false, &gw2, &gx2);
    CHECK(v1.data == v2.data);
    CHECK(gw1.data == gw2.data);
    CHECK(gx1.data == gx2.data);

    // add_relu against relu(add(...))
    Tape<double> t;
    VarId a = t.leaf(rand_tensor<double>({4, 4}, rng));
    VarId bb = t.leaf(rand_tensor<double>({4, 4}, rng));
    TensorD fused_val = t.val(ops::add_relu(t, a, bb));
    TensorD composed_val = t.val(ops::relu(t, ops::add(t, a, bb)));
    CHECK(fused_val.data == composed_val.data);
}

TEST_CASE("a tensor used k times accumulates k contributions") {
    // y = mean(x*x + x*x) has gradient 4x/n; the duplicated input must sum
    Tape<double> t;
    TensorD x({3}, {0.5, -1.0, 2.0});
    x.requires_grad = true;
    VarId xi = t.leaf(x);
    VarId m1 = ops::mul(t, xi, xi);
    VarId m2 = ops::mul(t, xi, xi);
    VarId s = ops::add(t, m1, m2);
    t.backward(ops::mean_all(t, s));
    const auto& g = t.grad(xi);
    for (int i = 0; i < 3; ++i)
        CHECK(g.data[size_t(i)] == doctest::Approx(4.0 * x.data[size_t(i)] / 3.0));
}

TEST_CASE("backward mechanics: scalar root, single call") {
    Tape<double> t;
    TensorD x({2}, {1.0, 2.0});
    x.requires_grad = true;
    VarId xi = t.leaf(x);
    VarId y = ops::mul(t, xi, xi);
    CHECK_THROWS_AS(t.backward(y), ShapeError);  // non-scalar root
    Tape<double> t2;
    VarId x2 = t2.leaf(x);
    VarId loss = ops::mean_all(t2, ops::mul(t2, x2, x2));
    t2.backward(loss);
    CHECK_THROWS_AS(t2.backward(loss), ShapeError);  // called twice without reset
}

TEST_CASE("determinism: identical seeds give bit-identical forward and gradients") {
    auto run_once = [](uint64_t seed, std::vector<float>* fwd, std::vector<float>* grad) {
        Rng rng(seed);
        TensorF x = rand_tensor<float>({2, 4, 5, 5}, rng);
        x.requires_grad = true;
        TensorF w = rand_tensor<float>({2, 2, 3}, rng);
        w.requires_grad = true;
        TensorF b = rand_tensor<float>({2}, rng);
        Tape<float> t;
        VarId xi = t.leaf(x), wi = t.leaf(w), bi = t.leaf(b);
        VarId y = ops::sigmoid(t, ops::conv3d_temporal(t, xi, wi, bi));
        VarId loss = ops::mean_all(t, y);
        t.backward(loss);
        *fwd = t.val(y).data;
        *grad = t.grad(wi).data;
    };
    std::vector<float> f1, g1, f2, g2;
    run_once(5, &f1, &g1);
    run_once(5, &f2, &g2);
    CHECK(f1 == f2);
    CHECK(g1 == g2);
}
