#pragma once

// Differentiable operator set. Every op validates shapes up front, computes
// the forward value, and registers a backward closure on the tape. No
// broadcasting anywhere; shapes must match exactly.

#include <cmath>
#include <limits>
#include <vector>

#include "mamfsd/graph.hpp"
#include "mamfsd/kernels.hpp"

namespace mamfsd::ops {

namespace detail {

// native-precision transcendentals: float storage computes in float
inline float exp_s(float v) { return std::exp(v); }
inline double exp_s(double v) { return std::exp(v); }
inline float tanh_s(float v) { return std::tanh(v); }
inline double tanh_s(double v) { return std::tanh(v); }

}  // namespace detail

// ---------------------------------------------------------------------------
// pointwise
// ---------------------------------------------------------------------------

template <class S>
VarId relu(Tape<S>& t, VarId x) {
    Tensor<S> y = t.val(x);
    for (auto& v : y.data) v = v > S(0) ? v : S(0);
    return t.push(std::move(y), {x}, "relu", [x](Tape<S>& tp, VarId self) {
        if (!tp.needs_grad(x)) return;
        const auto& xv = tp.val(x);
        const auto& dy = tp.grad(self);
        auto& dx = tp.grad(x);
        for (size_t i = 0; i < dx.data.size(); ++i)
            if (xv.data[i] > S(0)) dx.data[i] += dy.data[i];
    });
}

// Output clamped to the open interval (0,1): the widest representable one in
// S, so downstream gating contracts hold even at saturating inputs.
template <class S>
VarId sigmoid(Tape<S>& t, VarId x) {
    const S lo = std::numeric_limits<S>::min();
    const S hi = S(1) - std::numeric_limits<S>::epsilon() / S(2);
    Tensor<S> y = t.val(x);
    for (auto& v : y.data) {
        S sv = S(1) / (S(1) + detail::exp_s(-v));
        v = sv < lo ? lo : (sv > hi ? hi : sv);
    }
    return t.push(std::move(y), {x}, "sigmoid", [x](Tape<S>& tp, VarId self) {
        if (!tp.needs_grad(x)) return;
        const auto& yv = tp.val(self);
        const auto& dy = tp.grad(self);
        auto& dx = tp.grad(x);
        for (size_t i = 0; i < dx.data.size(); ++i)
            dx.data[i] += dy.data[i] * yv.data[i] * (S(1) - yv.data[i]);
    });
}

template <class S>
VarId tanh_(Tape<S>& t, VarId x) {
    Tensor<S> y = t.val(x);
    for (auto& v : y.data) v = detail::tanh_s(v);
    return t.push(std::move(y), {x}, "tanh", [x](Tape<S>& tp, VarId self) {
        if (!tp.needs_grad(x)) return;
        const auto& yv = tp.val(self);
        const auto& dy = tp.grad(self);
        auto& dx = tp.grad(x);
        for (size_t i = 0; i < dx.data.size(); ++i)
            dx.data[i] += dy.data[i] * (S(1) - yv.data[i] * yv.data[i]);
    });
}

template <class S>
VarId exp_(Tape<S>& t, VarId x) {
    Tensor<S> y = t.val(x);
    for (auto& v : y.data) v = detail::exp_s(v);
    return t.push(std::move(y), {x}, "exp", [x](Tape<S>& tp, VarId self) {
        if (!tp.needs_grad(x)) return;
        const auto& yv = tp.val(self);
        const auto& dy = tp.grad(self);
        auto& dx = tp.grad(x);
        for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dy.data[i] * yv.data[i];
    });
}

template <class S>
VarId add(Tape<S>& t, VarId a, VarId b) {
    check(t.val(a).same_dims(t.val(b)), "add: dims mismatch");
    Tensor<S> y = t.val(a);
    const auto& bv = t.val(b);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += bv.data[i];
    return t.push(std::move(y), {a, b}, "add", [a, b](Tape<S>& tp, VarId self) {
        const auto& dy = tp.grad(self);
        if (tp.needs_grad(a)) {
            auto& da = tp.grad(a);
            for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += dy.data[i];
        }
        if (tp.needs_grad(b)) {
            auto& db = tp.grad(b);
            for (size_t i = 0; i < db.data.size(); ++i) db.data[i] += dy.data[i];
        }
    });
}

template <class S>
VarId sub(Tape<S>& t, VarId a, VarId b) {
    check(t.val(a).same_dims(t.val(b)), "sub: dims mismatch");
    Tensor<S> y = t.val(a);
    const auto& bv = t.val(b);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] -= bv.data[i];
    return t.push(std::move(y), {a, b}, "sub", [a, b](Tape<S>& tp, VarId self) {
        const auto& dy = tp.grad(self);
        if (tp.needs_grad(a)) {
            auto& da = tp.grad(a);
            for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += dy.data[i];
        }
        if (tp.needs_grad(b)) {
            auto& db = tp.grad(b);
            for (size_t i = 0; i < db.data.size(); ++i) db.data[i] -= dy.data[i];
        }
    });
}

template <class S>
VarId mul(Tape<S>& t, VarId a, VarId b) {
    check(t.val(a).same_dims(t.val(b)), "mul: dims mismatch");
    Tensor<S> y = t.val(a);
    const auto& bv = t.val(b);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] *= bv.data[i];
    return t.push(std::move(y), {a, b}, "mul", [a, b](Tape<S>& tp, VarId self) {
        const auto& dy = tp.grad(self);
        if (tp.needs_grad(a)) {
            const auto& bv2 = tp.val(b);
            auto& da = tp.grad(a);
            for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += dy.data[i] * bv2.data[i];
        }
        if (tp.needs_grad(b)) {
            const auto& av2 = tp.val(a);
            auto& db = tp.grad(b);
            for (size_t i = 0; i < db.data.size(); ++i) db.data[i] += dy.data[i] * av2.data[i];
        }
    });
}

// relu(a + b) in one node; both parents see the masked gradient.
template <class S>
VarId add_relu(Tape<S>& t, VarId a, VarId b) {
    check(t.val(a).same_dims(t.val(b)), "add_relu: dims mismatch");
    Tensor<S> y = t.val(a);
    const auto& bv = t.val(b);
    for (size_t i = 0; i < y.data.size(); ++i) {
        S v = y.data[i] + bv.data[i];
        y.data[i] = v > S(0) ? v : S(0);
    }
    return t.push(std::move(y), {a, b}, "add_relu", [a, b](Tape<S>& tp, VarId self) {
        const auto& yv = tp.val(self);
        const auto& dy = tp.grad(self);
        if (tp.needs_grad(a)) {
            auto& da = tp.grad(a);
            for (size_t i = 0; i < da.data.size(); ++i)
                if (yv.data[i] > S(0)) da.data[i] += dy.data[i];
        }
        if (tp.needs_grad(b)) {
            auto& db = tp.grad(b);
            for (size_t i = 0; i < db.data.size(); ++i)
                if (yv.data[i] > S(0)) db.data[i] += dy.data[i];
        }
    });
}

template <class S>
VarId scale(Tape<S>& t, VarId x, S factor) {
    Tensor<S> y = t.val(x);
    for (auto& v : y.data) v *= factor;
    return t.push(std::move(y), {x}, "scale", [x, factor](Tape<S>& tp, VarId self) {
        if (!tp.needs_grad(x)) return;
        const auto& dy = tp.grad(self);
        auto& dx = tp.grad(x);
        for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += factor * dy.data[i];
    });
}

// Value copy that blocks gradient flow (teacher side of distillation).
template <class S>
VarId detach(Tape<S>& t, VarId x) {
    Tensor<S> y = t.val(x);
    y.requires_grad = false;
    return t.leaf(std::move(y));
}

// ---------------------------------------------------------------------------
// convolutions / linear
// ---------------------------------------------------------------------------

namespace detail {

// Gradient of a fused trailing ReLU, masked in place: a node's own gradient
// buffer has no readers after its backward runs.
template <class S>
void relu_mask_grad_inplace(const Tensor<S>& y, Tensor<S>& dy) {
    for (size_t i = 0; i < dy.data.size(); ++i)
        if (y.data[i] <= S(0)) dy.data[i] = S(0);
}

}  // namespace detail

// x [C,H,W] or [T,C,H,W]; w [Co,Ci,K,K]; b [Co]. fuse_relu applies a ReLU to
// the output inside the node (the stored value is the activated one).
template <class S>
VarId conv2d(Tape<S>& t, VarId x, VarId w, VarId b, int stride, int pad, bool fuse_relu = false) {
    const auto& xv = t.val(x);
    const auto& wv = t.val(w);
    const auto& bv = t.val(b);
    check(xv.rank() == 3 || xv.rank() == 4, "conv2d: input must be [C,H,W] or [T,C,H,W]");
    check(wv.rank() == 4 && wv.dims[2] == wv.dims[3], "conv2d: weight must be [Co,Ci,K,K]");
    check(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
    const bool batched = xv.rank() == 4;
    const int T = batched ? xv.dims[0] : 1;
    const int Ci = batched ? xv.dims[1] : xv.dims[0];
    const int H = batched ? xv.dims[2] : xv.dims[1];
    const int W = batched ? xv.dims[3] : xv.dims[2];
    const int Co = wv.dims[0];
    const int K = wv.dims[2];
    check(wv.dims[1] == Ci, "conv2d: channel mismatch");
    check(bv.rank() == 1 && bv.dims[0] == Co, "conv2d: bias must be [Co]");
    const int Ho = kernels::conv_out_extent(H, K, stride, pad);
    const int Wo = kernels::conv_out_extent(W, K, stride, pad);
    check(Ho > 0 && Wo > 0, "conv2d: non-positive output extent");
    Tensor<S> y = Tensor<S>::zeros(batched ? std::vector<int>{T, Co, Ho, Wo}
                                           : std::vector<int>{Co, Ho, Wo});
    kernels::conv2d_fwd(xv.data.data(), wv.data.data(), bv.data.data(), y.data.data(), T, Ci, H, W,
                        Co, K, stride, pad);
    if (fuse_relu)
        for (auto& v : y.data) v = v > S(0) ? v : S(0);
    return t.push(std::move(y), {x, w, b}, fuse_relu ? "conv2d_relu" : "conv2d",
                  [x, w, b, T, Ci, H, W, Co, K, stride, pad, fuse_relu](Tape<S>& tp, VarId self) {
                      Tensor<S>& dy = tp.grad(self);
                      if (fuse_relu) detail::relu_mask_grad_inplace(tp.val(self), dy);
                      if (tp.needs_grad(x))
                          kernels::conv2d_bwd_input(dy.data.data(), tp.val(w).data.data(),
                                                    tp.grad(x).data.data(), T, Ci, H, W, Co, K,
                                                    stride, pad);
                      if (tp.needs_grad(w) || tp.needs_grad(b))
                          kernels::conv2d_bwd_weight(dy.data.data(), tp.val(x).data.data(),
                                                     tp.grad(w).data.data(),
                                                     tp.needs_grad(b) ? tp.grad(b).data.data() : nullptr,
                                                     T, Ci, H, W, Co, K, stride, pad);
                  });
}

// Temporal-only 3D convolution; w [Co,Ci,N] with N odd, temporal zero
// padding (N-1)/2. tc_layout=false takes and returns [C,T,H,W]; true works
// on [T,C,H,W] directly (same arithmetic, different slice strides).
template <class S>
VarId conv3d_temporal(Tape<S>& t, VarId x, VarId w, VarId b, bool fuse_relu = false,
                      bool tc_layout = false) {
    const auto& xv = t.val(x);
    const auto& wv = t.val(w);
    const auto& bv = t.val(b);
    check(xv.rank() == 4, "conv3d_temporal: input must be rank 4");
    check(wv.rank() == 3, "conv3d_temporal: weight must be [Co,Ci,N]");
    const int Ci = tc_layout ? xv.dims[1] : xv.dims[0];
    const int T = tc_layout ? xv.dims[0] : xv.dims[1];
    const int H = xv.dims[2], W = xv.dims[3];
    const int Co = wv.dims[0], N = wv.dims[2];
    check(N % 2 == 1, "conv3d_temporal: kernel extent must be odd");
    check(wv.dims[1] == Ci, "conv3d_temporal: channel mismatch");
    check(bv.rank() == 1 && bv.dims[0] == Co, "conv3d_temporal: bias must be [Co]");
    Tensor<S> y = Tensor<S>::zeros(tc_layout ? std::vector<int>{T, Co, H, W}
                                             : std::vector<int>{Co, T, H, W});
    kernels::conv3d_temporal_fwd(xv.data.data(), wv.data.data(), bv.data.data(), y.data.data(), Ci,
                                 T, H, W, Co, N, tc_layout);
    if (fuse_relu)
        for (auto& v : y.data) v = v > S(0) ? v : S(0);
    return t.push(std::move(y), {x, w, b}, fuse_relu ? "conv3d_temporal_relu" : "conv3d_temporal",
                  [x, w, b, Ci, T, H, W, Co, N, fuse_relu, tc_layout](Tape<S>& tp, VarId self) {
                      Tensor<S>& dy = tp.grad(self);
                      if (fuse_relu) detail::relu_mask_grad_inplace(tp.val(self), dy);
                      if (tp.needs_grad(x))
                          kernels::conv3d_temporal_bwd_input(dy.data.data(), tp.val(w).data.data(),
                                                             tp.grad(x).data.data(), Ci, T, H, W,
                                                             Co, N, tc_layout);
                      if (tp.needs_grad(w) || tp.needs_grad(b))
                          kernels::conv3d_temporal_bwd_weight(
                              dy.data.data(), tp.val(x).data.data(), tp.grad(w).data.data(),
                              tp.needs_grad(b) ? tp.grad(b).data.data() : nullptr, Ci, T, H, W, Co,
                              N, tc_layout);
                  });
}

// x [T,Di]; w [Do,Di,K] with K odd; same padding along T
template <class S>
VarId conv1d(Tape<S>& t, VarId x, VarId w, VarId b) {
    const auto& xv = t.val(x);
    const auto& wv = t.val(w);
    const auto& bv = t.val(b);
    check(xv.rank() == 2, "conv1d: input must be [T,D]");
    check(wv.rank() == 3, "conv1d: weight must be [Do,Di,K]");
    const int T = xv.dims[0], Di = xv.dims[1];
    const int Do = wv.dims[0], K = wv.dims[2];
    check(K % 2 == 1, "conv1d: kernel extent must be odd");
    check(wv.dims[1] == Di, "conv1d: channel mismatch");
    check(bv.rank() == 1 && bv.dims[0] == Do, "conv1d: bias must be [Do]");
    Tensor<S> y = Tensor<S>::zeros({T, Do});
    kernels::conv1d_fwd(xv.data.data(), wv.data.data(), bv.data.data(), y.data.data(), T, Di, Do, K);
    return t.push(std::move(y), {x, w, b}, "conv1d", [x, w, b, T, Di, Do, K](Tape<S>& tp, VarId self) {
        const auto& dy = tp.grad(self);
        S* dx = tp.needs_grad(x) ? tp.grad(x).data.data() : nullptr;
        S* dw = tp.needs_grad(w) ? tp.grad(w).data.data() : nullptr;
        S* db = tp.needs_grad(b) ? tp.grad(b).data.data() : nullptr;
        kernels::conv1d_bwd(dy.data.data(), tp.val(x).data.data(), tp.val(w).data.data(), dx, dw,
                            db, T, Di, Do, K);
    });
}

// x [N,D]; w [M,D]; b [M]
template <class S>
VarId linear(Tape<S>& t, VarId x, VarId w, VarId b) {
    const auto& xv = t.val(x);
    const auto& wv = t.val(w);
    const auto& bv = t.val(b);
    check(xv.rank() == 2 && wv.rank() == 2, "linear: x and w must be rank 2");
    const int N = xv.dims[0], D = xv.dims[1], M = wv.dims[0];
    check(wv.dims[1] == D, "linear: inner dim mismatch");
    check(bv.rank() == 1 && bv.dims[0] == M, "linear: bias must be [M]");
    Tensor<S> y = Tensor<S>::zeros({N, M});
    kernels::linear_fwd(xv.data.data(), wv.data.data(), bv.data.data(), y.data.data(), N, D, M);
    return t.push(std::move(y), {x, w, b}, "linear", [x, w, b, N, D, M](Tape<S>& tp, VarId self) {
        const auto& dy = tp.grad(self);
        if (tp.needs_grad(x))
            kernels::linear_bwd_input(dy.data.data(), tp.val(w).data.data(), tp.grad(x).data.data(),
                                      N, D, M);
        if (tp.needs_grad(w) || tp.needs_grad(b))
            kernels::linear_bwd_weight(dy.data.data(), tp.val(x).data.data(),
                                       tp.grad(w).data.data(),
                                       tp.needs_grad(b) ? tp.grad(b).data.data() : nullptr, N, D, M);
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

// [C,H,W] -> [C] or [T,C,H,W] -> [T,C]; 64-bit accumulation per slice.
template <class S>
VarId global_avg_pool_2d(Tape<S>& t, VarId x) {
    const auto& xv = t.val(x);
    check(xv.rank() == 3 || xv.rank() == 4, "global_avg_pool_2d: rank must be 3 or 4");
    const int H = xv.dims[xv.rank() - 2], W = xv.dims[xv.rank() - 1];
    check(H > 0 && W > 0, "global_avg_pool_2d: empty axis");
    const int slices = static_cast<int>(xv.numel() / (H * W));
    Tensor<S> y = Tensor<S>::zeros(xv.rank() == 3 ? std::vector<int>{xv.dims[0]}
                                                  : std::vector<int>{xv.dims[0], xv.dims[1]});
    const int hw = H * W;
    for (int s = 0; s < slices; ++s) {
        double acc = 0;
        const S* src = xv.data.data() + static_cast<int64_t>(s) * hw;
        for (int i = 0; i < hw; ++i) acc += static_cast<double>(src[i]);
        y.data[static_cast<size_t>(s)] = static_cast<S>(acc / hw);
    }
    return t.push(std::move(y), {x}, "global_avg_pool_2d", [x, slices, hw](Tape<S>& tp, VarId self) {
        if (!tp.needs_grad(x)) return;
        const auto& dy = tp.grad(self);
        auto& dx = tp.grad(x);
        for (int s = 0; s < slices; ++s) {
            const S g = static_cast<S>(static_cast<double>(dy.data[static_cast<size_t>(s)]) / hw);
            S* dst = dx.data.data() + static_cast<int64_t>(s) * hw;
            for (int i = 0; i < hw; ++i) dst[i] += g;
        }
    });
}

// kernel 2, stride 2 along axis 0; [T] -> [T/2] or [T,D] -> [T/2,D].
// Ties route the gradient to the earlier step.
template <class S>
VarId max_pool_1d(Tape<S>& t, VarId x) {
    const auto& xv = t.val(x);
    check(xv.rank() == 1 || xv.rank() == 2, "max_pool_1d: rank must be 1 or 2");
    const int T = xv.dims[0];
    const int D = xv.rank() == 2 ? xv.dims[1] : 1;
    const int To = T / 2;
    check(To >= 1, "max_pool_1d: empty axis");
    Tensor<S> y = Tensor<S>::zeros(xv.rank() == 1 ? std::vector<int>{To} : std::vector<int>{To, D});
    for (int o = 0; o < To; ++o)
        for (int d = 0; d < D; ++d) {
            S a = xv.data[static_cast<size_t>(2 * o) * D + d];
            S b = xv.data[static_cast<size_t>(2 * o + 1) * D + d];
            y.data[static_cast<size_t>(o) * D + d] = a >= b ? a : b;
        }
    return t.push(std::move(y), {x}, "max_pool_1d", [x, To, D](Tape<S>& tp, VarId self) {
        if (!tp.needs_grad(x)) return;
        const auto& xv2 = tp.val(x);
        const auto& dy = tp.grad(self);
        auto& dx = tp.grad(x);
        for (int o = 0; o < To; ++o)
            for (int d = 0; d < D; ++d) {
                size_t ia = static_cast<size_t>(2 * o) * D + d;
                size_t ib = static_cast<size_t>(2 * o + 1) * D + d;
                size_t sel = xv2.data[ia] >= xv2.data[ib] ? ia : ib;
                dx.data[sel] += dy.data[static_cast<size_t>(o) * D + d];
            }
    });
}

template <class S>
VarId mean_all(Tape<S>& t, VarId x) {
    const auto& xv = t.val(x);
    const int64_t n = xv.numel();
    check(n > 0, "mean: empty axis");
    double acc = 0;
    for (S v : xv.data) acc += static_cast<double>(v);
    Tensor<S> y = Tensor<S>::scalar(static_cast<S>(acc / static_cast<double>(n)));
    return t.push(std::move(y), {x}, "mean", [x, n](Tape<S>& tp, VarId self) {
        if (!tp.needs_grad(x)) return;
        const S g = static_cast<S>(static_cast<double>(tp.grad(self).data[0]) / static_cast<double>(n));
        auto& dx = tp.grad(x);
        for (auto& v : dx.data) v += g;
    });
}

// Rows of a rank-2 tensor (or a whole rank-1 tensor) are normalized so
// logsumexp(row) == 0.
template <class S>
VarId log_softmax(Tape<S>& t, VarId x) {
    const auto& xv = t.val(x);
    check(xv.rank() == 1 || xv.rank() == 2, "log_softmax: rank must be 1 or 2");
    const int rows = xv.rank() == 2 ? xv.dims[0] : 1;
    const int cols = xv.rank() == 2 ? xv.dims[1] : xv.dims[0];
    check(cols > 0, "log_softmax: empty axis");
    Tensor<S> y = xv;
    for (int r = 0; r < rows; ++r) {
        S* row = y.data.data() + static_cast<int64_t>(r) * cols;
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < cols; ++c) mx = std::max(mx, static_cast<double>(row[c]));
        double lse = 0;
        for (int c = 0; c < cols; ++c) lse += std::exp(static_cast<double>(row[c]) - mx);
        lse = mx + std::log(lse);
        for (int c = 0; c < cols; ++c) row[c] = static_cast<S>(static_cast<double>(row[c]) - lse);
    }
    return t.push(std::move(y), {x}, "log_softmax", [x, rows, cols](Tape<S>& tp, VarId self) {
        if (!tp.needs_grad(x)) return;
        const auto& yv = tp.val(self);
        const auto& dy = tp.grad(self);
        auto& dx = tp.grad(x);
        for (int r = 0; r < rows; ++r) {
            const int64_t off = static_cast<int64_t>(r) * cols;
            double gsum = 0;
            for (int c = 0; c < cols; ++c) gsum += static_cast<double>(dy.data[static_cast<size_t>(off + c)]);
            for (int c = 0; c < cols; ++c) {
                double p = std::exp(static_cast<double>(yv.data[static_cast<size_t>(off + c)]));
                dx.data[static_cast<size_t>(off + c)] +=
                    static_cast<S>(static_cast<double>(dy.data[static_cast<size_t>(off + c)]) - p * gsum);
            }
        }
    });
}

// Mean squared error over all elements; 64-bit accumulation.
template <class S>
VarId mse(Tape<S>& t, VarId y, VarId yhat) {
    const auto& a = t.val(y);
    const auto& b = t.val(yhat);
    check(a.same_dims(b), "mse: dims mismatch");
    const int64_t n = a.numel();
    check(n > 0, "mse: empty tensors");
    double acc = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    Tensor<S> out = Tensor<S>::scalar(static_cast<S>(acc / static_cast<double>(n)));
    return t.push(std::move(out), {y, yhat}, "mse", [y, yhat, n](Tape<S>& tp, VarId self) {
        const S g = tp.grad(self).data[0];
        const auto& av = tp.val(y);
        const auto& bv = tp.val(yhat);
        const S scale2 = static_cast<S>(2.0 / static_cast<double>(n)) * g;
        if (tp.needs_grad(y)) {
            auto& da = tp.grad(y);
            for (size_t i = 0; i < da.data.size(); ++i)
                da.data[i] += scale2 * (av.data[i] - bv.data[i]);
        }
        if (tp.needs_grad(yhat)) {
            auto& db = tp.grad(yhat);
            for (size_t i = 0; i < db.data.size(); ++i)
                db.data[i] += scale2 * (bv.data[i] - av.data[i]);
        }
    });
}

// ---------------------------------------------------------------------------
// layout ops
// ---------------------------------------------------------------------------

// Swap the first two axes of a rank>=2 tensor.
template <class S>
VarId transpose01(Tape<S>& t, VarId x) {
    const auto& xv = t.val(x);
    check(xv.rank() >= 2, "transpose01: rank must be >= 2");
    const int A = xv.dims[0], B = xv.dims[1];
    int64_t inner = 1;
    for (int i = 2; i < xv.rank(); ++i) inner *= xv.dims[i];
    std::vector<int> odims = xv.dims;
    std::swap(odims[0], odims[1]);
    Tensor<S> y = Tensor<S>::zeros(odims);
    for (int a = 0; a < A; ++a)
        for (int b = 0; b < B; ++b)
            std::copy_n(xv.data.data() + (static_cast<int64_t>(a) * B + b) * inner, inner,
                        y.data.data() + (static_cast<int64_t>(b) * A + a) * inner);
    return t.push(std::move(y), {x}, "transpose01", [x, A, B, inner](Tape<S>& tp, VarId self) {
        if (!tp.needs_grad(x)) return;
        const auto& dy = tp.grad(self);
        auto& dx = tp.grad(x);
        for (int a = 0; a < A; ++a)
            for (int b = 0; b < B; ++b) {
                const S* src = dy.data.data() + (static_cast<int64_t>(b) * A + a) * inner;
                S* dst = dx.data.data() + (static_cast<int64_t>(a) * B + b) * inner;
                for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
            }
    });
}

template <class S>
VarId slice_rows(Tape<S>& t, VarId x, int start, int len) {
    const auto& xv = t.val(x);
    check(xv.rank() == 2, "slice_rows: rank must be 2");
    check(start >= 0 && len >= 1 && start + len <= xv.dims[0], "slice_rows: out of range");
    const int D = xv.dims[1];
    Tensor<S> y = Tensor<S>::zeros({len, D});
    std::copy_n(xv.data.data() + static_cast<int64_t>(start) * D, static_cast<int64_t>(len) * D,
                y.data.data());
    return t.push(std::move(y), {x}, "slice_rows", [x, start, len, D](Tape<S>& tp, VarId self) {
        if (!tp.needs_grad(x)) return;
        const auto& dy = tp.grad(self);
        auto& dx = tp.grad(x);
        for (int64_t i = 0; i < static_cast<int64_t>(len) * D; ++i)
            dx.data[static_cast<size_t>(static_cast<int64_t>(start) * D + i)] += dy.data[static_cast<size_t>(i)];
    });
}

template <class S>
VarId slice_cols(Tape<S>& t, VarId x, int start, int len) {
    const auto& xv = t.val(x);
    check(xv.rank() == 2, "slice_cols: rank must be 2");
    check(start >= 0 && len >= 1 && start + len <= xv.dims[1], "slice_cols: out of range");
    const int N = xv.dims[0], D = xv.dims[1];
    Tensor<S> y = Tensor<S>::zeros({N, len});
    for (int n = 0; n < N; ++n)
        std::copy_n(xv.data.data() + static_cast<int64_t>(n) * D + start, len,
                    y.data.data() + static_cast<int64_t>(n) * len);
    return t.push(std::move(y), {x}, "slice_cols", [x, start, len, N, D](Tape<S>& tp, VarId self) {
        if (!tp.needs_grad(x)) return;
        const auto& dy = tp.grad(self);
        auto& dx = tp.grad(x);
        for (int n = 0; n < N; ++n)
            for (int j = 0; j < len; ++j)
                dx.data[static_cast<size_t>(static_cast<int64_t>(n) * D + start + j)] +=
                    dy.data[static_cast<size_t>(static_cast<int64_t>(n) * len + j)];
    });
}

template <class S>
VarId concat_rows(Tape<S>& t, const std::vector<VarId>& xs) {
    check(!xs.empty(), "concat_rows: empty input");
    const int D = t.val(xs[0]).dims[1];
    int rows = 0;
    for (VarId x : xs) {
        check(t.val(x).rank() == 2 && t.val(x).dims[1] == D, "concat_rows: dims mismatch");
        rows += t.val(x).dims[0];
    }
    Tensor<S> y = Tensor<S>::zeros({rows, D});
    int64_t off = 0;
    for (VarId x : xs) {
        const auto& xv = t.val(x);
        std::copy_n(xv.data.data(), xv.numel(), y.data.data() + off);
        off += xv.numel();
    }
    return t.push(std::move(y), std::vector<VarId>(xs), "concat_rows",
                  [xs](Tape<S>& tp, VarId self) {
                      const auto& dy = tp.grad(self);
                      int64_t off2 = 0;
                      for (VarId x : xs) {
                          const int64_t n = tp.val(x).numel();
                          if (tp.needs_grad(x)) {
                              auto& dx = tp.grad(x);
                              for (int64_t i = 0; i < n; ++i)
                                  dx.data[static_cast<size_t>(i)] += dy.data[static_cast<size_t>(off2 + i)];
                          }
                          off2 += n;
                      }
                  });
}

template <class S>
VarId concat_cols(Tape<S>& t, VarId a, VarId b) {
    const auto& av = t.val(a);
    const auto& bv = t.val(b);
    check(av.rank() == 2 && bv.rank() == 2 && av.dims[0] == bv.dims[0],
          "concat_cols: row mismatch");
    const int N = av.dims[0], Da = av.dims[1], Db = bv.dims[1];
    Tensor<S> y = Tensor<S>::zeros({N, Da + Db});
    for (int n = 0; n < N; ++n) {
        std::copy_n(av.data.data() + static_cast<int64_t>(n) * Da, Da,
                    y.data.data() + static_cast<int64_t>(n) * (Da + Db));
        std::copy_n(bv.data.data() + static_cast<int64_t>(n) * Db, Db,
                    y.data.data() + static_cast<int64_t>(n) * (Da + Db) + Da);
    }
    return t.push(std::move(y), {a, b}, "concat_cols", [a, b, N, Da, Db](Tape<S>& tp, VarId self) {
        const auto& dy = tp.grad(self);
        if (tp.needs_grad(a)) {
            auto& da = tp.grad(a);
            for (int n = 0; n < N; ++n)
                for (int j = 0; j < Da; ++j)
                    da.data[static_cast<size_t>(static_cast<int64_t>(n) * Da + j)] +=
                        dy.data[static_cast<size_t>(static_cast<int64_t>(n) * (Da + Db) + j)];
        }
        if (tp.needs_grad(b)) {
            auto& db = tp.grad(b);
            for (int n = 0; n < N; ++n)
                for (int j = 0; j < Db; ++j)
                    db.data[static_cast<size_t>(static_cast<int64_t>(n) * Db + j)] +=
                        dy.data[static_cast<size_t>(static_cast<int64_t>(n) * (Da + Db) + Da + j)];
        }
    });
}

template <class S>
VarId reverse_rows(Tape<S>& t, VarId x) {
    const auto& xv = t.val(x);
    check(xv.rank() == 2, "reverse_rows: rank must be 2");
    const int N = xv.dims[0], D = xv.dims[1];
    Tensor<S> y = Tensor<S>::zeros({N, D});
    for (int n = 0; n < N; ++n)
        std::copy_n(xv.data.data() + static_cast<int64_t>(n) * D, D,
                    y.data.data() + static_cast<int64_t>(N - 1 - n) * D);
    return t.push(std::move(y), {x}, "reverse_rows", [x, N, D](Tape<S>& tp, VarId self) {
        if (!tp.needs_grad(x)) return;
        const auto& dy = tp.grad(self);
        auto& dx = tp.grad(x);
        for (int n = 0; n < N; ++n)
            for (int j = 0; j < D; ++j)
                dx.data[static_cast<size_t>(static_cast<int64_t>(n) * D + j)] +=
                    dy.data[static_cast<size_t>(static_cast<int64_t>(N - 1 - n) * D + j)];
    });
}

}  // namespace mamfsd::ops
