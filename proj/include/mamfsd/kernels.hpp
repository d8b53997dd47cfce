#pragma once

// Convolution / matmul kernels.
//
// Two implementations of every kernel:
//   ref::  — plain nested loops, 64-bit accumulation, serial. These define the
//            semantics and serve as the oracle the production kernels are
//            tested against.
//   (top)  — panel + register-tile GEMM with an OpenMP split over independent
//            outputs. Work splits over output elements only and each element
//            accumulates in a fixed order, so results do not depend on the
//            thread count. The parallel regions live in separate _omp
//            functions; a function containing an OpenMP region compiles to
//            slower serial code, so the nt==1 path never touches one.
//
// Reduction index order is pinned everywhere: conv2d sums over (ci, ky, kx),
// conv3d_temporal over (ci, n), linear over d. tools/bench_kernels compares
// serial, parallel, and reference implementations.

#include <cstdint>
#include <vector>

#include "mamfsd/threads.hpp"

namespace mamfsd::kernels {

// Accumulator for the production inner products. The double-storage engine
// always accumulates in double; reductions (mse, mean, softmax, CTC) are
// double everywhere regardless of this choice.
template <class S>
struct AccOf {
    using type = double;
};
template <>
struct AccOf<float> {
    using type = float;
};
template <class S>
using acc_t = typename AccOf<S>::type;

inline int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// ---------------------------------------------------------------------------
// Reference kernels (naive loops, the oracles)
// ---------------------------------------------------------------------------
namespace ref {

// x [T,Ci,H,W], w [Co,Ci,K,K], b [Co] or null, y [T,Co,Ho,Wo]
template <class S>
void conv2d_fwd(const S* x, const S* w, const S* b, S* y, int T, int Ci, int H, int W, int Co,
                int K, int stride, int pad) {
    const int Ho = conv_out_extent(H, K, stride, pad);
    const int Wo = conv_out_extent(W, K, stride, pad);
    for (int t = 0; t < T; ++t) {
        const S* xt = x + static_cast<int64_t>(t) * Ci * H * W;
        S* yt = y + static_cast<int64_t>(t) * Co * Ho * Wo;
        for (int co = 0; co < Co; ++co)
            for (int yo = 0; yo < Ho; ++yo)
                for (int xo = 0; xo < Wo; ++xo) {
                    double acc = b ? static_cast<double>(b[co]) : 0.0;
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int ky = 0; ky < K; ++ky)
                            for (int kx = 0; kx < K; ++kx) {
                                int yi = yo * stride - pad + ky;
                                int xi = xo * stride - pad + kx;
                                if (yi < 0 || yi >= H || xi < 0 || xi >= W) continue;
                                acc += static_cast<double>(xt[(ci * H + yi) * W + xi]) *
                                       static_cast<double>(w[((co * Ci + ci) * K + ky) * K + kx]);
                            }
                    yt[(co * Ho + yo) * Wo + xo] = static_cast<S>(acc);
                }
    }
}

// x [Ci,T,H,W], w [Co,Ci,N] (N odd, zero pad (N-1)/2), y [Co,T,H,W]
template <class S>
void conv3d_temporal_fwd(const S* x, const S* w, const S* b, S* y, int Ci, int T, int H, int W,
                         int Co, int N) {
    const int m = N / 2;
    const int HW = H * W;
    for (int co = 0; co < Co; ++co)
        for (int t = 0; t < T; ++t)
            for (int p = 0; p < HW; ++p) {
                double acc = b ? static_cast<double>(b[co]) : 0.0;
                for (int ci = 0; ci < Ci; ++ci)
                    for (int n = -m; n <= m; ++n) {
                        int tt = t + n;
                        if (tt < 0 || tt >= T) continue;
                        acc += static_cast<double>(x[(ci * T + tt) * HW + p]) *
                               static_cast<double>(w[(co * Ci + ci) * N + (m + n)]);
                    }
                y[(co * T + t) * HW + p] = static_cast<S>(acc);
            }
}

// x [T,Di], w [Do,Di,K] (K odd, same padding), y [T,Do]
template <class S>
void conv1d_fwd(const S* x, const S* w, const S* b, S* y, int T, int Di, int Do, int K) {
    const int m = K / 2;
    for (int t = 0; t < T; ++t)
        for (int o = 0; o < Do; ++o) {
            double acc = b ? static_cast<double>(b[o]) : 0.0;
            for (int d = 0; d < Di; ++d)
                for (int k = -m; k <= m; ++k) {
                    int tt = t + k;
                    if (tt < 0 || tt >= T) continue;
                    acc += static_cast<double>(x[tt * Di + d]) *
                           static_cast<double>(w[(o * Di + d) * K + (m + k)]);
                }
            y[t * Do + o] = static_cast<S>(acc);
        }
}

// x [N,D], w [M,D], b [M] or null, y [N,M]
template <class S>
void linear_fwd(const S* x, const S* w, const S* b, S* y, int N, int D, int M) {
    for (int n = 0; n < N; ++n)
        for (int mo = 0; mo < M; ++mo) {
            double acc = b ? static_cast<double>(b[mo]) : 0.0;
            for (int d = 0; d < D; ++d)
                acc += static_cast<double>(x[n * D + d]) * static_cast<double>(w[mo * D + d]);
            y[n * M + mo] = static_cast<S>(acc);
        }
}

}  // namespace ref

// ---------------------------------------------------------------------------
// Production microkernel
// ---------------------------------------------------------------------------

namespace detail {

// MR x NC register tile. The MR rows give independent FMA chains that hide
// latency while every element still accumulates k ascending, one product at
// a time, i.e. in the reference order.
template <int MR, int NC, class S, class A>
inline void gemm_tile(int K, const S* const (&arows)[MR], const S* const* brows,
                      A* const (&crows)[MR], int n0) {
    A creg[MR][NC];
    for (int r = 0; r < MR; ++r)
        for (int j = 0; j < NC; ++j) creg[r][j] = crows[r][n0 + j];
    for (int k = 0; k < K; ++k) {
        const S* bk = brows[k] + n0;
        for (int r = 0; r < MR; ++r) {
            const A ak = static_cast<A>(arows[r][k]);
            for (int j = 0; j < NC; ++j) creg[r][j] += ak * static_cast<A>(bk[j]);
        }
    }
    for (int r = 0; r < MR; ++r)
        for (int j = 0; j < NC; ++j) crows[r][n0 + j] = creg[r][j];
}

template <int MR, class S, class A>
inline void gemm_rows(int N, int K, const S* const (&arows)[MR], const S* const* brows,
                      A* const (&crows)[MR]) {
    int n0 = 0;
    for (; n0 + 32 <= N; n0 += 32) gemm_tile<MR, 32>(K, arows, brows, crows, n0);
    for (; n0 + 16 <= N; n0 += 16) gemm_tile<MR, 16>(K, arows, brows, crows, n0);
    for (; n0 + 8 <= N; n0 += 8) gemm_tile<MR, 8>(K, arows, brows, crows, n0);
    for (; n0 < N; ++n0) {
        for (int r = 0; r < MR; ++r) {
            A c = crows[r][n0];
            const S* arow = arows[r];
            for (int k = 0; k < K; ++k) c += static_cast<A>(arow[k]) * static_cast<A>(brows[k][n0]);
            crows[r][n0] = c;
        }
    }
}

constexpr int kGemmMr = 4;

template <class S, class A>
inline void gemm_mblock_ldc(int mb, int M, int N, int K, const S* a, int lda,
                            const S* const* brows, A* acc, int ldc) {
    constexpr int MR = kGemmMr;
    const int m0 = mb * MR;
    if (m0 + MR <= M) {
        const S* arows[MR];
        A* crows[MR];
        for (int r = 0; r < MR; ++r) {
            arows[r] = a + static_cast<int64_t>(m0 + r) * lda;
            crows[r] = acc + static_cast<int64_t>(m0 + r) * ldc;
        }
        gemm_rows<MR>(N, K, arows, brows, crows);
    } else {
        for (int m = m0; m < M; ++m) {
            const S* arows1[1] = {a + static_cast<int64_t>(m) * lda};
            A* crows1[1] = {acc + static_cast<int64_t>(m) * ldc};
            gemm_rows<1>(N, K, arows1, brows, crows1);
        }
    }
}

template <class S, class A>
inline void gemm_mblock(int mb, int M, int N, int K, const S* a, int lda, const S* const* brows,
                        A* acc) {
    gemm_mblock_ldc(mb, M, N, K, a, lda, brows, acc, N);
}

template <class S, class A>
inline void gemm_mblock_pp(int mb, int M, int N, int K, const S* const* arows_in,
                           const S* const* brows, A* acc) {
    constexpr int MR = kGemmMr;
    const int m0 = mb * MR;
    if (m0 + MR <= M) {
        const S* arows[MR];
        A* crows[MR];
        for (int r = 0; r < MR; ++r) {
            arows[r] = arows_in[m0 + r];
            crows[r] = acc + static_cast<int64_t>(m0 + r) * N;
        }
        gemm_rows<MR>(N, K, arows, brows, crows);
    } else {
        for (int m = m0; m < M; ++m) {
            const S* arows1[1] = {arows_in[m]};
            A* crows1[1] = {acc + static_cast<int64_t>(m) * N};
            gemm_rows<1>(N, K, arows1, brows, crows1);
        }
    }
}

template <class S, class A>
void gemm_omp(int mblocks, int M, int N, int K, const S* a, int lda, const S* const* brows, A* acc,
              int nt) {
#pragma omp parallel for schedule(static) num_threads(nt)
    for (int mb = 0; mb < mblocks; ++mb) gemm_mblock(mb, M, N, K, a, lda, brows, acc);
}

template <class S, class A>
void gemm_pp_omp(int mblocks, int M, int N, int K, const S* const* arows, const S* const* brows,
                 A* acc, int nt) {
#pragma omp parallel for schedule(static) num_threads(nt)
    for (int mb = 0; mb < mblocks; ++mb) gemm_mblock_pp(mb, M, N, K, arows, brows, acc);
}

template <class S, class A>
void gemm_ldc_omp(int mblocks, int M, int N, int K, const S* a, int lda, const S* const* brows,
                  A* acc, int ldc, int nt) {
#pragma omp parallel for schedule(static) num_threads(nt)
    for (int mb = 0; mb < mblocks; ++mb) gemm_mblock_ldc(mb, M, N, K, a, lda, brows, acc, ldc);
}

// Panel rows sit row_stride apart; a 16-element pad keeps 4KB-sized rows
// from aliasing in the cache.
inline int padded_stride(int n) { return n + 16; }

// Stride-1 pad-1 3x3 convs skip the im2col panel: each frame's channel
// planes are copied once into a zero-bordered [C][H+2][W+2] buffer, after
// which every kernel tap is a contiguous row pointer. Worth it when rows
// are wide enough for the register tiles.
inline bool conv2d_fast3x3(int K, int stride, int pad, int W) {
    return K == 3 && stride == 1 && pad == 1 && W >= 16;
}

template <class S>
void pad_frame(const S* xt, S* padded, int C, int H, int W) {
    const int Wp = W + 2;
    const int64_t plane = static_cast<int64_t>(H + 2) * Wp;
    for (int c = 0; c < C; ++c) {
        S* dst = padded + c * plane;
        for (int x = 0; x < Wp; ++x) dst[x] = S(0);
        for (int y = 0; y < H; ++y) {
            S* row = dst + static_cast<int64_t>(y + 1) * Wp;
            row[0] = S(0);
            const S* src = xt + (static_cast<int64_t>(c) * H + y) * W;
            for (int x = 0; x < W; ++x) row[x + 1] = src[x];
            row[W + 1] = S(0);
        }
        S* last = dst + static_cast<int64_t>(H + 1) * Wp;
        for (int x = 0; x < Wp; ++x) last[x] = S(0);
    }
}

// Tap row pointers for output row y, k order (ci, ky, kx) as in ref.
template <class S>
inline void fast3x3_rows(const S* padded, int C, int H, int W, int y, const S** rows) {
    const int Wp = W + 2;
    const int64_t plane = static_cast<int64_t>(H + 2) * Wp;
    int k = 0;
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx, ++k)
                rows[k] = padded + c * plane + static_cast<int64_t>(y + ky) * Wp + kx;
}

// im2col panel [K rows x HoWo] for one frame; K index order (ci, ky, kx).
template <class S>
void im2col(const S* xt, S* panel, int row_stride, int Ci, int H, int W, int Kk, int stride,
            int pad, int Ho, int Wo) {
    int row = 0;
    for (int ci = 0; ci < Ci; ++ci)
        for (int ky = 0; ky < Kk; ++ky)
            for (int kx = 0; kx < Kk; ++kx, ++row) {
                S* dst = panel + static_cast<int64_t>(row) * row_stride;
                for (int yo = 0; yo < Ho; ++yo) {
                    int yi = yo * stride - pad + ky;
                    if (yi < 0 || yi >= H) {
                        for (int xo = 0; xo < Wo; ++xo) dst[yo * Wo + xo] = S(0);
                        continue;
                    }
                    const S* src = xt + (ci * H + yi) * W;
                    for (int xo = 0; xo < Wo; ++xo) {
                        int xi = xo * stride - pad + kx;
                        dst[yo * Wo + xo] = (xi < 0 || xi >= W) ? S(0) : src[xi];
                    }
                }
            }
}

}  // namespace detail

// acc[M x N] += A[M x lda] * B, where B is K row pointers of length N.
// k ascends one step at a time per output element; rows are independent.
template <class S, class A>
void gemm_rowptr(int M, int N, int K, const S* a, int lda, const S* const* brows, A* acc,
                 bool parallel) {
    const int mblocks = (M + detail::kGemmMr - 1) / detail::kGemmMr;
    const int nt = parallel ? num_threads() : 1;
    if (nt <= 1) {
        for (int mb = 0; mb < mblocks; ++mb) detail::gemm_mblock(mb, M, N, K, a, lda, brows, acc);
        return;
    }
    detail::gemm_omp(mblocks, M, N, K, a, lda, brows, acc, nt);
}

// gemm_rowptr with an output row stride (padded accumulator buffers).
template <class S, class A>
void gemm_rowptr_strided(int M, int N, int K, const S* a, int lda, const S* const* brows, A* acc,
                         int ldc, bool parallel) {
    const int mblocks = (M + detail::kGemmMr - 1) / detail::kGemmMr;
    const int nt = parallel ? num_threads() : 1;
    if (nt <= 1) {
        for (int mb = 0; mb < mblocks; ++mb)
            detail::gemm_mblock_ldc(mb, M, N, K, a, lda, brows, acc, ldc);
        return;
    }
    detail::gemm_ldc_omp(mblocks, M, N, K, a, lda, brows, acc, ldc, nt);
}

// Same contract with A given as row pointers (rows may live anywhere, e.g.
// slices of a larger tensor or a shared zero row).
template <class S, class A>
void gemm_rowptr_pp(int M, int N, int K, const S* const* arows, const S* const* brows, A* acc,
                    bool parallel) {
    const int mblocks = (M + detail::kGemmMr - 1) / detail::kGemmMr;
    const int nt = parallel ? num_threads() : 1;
    if (nt <= 1) {
        for (int mb = 0; mb < mblocks; ++mb) detail::gemm_mblock_pp(mb, M, N, K, arows, brows, acc);
        return;
    }
    detail::gemm_pp_omp(mblocks, M, N, K, arows, brows, acc, nt);
}

// ---------------------------------------------------------------------------
// conv2d, batched over T frames
// ---------------------------------------------------------------------------

namespace detail {

template <class S, class A>
struct Conv2dScratch {
    int pstride, astride;
    std::vector<S> panel;
    std::vector<const S*> rows;
    std::vector<A> acc;
    Conv2dScratch(int kall, int howo, int co)
        : pstride(padded_stride(howo)), astride(padded_stride(howo)),
          panel(static_cast<size_t>(kall) * pstride), rows(static_cast<size_t>(kall)),
          acc(static_cast<size_t>(co) * astride) {
        for (int r = 0; r < kall; ++r)
            rows[static_cast<size_t>(r)] = panel.data() + static_cast<int64_t>(r) * pstride;
    }
};

template <class S, class A>
struct Conv2dFastScratch {
    std::vector<S> padded;   // [C][H+2][W+2]
    std::vector<const S*> rows;
    std::vector<A> acc;      // [Co][W] for one output row
    Conv2dFastScratch(int c, int h, int w, int co)
        : padded(static_cast<size_t>(c) * (h + 2) * (w + 2)), rows(static_cast<size_t>(c) * 9),
          acc(static_cast<size_t>(co) * w) {}
};

// One frame of a stride-1 pad-1 3x3 conv via the padded-input tap pointers.
template <class S, class A>
inline void conv2d_fwd_frame_fast(int t, const S* x, const S* w, const S* b, S* y, int Ci, int H,
                                  int W, int Co, Conv2dFastScratch<S, A>& sc) {
    const int Kall = Ci * 9;
    const S* xt = x + static_cast<int64_t>(t) * Ci * H * W;
    S* yt = y + static_cast<int64_t>(t) * Co * H * W;
    pad_frame(xt, sc.padded.data(), Ci, H, W);
    for (int yo = 0; yo < H; ++yo) {
        fast3x3_rows(sc.padded.data(), Ci, H, W, yo, sc.rows.data());
        for (int co = 0; co < Co; ++co) {
            A bias = b ? static_cast<A>(b[co]) : A(0);
            A* arow = sc.acc.data() + static_cast<int64_t>(co) * W;
            for (int n = 0; n < W; ++n) arow[n] = bias;
        }
        gemm_rowptr<S, A>(Co, W, Kall, w, Kall, sc.rows.data(), sc.acc.data(), false);
        for (int co = 0; co < Co; ++co) {
            S* yrow = yt + (static_cast<int64_t>(co) * H + yo) * W;
            const A* arow = sc.acc.data() + static_cast<int64_t>(co) * W;
            for (int n = 0; n < W; ++n) yrow[n] = static_cast<S>(arow[n]);
        }
    }
}

template <class S, class A>
void conv2d_fwd_fast_omp(const S* x, const S* w, const S* b, S* y, int T, int Ci, int H, int W,
                         int Co, int nt) {
#pragma omp parallel num_threads(nt)
    {
        Conv2dFastScratch<S, A> sc(Ci, H, W, Co);
#pragma omp for schedule(static)
        for (int t = 0; t < T; ++t) conv2d_fwd_frame_fast(t, x, w, b, y, Ci, H, W, Co, sc);
    }
}

template <class S, class A>
inline void conv2d_fwd_frame(int t, const S* x, const S* w, const S* b, S* y, int Ci, int H, int W,
                             int Co, int K, int stride, int pad, int Ho, int Wo,
                             Conv2dScratch<S, A>& sc) {
    const int HoWo = Ho * Wo;
    const int Kall = Ci * K * K;
    const S* xt = x + static_cast<int64_t>(t) * Ci * H * W;
    S* yt = y + static_cast<int64_t>(t) * Co * HoWo;
    im2col(xt, sc.panel.data(), sc.pstride, Ci, H, W, K, stride, pad, Ho, Wo);
    for (int co = 0; co < Co; ++co) {
        A bias = b ? static_cast<A>(b[co]) : A(0);
        A* arow = sc.acc.data() + static_cast<int64_t>(co) * sc.astride;
        for (int n = 0; n < HoWo; ++n) arow[n] = bias;
    }
    gemm_rowptr_strided<S, A>(Co, HoWo, Kall, w, Kall, sc.rows.data(), sc.acc.data(), sc.astride,
                              false);
    for (int co = 0; co < Co; ++co) {
        const A* arow = sc.acc.data() + static_cast<int64_t>(co) * sc.astride;
        S* yrow = yt + static_cast<int64_t>(co) * HoWo;
        for (int n = 0; n < HoWo; ++n) yrow[n] = static_cast<S>(arow[n]);
    }
}

template <class S, class A>
void conv2d_fwd_omp(const S* x, const S* w, const S* b, S* y, int T, int Ci, int H, int W, int Co,
                    int K, int stride, int pad, int Ho, int Wo, int nt) {
#pragma omp parallel num_threads(nt)
    {
        Conv2dScratch<S, A> sc(Ci * K * K, Ho * Wo, Co);
#pragma omp for schedule(static)
        for (int t = 0; t < T; ++t)
            conv2d_fwd_frame(t, x, w, b, y, Ci, H, W, Co, K, stride, pad, Ho, Wo, sc);
    }
}

}  // namespace detail

template <class S>
void conv2d_fwd(const S* x, const S* w, const S* b, S* y, int T, int Ci, int H, int W, int Co,
                int K, int stride, int pad) {
    using A = acc_t<S>;
    const int Ho = conv_out_extent(H, K, stride, pad);
    const int Wo = conv_out_extent(W, K, stride, pad);
    const int nt = num_threads();
    if (detail::conv2d_fast3x3(K, stride, pad, W)) {
        if (nt <= 1 || T == 1) {
            detail::Conv2dFastScratch<S, A> sc(Ci, H, W, Co);
            for (int t = 0; t < T; ++t) detail::conv2d_fwd_frame_fast(t, x, w, b, y, Ci, H, W, Co, sc);
            return;
        }
        detail::conv2d_fwd_fast_omp<S, A>(x, w, b, y, T, Ci, H, W, Co, nt);
        return;
    }
    if (nt <= 1 || T == 1) {
        detail::Conv2dScratch<S, A> sc(Ci * K * K, Ho * Wo, Co);
        for (int t = 0; t < T; ++t)
            detail::conv2d_fwd_frame(t, x, w, b, y, Ci, H, W, Co, K, stride, pad, Ho, Wo, sc);
        return;
    }
    detail::conv2d_fwd_omp<S, A>(x, w, b, y, T, Ci, H, W, Co, K, stride, pad, Ho, Wo, nt);
}

namespace detail {

template <class S, class A>
struct Conv2dBwdScratch {
    int gstride;
    std::vector<const S*> dyrows;
    std::vector<A> g;
    Conv2dBwdScratch(int co, int kall, int howo)
        : gstride(padded_stride(howo)), dyrows(static_cast<size_t>(co)),
          g(static_cast<size_t>(kall) * gstride) {}
};

template <class S, class A>
inline void conv2d_bwd_input_frame(int t, const S* dy, const S* wT, S* dx, int Ci, int H, int W,
                                   int Co, int K, int stride, int pad, int Ho, int Wo,
                                   Conv2dBwdScratch<S, A>& sc) {
    const int HoWo = Ho * Wo;
    const int Kall = Ci * K * K;
    const S* dyt = dy + static_cast<int64_t>(t) * Co * HoWo;
    S* dxt = dx + static_cast<int64_t>(t) * Ci * H * W;
    for (int co = 0; co < Co; ++co)
        sc.dyrows[static_cast<size_t>(co)] = dyt + static_cast<int64_t>(co) * HoWo;
    std::fill(sc.g.begin(), sc.g.end(), A(0));
    // g[k][n] = sum_co wT[k][co] * dy[co][n]
    gemm_rowptr_strided<S, A>(Kall, HoWo, Co, wT, Co, sc.dyrows.data(), sc.g.data(), sc.gstride,
                              false);
    // col2im scatter-add, fixed (k, yo, xo) order
    int row = 0;
    for (int ci = 0; ci < Ci; ++ci)
        for (int ky = 0; ky < K; ++ky)
            for (int kx = 0; kx < K; ++kx, ++row) {
                const A* grow = sc.g.data() + static_cast<int64_t>(row) * sc.gstride;
                for (int yo = 0; yo < Ho; ++yo) {
                    int yi = yo * stride - pad + ky;
                    if (yi < 0 || yi >= H) continue;
                    for (int xo = 0; xo < Wo; ++xo) {
                        int xi = xo * stride - pad + kx;
                        if (xi < 0 || xi >= W) continue;
                        dxt[(ci * H + yi) * W + xi] = static_cast<S>(
                            static_cast<A>(dxt[(ci * H + yi) * W + xi]) + grow[yo * Wo + xo]);
                    }
                }
            }
}

template <class S, class A>
void conv2d_bwd_input_omp(const S* dy, const S* wT, S* dx, int T, int Ci, int H, int W, int Co,
                          int K, int stride, int pad, int Ho, int Wo, int nt) {
#pragma omp parallel num_threads(nt)
    {
        Conv2dBwdScratch<S, A> sc(Co, Ci * K * K, Ho * Wo);
#pragma omp for schedule(static)
        for (int t = 0; t < T; ++t)
            conv2d_bwd_input_frame(t, dy, wT, dx, Ci, H, W, Co, K, stride, pad, Ho, Wo, sc);
    }
}

// dx frame += conv(dy_padded, flipped w); same fast structure as the forward.
template <class S, class A>
inline void conv2d_bwd_input_frame_fast(int t, const S* dy, const S* wflip, S* dx, int Ci, int H,
                                        int W, int Co, Conv2dFastScratch<S, A>& sc) {
    const int Kall = Co * 9;
    const S* dyt = dy + static_cast<int64_t>(t) * Co * H * W;
    S* dxt = dx + static_cast<int64_t>(t) * Ci * H * W;
    pad_frame(dyt, sc.padded.data(), Co, H, W);
    for (int yo = 0; yo < H; ++yo) {
        fast3x3_rows(sc.padded.data(), Co, H, W, yo, sc.rows.data());
        for (int ci = 0; ci < Ci; ++ci) {
            A* arow = sc.acc.data() + static_cast<int64_t>(ci) * W;
            for (int n = 0; n < W; ++n) arow[n] = A(0);
        }
        gemm_rowptr<S, A>(Ci, W, Kall, wflip, Kall, sc.rows.data(), sc.acc.data(), false);
        for (int ci = 0; ci < Ci; ++ci) {
            S* dxrow = dxt + (static_cast<int64_t>(ci) * H + yo) * W;
            const A* arow = sc.acc.data() + static_cast<int64_t>(ci) * W;
            for (int n = 0; n < W; ++n) dxrow[n] = static_cast<S>(static_cast<A>(dxrow[n]) + arow[n]);
        }
    }
}

template <class S, class A>
void conv2d_bwd_input_fast_omp(const S* dy, const S* wflip, S* dx, int T, int Ci, int H, int W,
                               int Co, int nt) {
#pragma omp parallel num_threads(nt)
    {
        Conv2dFastScratch<S, A> sc(Co, H, W, Ci);
#pragma omp for schedule(static)
        for (int t = 0; t < T; ++t) conv2d_bwd_input_frame_fast(t, dy, wflip, dx, Ci, H, W, Co, sc);
    }
}

}  // namespace detail

// dx [T,Ci,H,W] += conv2d backward wrt input. Frames are independent.
template <class S>
void conv2d_bwd_input(const S* dy, const S* w, S* dx, int T, int Ci, int H, int W, int Co, int K,
                      int stride, int pad) {
    using A = acc_t<S>;
    const int Ho = conv_out_extent(H, K, stride, pad);
    const int Wo = conv_out_extent(W, K, stride, pad);
    const int Kall = Ci * K * K;
    const int nt = num_threads();
    if (detail::conv2d_fast3x3(K, stride, pad, W)) {
        // wflip[ci][(co,ky,kx)] = w[co][ci][2-ky][2-kx]
        std::vector<S> wflip(static_cast<size_t>(Ci) * Co * 9);
        for (int ci = 0; ci < Ci; ++ci)
            for (int co = 0; co < Co; ++co)
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx)
                        wflip[(static_cast<size_t>(ci) * Co + co) * 9 + ky * 3 + kx] =
                            w[((static_cast<int64_t>(co) * Ci + ci) * 3 + (2 - ky)) * 3 + (2 - kx)];
        if (nt <= 1 || T == 1) {
            detail::Conv2dFastScratch<S, A> sc(Co, H, W, Ci);
            for (int t = 0; t < T; ++t)
                detail::conv2d_bwd_input_frame_fast(t, dy, wflip.data(), dx, Ci, H, W, Co, sc);
            return;
        }
        detail::conv2d_bwd_input_fast_omp<S, A>(dy, wflip.data(), dx, T, Ci, H, W, Co, nt);
        return;
    }
    // wT[k][co] = w[co][k]
    std::vector<S> wT(static_cast<size_t>(Kall) * Co);
    for (int co = 0; co < Co; ++co)
        for (int k = 0; k < Kall; ++k)
            wT[static_cast<size_t>(k) * Co + co] = w[static_cast<int64_t>(co) * Kall + k];
    if (nt <= 1 || T == 1) {
        detail::Conv2dBwdScratch<S, A> sc(Co, Kall, Ho * Wo);
        for (int t = 0; t < T; ++t)
            detail::conv2d_bwd_input_frame(t, dy, wT.data(), dx, Ci, H, W, Co, K, stride, pad, Ho,
                                           Wo, sc);
        return;
    }
    detail::conv2d_bwd_input_omp<S, A>(dy, wT.data(), dx, T, Ci, H, W, Co, K, stride, pad, Ho, Wo,
                                       nt);
}

// dw [Co,Ci,K,K] += ; db [Co] += (if db non-null). Serial over frames so the
// accumulation order is fixed; the GEMM may split over its output rows.
template <class S>
void conv2d_bwd_weight(const S* dy, const S* x, S* dw, S* db, int T, int Ci, int H, int W, int Co,
                       int K, int stride, int pad) {
    using A = acc_t<S>;
    const int Ho = conv_out_extent(H, K, stride, pad);
    const int Wo = conv_out_extent(W, K, stride, pad);
    const int HoWo = Ho * Wo;
    const int Kall = Ci * K * K;
    const bool fast = detail::conv2d_fast3x3(K, stride, pad, W);
    const int pstride = detail::padded_stride(HoWo);
    std::vector<S> panel;
    std::vector<S> padded;
    std::vector<const S*> xrows;
    if (fast) {
        padded.resize(static_cast<size_t>(Ci) * (H + 2) * (W + 2));
        xrows.resize(static_cast<size_t>(Kall));
    } else {
        panel.resize(static_cast<size_t>(Kall) * pstride);
    }
    std::vector<S> dyT(static_cast<size_t>(HoWo) * Co);
    std::vector<const S*> dyrows(static_cast<size_t>(HoWo));
    std::vector<A> acc(static_cast<size_t>(Kall) * Co, A(0));  // [k][co]
    std::vector<A> bacc(static_cast<size_t>(Co), A(0));
    for (int n = 0; n < HoWo; ++n)
        dyrows[static_cast<size_t>(n)] = dyT.data() + static_cast<int64_t>(n) * Co;
    for (int t = 0; t < T; ++t) {
        const S* xt = x + static_cast<int64_t>(t) * Ci * H * W;
        const S* dyt = dy + static_cast<int64_t>(t) * Co * HoWo;
        if (!fast) detail::im2col(xt, panel.data(), pstride, Ci, H, W, K, stride, pad, Ho, Wo);
        else detail::pad_frame(xt, padded.data(), Ci, H, W);
        for (int co = 0; co < Co; ++co) {
            const S* r = dyt + static_cast<int64_t>(co) * HoWo;
            for (int n = 0; n < HoWo; ++n) dyT[static_cast<size_t>(n) * Co + co] = r[n];
            if (db) {
                A s = 0;
                for (int n = 0; n < HoWo; ++n) s += static_cast<A>(r[n]);
                bacc[static_cast<size_t>(co)] += s;
            }
        }
        // acc[k][co] += sum_n panel[k][n] * dyT[n][co]; n ascends as in ref
        if (!fast) {
            gemm_rowptr<S, A>(Kall, Co, HoWo, panel.data(), pstride, dyrows.data(), acc.data(), true);
        } else {
            for (int yo = 0; yo < Ho; ++yo) {
                detail::fast3x3_rows(padded.data(), Ci, H, W, yo, xrows.data());
                gemm_rowptr_pp<S, A>(Kall, Co, W, xrows.data(),
                                     dyrows.data() + static_cast<int64_t>(yo) * W, acc.data(), true);
            }
        }
    }
    for (int co = 0; co < Co; ++co)
        for (int k = 0; k < Kall; ++k)
            dw[static_cast<int64_t>(co) * Kall + k] =
                static_cast<S>(static_cast<A>(dw[static_cast<int64_t>(co) * Kall + k]) +
                               acc[static_cast<size_t>(k) * Co + co]);
    if (db)
        for (int co = 0; co < Co; ++co)
            db[co] = static_cast<S>(static_cast<A>(db[co]) + bacc[static_cast<size_t>(co)]);
}

// ---------------------------------------------------------------------------
// conv3d_temporal on [C,T,H,W]
// ---------------------------------------------------------------------------

namespace detail {

template <class S, class A>
struct Conv3dScratch {
    std::vector<S> zeros;
    std::vector<const S*> rows;
    std::vector<A> acc;
    Conv3dScratch(int hw, int kall, int cout)
        : zeros(static_cast<size_t>(hw), S(0)), rows(static_cast<size_t>(kall)),
          acc(static_cast<size_t>(cout) * hw) {}
};

// Slice addressing for both layouts: a channel-time slice starts at
// c*stride_c + t*stride_t. [C,T,H,W] uses (T*HW, HW); [T,C,H,W] uses
// (HW, C*HW). Every slice is a contiguous HW row either way.
struct TcStrides {
    int64_t c, t;
};
inline TcStrides ct_strides(int C, int T, int HW, bool tc_layout) {
    (void)C;
    return tc_layout ? TcStrides{HW, static_cast<int64_t>(C) * HW}
                     : TcStrides{static_cast<int64_t>(T) * HW, HW};
}

template <class S, class A>
inline void conv3d_fwd_frame(int t, const S* x, const S* w, const S* b, S* y, int Ci, int T,
                             int HW, int Co, int N, int m, TcStrides sx, TcStrides sy,
                             Conv3dScratch<S, A>& sc) {
    const int Kall = Ci * N;
    for (int ci = 0; ci < Ci; ++ci)
        for (int n = -m; n <= m; ++n) {
            int tt = t + n;
            sc.rows[static_cast<size_t>(ci * N + (m + n))] =
                (tt < 0 || tt >= T) ? sc.zeros.data() : x + ci * sx.c + tt * sx.t;
        }
    for (int co = 0; co < Co; ++co) {
        A bias = b ? static_cast<A>(b[co]) : A(0);
        A* arow = sc.acc.data() + static_cast<int64_t>(co) * HW;
        for (int p = 0; p < HW; ++p) arow[p] = bias;
    }
    gemm_rowptr<S, A>(Co, HW, Kall, w, Kall, sc.rows.data(), sc.acc.data(), false);
    for (int co = 0; co < Co; ++co) {
        S* yrow = y + co * sy.c + t * sy.t;
        const A* arow = sc.acc.data() + static_cast<int64_t>(co) * HW;
        for (int p = 0; p < HW; ++p) yrow[p] = static_cast<S>(arow[p]);
    }
}

template <class S, class A>
void conv3d_fwd_omp(const S* x, const S* w, const S* b, S* y, int Ci, int T, int HW, int Co, int N,
                    int m, TcStrides sx, TcStrides sy, int nt) {
#pragma omp parallel num_threads(nt)
    {
        Conv3dScratch<S, A> sc(HW, Ci * N, Co);
#pragma omp for schedule(static)
        for (int t = 0; t < T; ++t) conv3d_fwd_frame(t, x, w, b, y, Ci, T, HW, Co, N, m, sx, sy, sc);
    }
}

template <class S, class A>
inline void conv3d_bwd_input_frame(int t, const S* dy, const S* wf, S* dx, int Ci, int T, int HW,
                                   int Co, int N, int m, TcStrides sdy, TcStrides sdx,
                                   Conv3dScratch<S, A>& sc) {
    const int Kall = Co * N;
    for (int co = 0; co < Co; ++co)
        for (int n = -m; n <= m; ++n) {
            int tt = t + n;
            sc.rows[static_cast<size_t>(co * N + (m + n))] =
                (tt < 0 || tt >= T) ? sc.zeros.data() : dy + co * sdy.c + tt * sdy.t;
        }
    std::fill(sc.acc.begin(), sc.acc.end(), A(0));
    gemm_rowptr<S, A>(Ci, HW, Kall, wf, Kall, sc.rows.data(), sc.acc.data(), false);
    for (int ci = 0; ci < Ci; ++ci) {
        S* dxrow = dx + ci * sdx.c + t * sdx.t;
        const A* arow = sc.acc.data() + static_cast<int64_t>(ci) * HW;
        for (int p = 0; p < HW; ++p) dxrow[p] = static_cast<S>(static_cast<A>(dxrow[p]) + arow[p]);
    }
}

template <class S, class A>
void conv3d_bwd_input_omp(const S* dy, const S* wf, S* dx, int Ci, int T, int HW, int Co, int N,
                          int m, TcStrides sdy, TcStrides sdx, int nt) {
#pragma omp parallel num_threads(nt)
    {
        Conv3dScratch<S, A> sc(HW, Co * N, Ci);
#pragma omp for schedule(static)
        for (int t = 0; t < T; ++t)
            conv3d_bwd_input_frame(t, dy, wf, dx, Ci, T, HW, Co, N, m, sdy, sdx, sc);
    }
}

}  // namespace detail

template <class S>
void conv3d_temporal_fwd(const S* x, const S* w, const S* b, S* y, int Ci, int T, int H, int W,
                         int Co, int N, bool tc_layout = false) {
    using A = acc_t<S>;
    const int m = N / 2;
    const int HW = H * W;
    const auto sx = detail::ct_strides(Ci, T, HW, tc_layout);
    const auto sy = detail::ct_strides(Co, T, HW, tc_layout);
    const int nt = num_threads();
    if (nt <= 1 || T == 1) {
        detail::Conv3dScratch<S, A> sc(HW, Ci * N, Co);
        for (int t = 0; t < T; ++t)
            detail::conv3d_fwd_frame(t, x, w, b, y, Ci, T, HW, Co, N, m, sx, sy, sc);
        return;
    }
    detail::conv3d_fwd_omp<S, A>(x, w, b, y, Ci, T, HW, Co, N, m, sx, sy, nt);
}

// dx += ; flipped-kernel convolution of dy.
template <class S>
void conv3d_temporal_bwd_input(const S* dy, const S* w, S* dx, int Ci, int T, int H, int W, int Co,
                               int N, bool tc_layout = false) {
    using A = acc_t<S>;
    const int m = N / 2;
    const int HW = H * W;
    const auto sdy = detail::ct_strides(Co, T, HW, tc_layout);
    const auto sdx = detail::ct_strides(Ci, T, HW, tc_layout);
    // wf[ci][(co,n)] = w[co][ci][N-1-n]
    std::vector<S> wf(static_cast<size_t>(Ci) * Co * N);
    for (int ci = 0; ci < Ci; ++ci)
        for (int co = 0; co < Co; ++co)
            for (int n = 0; n < N; ++n)
                wf[(static_cast<size_t>(ci) * Co + co) * N + n] =
                    w[(static_cast<int64_t>(co) * Ci + ci) * N + (N - 1 - n)];
    const int nt = num_threads();
    if (nt <= 1 || T == 1) {
        detail::Conv3dScratch<S, A> sc(HW, Co * N, Ci);
        for (int t = 0; t < T; ++t)
            detail::conv3d_bwd_input_frame(t, dy, wf.data(), dx, Ci, T, HW, Co, N, m, sdy, sdx, sc);
        return;
    }
    detail::conv3d_bwd_input_omp<S, A>(dy, wf.data(), dx, Ci, T, HW, Co, N, m, sdy, sdx, nt);
}

template <class S>
void conv3d_temporal_bwd_weight(const S* dy, const S* x, S* dw, S* db, int Ci, int T, int H, int W,
                                int Co, int N, bool tc_layout = false) {
    using A = acc_t<S>;
    const int m = N / 2;
    const int HW = H * W;
    const int Kall = Ci * N;
    const auto sx = detail::ct_strides(Ci, T, HW, tc_layout);
    const auto sdy = detail::ct_strides(Co, T, HW, tc_layout);
    std::vector<S> zeros(static_cast<size_t>(HW), S(0));
    std::vector<const S*> xrows(static_cast<size_t>(Kall));
    std::vector<S> dyT(static_cast<size_t>(HW) * Co);
    std::vector<const S*> dyrows(static_cast<size_t>(HW));
    std::vector<A> acc(static_cast<size_t>(Kall) * Co, A(0));  // [k][co]
    std::vector<A> bacc(static_cast<size_t>(Co), A(0));
    for (int p = 0; p < HW; ++p)
        dyrows[static_cast<size_t>(p)] = dyT.data() + static_cast<int64_t>(p) * Co;
    for (int t = 0; t < T; ++t) {
        for (int ci = 0; ci < Ci; ++ci)
            for (int n = -m; n <= m; ++n) {
                int tt = t + n;
                xrows[static_cast<size_t>(ci * N + (m + n))] =
                    (tt < 0 || tt >= T) ? zeros.data() : x + ci * sx.c + tt * sx.t;
            }
        for (int co = 0; co < Co; ++co) {
            const S* src = dy + co * sdy.c + t * sdy.t;
            for (int p = 0; p < HW; ++p) dyT[static_cast<size_t>(p) * Co + co] = src[p];
            if (db) {
                A s = 0;
                for (int p = 0; p < HW; ++p) s += static_cast<A>(src[p]);
                bacc[static_cast<size_t>(co)] += s;
            }
        }
        // acc[k][co] += sum_p x_slice[k][p] * dyT[p][co]
        gemm_rowptr_pp<S, A>(Kall, Co, HW, xrows.data(), dyrows.data(), acc.data(), true);
    }
    for (int co = 0; co < Co; ++co)
        for (int k = 0; k < Kall; ++k)
            dw[static_cast<int64_t>(co) * Kall + k] =
                static_cast<S>(static_cast<A>(dw[static_cast<int64_t>(co) * Kall + k]) +
                               acc[static_cast<size_t>(k) * Co + co]);
    if (db)
        for (int co = 0; co < Co; ++co)
            db[co] = static_cast<S>(static_cast<A>(db[co]) + bacc[static_cast<size_t>(co)]);
}

// ---------------------------------------------------------------------------
// linear: y [N,M] = x [N,D] * w [M,D]^T + b
// ---------------------------------------------------------------------------

template <class S>
void linear_fwd(const S* x, const S* w, const S* b, S* y, int N, int D, int M) {
    using A = acc_t<S>;
    std::vector<S> wT(static_cast<size_t>(D) * M);
    for (int mo = 0; mo < M; ++mo)
        for (int d = 0; d < D; ++d) wT[static_cast<size_t>(d) * M + mo] = w[static_cast<int64_t>(mo) * D + d];
    std::vector<const S*> rows(static_cast<size_t>(D));
    for (int d = 0; d < D; ++d) rows[static_cast<size_t>(d)] = wT.data() + static_cast<int64_t>(d) * M;
    std::vector<A> acc(static_cast<size_t>(N) * M);
    for (int n = 0; n < N; ++n) {
        A* arow = acc.data() + static_cast<int64_t>(n) * M;
        for (int mo = 0; mo < M; ++mo) arow[mo] = b ? static_cast<A>(b[mo]) : A(0);
    }
    gemm_rowptr<S, A>(N, M, D, x, D, rows.data(), acc.data(), true);
    for (int64_t i = 0; i < static_cast<int64_t>(N) * M; ++i) y[i] = static_cast<S>(acc[static_cast<size_t>(i)]);
}

template <class S>
void linear_bwd_input(const S* dy, const S* w, S* dx, int N, int D, int M) {
    using A = acc_t<S>;
    std::vector<const S*> rows(static_cast<size_t>(M));
    for (int mo = 0; mo < M; ++mo) rows[static_cast<size_t>(mo)] = w + static_cast<int64_t>(mo) * D;
    std::vector<A> acc(static_cast<size_t>(N) * D, A(0));
    gemm_rowptr<S, A>(N, D, M, dy, M, rows.data(), acc.data(), true);
    for (int64_t i = 0; i < static_cast<int64_t>(N) * D; ++i)
        dx[i] = static_cast<S>(static_cast<A>(dx[i]) + acc[static_cast<size_t>(i)]);
}

template <class S>
void linear_bwd_weight(const S* dy, const S* x, S* dw, S* db, int N, int D, int M) {
    using A = acc_t<S>;
    // dyT[m][n] = dy[n][m]
    std::vector<S> dyT(static_cast<size_t>(M) * N);
    for (int n = 0; n < N; ++n)
        for (int mo = 0; mo < M; ++mo) dyT[static_cast<size_t>(mo) * N + n] = dy[static_cast<int64_t>(n) * M + mo];
    std::vector<const S*> rows(static_cast<size_t>(N));
    for (int n = 0; n < N; ++n) rows[static_cast<size_t>(n)] = x + static_cast<int64_t>(n) * D;
    std::vector<A> acc(static_cast<size_t>(M) * D, A(0));
    gemm_rowptr<S, A>(M, D, N, dyT.data(), N, rows.data(), acc.data(), true);
    for (int64_t i = 0; i < static_cast<int64_t>(M) * D; ++i)
        dw[i] = static_cast<S>(static_cast<A>(dw[i]) + acc[static_cast<size_t>(i)]);
    if (db) {
        for (int mo = 0; mo < M; ++mo) {
            A s = 0;
            for (int n = 0; n < N; ++n) s += static_cast<A>(dy[static_cast<int64_t>(n) * M + mo]);
            db[mo] = static_cast<S>(static_cast<A>(db[mo]) + s);
        }
    }
}

// conv1d on [T,Di] via an explicit panel; k order (d, k) matches ref.
template <class S>
void conv1d_fwd(const S* x, const S* w, const S* b, S* y, int T, int Di, int Do, int K) {
    const int m = K / 2;
    const int Kall = Di * K;
    // panelT[t][(d,k)] = x[t+k-m][d]
    std::vector<S> panelT(static_cast<size_t>(T) * Kall);
    for (int t = 0; t < T; ++t)
        for (int d = 0; d < Di; ++d)
            for (int k = 0; k < K; ++k) {
                int tt = t + k - m;
                panelT[static_cast<size_t>(t) * Kall + d * K + k] =
                    (tt < 0 || tt >= T) ? S(0) : x[static_cast<int64_t>(tt) * Di + d];
            }
    // y[t][o] = b[o] + sum_k w[o][k] * panelT[t][k]  -> linear with w [Do,Kall]
    linear_fwd<S>(panelT.data(), w, b, y, T, Kall, Do);
}

template <class S>
void conv1d_bwd(const S* dy, const S* x, const S* w, S* dx, S* dw, S* db, int T, int Di, int Do,
                int K) {
    using A = acc_t<S>;
    const int m = K / 2;
    const int Kall = Di * K;
    std::vector<S> panelT(static_cast<size_t>(T) * Kall);
    for (int t = 0; t < T; ++t)
        for (int d = 0; d < Di; ++d)
            for (int k = 0; k < K; ++k) {
                int tt = t + k - m;
                panelT[static_cast<size_t>(t) * Kall + d * K + k] =
                    (tt < 0 || tt >= T) ? S(0) : x[static_cast<int64_t>(tt) * Di + d];
            }
    if (dw) linear_bwd_weight<S>(dy, panelT.data(), dw, db, T, Kall, Do);
    if (dx) {
        // dpanel[t][(d,k)] then scatter back to dx
        std::vector<S> dpanel(static_cast<size_t>(T) * Kall, S(0));
        linear_bwd_input<S>(dy, w, dpanel.data(), T, Kall, Do);
        for (int t = 0; t < T; ++t)
            for (int d = 0; d < Di; ++d)
                for (int k = 0; k < K; ++k) {
                    int tt = t + k - m;
                    if (tt < 0 || tt >= T) continue;
                    int64_t di = static_cast<int64_t>(tt) * Di + d;
                    dx[di] = static_cast<S>(static_cast<A>(dx[di]) +
                                            static_cast<A>(dpanel[static_cast<size_t>(t) * Kall + d * K + k]));
                }
    }
}

}  // namespace mamfsd::kernels
