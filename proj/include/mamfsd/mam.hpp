#pragma once

// Motor attention block: a stack of temporal-only (Nx1x1) 3D convolutions
// ending in a sigmoid produces a (0,1) intensity map that multiplicatively
// gates the input feature map. No normalization layers anywhere in the block.

#include <string>
#include <vector>

#include "mamfsd/graph.hpp"
#include "mamfsd/ops.hpp"

namespace mamfsd {

struct MamConfig {
    int layers = 4;       // conv layers per block
    int kernel = 3;       // temporal extent N (odd)
    int hidden = 0;       // C' of the inner layers; 0 means same as input C
    bool depthwise = false;  // ablation variant: per-channel temporal conv
};

// Per-layer channel plan for a block on C input channels. Layers 1..L-1 map
// to C', the last layer restores C.
inline std::vector<std::pair<int, int>> mam_channel_plan(int C, const MamConfig& cfg) {
    check(cfg.layers >= 1, "mam: needs at least one layer");
    check(cfg.kernel % 2 == 1, "mam: kernel extent must be odd");
    const int Cp = cfg.hidden > 0 ? cfg.hidden : C;
    check(!cfg.depthwise || Cp == C, "mam: depthwise requires hidden == input channels");
    std::vector<std::pair<int, int>> plan;
    int in = C;
    for (int l = 1; l < cfg.layers; ++l) {
        plan.emplace_back(in, Cp);
        in = Cp;
    }
    plan.emplace_back(in, C);
    return plan;
}

namespace detail {

// Depthwise temporal conv: x [C,T,H,W], w [C,1,N], per-channel recursion.
// Ablation-only path, plain loops.
template <class S>
VarId conv3d_depthwise(Tape<S>& t, VarId x, VarId w, VarId b) {
    const auto& xv = t.val(x);
    const auto& wv = t.val(w);
    const auto& bv = t.val(b);
    check(xv.rank() == 4, "conv3d_depthwise: input must be [C,T,H,W]");
    const int C = xv.dims[0], T = xv.dims[1], H = xv.dims[2], W = xv.dims[3];
    check(wv.rank() == 3 && wv.dims[0] == C && wv.dims[1] == 1, "conv3d_depthwise: weight must be [C,1,N]");
    const int N = wv.dims[2];
    check(N % 2 == 1, "conv3d_depthwise: kernel extent must be odd");
    check(bv.rank() == 1 && bv.dims[0] == C, "conv3d_depthwise: bias must be [C]");
    const int m = N / 2, HW = H * W;
    Tensor<S> y = Tensor<S>::zeros(xv.dims);
    for (int c = 0; c < C; ++c)
        for (int tt = 0; tt < T; ++tt) {
            S* dst = y.data.data() + (static_cast<int64_t>(c) * T + tt) * HW;
            for (int n = -m; n <= m; ++n) {
                int src_t = tt + n;
                if (src_t < 0 || src_t >= T) continue;
                const S wk = wv.data[static_cast<size_t>(c) * N + (m + n)];
                const S* src = xv.data.data() + (static_cast<int64_t>(c) * T + src_t) * HW;
                for (int p = 0; p < HW; ++p) dst[p] += wk * src[p];
            }
            const S bias = bv.data[static_cast<size_t>(c)];
            for (int p = 0; p < HW; ++p) dst[p] += bias;
        }
    return t.push(std::move(y), {x, w, b}, "conv3d_depthwise",
                  [x, w, b, C, T, HW, N, m](Tape<S>& tp, VarId self) {
                      const auto& dy = tp.grad(self);
                      const auto& xv2 = tp.val(x);
                      const auto& wv2 = tp.val(w);
                      for (int c = 0; c < C; ++c)
                          for (int tt = 0; tt < T; ++tt) {
                              const S* dyr = dy.data.data() + (static_cast<int64_t>(c) * T + tt) * HW;
                              for (int n = -m; n <= m; ++n) {
                                  int src_t = tt + n;
                                  if (src_t < 0 || src_t >= T) continue;
                                  const int64_t xoff = (static_cast<int64_t>(c) * T + src_t) * HW;
                                  if (tp.needs_grad(x)) {
                                      const S wk = wv2.data[static_cast<size_t>(c) * N + (m + n)];
                                      auto& dx = tp.grad(x);
                                      for (int p = 0; p < HW; ++p) dx.data[static_cast<size_t>(xoff + p)] += wk * dyr[p];
                                  }
                                  if (tp.needs_grad(w)) {
                                      double acc = 0;
                                      for (int p = 0; p < HW; ++p)
                                          acc += static_cast<double>(dyr[p]) *
                                                 static_cast<double>(xv2.data[static_cast<size_t>(xoff + p)]);
                                      auto& dw = tp.grad(w);
                                      dw.data[static_cast<size_t>(c) * N + (m + n)] += static_cast<S>(acc);
                                  }
                              }
                              if (tp.needs_grad(b)) {
                                  double acc = 0;
                                  for (int p = 0; p < HW; ++p) acc += static_cast<double>(dyr[p]);
                                  tp.grad(b).data[static_cast<size_t>(c)] += static_cast<S>(acc);
                              }
                          }
                  });
}

}  // namespace detail

// f^p_motor: ReLU conv stack, sigmoid last layer; every entry strictly in (0,1).
// x is [C,T,H,W] (or [T,C,H,W] with tc_layout, the backbone's frame-major
// arrangement); the map comes back in the same layout.
template <class S>
VarId mam_attention_map(Tape<S>& t, VarId x, const std::vector<VarId>& ws,
                        const std::vector<VarId>& bs, const MamConfig& cfg,
                        bool tc_layout = false) {
    check(ws.size() == bs.size() && static_cast<int>(ws.size()) == cfg.layers,
          "mam: layer count mismatch");
    check(!cfg.depthwise || !tc_layout, "mam: depthwise runs in [C,T,H,W] layout only");
    const int C = t.val(x).dims[tc_layout ? 1 : 0];
    auto plan = mam_channel_plan(C, cfg);
    check(t.val(ws[0]).dims[cfg.depthwise ? 0 : 1] == C, "mam: channel mismatch between input and block");
    VarId h = x;
    for (int l = 0; l < cfg.layers; ++l) {
        check(t.val(ws[static_cast<size_t>(l)]).dims[0] == plan[static_cast<size_t>(l)].second,
              "mam: channel plan mismatch");
        const bool inner = l + 1 < cfg.layers;
        if (cfg.depthwise) {
            h = detail::conv3d_depthwise(t, h, ws[static_cast<size_t>(l)], bs[static_cast<size_t>(l)]);
            h = inner ? ops::relu(t, h) : ops::sigmoid(t, h);
        } else {
            h = ops::conv3d_temporal(t, h, ws[static_cast<size_t>(l)], bs[static_cast<size_t>(l)],
                                     /*fuse_relu=*/inner, tc_layout);
            if (!inner) h = ops::sigmoid(t, h);
        }
    }
    return h;
}

// F_out = f^p_motor (.) F_in
template <class S>
VarId mam_forward(Tape<S>& t, VarId x, const std::vector<VarId>& ws, const std::vector<VarId>& bs,
                  const MamConfig& cfg, bool tc_layout = false) {
    VarId map = mam_attention_map(t, x, ws, bs, cfg, tc_layout);
    return ops::mul(t, map, x);
}

}  // namespace mamfsd
