#pragma once

// CTC loss via log-space forward-backward recursion, greedy decoding, and
// prefix beam-search decoding. Blank id is 0; labels are 1-based gloss ids.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "mamfsd/graph.hpp"

namespace mamfsd::ctc {

constexpr int kBlank = 0;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logsumexp2(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    double m = a > b ? a : b;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double logsumexp3(double a, double b, double c) { return logsumexp2(logsumexp2(a, b), c); }

// Blank-interleaved extended label of length 2U+1; odd positions hold blanks.
inline std::vector<int> extend_label(const std::vector<int>& label) {
    std::vector<int> ext(2 * label.size() + 1, kBlank);
    for (size_t u = 0; u < label.size(); ++u) ext[2 * u + 1] = label[u];
    return ext;
}

// Frames needed for a feasible alignment: U plus one gap per adjacent repeat.
inline int min_frames(const std::vector<int>& label) {
    int need = static_cast<int>(label.size());
    for (size_t u = 1; u < label.size(); ++u)
        if (label[u] == label[u - 1]) ++need;
    return need;
}

template <class S>
void validate_label(const std::vector<int>& label, int T, int V1) {
    for (int id : label) check(id >= 1 && id < V1, "ctc: label id out of vocabulary");
    if (min_frames(label) > T) throw ShapeError("ctc: label infeasible for sequence length");
    check(T >= 1, "ctc: empty sequence");
}

namespace detail {

// Alpha recursion over the extended label; alpha includes the emission at t.
template <class S>
double alpha_pass(const S* lp, int T, int V1, const std::vector<int>& ext,
                  std::vector<double>* alpha_out) {
    const int L = static_cast<int>(ext.size());
    std::vector<double>& alpha = *alpha_out;
    alpha.assign(static_cast<size_t>(T) * L, kNegInf);
    auto lpat = [&](int t, int k) { return static_cast<double>(lp[static_cast<int64_t>(t) * V1 + k]); };
    alpha[0] = lpat(0, ext[0]);
    if (L > 1) alpha[1] = lpat(0, ext[1]);
    for (int t = 1; t < T; ++t)
        for (int s = 0; s < L; ++s) {
            double a = alpha[static_cast<size_t>(t - 1) * L + s];
            if (s >= 1) a = logsumexp2(a, alpha[static_cast<size_t>(t - 1) * L + s - 1]);
            if (s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2])
                a = logsumexp2(a, alpha[static_cast<size_t>(t - 1) * L + s - 2]);
            alpha[static_cast<size_t>(t) * L + s] = a == kNegInf ? kNegInf : a + lpat(t, ext[s]);
        }
    double logp = alpha[static_cast<size_t>(T - 1) * L + (L - 1)];
    if (L > 1) logp = logsumexp2(logp, alpha[static_cast<size_t>(T - 1) * L + (L - 2)]);
    return logp;
}

}  // namespace detail

// -log p(label | logprobs), computed in 64-bit regardless of S.
template <class S>
double loss_value(const S* lp, int T, int V1, const std::vector<int>& label) {
    validate_label<S>(label, T, V1);
    std::vector<double> alpha;
    double logp = detail::alpha_pass(lp, T, V1, extend_label(label), &alpha);
    return -logp;
}

// Autograd node: forward alpha recursion; backward via the alpha-beta
// posterior, dL/dlp[t][k] = -exp(logsum_{s: ext[s]=k}(alpha+beta) - logp).
template <class S>
VarId ctc_loss_op(Tape<S>& t, VarId logprobs, const std::vector<int>& label) {
    const auto& lpv = t.val(logprobs);
    check(lpv.rank() == 2, "ctc: logprobs must be [T,V+1]");
    const int T = lpv.dims[0], V1 = lpv.dims[1];
    validate_label<S>(label, T, V1);
    const std::vector<int> ext = extend_label(label);
    std::vector<double> alpha;
    const double logp = detail::alpha_pass(lpv.data.data(), T, V1, ext, &alpha);
    Tensor<S> out = Tensor<S>::scalar(static_cast<S>(-logp));
    return t.push(std::move(out), {logprobs}, "ctc_loss",
                  [logprobs, label, ext, alpha, logp, T, V1](Tape<S>& tp, VarId self) {
                      if (!tp.needs_grad(logprobs)) return;
                      const auto& lpv2 = tp.val(logprobs);
                      const int L = static_cast<int>(ext.size());
                      auto lpat = [&](int tt, int k) {
                          return static_cast<double>(lpv2.data[static_cast<size_t>(tt) * V1 + k]);
                      };
                      // beta excludes the emission at t
                      std::vector<double> beta(static_cast<size_t>(T) * L, kNegInf);
                      beta[static_cast<size_t>(T - 1) * L + (L - 1)] = 0.0;
                      if (L > 1) beta[static_cast<size_t>(T - 1) * L + (L - 2)] = 0.0;
                      for (int tt = T - 2; tt >= 0; --tt)
                          for (int s = L - 1; s >= 0; --s) {
                              double b = beta[static_cast<size_t>(tt + 1) * L + s] + lpat(tt + 1, ext[s]);
                              if (s + 1 < L)
                                  b = logsumexp2(b, beta[static_cast<size_t>(tt + 1) * L + s + 1] + lpat(tt + 1, ext[s + 1]));
                              if (s + 2 < L && ext[s + 2] != kBlank && ext[s + 2] != ext[s])
                                  b = logsumexp2(b, beta[static_cast<size_t>(tt + 1) * L + s + 2] + lpat(tt + 1, ext[s + 2]));
                              beta[static_cast<size_t>(tt) * L + s] = b;
                          }
                      const S dy = tp.grad(self).data[0];
                      auto& dx = tp.grad(logprobs);
                      std::vector<double> acc(static_cast<size_t>(V1));
                      for (int tt = 0; tt < T; ++tt) {
                          std::fill(acc.begin(), acc.end(), kNegInf);
                          for (int s = 0; s < L; ++s) {
                              double mass = alpha[static_cast<size_t>(tt) * L + s] + beta[static_cast<size_t>(tt) * L + s];
                              acc[static_cast<size_t>(ext[s])] = logsumexp2(acc[static_cast<size_t>(ext[s])], mass);
                          }
                          for (int k = 0; k < V1; ++k) {
                              if (acc[static_cast<size_t>(k)] == kNegInf) continue;
                              double g = -std::exp(acc[static_cast<size_t>(k)] - logp);
                              dx.data[static_cast<size_t>(tt) * V1 + k] +=
                                  static_cast<S>(g * static_cast<double>(dy));
                          }
                      }
                  });
}

// Per-step argmax, collapse repeats, drop blanks. Ties go to the lowest id.
template <class S>
std::vector<int> greedy_decode(const S* lp, int T, int V1) {
    std::vector<int> path(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
        int best = 0;
        for (int k = 1; k < V1; ++k)
            if (lp[static_cast<int64_t>(t) * V1 + k] > lp[static_cast<int64_t>(t) * V1 + best]) best = k;
        path[static_cast<size_t>(t)] = best;
    }
    std::vector<int> out;
    int prev = -1;
    for (int t = 0; t < T; ++t) {
        int k = path[static_cast<size_t>(t)];
        if (k != prev && k != kBlank) out.push_back(k);
        prev = k;
    }
    return out;
}

template <class S>
std::vector<int> greedy_decode(const Tensor<S>& lp) {
    check(lp.rank() == 2, "greedy_decode: logprobs must be [T,V+1]");
    return greedy_decode(lp.data.data(), lp.dims[0], lp.dims[1]);
}

struct BeamHyp {
    double pb = kNegInf;   // log prob of paths ending in blank
    double pnb = kNegInf;  // log prob of paths ending in the last symbol
    double total() const { return logsumexp2(pb, pnb); }
};

namespace detail {

// One prefix-beam pass at a fixed width: per-prefix (p_blank, p_nonblank)
// mass in log space, pruning to the top `width` by total mass with
// lexicographic tie-break. Returns the surviving prefixes.
template <class S>
std::vector<std::vector<int>> beam_survivors(const S* lp, int T, int V1, int width) {
    using Beams = std::map<std::vector<int>, BeamHyp>;  // lexicographic order
    Beams beams;
    beams[{}] = BeamHyp{0.0, kNegInf};
    for (int t = 0; t < T; ++t) {
        auto lpat = [&](int k) { return static_cast<double>(lp[static_cast<int64_t>(t) * V1 + k]); };
        Beams next;
        for (const auto& [prefix, hyp] : beams) {
            const double ptot = hyp.total();
            // stay: emit blank
            {
                BeamHyp& h = next[prefix];
                h.pb = logsumexp2(h.pb, ptot + lpat(kBlank));
            }
            // stay: repeat the last symbol (no new label)
            if (!prefix.empty()) {
                BeamHyp& h = next[prefix];
                h.pnb = logsumexp2(h.pnb, hyp.pnb + lpat(prefix.back()));
            }
            // extend with symbol k
            for (int k = 1; k < V1; ++k) {
                std::vector<int> ext = prefix;
                ext.push_back(k);
                BeamHyp& h = next[ext];
                if (!prefix.empty() && prefix.back() == k)
                    h.pnb = logsumexp2(h.pnb, hyp.pb + lpat(k));  // needs a blank gap
                else
                    h.pnb = logsumexp2(h.pnb, ptot + lpat(k));
            }
        }
        // prune; prefixes with no path mass are dropped outright
        std::vector<Beams::iterator> order;
        order.reserve(next.size());
        for (auto it = next.begin(); it != next.end(); ++it)
            if (it->second.total() != kNegInf) order.push_back(it);
        std::stable_sort(order.begin(), order.end(),
                         [](const auto& a, const auto& b) { return a->second.total() > b->second.total(); });
        Beams pruned;
        for (size_t i = 0; i < order.size() && i < static_cast<size_t>(width); ++i)
            pruned.insert(*order[static_cast<size_t>(i)]);
        beams = std::move(pruned);
    }
    std::vector<std::vector<int>> out;
    out.reserve(beams.size());
    for (const auto& [prefix, hyp] : beams) out.push_back(prefix);
    return out;
}

}  // namespace detail

// Prefix beam search over labelings with iterative width halving: the search
// runs at widths w, w/2, ..., 1, every surviving prefix is scored by its
// exact path-sum probability, and the best labeling wins (ties break toward
// the lexicographically smaller prefix). A narrower power-of-two width's
// candidate set is a subset of a wider one's, so widening the beam can never
// return a lower-probability labeling.
template <class S>
std::vector<int> beam_decode(const S* lp, int T, int V1, int width) {
    check(width >= 1, "beam_decode: width must be >= 1");
    std::map<std::vector<int>, double> candidates;  // prefix -> exact logp
    for (int w = width; w >= 1; w /= 2)
        for (auto& prefix : detail::beam_survivors(lp, T, V1, w))
            candidates.emplace(std::move(prefix), kNegInf);
    std::vector<int> best;
    double best_logp = kNegInf;
    for (auto& [prefix, logp] : candidates) {
        logp = -loss_value(lp, T, V1, prefix);
        if (logp > best_logp) {  // first max in lexicographic order
            best_logp = logp;
            best = prefix;
        }
    }
    return best;
}

template <class S>
std::vector<int> beam_decode(const Tensor<S>& lp, int width) {
    check(lp.rank() == 2, "beam_decode: logprobs must be [T,V+1]");
    return beam_decode(lp.data.data(), lp.dims[0], lp.dims[1], width);
}

}  // namespace mamfsd::ctc
