#include "mamfsd/metrics.hpp"

#include <algorithm>

#include "mamfsd/error.hpp"

namespace mamfsd {

namespace {

enum Move : unsigned char { kStart = 0, kDiag = 1, kDel = 2, kIns = 3 };

}  // namespace

WerBreakdown wer(const std::vector<int>& ref, const std::vector<int>& hyp) {
    if (ref.empty()) throw ShapeError("wer: empty reference");
    const int U = static_cast<int>(ref.size());
    const int Hn = static_cast<int>(hyp.size());
    // d[i][j]: cost of aligning ref[0..i) with hyp[0..j)
    std::vector<int> d(static_cast<size_t>(U + 1) * (Hn + 1));
    std::vector<unsigned char> from(d.size(), kStart);
    auto at = [&](int i, int j) -> int& { return d[static_cast<size_t>(i) * (Hn + 1) + j]; };
    auto fr = [&](int i, int j) -> unsigned char& { return from[static_cast<size_t>(i) * (Hn + 1) + j]; };
    at(0, 0) = 0;
    for (int i = 1; i <= U; ++i) {
        at(i, 0) = i;
        fr(i, 0) = kDel;
    }
    for (int j = 1; j <= Hn; ++j) {
        at(0, j) = j;
        fr(0, j) = kIns;
    }
    for (int i = 1; i <= U; ++i)
        for (int j = 1; j <= Hn; ++j) {
            // preference on ties: substitution/match, then deletion, then insertion
            int best = at(i - 1, j - 1) + (ref[static_cast<size_t>(i - 1)] == hyp[static_cast<size_t>(j - 1)] ? 0 : 1);
            unsigned char move = kDiag;
            if (at(i - 1, j) + 1 < best) {
                best = at(i - 1, j) + 1;
                move = kDel;
            }
            if (at(i, j - 1) + 1 < best) {
                best = at(i, j - 1) + 1;
                move = kIns;
            }
            at(i, j) = best;
            fr(i, j) = move;
        }
    WerBreakdown out;
    out.sum = U;
    int i = U, j = Hn;
    while (i != 0 || j != 0) {
        switch (fr(i, j)) {
            case kDiag:
                if (ref[static_cast<size_t>(i - 1)] != hyp[static_cast<size_t>(j - 1)]) ++out.sub;
                --i;
                --j;
                break;
            case kDel:
                ++out.del;
                --i;
                break;
            case kIns:
                ++out.ins;
                --j;
                break;
            default:
                throw ShapeError("wer: corrupt backtrace");
        }
    }
    out.wer = 100.0 * static_cast<double>(out.edits()) / static_cast<double>(out.sum);
    return out;
}

WerBreakdown corpus_wer(const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs) {
    if (pairs.empty()) throw ShapeError("corpus_wer: empty corpus");
    WerBreakdown pooled;
    for (const auto& [ref, hyp] : pairs) {
        WerBreakdown w = wer(ref, hyp);
        pooled.ins += w.ins;
        pooled.del += w.del;
        pooled.sub += w.sub;
        pooled.sum += w.sum;
    }
    pooled.wer = 100.0 * static_cast<double>(pooled.edits()) / static_cast<double>(pooled.sum);
    return pooled;
}

int64_t edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
    const int A = static_cast<int>(a.size());
    const int B = static_cast<int>(b.size());
    std::vector<int64_t> prev(static_cast<size_t>(B + 1)), cur(static_cast<size_t>(B + 1));
    for (int j = 0; j <= B; ++j) prev[static_cast<size_t>(j)] = j;
    for (int i = 1; i <= A; ++i) {
        cur[0] = i;
        for (int j = 1; j <= B; ++j) {
            int64_t c = prev[static_cast<size_t>(j - 1)] +
                        (a[static_cast<size_t>(i - 1)] == b[static_cast<size_t>(j - 1)] ? 0 : 1);
            c = std::min(c, prev[static_cast<size_t>(j)] + 1);
            c = std::min(c, cur[static_cast<size_t>(j - 1)] + 1);
            cur[static_cast<size_t>(j)] = c;
        }
        std::swap(prev, cur);
    }
    return prev[static_cast<size_t>(B)];
}

}  // namespace mamfsd
