#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace mamfsd {

struct WerBreakdown {
    int64_t ins = 0;
    int64_t del = 0;
    int64_t sub = 0;
    int64_t sum = 0;  // reference length
    double wer = 0.0;  // 100 * (ins+del+sub) / sum

    int64_t edits() const { return ins + del + sub; }
};

// Levenshtein alignment with unit costs. Among minimal-cost alignments the
// backtrace prefers substitution over deletion over insertion, so the split
// of the counts is deterministic. Throws on an empty reference.
WerBreakdown wer(const std::vector<int>& ref, const std::vector<int>& hyp);

// Pooled corpus WER: summed counts over summed reference lengths (not the
// mean of per-sentence rates). Throws on an empty corpus.
WerBreakdown corpus_wer(const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs);

// Plain DP edit distance without backtrace.
int64_t edit_distance(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace mamfsd
