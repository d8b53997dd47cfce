#pragma once

#include <cstdlib>

namespace mamfsd {

// Worker cap from MAMFSD_THREADS, default 1. Parallel kernels split work over
// output elements only, so the results are identical for any thread count.
inline int num_threads() {
    static const int n = [] {
        const char* env = std::getenv("MAMFSD_THREADS");
        if (env == nullptr) return 1;
        int v = std::atoi(env);
        return v < 1 ? 1 : v;
    }();
    return n;
}

}  // namespace mamfsd
