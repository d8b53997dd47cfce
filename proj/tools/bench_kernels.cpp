// Compares the serial reference kernels against the production (panel+GEMM,
// OpenMP) kernels: correctness at 1e-6 and wall-clock throughput. Run with
// MAMFSD_THREADS=N to exercise the parallel split.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "mamfsd/kernels.hpp"
#include "mamfsd/rng.hpp"
#include "mamfsd/threads.hpp"

using namespace mamfsd;

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::vector<float> randvec(size_t n, Rng& rng, double scale = 1.0) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-scale, scale));
    return v;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(double(a[i]) - double(b[i])));
    return m;
}

struct Case {
    std::string name;
    double gflop = 0;       // per call
    double ref_s = 0, opt_s = 0;
    double diff = 0;
};

Case bench_conv2d(int T, int Ci, int H, int W, int Co, int K, int stride, int pad, int reps) {
    Rng rng(42);
    const int Ho = kernels::conv_out_extent(H, K, stride, pad);
    const int Wo = kernels::conv_out_extent(W, K, stride, pad);
    auto x = randvec(size_t(T) * Ci * H * W, rng);
    auto w = randvec(size_t(Co) * Ci * K * K, rng, 0.2);
    auto b = randvec(size_t(Co), rng, 0.1);
    std::vector<float> yr(size_t(T) * Co * Ho * Wo), yo(yr.size());

    Case c;
    c.name = "conv2d T=" + std::to_string(T) + " " + std::to_string(Ci) + "x" + std::to_string(H) +
             "x" + std::to_string(W) + "->" + std::to_string(Co) + " k" + std::to_string(K) + " s" +
             std::to_string(stride);
    c.gflop = 2.0 * T * Co * Ho * Wo * Ci * K * K * 1e-9;

    kernels::ref::conv2d_fwd(x.data(), w.data(), b.data(), yr.data(), T, Ci, H, W, Co, K, stride, pad);
    double t0 = now_s();
    kernels::ref::conv2d_fwd(x.data(), w.data(), b.data(), yr.data(), T, Ci, H, W, Co, K, stride, pad);
    c.ref_s = now_s() - t0;

    kernels::conv2d_fwd(x.data(), w.data(), b.data(), yo.data(), T, Ci, H, W, Co, K, stride, pad);
    t0 = now_s();
    for (int r = 0; r < reps; ++r)
        kernels::conv2d_fwd(x.data(), w.data(), b.data(), yo.data(), T, Ci, H, W, Co, K, stride, pad);
    c.opt_s = (now_s() - t0) / reps;
    c.diff = max_abs_diff(yr, yo);
    return c;
}

Case bench_conv3d(int Ci, int T, int H, int W, int Co, int N, int reps) {
    Rng rng(43);
    auto x = randvec(size_t(Ci) * T * H * W, rng);
    auto w = randvec(size_t(Co) * Ci * N, rng, 0.2);
    auto b = randvec(size_t(Co), rng, 0.1);
    std::vector<float> yr(size_t(Co) * T * H * W), yo(yr.size());

    Case c;
    c.name = "conv3d_temporal C=" + std::to_string(Ci) + " T=" + std::to_string(T) + " " +
             std::to_string(H) + "x" + std::to_string(W) + " N=" + std::to_string(N);
    c.gflop = 2.0 * Co * T * H * W * Ci * N * 1e-9;

    kernels::ref::conv3d_temporal_fwd(x.data(), w.data(), b.data(), yr.data(), Ci, T, H, W, Co, N);
    double t0 = now_s();
    kernels::ref::conv3d_temporal_fwd(x.data(), w.data(), b.data(), yr.data(), Ci, T, H, W, Co, N);
    c.ref_s = now_s() - t0;

    kernels::conv3d_temporal_fwd(x.data(), w.data(), b.data(), yo.data(), Ci, T, H, W, Co, N);
    t0 = now_s();
    for (int r = 0; r < reps; ++r)
        kernels::conv3d_temporal_fwd(x.data(), w.data(), b.data(), yo.data(), Ci, T, H, W, Co, N);
    c.opt_s = (now_s() - t0) / reps;
    c.diff = max_abs_diff(yr, yo);
    return c;
}

Case bench_linear(int N, int D, int M, int reps) {
    Rng rng(44);
    auto x = randvec(size_t(N) * D, rng);
    auto w = randvec(size_t(M) * D, rng, 0.2);
    auto b = randvec(size_t(M), rng, 0.1);
    std::vector<float> yr(size_t(N) * M), yo(yr.size());

    Case c;
    c.name = "linear " + std::to_string(N) + "x" + std::to_string(D) + "->" + std::to_string(M);
    c.gflop = 2.0 * N * D * M * 1e-9;

    kernels::ref::linear_fwd(x.data(), w.data(), b.data(), yr.data(), N, D, M);
    double t0 = now_s();
    kernels::ref::linear_fwd(x.data(), w.data(), b.data(), yr.data(), N, D, M);
    c.ref_s = now_s() - t0;

    kernels::linear_fwd(x.data(), w.data(), b.data(), yo.data(), N, D, M);
    t0 = now_s();
    for (int r = 0; r < reps; ++r) kernels::linear_fwd(x.data(), w.data(), b.data(), yo.data(), N, D, M);
    c.opt_s = (now_s() - t0) / reps;
    c.diff = max_abs_diff(yr, yo);
    return c;
}

}  // namespace

int main() {
    std::printf("MAMFSD_THREADS=%d\n", num_threads());
    std::printf("%-44s %10s %10s %8s %9s %9s\n", "case", "ref GF/s", "opt GF/s", "speedup",
                "max|diff|", "GFLOP");
    std::vector<Case> cases;
    // backbone-shaped workloads, 40-frame clip
    cases.push_back(bench_conv2d(40, 8, 32, 32, 8, 3, 1, 1, 10));
    cases.push_back(bench_conv2d(40, 16, 32, 32, 16, 3, 1, 1, 6));
    cases.push_back(bench_conv2d(40, 16, 16, 16, 32, 3, 2, 1, 10));
    cases.push_back(bench_conv2d(40, 64, 8, 8, 64, 3, 1, 1, 10));
    cases.push_back(bench_conv3d(8, 40, 32, 32, 8, 3, 10));
    cases.push_back(bench_conv3d(16, 40, 16, 16, 16, 3, 10));
    cases.push_back(bench_conv3d(64, 40, 4, 4, 64, 3, 10));
    cases.push_back(bench_conv3d(128, 40, 4, 4, 128, 3, 10));
    cases.push_back(bench_linear(256, 512, 512, 10));
    double tot_gflop = 0, tot_time = 0;
    for (const auto& c : cases) {
        std::printf("%-44s %10.2f %10.2f %7.1fx %9.2e %9.3f\n", c.name.c_str(), c.gflop / c.ref_s,
                    c.gflop / c.opt_s, c.ref_s / c.opt_s, c.diff, c.gflop);
        tot_gflop += c.gflop;
        tot_time += c.opt_s;
    }
    std::printf("aggregate optimized throughput: %.2f GFLOP/s\n", tot_gflop / tot_time);
    return 0;
}
