// Microbenchmark for the GEMM lanes and (once the models exist) a full
// training step. Not part of the test suite.
#include <chrono>
#include <cstdio>
#include <vector>

#include "ganlab/kernels.hpp"
#include "ganlab/rng.hpp"

using namespace ganlab;
using Clock = std::chrono::steady_clock;

static void bench_gemm(kern::Isa isa, int m, int n, int k) {
    if (!kern::isa_supported(isa)) return;
    RngStream rng(1, 0);
    std::vector<float> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n),
        c(static_cast<size_t>(m) * n);
    for (auto& v : a) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : b) v = static_cast<float>(rng.uniform(-1, 1));
    const double flops = 2.0 * m * n * k;
    int reps = static_cast<int>(2e9 / flops) + 1;
    kern::gemm_f32_isa(isa, a.data(), b.data(), c.data(), m, n, k, false);
    const auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r)
        kern::gemm_f32_isa(isa, a.data(), b.data(), c.data(), m, n, k, false);
    const double secs =
        std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("%-7s m=%4d n=%5d k=%5d  %7.2f GFLOP/s\n",
                kern::isa_name(isa).c_str(), m, n, k,
                flops * reps / secs / 1e9);
}

int main() {
    const int shapes[][3] = {{64, 256, 720},   {128, 256, 1296}, {32, 1024, 720},
                             {16, 4096, 432},  {80, 256, 720},   {48, 1024, 432},
                             {8, 4096, 32},    {128, 16, 2048},  {3, 4096, 144}};
    for (auto isa : {kern::Isa::scalar, kern::Isa::avx2, kern::Isa::avx512})
        for (auto [m, n, k] : shapes) bench_gemm(isa, m, n, k);
    return 0;
}
