#include "ganlab/kernels.hpp"

#include <cstdlib>
#include <string>

#include "kernels_internal.hpp"

namespace ganlab::kern {

bool isa_supported(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
#if defined(__x86_64__) || defined(_M_X64)
        case Isa::avx2:
            return __builtin_cpu_supports("avx2") &&
                   __builtin_cpu_supports("fma");
        case Isa::avx512:
            return __builtin_cpu_supports("avx512f") &&
                   __builtin_cpu_supports("avx512vl") &&
                   __builtin_cpu_supports("avx512bw") &&
                   __builtin_cpu_supports("avx512dq");
#endif
        default:
            return false;
    }
}

Isa detect_best() {
    if (isa_supported(Isa::avx512)) return Isa::avx512;
    if (isa_supported(Isa::avx2)) return Isa::avx2;
    return Isa::scalar;
}

namespace {

Isa initial_isa() {
    if (const char* env = std::getenv("GANLAB_KERNELS")) {
        const std::string v = env;
        if (v == "scalar") return Isa::scalar;
        if (v == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
        if (v == "avx512" && isa_supported(Isa::avx512)) return Isa::avx512;
    }
    return detect_best();
}

Isa g_active = initial_isa();

}  // namespace

Isa active_isa() { return g_active; }

void set_isa(Isa isa) {
    g_active = isa_supported(isa) ? isa : detect_best();
}

std::string isa_name(Isa isa) {
    switch (isa) {
        case Isa::avx512: return "avx512";
        case Isa::avx2: return "avx2";
        default: return "scalar";
    }
}

void gemm_f32_isa(Isa isa, const float* a, const float* b, float* c, int m,
                  int n, int k, bool accumulate) {
    switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
        case Isa::avx512:
            gemm_f32_avx512(a, b, c, m, n, k, accumulate);
            return;
        case Isa::avx2:
            gemm_f32_avx2(a, b, c, m, n, k, accumulate);
            return;
#endif
        default:
            gemm_f32_scalar(a, b, c, m, n, k, accumulate);
            return;
    }
}

void gemm_f32(const float* a, const float* b, float* c, int m, int n, int k,
              bool accumulate) {
    gemm_f32_isa(g_active, a, b, c, m, n, k, accumulate);
}

}  // namespace ganlab::kern
