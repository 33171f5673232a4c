#pragma once

namespace ganlab::kern {

void gemm_f32_scalar(const float* a, const float* b, float* c, int m, int n,
                     int k, bool accumulate);
#if defined(__x86_64__) || defined(_M_X64)
void gemm_f32_avx2(const float* a, const float* b, float* c, int m, int n,
                   int k, bool accumulate);
void gemm_f32_avx512(const float* a, const float* b, float* c, int m, int n,
                     int k, bool accumulate);
#endif

}  // namespace ganlab::kern
