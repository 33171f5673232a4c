#pragma once

#include <cstdint>
#include <string>

#include "ganlab/common.hpp"

namespace ganlab::kern {

// Instruction-set lane for the f32 GEMM. The scalar kernel is the reference;
// the SIMD kernels accumulate each output element in the same k-order with
// the same fused multiply-adds, so all lanes agree bit for bit.
enum class Isa { scalar = 0, avx2 = 1, avx512 = 2 };

bool isa_supported(Isa isa);
Isa detect_best();
// Active lane used by gemm_f32. Honors the GANLAB_KERNELS environment
// variable ("scalar" | "avx2" | "avx512") on first use.
Isa active_isa();
void set_isa(Isa isa);
std::string isa_name(Isa isa);

// C(M,N) = A(M,K) * B(K,N), all row-major; accumulates into C when
// `accumulate` is set, otherwise overwrites.
void gemm_f32(const float* a, const float* b, float* c, int m, int n, int k,
              bool accumulate);
// Lane-pinned variant for equivalence tests.
void gemm_f32_isa(Isa isa, const float* a, const float* b, float* c, int m,
                  int n, int k, bool accumulate);

void gemm_f64(const double* a, const double* b, double* c, int m, int n,
              int k, bool accumulate);

template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate);

template <>
inline void gemm<float>(const float* a, const float* b, float* c, int m,
                        int n, int k, bool accumulate) {
    gemm_f32(a, b, c, m, n, k, accumulate);
}

template <>
inline void gemm<double>(const double* a, const double* b, double* c, int m,
                         int n, int k, bool accumulate) {
    gemm_f64(a, b, c, m, n, k, accumulate);
}

// dst(cols, rows) = src(rows, cols)^T, row-major.
template <typename T>
void transpose(const T* src, T* dst, int rows, int cols) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// Lowers one image (C,H,W) to the convolution matrix (C*kh*kw, oh*ow).
template <typename T>
void im2col(const T* img, int channels, int height, int width, int kh, int kw,
            int stride, int pad, int oh, int ow, T* col);

// Adjoint of im2col: scatter-adds the column matrix back onto the image.
template <typename T>
void col2im_add(const T* col, int channels, int height, int width, int kh,
                int kw, int stride, int pad, int oh, int ow, T* img);

bool all_finite(const float* p, int64_t n);
bool all_finite(const double* p, int64_t n);

}  // namespace ganlab::kern
