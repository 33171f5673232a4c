#include <cmath>

#include "ganlab/kernels.hpp"

namespace ganlab::kern {

// Reference kernel. Each output element accumulates serially over k with an
// explicit fma; the SIMD lanes replay exactly this recurrence.
void gemm_f32_scalar(const float* a, const float* b, float* c, int m, int n,
                     int k, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<int64_t>(i) * k;
        float* crow = c + static_cast<int64_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) crow[j] = 0.0f;
        for (int p = 0; p < k; ++p) {
            const float av = arow[p];
            const float* brow = b + static_cast<int64_t>(p) * n;
            for (int j = 0; j < n; ++j)
                crow[j] = std::fma(av, brow[j], crow[j]);
        }
    }
}

void gemm_f64(const double* a, const double* b, double* c, int m, int n,
              int k, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<int64_t>(i) * k;
        double* crow = c + static_cast<int64_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) crow[j] = 0.0;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<int64_t>(p) * n;
            for (int j = 0; j < n; ++j)
                crow[j] = std::fma(av, brow[j], crow[j]);
        }
    }
}

template <typename T>
void im2col(const T* img, int channels, int height, int width, int kh, int kw,
            int stride, int pad, int oh, int ow, T* col) {
    T* out = col;
    for (int c = 0; c < channels; ++c) {
        const T* plane = img + static_cast<int64_t>(c) * height * width;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                for (int y = 0; y < oh; ++y) {
                    const int sy = y * stride - pad + ky;
                    if (sy < 0 || sy >= height) {
                        for (int x = 0; x < ow; ++x) *out++ = T(0);
                        continue;
                    }
                    const T* row = plane + static_cast<int64_t>(sy) * width;
                    for (int x = 0; x < ow; ++x) {
                        const int sx = x * stride - pad + kx;
                        *out++ = (sx >= 0 && sx < width) ? row[sx] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, int channels, int height, int width, int kh,
                int kw, int stride, int pad, int oh, int ow, T* img) {
    const T* in = col;
    for (int c = 0; c < channels; ++c) {
        T* plane = img + static_cast<int64_t>(c) * height * width;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                for (int y = 0; y < oh; ++y) {
                    const int sy = y * stride - pad + ky;
                    if (sy < 0 || sy >= height) {
                        in += ow;
                        continue;
                    }
                    T* row = plane + static_cast<int64_t>(sy) * width;
                    for (int x = 0; x < ow; ++x) {
                        const int sx = x * stride - pad + kx;
                        if (sx >= 0 && sx < width) row[sx] += in[x];
                    }
                    in += ow;
                }
            }
        }
    }
}

template void im2col<float>(const float*, int, int, int, int, int, int, int,
                            int, int, float*);
template void im2col<double>(const double*, int, int, int, int, int, int, int,
                             int, int, double*);
template void col2im_add<float>(const float*, int, int, int, int, int, int,
                                int, int, int, float*);
template void col2im_add<double>(const double*, int, int, int, int, int, int,
                                 int, int, int, double*);

bool all_finite(const float* p, int64_t n) {
    uint32_t acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        uint32_t bits;
        __builtin_memcpy(&bits, p + i, sizeof(bits));
        // Exponent all-ones marks Inf/NaN; OR-reduce then test once.
        acc |= static_cast<uint32_t>((bits & 0x7F800000u) == 0x7F800000u);
    }
    return acc == 0;
}

bool all_finite(const double* p, int64_t n) {
    uint64_t acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        uint64_t bits;
        __builtin_memcpy(&bits, p + i, sizeof(bits));
        acc |= static_cast<uint64_t>((bits & 0x7FF0000000000000ull) ==
                                     0x7FF0000000000000ull);
    }
    return acc == 0;
}

}  // namespace ganlab::kern
