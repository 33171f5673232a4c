#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstdint>
#include <vector>

#include "kernels_internal.hpp"

namespace ganlab::kern {

namespace {

constexpr int kStrip = 16;  // two ymm columns per strip

// A-row count is a template parameter so every block shape gets a fully
// unrolled register tile.
template <int R>
inline void block_6x16(const float* a, int lda, const float* pack, float* c,
                       int ldc, int k, bool accumulate, __m256i mask_lo,
                       __m256i mask_hi) {
    __m256 acc[R][2];
    for (int r = 0; r < R; ++r) {
        if (accumulate) {
            acc[r][0] = _mm256_maskload_ps(c + r * ldc, mask_lo);
            acc[r][1] = _mm256_maskload_ps(c + r * ldc + 8, mask_hi);
        } else {
            acc[r][0] = _mm256_setzero_ps();
            acc[r][1] = _mm256_setzero_ps();
        }
    }
    for (int p = 0; p < k; ++p) {
        const __m256 b0 = _mm256_load_ps(pack + p * kStrip);
        const __m256 b1 = _mm256_load_ps(pack + p * kStrip + 8);
        for (int r = 0; r < R; ++r) {
            const __m256 av = _mm256_set1_ps(a[r * static_cast<int64_t>(lda) + p]);
            acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
            acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
        }
    }
    for (int r = 0; r < R; ++r) {
        _mm256_maskstore_ps(c + r * ldc, mask_lo, acc[r][0]);
        _mm256_maskstore_ps(c + r * ldc + 8, mask_hi, acc[r][1]);
    }
}

inline __m256i tail_mask(int live) {
    alignas(32) int32_t lanes[8];
    for (int i = 0; i < 8; ++i) lanes[i] = i < live ? -1 : 0;
    return _mm256_load_si256(reinterpret_cast<const __m256i*>(lanes));
}

}  // namespace

void gemm_f32_avx2(const float* a, const float* b, float* c, int m, int n,
                   int k, bool accumulate) {
    thread_local std::vector<float> packbuf;
    packbuf.resize(static_cast<size_t>(k) * kStrip + 8);
    // Keep the panel 32-byte aligned for _mm256_load_ps.
    float* pack = packbuf.data();
    while (reinterpret_cast<uintptr_t>(pack) & 31u) ++pack;

    for (int j0 = 0; j0 < n; j0 += kStrip) {
        const int jn = n - j0 < kStrip ? n - j0 : kStrip;
        for (int p = 0; p < k; ++p) {
            const float* brow = b + static_cast<int64_t>(p) * n + j0;
            float* dst = pack + p * kStrip;
            for (int j = 0; j < jn; ++j) dst[j] = brow[j];
            for (int j = jn; j < kStrip; ++j) dst[j] = 0.0f;
        }
        const __m256i mlo = jn >= 8 ? tail_mask(8) : tail_mask(jn);
        const __m256i mhi = jn >= 8 ? tail_mask(jn - 8) : tail_mask(0);
        int i0 = 0;
        for (; i0 + 6 <= m; i0 += 6)
            block_6x16<6>(a + static_cast<int64_t>(i0) * k, k, pack,
                          c + static_cast<int64_t>(i0) * n + j0, n, k,
                          accumulate, mlo, mhi);
        const float* atail = a + static_cast<int64_t>(i0) * k;
        float* ctail = c + static_cast<int64_t>(i0) * n + j0;
        switch (m - i0) {
            case 5: block_6x16<5>(atail, k, pack, ctail, n, k, accumulate, mlo, mhi); break;
            case 4: block_6x16<4>(atail, k, pack, ctail, n, k, accumulate, mlo, mhi); break;
            case 3: block_6x16<3>(atail, k, pack, ctail, n, k, accumulate, mlo, mhi); break;
            case 2: block_6x16<2>(atail, k, pack, ctail, n, k, accumulate, mlo, mhi); break;
            case 1: block_6x16<1>(atail, k, pack, ctail, n, k, accumulate, mlo, mhi); break;
            default: break;
        }
    }
}

}  // namespace ganlab::kern

#endif
