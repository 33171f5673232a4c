#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "kernels_internal.hpp"

namespace ganlab::kern {

namespace {

constexpr int kStrip = 32;  // two zmm columns per strip

template <int R>
inline void block_14x32(const float* a, int lda, const float* pack, float* c,
                        int ldc, int k, bool accumulate, __mmask16 mask_lo,
                        __mmask16 mask_hi) {
    __m512 acc[R][2];
    for (int r = 0; r < R; ++r) {
        if (accumulate) {
            acc[r][0] = _mm512_maskz_loadu_ps(mask_lo, c + r * ldc);
            acc[r][1] = _mm512_maskz_loadu_ps(mask_hi, c + r * ldc + 16);
        } else {
            acc[r][0] = _mm512_setzero_ps();
            acc[r][1] = _mm512_setzero_ps();
        }
    }
    for (int p = 0; p < k; ++p) {
        const __m512 b0 = _mm512_load_ps(pack + p * kStrip);
        const __m512 b1 = _mm512_load_ps(pack + p * kStrip + 16);
        for (int r = 0; r < R; ++r) {
            const __m512 av = _mm512_set1_ps(a[r * static_cast<int64_t>(lda) + p]);
            acc[r][0] = _mm512_fmadd_ps(av, b0, acc[r][0]);
            acc[r][1] = _mm512_fmadd_ps(av, b1, acc[r][1]);
        }
    }
    for (int r = 0; r < R; ++r) {
        _mm512_mask_storeu_ps(c + r * ldc, mask_lo, acc[r][0]);
        _mm512_mask_storeu_ps(c + r * ldc + 16, mask_hi, acc[r][1]);
    }
}

using BlockFn = void (*)(const float*, int, const float*, float*, int, int,
                         bool, __mmask16, __mmask16);

template <int... Rs>
constexpr auto make_table(std::integer_sequence<int, Rs...>) {
    return std::array<BlockFn, sizeof...(Rs)>{&block_14x32<Rs + 1>...};
}

}  // namespace

void gemm_f32_avx512(const float* a, const float* b, float* c, int m, int n,
                     int k, bool accumulate) {
    static constexpr auto kBlocks =
        make_table(std::make_integer_sequence<int, 14>{});

    thread_local std::vector<float> packbuf;
    packbuf.resize(static_cast<size_t>(k) * kStrip + 16);
    float* pack = packbuf.data();
    while (reinterpret_cast<uintptr_t>(pack) & 63u) ++pack;

    for (int j0 = 0; j0 < n; j0 += kStrip) {
        const int jn = n - j0 < kStrip ? n - j0 : kStrip;
        for (int p = 0; p < k; ++p) {
            const float* brow = b + static_cast<int64_t>(p) * n + j0;
            float* dst = pack + p * kStrip;
            for (int j = 0; j < jn; ++j) dst[j] = brow[j];
            for (int j = jn; j < kStrip; ++j) dst[j] = 0.0f;
        }
        const __mmask16 mlo =
            jn >= 16 ? static_cast<__mmask16>(0xFFFF)
                     : static_cast<__mmask16>((1u << jn) - 1u);
        const __mmask16 mhi =
            jn >= 16 ? static_cast<__mmask16>((1u << (jn - 16)) - 1u)
                     : static_cast<__mmask16>(0);
        int i0 = 0;
        for (; i0 + 14 <= m; i0 += 14)
            block_14x32<14>(a + static_cast<int64_t>(i0) * k, k, pack,
                            c + static_cast<int64_t>(i0) * n + j0, n, k,
                            accumulate, mlo, mhi);
        if (const int rem = m - i0; rem > 0)
            kBlocks[rem - 1](a + static_cast<int64_t>(i0) * k, k, pack,
                             c + static_cast<int64_t>(i0) * n + j0, n, k,
                             accumulate, mlo, mhi);
    }
}

}  // namespace ganlab::kern

#endif
