#include "fbmedm/simd.hpp"

#include <immintrin.h>

#include <vector>

namespace fbmedm::simd {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// 4 mask bytes -> 4 x 64-bit lane mask (all ones where byte != 0)
inline __m256d lane_mask(const std::uint8_t* m) {
    std::int32_t packed;
    __builtin_memcpy(&packed, m, sizeof(packed));
    const __m256i wide = _mm256_cvtepu8_epi64(_mm_cvtsi32_si128(packed));
    const __m256i is_zero = _mm256_cmpeq_epi64(wide, _mm256_setzero_si256());
    return _mm256_castsi256_pd(_mm256_xor_si256(is_zero, _mm256_set1_epi64x(-1)));
}

void pairwise_sq_dist(const double* points, std::size_t n, std::size_t dim, double* out) {
    std::vector<double> soa(dim * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < dim; ++k) soa[k * n + i] = points[i * dim + k];

    for (std::size_t i = 0; i < n; ++i) {
        out[i * n + i] = 0.0;
        std::size_t j = i + 1;
        for (; j + 4 <= n; j += 4) {
            __m256d acc = _mm256_setzero_pd();
            for (std::size_t k = 0; k < dim; ++k) {
                const __m256d pi = _mm256_set1_pd(soa[k * n + i]);
                const __m256d d = _mm256_sub_pd(pi, _mm256_loadu_pd(&soa[k * n + j]));
                acc = _mm256_fmadd_pd(d, d, acc);
            }
            _mm256_storeu_pd(&out[i * n + j], acc);
        }
        for (; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double d = soa[k * n + i] - soa[k * n + j];
                acc = __builtin_fma(d, d, acc);
            }
            out[i * n + j] = acc;
        }
        for (std::size_t jj = i + 1; jj < n; ++jj) out[jj * n + i] = out[i * n + jj];
    }
}

void affine3(double* out, std::size_t len, double a, const double* x, double b, const double* y,
             double c, const double* z) {
    const __m256d va = _mm256_set1_pd(a);
    const __m256d vb = _mm256_set1_pd(b);
    std::size_t i = 0;
    if (z == nullptr) {
        for (; i + 4 <= len; i += 4) {
            const __m256d r = _mm256_fmadd_pd(vb, _mm256_loadu_pd(y + i),
                                              _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
            _mm256_storeu_pd(out + i, r);
        }
        for (; i < len; ++i) out[i] = __builtin_fma(b, y[i], a * x[i]);
        return;
    }
    const __m256d vc = _mm256_set1_pd(c);
    for (; i + 4 <= len; i += 4) {
        __m256d r = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        r = _mm256_fmadd_pd(vb, _mm256_loadu_pd(y + i), r);
        r = _mm256_fmadd_pd(vc, _mm256_loadu_pd(z + i), r);
        _mm256_storeu_pd(out + i, r);
    }
    for (; i < len; ++i) out[i] = __builtin_fma(c, z[i], __builtin_fma(b, y[i], a * x[i]));
}

void select(double* out, std::size_t len, const std::uint8_t* mask, const double* known,
            const double* other) {
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4) {
        const __m256d m = lane_mask(mask + i);
        const __m256d r = _mm256_blendv_pd(_mm256_loadu_pd(other + i), _mm256_loadu_pd(known + i), m);
        _mm256_storeu_pd(out + i, r);
    }
    for (; i < len; ++i) out[i] = mask[i] ? known[i] : other[i];
}

double masked_sq_diff(std::size_t len, const double* a, const double* b, const std::uint8_t* mask) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4) {
        const __m256d d = _mm256_and_pd(
            lane_mask(mask + i), _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double total = hsum(acc);
    for (; i < len; ++i) {
        if (mask[i]) {
            const double d = a[i] - b[i];
            total = __builtin_fma(d, d, total);
        }
    }
    return total;
}

double dot(std::size_t len, const double* x, const double* y) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
    double total = hsum(acc);
    for (; i < len; ++i) total = __builtin_fma(x[i], y[i], total);
    return total;
}

}  // namespace

const KernelTable& avx2_kernels() {
    static const KernelTable table{pairwise_sq_dist, affine3, select, masked_sq_diff, dot};
    return table;
}

}  // namespace fbmedm::simd
