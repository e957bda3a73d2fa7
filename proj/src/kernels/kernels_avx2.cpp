// AVX2 variants of the draw-processing kernels. Compiled with -mavx2 -mfma in
// a dedicated translation unit; entered only when runtime CPU detection says
// the ISA is there.

#include <immintrin.h>

#include <cmath>
#include <cstdint>

#include "tvhr/kernels.hpp"

namespace tvhr::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

// exp on 4 lanes. Cody-Waite range reduction against log(2) followed by the
// Cephes rational approximation exp(r) = 1 + 2 r P(r^2) / (Q(r^2) - r P(r^2)),
// scaled by 2^n through the exponent bits. Accurate to ~2 ulp over the normal
// range; saturates to 0 below -708.4 (skipping denormals) and +inf above the
// overflow threshold.
inline __m256d exp_pd(__m256d x) {
    const __m256d hi_cut = _mm256_set1_pd(709.782712893383996732);
    const __m256d lo_cut = _mm256_set1_pd(-708.396418532264106224);
    const __m256d log2e = _mm256_set1_pd(1.44269504088896340736);
    const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
    const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);

    const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
    const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
    const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
    const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
    const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
    const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
    const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);

    const __m256d n = _mm256_round_pd(
        _mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);

    __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
    r = _mm256_fnmadd_pd(n, ln2_lo, r);

    const __m256d rr = _mm256_mul_pd(r, r);
    __m256d p = _mm256_fmadd_pd(p0, rr, p1);
    p = _mm256_fmadd_pd(p, rr, p2);
    p = _mm256_mul_pd(p, r);
    __m256d q = _mm256_fmadd_pd(q0, rr, q1);
    q = _mm256_fmadd_pd(q, rr, q2);
    q = _mm256_fmadd_pd(q, rr, q3);

    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d two = _mm256_set1_pd(2.0);
    __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
    e = _mm256_fmadd_pd(two, e, one);

    // 2^n via the exponent field; |n| <= 1023 after the input clamp below.
    const __m128i n32 = _mm256_cvtpd_epi32(n);
    const __m256i n64 = _mm256_cvtepi32_epi64(n32);
    const __m256i bias = _mm256_set1_epi64x(1023);
    const __m256d pow2n =
        _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(n64, bias), 52));
    e = _mm256_mul_pd(e, pow2n);

    const __m256d inf = _mm256_set1_pd(HUGE_VAL);
    const __m256d zero = _mm256_setzero_pd();
    e = _mm256_blendv_pd(e, inf, _mm256_cmp_pd(x, hi_cut, _CMP_GT_OQ));
    e = _mm256_blendv_pd(e, zero, _mm256_cmp_pd(x, lo_cut, _CMP_LT_OQ));
    return e;
}

}  // namespace

double sum(std::span<const double> x) {
    const std::size_t n = x.size();
    std::size_t i = 0;
    __m256d acc = _mm256_setzero_pd();
    for (; i + 4 <= n; i += 4)
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(x.data() + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    std::size_t i = 0;
    __m256d acc = _mm256_setzero_pd();
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i),
                              _mm256_loadu_pd(b.data() + i), acc);
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sumsq_centered(std::span<const double> x, double center) {
    const std::size_t n = x.size();
    std::size_t i = 0;
    const __m256d c = _mm256_set1_pd(center);
    __m256d acc = _mm256_setzero_pd();
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x.data() + i), c);
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        const double d = x[i] - center;
        s += d * d;
    }
    return s;
}

std::size_t count_greater(std::span<const double> x, double threshold) {
    const std::size_t n = x.size();
    std::size_t i = 0;
    const __m256d t = _mm256_set1_pd(threshold);
    std::size_t cnt = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d cmp =
            _mm256_cmp_pd(_mm256_loadu_pd(x.data() + i), t, _CMP_GT_OQ);
        cnt += static_cast<std::size_t>(
            _mm_popcnt_u32(static_cast<unsigned>(_mm256_movemask_pd(cmp))));
    }
    for (; i < n; ++i) cnt += (x[i] > threshold) ? 1 : 0;
    return cnt;
}

void affine(std::span<const double> a, std::span<const double> b, double scale,
            std::span<double> out) {
    const std::size_t n = a.size();
    std::size_t i = 0;
    const __m256d s = _mm256_set1_pd(scale);
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_fmadd_pd(s, _mm256_loadu_pd(b.data() + i),
                                          _mm256_loadu_pd(a.data() + i));
        _mm256_storeu_pd(out.data() + i, v);
    }
    for (; i < n; ++i) out[i] = a[i] + scale * b[i];
}

void vexp(std::span<const double> x, std::span<double> out) {
    const std::size_t n = x.size();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out.data() + i, exp_pd(_mm256_loadu_pd(x.data() + i)));
    for (; i < n; ++i) out[i] = std::exp(x[i]);
}

void affine_exp(std::span<const double> a, std::span<const double> b,
                double scale, std::span<double> out) {
    const std::size_t n = a.size();
    std::size_t i = 0;
    const __m256d s = _mm256_set1_pd(scale);
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_fmadd_pd(s, _mm256_loadu_pd(b.data() + i),
                                          _mm256_loadu_pd(a.data() + i));
        _mm256_storeu_pd(out.data() + i, exp_pd(v));
    }
    for (; i < n; ++i) out[i] = std::exp(a[i] + scale * b[i]);
}

void argmin_update(std::span<const double> vals, std::span<double> best_val,
                   std::span<std::int32_t> best_idx, std::int32_t idx) {
    const std::size_t n = vals.size();
    std::size_t i = 0;
    const __m128i vidx = _mm_set1_epi32(idx);
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(vals.data() + i);
        const __m256d bv = _mm256_loadu_pd(best_val.data() + i);
        const __m256d lt = _mm256_cmp_pd(v, bv, _CMP_LT_OQ);
        _mm256_storeu_pd(best_val.data() + i, _mm256_blendv_pd(bv, v, lt));
        const int mask = _mm256_movemask_pd(lt);
        // compress the 4 lane flags into a 32-bit blend of the index vector
        const __m128i old =
            _mm_loadu_si128(reinterpret_cast<const __m128i*>(best_idx.data() + i));
        const __m128i lanes = _mm_set_epi32((mask & 8) ? -1 : 0, (mask & 4) ? -1 : 0,
                                            (mask & 2) ? -1 : 0, (mask & 1) ? -1 : 0);
        const __m128i merged = _mm_blendv_epi8(old, vidx, lanes);
        _mm_storeu_si128(reinterpret_cast<__m128i*>(best_idx.data() + i), merged);
    }
    for (; i < n; ++i) {
        if (vals[i] < best_val[i]) {
            best_val[i] = vals[i];
            best_idx[i] = idx;
        }
    }
}

void add_less_indicator(std::span<const double> challenger,
                        std::span<const double> incumbent,
                        bool challenger_wins_ties,
                        std::span<std::int32_t> acc) {
    const std::size_t n = challenger.size();
    std::size_t i = 0;
    const __m128i one = _mm_set1_epi32(1);
    for (; i + 4 <= n; i += 4) {
        const __m256d c = _mm256_loadu_pd(challenger.data() + i);
        const __m256d v = _mm256_loadu_pd(incumbent.data() + i);
        const __m256d cmp = challenger_wins_ties ? _mm256_cmp_pd(c, v, _CMP_LE_OQ)
                                                 : _mm256_cmp_pd(c, v, _CMP_LT_OQ);
        const int mask = _mm256_movemask_pd(cmp);
        const __m128i lanes = _mm_set_epi32((mask & 8) ? -1 : 0, (mask & 4) ? -1 : 0,
                                            (mask & 2) ? -1 : 0, (mask & 1) ? -1 : 0);
        const __m128i inc = _mm_and_si128(lanes, one);
        const __m128i old =
            _mm_loadu_si128(reinterpret_cast<const __m128i*>(acc.data() + i));
        _mm_storeu_si128(reinterpret_cast<__m128i*>(acc.data() + i),
                         _mm_add_epi32(old, inc));
    }
    for (; i < n; ++i) {
        const bool hit = challenger_wins_ties ? (challenger[i] <= incumbent[i])
                                              : (challenger[i] < incumbent[i]);
        acc[i] += hit ? 1 : 0;
    }
}

}  // namespace tvhr::kernels::avx2
