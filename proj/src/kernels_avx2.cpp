// AVX2+FMA variants of the arithmetic kernels. Compiled only on x86-64
// (with -mavx2 -mfma for this translation unit); registered at runtime when
// the CPU reports both features.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "pmnet/kernels.hpp"

namespace pmnet::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

void corr_acc_avx2(const double* src, int src_w, const double* k, int kh, int kw,
                   double* out, int oh, int ow) {
    for (int y = 0; y < oh; ++y) {
        double* out_row = out + static_cast<size_t>(y) * ow;
        int x = 0;
        for (; x + 4 <= ow; x += 4) {
            __m256d acc = _mm256_loadu_pd(out_row + x);
            for (int i = 0; i < kh; ++i) {
                const double* srow = src + static_cast<size_t>(y + i) * src_w + x;
                const double* krow = k + static_cast<size_t>(i) * kw;
                for (int j = 0; j < kw; ++j) {
                    acc = _mm256_fmadd_pd(_mm256_loadu_pd(srow + j),
                                          _mm256_set1_pd(krow[j]), acc);
                }
            }
            _mm256_storeu_pd(out_row + x, acc);
        }
        for (; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kh; ++i) {
                const double* srow = src + static_cast<size_t>(y + i) * src_w + x;
                const double* krow = k + static_cast<size_t>(i) * kw;
                for (int j = 0; j < kw; ++j) acc += srow[j] * krow[j];
            }
            out_row[x] += acc;
        }
    }
}

void corr_back_src_avx2(const double* gout, int oh, int ow, const double* k, int kh,
                        int kw, double* gsrc, int src_w) {
    for (int y = 0; y < oh; ++y) {
        const double* grow = gout + static_cast<size_t>(y) * ow;
        int x = 0;
        for (; x + 4 <= ow; x += 4) {
            const __m256d gv = _mm256_loadu_pd(grow + x);
            for (int i = 0; i < kh; ++i) {
                double* srow = gsrc + static_cast<size_t>(y + i) * src_w + x;
                const double* krow = k + static_cast<size_t>(i) * kw;
                for (int j = 0; j < kw; ++j) {
                    __m256d v = _mm256_loadu_pd(srow + j);
                    v = _mm256_fmadd_pd(gv, _mm256_set1_pd(krow[j]), v);
                    _mm256_storeu_pd(srow + j, v);
                }
            }
        }
        for (; x < ow; ++x) {
            const double g = grow[x];
            for (int i = 0; i < kh; ++i) {
                double* srow = gsrc + static_cast<size_t>(y + i) * src_w + x;
                const double* krow = k + static_cast<size_t>(i) * kw;
                for (int j = 0; j < kw; ++j) srow[j] += g * krow[j];
            }
        }
    }
}

void corr_back_kernel_avx2(const double* gout, int oh, int ow, const double* src,
                           int src_w, double* gk, int kh, int kw) {
    for (int i = 0; i < kh; ++i) {
        for (int j = 0; j < kw; ++j) {
            __m256d accv = _mm256_setzero_pd();
            double acc = 0.0;
            for (int y = 0; y < oh; ++y) {
                const double* grow = gout + static_cast<size_t>(y) * ow;
                const double* srow = src + static_cast<size_t>(y + i) * src_w + j;
                int x = 0;
                for (; x + 4 <= ow; x += 4) {
                    accv = _mm256_fmadd_pd(_mm256_loadu_pd(grow + x),
                                           _mm256_loadu_pd(srow + x), accv);
                }
                for (; x < ow; ++x) acc += grow[x] * srow[x];
            }
            gk[static_cast<size_t>(i) * kw + j] += acc + hsum(accv);
        }
    }
}

void madd_avx2(double* dst, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(dst + i);
        v = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), v);
        _mm256_storeu_pd(dst + i, v);
    }
    for (; i < n; ++i) dst[i] += a[i] * b[i];
}

void axpby_avx2(double* dst, double alpha, const double* x, double beta,
                const double* y, size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    const __m256d bv = _mm256_set1_pd(beta);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_mul_pd(bv, _mm256_loadu_pd(y + i));
        v = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), v);
        _mm256_storeu_pd(dst + i, v);
    }
    for (; i < n; ++i) dst[i] = alpha * x[i] + beta * y[i];
}

void scale_acc_avx2(double* dst, double alpha, const double* x, size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(dst + i);
        v = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), v);
        _mm256_storeu_pd(dst + i, v);
    }
    for (; i < n; ++i) dst[i] += alpha * x[i];
}

double sum_avx2(const double* a, size_t n) {
    __m256d accv = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) accv = _mm256_add_pd(accv, _mm256_loadu_pd(a + i));
    double acc = hsum(accv);
    for (; i < n; ++i) acc += a[i];
    return acc;
}

}  // namespace

const Ops* avx2_ops() {
    static const Ops ops = {
        "avx2",     corr_acc_avx2, corr_back_src_avx2, corr_back_kernel_avx2,
        madd_avx2,  axpby_avx2,    scale_acc_avx2,     sum_avx2,
    };
    return &ops;
}

}  // namespace pmnet::kernels

#endif  // x86-64
