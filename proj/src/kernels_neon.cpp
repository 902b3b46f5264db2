// NEON variants (aarch64, float64x2). NEON is baseline on aarch64, so this
// translation unit compiles without extra flags and the backend is always
// usable there.

#if defined(__aarch64__)

#include <arm_neon.h>

#include "pmnet/kernels.hpp"

namespace pmnet::kernels {
namespace {

void corr_acc_neon(const double* src, int src_w, const double* k, int kh, int kw,
                   double* out, int oh, int ow) {
    for (int y = 0; y < oh; ++y) {
        double* out_row = out + static_cast<size_t>(y) * ow;
        int x = 0;
        for (; x + 2 <= ow; x += 2) {
            float64x2_t acc = vld1q_f64(out_row + x);
            for (int i = 0; i < kh; ++i) {
                const double* srow = src + static_cast<size_t>(y + i) * src_w + x;
                const double* krow = k + static_cast<size_t>(i) * kw;
                for (int j = 0; j < kw; ++j) {
                    acc = vfmaq_n_f64(acc, vld1q_f64(srow + j), krow[j]);
                }
            }
            vst1q_f64(out_row + x, acc);
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

void corr_back_src_neon(const double* gout, int oh, int ow, const double* k, int kh,
                        int kw, double* gsrc, int src_w) {
    for (int y = 0; y < oh; ++y) {
        const double* grow = gout + static_cast<size_t>(y) * ow;
        for (int i = 0; i < kh; ++i) {
            double* srow = gsrc + static_cast<size_t>(y + i) * src_w;
            const double* krow = k + static_cast<size_t>(i) * kw;
            for (int j = 0; j < kw; ++j) {
                int x = 0;
                for (; x + 2 <= ow; x += 2) {
                    float64x2_t v = vld1q_f64(srow + x + j);
                    v = vfmaq_n_f64(v, vld1q_f64(grow + x), krow[j]);
                    vst1q_f64(srow + x + j, v);
                }
                for (; x < ow; ++x) srow[x + j] += grow[x] * krow[j];
            }
        }
    }
}

void corr_back_kernel_neon(const double* gout, int oh, int ow, const double* src,
                           int src_w, double* gk, int kh, int kw) {
    for (int i = 0; i < kh; ++i) {
        for (int j = 0; j < kw; ++j) {
            float64x2_t accv = vdupq_n_f64(0.0);
            double acc = 0.0;
            for (int y = 0; y < oh; ++y) {
                const double* grow = gout + static_cast<size_t>(y) * ow;
                const double* srow = src + static_cast<size_t>(y + i) * src_w + j;
                int x = 0;
                for (; x + 2 <= ow; x += 2) {
                    accv = vfmaq_f64(accv, vld1q_f64(grow + x), vld1q_f64(srow + x));
                }
                for (; x < ow; ++x) acc += grow[x] * srow[x];
            }
            gk[static_cast<size_t>(i) * kw + j] += acc + vaddvq_f64(accv);
        }
    }
}

void madd_neon(double* dst, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t v = vld1q_f64(dst + i);
        v = vfmaq_f64(v, vld1q_f64(a + i), vld1q_f64(b + i));
        vst1q_f64(dst + i, v);
    }
    for (; i < n; ++i) dst[i] += a[i] * b[i];
}

void axpby_neon(double* dst, double alpha, const double* x, double beta,
                const double* y, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t v = vmulq_n_f64(vld1q_f64(y + i), beta);
        v = vfmaq_n_f64(v, vld1q_f64(x + i), alpha);
        vst1q_f64(dst + i, v);
    }
    for (; i < n; ++i) dst[i] = alpha * x[i] + beta * y[i];
}

void scale_acc_neon(double* dst, double alpha, const double* x, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t v = vld1q_f64(dst + i);
        v = vfmaq_n_f64(v, vld1q_f64(x + i), alpha);
        vst1q_f64(dst + i, v);
    }
    for (; i < n; ++i) dst[i] += alpha * x[i];
}

double sum_neon(const double* a, size_t n) {
    float64x2_t accv = vdupq_n_f64(0.0);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) accv = vaddq_f64(accv, vld1q_f64(a + i));
    double acc = vaddvq_f64(accv);
    for (; i < n; ++i) acc += a[i];
    return acc;
}

}  // namespace

const Ops* neon_ops() {
    static const Ops ops = {
        "neon",     corr_acc_neon, corr_back_src_neon, corr_back_kernel_neon,
        madd_neon,  axpby_neon,    scale_acc_neon,     sum_neon,
    };
    return &ops;
}

}  // namespace pmnet::kernels

#endif  // aarch64
