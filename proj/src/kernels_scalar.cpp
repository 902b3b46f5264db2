#include "pmnet/kernels.hpp"

// Reference kernels. Deliberately plain loops: these define the semantics the
// SIMD variants are tested against.

namespace pmnet::kernels {
namespace {

void corr_acc_scalar(const double* src, int src_w, const double* k, int kh, int kw,
                     double* out, int oh, int ow) {
    for (int y = 0; y < oh; ++y) {
        double* out_row = out + static_cast<size_t>(y) * ow;
        for (int x = 0; x < ow; ++x) {
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

void corr_back_src_scalar(const double* gout, int oh, int ow, const double* k, int kh,
                          int kw, double* gsrc, int src_w) {
    for (int y = 0; y < oh; ++y) {
        const double* grow = gout + static_cast<size_t>(y) * ow;
        for (int i = 0; i < kh; ++i) {
            double* srow = gsrc + static_cast<size_t>(y + i) * src_w;
            const double* krow = k + static_cast<size_t>(i) * kw;
            for (int x = 0; x < ow; ++x) {
                const double g = grow[x];
                for (int j = 0; j < kw; ++j) srow[x + j] += g * krow[j];
            }
        }
    }
}

void corr_back_kernel_scalar(const double* gout, int oh, int ow, const double* src,
                             int src_w, double* gk, int kh, int kw) {
    for (int i = 0; i < kh; ++i) {
        for (int j = 0; j < kw; ++j) {
            double acc = 0.0;
            for (int y = 0; y < oh; ++y) {
                const double* grow = gout + static_cast<size_t>(y) * ow;
                const double* srow = src + static_cast<size_t>(y + i) * src_w + j;
                for (int x = 0; x < ow; ++x) acc += grow[x] * srow[x];
            }
            gk[static_cast<size_t>(i) * kw + j] += acc;
        }
    }
}

void madd_scalar(double* dst, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] += a[i] * b[i];
}

void axpby_scalar(double* dst, double alpha, const double* x, double beta,
                  const double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] = alpha * x[i] + beta * y[i];
}

void scale_acc_scalar(double* dst, double alpha, const double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] += alpha * x[i];
}

double sum_scalar(const double* a, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

const Ops kScalarOps = {
    "scalar",        corr_acc_scalar, corr_back_src_scalar, corr_back_kernel_scalar,
    madd_scalar,     axpby_scalar,    scale_acc_scalar,     sum_scalar,
};

}  // namespace

const Ops& scalar() { return kScalarOps; }

}  // namespace pmnet::kernels
