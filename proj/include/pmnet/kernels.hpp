#pragma once

#include <cstddef>
#include <string>
#include <vector>

// Inner-loop arithmetic kernels. A scalar reference implementation always
// exists; SIMD variants (AVX2 on x86-64, NEON on aarch64) are registered when
// the build supports them and selected at runtime if the CPU does too.
// All variants implement the same contracts and are equivalence-tested
// against the scalar reference.

namespace pmnet::kernels {

struct Ops {
    const char* name;

    // out[y,x] += sum_{i,j} src[y+i, x+j] * k[i,j]
    // src is a row-major plane with row stride src_w (height >= oh+kh-1).
    void (*corr_acc)(const double* src, int src_w, const double* k, int kh, int kw,
                     double* out, int oh, int ow);

    // gsrc[y+i, x+j] += gout[y,x] * k[i,j]   (adjoint of corr_acc w.r.t. src)
    void (*corr_back_src)(const double* gout, int oh, int ow, const double* k, int kh,
                          int kw, double* gsrc, int src_w);

    // gk[i,j] += sum_{y,x} gout[y,x] * src[y+i, x+j]   (adjoint w.r.t. kernel)
    void (*corr_back_kernel)(const double* gout, int oh, int ow, const double* src,
                             int src_w, double* gk, int kh, int kw);

    // dst[i] += a[i] * b[i]
    void (*madd)(double* dst, const double* a, const double* b, size_t n);

    // dst[i] = alpha * x[i] + beta * y[i]
    void (*axpby)(double* dst, double alpha, const double* x, double beta,
                  const double* y, size_t n);

    // dst[i] += alpha * x[i]
    void (*scale_acc)(double* dst, double alpha, const double* x, size_t n);

    double (*sum)(const double* a, size_t n);
};

const Ops& scalar();

// Every implementation usable on this machine, scalar first.
const std::vector<const Ops*>& available();

// Active implementation. Defaults to the best available; override with
// select("scalar"|"avx2"|"neon"|"auto") or the PMNET_KERNELS environment
// variable, checked once at startup.
const Ops& active();
void select(const std::string& name);

}  // namespace pmnet::kernels
