#include "pmnet/tensor.hpp"

#include <cstring>
#include <string>

#include "pmnet/kernels.hpp"

namespace pmnet {
namespace {

int resolve_axis(int src, int dst, int k, const char* axis) {
    if (src < 1 || dst < 1 || k < 1) {
        throw TopologyError(std::string("resolve_padding: non-positive ") + axis + " size");
    }
    const int need = dst + k - 1 - src;
    if (need < 0) {
        throw TopologyError("resolve_padding: source " + std::to_string(src) + " too large for " +
                            std::to_string(k) + "-kernel valid convolution onto " +
                            std::to_string(dst) + " (" + axis + ")");
    }
    return need;
}

}  // namespace

PadSpec resolve_padding(Extent2 src, Extent2 dst, Extent2 k) {
    const int need_h = resolve_axis(src.h, dst.h, k.h, "height");
    const int need_w = resolve_axis(src.w, dst.w, k.w, "width");
    PadSpec pad;
    pad.top = need_h / 2;
    pad.bottom = need_h - pad.top;
    pad.left = need_w / 2;
    pad.right = need_w - pad.left;
    return pad;
}

void scaled_tanh_apply(const double* in, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = scaled_tanh(in[i]);
}

void scaled_tanh_prime_apply(const double* in, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = scaled_tanh_prime(in[i]);
}

void pad_plane(const double* src, int h, int w, const PadSpec& pad, double* dst) {
    const int pw = pad.left + w + pad.right;
    const int ph = pad.top + h + pad.bottom;
    std::memset(dst, 0, static_cast<size_t>(ph) * pw * sizeof(double));
    for (int y = 0; y < h; ++y) {
        std::memcpy(dst + static_cast<size_t>(y + pad.top) * pw + pad.left,
                    src + static_cast<size_t>(y) * w, static_cast<size_t>(w) * sizeof(double));
    }
}

void unpad_acc(const double* padded, int h, int w, const PadSpec& pad, double* dst) {
    const int pw = pad.left + w + pad.right;
    for (int y = 0; y < h; ++y) {
        const double* prow = padded + static_cast<size_t>(y + pad.top) * pw + pad.left;
        double* drow = dst + static_cast<size_t>(y) * w;
        for (int x = 0; x < w; ++x) drow[x] += prow[x];
    }
}

MapStack conv_bank(const MapStack& input, const KernelBank& kernels, const PadSpec& pad) {
    if (input.maps() != kernels.in_maps()) {
        throw TopologyError("conv_bank: input has " + std::to_string(input.maps()) +
                            " maps, kernel bank expects " + std::to_string(kernels.in_maps()));
    }
    const int ph = pad.top + input.height() + pad.bottom;
    const int pw = pad.left + input.width() + pad.right;
    const int oh = ph - kernels.kh() + 1;
    const int ow = pw - kernels.kw() + 1;
    if (oh < 1 || ow < 1) throw TopologyError("conv_bank: kernel larger than padded input");

    const auto& ops = kernels::active();
    MapStack out(kernels.out_maps(), oh, ow);
    std::vector<double> padded(static_cast<size_t>(ph) * pw);
    for (int q = 0; q < input.maps(); ++q) {
        pad_plane(input.map(q), input.height(), input.width(), pad, padded.data());
        for (int p = 0; p < kernels.out_maps(); ++p) {
            ops.corr_acc(padded.data(), pw, kernels.kernel(p, q), kernels.kh(), kernels.kw(),
                         out.map(p), oh, ow);
        }
    }
    return out;
}

ConvBankGrads conv_bank_adjoint(const MapStack& grad_out, const MapStack& input,
                                const KernelBank& kernels, const PadSpec& pad) {
    if (input.maps() != kernels.in_maps() || grad_out.maps() != kernels.out_maps()) {
        throw TopologyError("conv_bank_adjoint: map count mismatch");
    }
    const int ph = pad.top + input.height() + pad.bottom;
    const int pw = pad.left + input.width() + pad.right;
    const int oh = grad_out.height();
    const int ow = grad_out.width();
    if (oh != ph - kernels.kh() + 1 || ow != pw - kernels.kw() + 1) {
        throw TopologyError("conv_bank_adjoint: grad_out shape inconsistent with forward call");
    }

    const auto& ops = kernels::active();
    ConvBankGrads g;
    g.grad_input = MapStack(input.maps(), input.height(), input.width());
    g.grad_kernels = KernelBank(kernels.out_maps(), kernels.in_maps(), kernels.kh(), kernels.kw());

    std::vector<double> padded(static_cast<size_t>(ph) * pw);
    std::vector<double> gpadded(static_cast<size_t>(ph) * pw);
    for (int q = 0; q < input.maps(); ++q) {
        pad_plane(input.map(q), input.height(), input.width(), pad, padded.data());
        std::memset(gpadded.data(), 0, gpadded.size() * sizeof(double));
        for (int p = 0; p < kernels.out_maps(); ++p) {
            ops.corr_back_kernel(grad_out.map(p), oh, ow, padded.data(), pw,
                                 g.grad_kernels.kernel(p, q), kernels.kh(), kernels.kw());
            ops.corr_back_src(grad_out.map(p), oh, ow, kernels.kernel(p, q), kernels.kh(),
                              kernels.kw(), gpadded.data(), pw);
        }
        unpad_acc(gpadded.data(), input.height(), input.width(), pad, g.grad_input.map(q));
    }
    return g;
}

MapStack elementwise_mac(const MapStack& a, const MapStack& w) {
    if (!a.same_shape(w)) throw TopologyError("elementwise_mac: operand sizes differ");
    MapStack out(a.maps(), a.height(), a.width());
    kernels::active().madd(out.data(), a.data(), w.data(), a.size());
    return out;
}

}  // namespace pmnet
