#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pmnet/common.hpp"

namespace pmnet {

struct Extent2 {
    int h = 0;
    int w = 0;
    bool operator==(const Extent2&) const = default;
};

// Zero padding applied to a convolution source plane.
struct PadSpec {
    int top = 0, bottom = 0, left = 0, right = 0;
    bool zero() const { return top == 0 && bottom == 0 && left == 0 && right == 0; }
    bool operator==(const PadSpec&) const = default;
};

// Padding needed so that a valid correlation of the padded source with a
// k-sized kernel produces exactly dst. Uneven totals put the extra pixel on
// the bottom/right. Throws TopologyError when the source is too large.
PadSpec resolve_padding(Extent2 src, Extent2 dst, Extent2 k);

// A bank of N equally sized 2-D maps, map-major then row-major.
class MapStack {
public:
    MapStack() = default;
    MapStack(int maps, int h, int w)
        : maps_(maps), h_(h), w_(w), data_(static_cast<size_t>(maps) * h * w, 0.0) {}

    int maps() const { return maps_; }
    int height() const { return h_; }
    int width() const { return w_; }
    size_t plane_size() const { return static_cast<size_t>(h_) * w_; }
    size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* map(int m) { return data_.data() + m * plane_size(); }
    const double* map(int m) const { return data_.data() + m * plane_size(); }

    double& at(int m, int y, int x) { return data_[(static_cast<size_t>(m) * h_ + y) * w_ + x]; }
    double at(int m, int y, int x) const { return data_[(static_cast<size_t>(m) * h_ + y) * w_ + x]; }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool same_shape(const MapStack& o) const {
        return maps_ == o.maps_ && h_ == o.h_ && w_ == o.w_;
    }

private:
    int maps_ = 0, h_ = 0, w_ = 0;
    std::vector<double> data_;
};

// A P x Q bank of kh x kw kernels, indexed (p, q, i, j). Also used for the
// element-wise weight banks, where (kh, kw) is the full map size.
class KernelBank {
public:
    KernelBank() = default;
    KernelBank(int out_maps, int in_maps, int kh, int kw)
        : p_(out_maps), q_(in_maps), kh_(kh), kw_(kw),
          data_(static_cast<size_t>(out_maps) * in_maps * kh * kw, 0.0) {}

    int out_maps() const { return p_; }
    int in_maps() const { return q_; }
    int kh() const { return kh_; }
    int kw() const { return kw_; }
    size_t kernel_size() const { return static_cast<size_t>(kh_) * kw_; }
    size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* kernel(int p, int q) { return data_.data() + (static_cast<size_t>(p) * q_ + q) * kernel_size(); }
    const double* kernel(int p, int q) const { return data_.data() + (static_cast<size_t>(p) * q_ + q) * kernel_size(); }

    double& at(int p, int q, int i, int j) { return kernel(p, q)[static_cast<size_t>(i) * kw_ + j]; }
    double at(int p, int q, int i, int j) const { return kernel(p, q)[static_cast<size_t>(i) * kw_ + j]; }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool same_shape(const KernelBank& o) const {
        return p_ == o.p_ && q_ == o.q_ && kh_ == o.kh_ && kw_ == o.kw_;
    }

private:
    int p_ = 0, q_ = 0, kh_ = 0, kw_ = 0;
    std::vector<double> data_;
};

// Scaled hyperbolic tangent, 1.7159 * tanh(2x/3), and its derivative.
inline double scaled_tanh(double x) { return 1.7159 * std::tanh(x * (2.0 / 3.0)); }
inline double scaled_tanh_prime(double x) {
    const double t = std::tanh(x * (2.0 / 3.0));
    return 1.7159 * (2.0 / 3.0) * (1.0 - t * t);
}

void scaled_tanh_apply(const double* in, double* out, size_t n);
void scaled_tanh_prime_apply(const double* in, double* out, size_t n);

// Writes the zero-padded plane (h x w -> (pad.top+h+pad.bottom) x (pad.left+w+pad.right)).
void pad_plane(const double* src, int h, int w, const PadSpec& pad, double* dst);

// Adds the interior of a padded-gradient plane back onto an h x w plane.
void unpad_acc(const double* padded, int h, int w, const PadSpec& pad, double* dst);

// out[p] = sum_q corr(zero-padded input[q], kernels[p][q]); correlation, no
// kernel flip. The correlation-vs-flip convention is fixed here and the
// adjoint below matches it.
MapStack conv_bank(const MapStack& input, const KernelBank& kernels, const PadSpec& pad);

struct ConvBankGrads {
    MapStack grad_input;
    KernelBank grad_kernels;
};

// Exact adjoint of conv_bank: gradients of <grad_out, conv_bank(input, kernels)>
// with respect to input and kernels. Gradients landing in the padding region
// are discarded.
ConvBankGrads conv_bank_adjoint(const MapStack& grad_out, const MapStack& input,
                                const KernelBank& kernels, const PadSpec& pad);

// Per-element product of two equally sized stacks.
MapStack elementwise_mac(const MapStack& a, const MapStack& w);

}  // namespace pmnet
