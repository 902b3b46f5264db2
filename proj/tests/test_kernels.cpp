#include <cmath>
#include <vector>

#include "doctest.h"
#include "pmnet/common.hpp"
#include "pmnet/kernels.hpp"

using namespace pmnet;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

bool close(double a, double b, double tol = 1e-12) {
    return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("scalar backend is always registered first") {
    const auto& all = kernels::available();
    REQUIRE(!all.empty());
    CHECK(std::string(all[0]->name) == "scalar");
}

// every SIMD variant must agree with the scalar reference on random shapes
TEST_CASE("backend equivalence on all primitives") {
    Rng rng(42);
    const auto& ref = kernels::scalar();
    for (const auto* ops : kernels::available()) {
        if (ops == &ref) continue;
        CAPTURE(ops->name);

        for (int trial = 0; trial < 20; ++trial) {
            const int kh = 1 + static_cast<int>(rng.next_u64() % 7);
            const int kw = 1 + static_cast<int>(rng.next_u64() % 7);
            const int oh = 1 + static_cast<int>(rng.next_u64() % 17);
            const int ow = 1 + static_cast<int>(rng.next_u64() % 17);
            const int sw = ow + kw - 1;
            const int sh = oh + kh - 1;

            auto src = random_vec(static_cast<size_t>(sh) * sw, rng);
            auto k = random_vec(static_cast<size_t>(kh) * kw, rng);
            auto gout = random_vec(static_cast<size_t>(oh) * ow, rng);

            std::vector<double> out_a(static_cast<size_t>(oh) * ow, 0.25);
            std::vector<double> out_b = out_a;
            ref.corr_acc(src.data(), sw, k.data(), kh, kw, out_a.data(), oh, ow);
            ops->corr_acc(src.data(), sw, k.data(), kh, kw, out_b.data(), oh, ow);
            for (size_t i = 0; i < out_a.size(); ++i) CHECK(close(out_a[i], out_b[i]));

            std::vector<double> gsrc_a(src.size(), 0.0), gsrc_b(src.size(), 0.0);
            ref.corr_back_src(gout.data(), oh, ow, k.data(), kh, kw, gsrc_a.data(), sw);
            ops->corr_back_src(gout.data(), oh, ow, k.data(), kh, kw, gsrc_b.data(), sw);
            for (size_t i = 0; i < gsrc_a.size(); ++i) CHECK(close(gsrc_a[i], gsrc_b[i]));

            std::vector<double> gk_a(k.size(), 0.0), gk_b(k.size(), 0.0);
            ref.corr_back_kernel(gout.data(), oh, ow, src.data(), sw, gk_a.data(), kh, kw);
            ops->corr_back_kernel(gout.data(), oh, ow, src.data(), sw, gk_b.data(), kh, kw);
            for (size_t i = 0; i < gk_a.size(); ++i) CHECK(close(gk_a[i], gk_b[i]));
        }

        for (int trial = 0; trial < 10; ++trial) {
            const size_t n = 1 + rng.next_u64() % 300;
            auto a = random_vec(n, rng);
            auto b = random_vec(n, rng);
            auto base = random_vec(n, rng);

            auto d1 = base, d2 = base;
            ref.madd(d1.data(), a.data(), b.data(), n);
            ops->madd(d2.data(), a.data(), b.data(), n);
            for (size_t i = 0; i < n; ++i) CHECK(close(d1[i], d2[i]));

            ref.axpby(d1.data(), 0.7, a.data(), 0.3, b.data(), n);
            ops->axpby(d2.data(), 0.7, a.data(), 0.3, b.data(), n);
            for (size_t i = 0; i < n; ++i) CHECK(close(d1[i], d2[i]));

            d1 = base;
            d2 = base;
            ref.scale_acc(d1.data(), -1.3, a.data(), n);
            ops->scale_acc(d2.data(), -1.3, a.data(), n);
            for (size_t i = 0; i < n; ++i) CHECK(close(d1[i], d2[i]));

            CHECK(close(ref.sum(a.data(), n), ops->sum(a.data(), n), 1e-11));
        }
    }
}

TEST_CASE("selection honors explicit names and rejects unknown ones") {
    const std::string original = kernels::active().name;
    kernels::select("scalar");
    CHECK(std::string(kernels::active().name) == "scalar");
    kernels::select("auto");
    CHECK(std::string(kernels::active().name) == std::string(kernels::available().back()->name));
    CHECK_THROWS_AS(kernels::select("mmx"), TopologyError);
    kernels::select(original);
}

}  // TEST_SUITE
