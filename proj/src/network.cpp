#include "pmnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "pmnet/kernels.hpp"

namespace pmnet {
namespace {

// Zero-pad src into ws.pad and return the padded row stride.
const double* padded_plane(const double* src, const ConvGeom& g, Workspace& ws, int& pw) {
    const Extent2 p = g.padded();
    pw = p.w;
    ws.pad.resize(static_cast<size_t>(p.h) * p.w);
    pad_plane(src, g.src.h, g.src.w, g.pad, ws.pad.data());
    return ws.pad.data();
}

}  // namespace

NetworkState make_state(const ShapePlan& plan) {
    NetworkState s;
    s.layers.resize(plan.layers.size());
    for (size_t l = 0; l < plan.layers.size(); ++l) {
        const LayerPlan& lp = plan.layers[l];
        s.layers[l].fm_hat = MapStack(lp.fm_count, lp.fm_size.h, lp.fm_size.w);
        s.layers[l].fm_act = MapStack(lp.fm_count, lp.fm_size.h, lp.fm_size.w);
        if (lp.cm_count > 0) {
            s.layers[l].cm_hat = MapStack(lp.cm_count, lp.cm_size.h, lp.cm_size.w);
            s.layers[l].cm_act = MapStack(lp.cm_count, lp.cm_size.h, lp.cm_size.w);
        }
    }
    return s;
}

void refresh_activations(NetworkState& state) {
    for (auto& layer : state.layers) {
        scaled_tanh_apply(layer.fm_hat.data(), layer.fm_act.data(), layer.fm_hat.size());
        scaled_tanh_apply(layer.cm_hat.data(), layer.cm_act.data(), layer.cm_hat.size());
    }
}

ParamSet zero_params(const ShapePlan& plan, int n_sequences) {
    const int L = plan.layer_count();
    ParamSet p;
    p.k_if = KernelBank(plan.layers[0].fm_count, 1, plan.in_conv.kernel.h, plan.in_conv.kernel.w);
    p.k_fo = KernelBank(1, plan.layers[0].fm_count, plan.out_conv.kernel.h, plan.out_conv.kernel.w);
    p.layers.resize(L);
    for (int l = 0; l < L; ++l) {
        const LayerPlan& lp = plan.layers[l];
        LayerParams& lw = p.layers[l];
        if (lp.has_ff) {
            lw.k_ff = KernelBank(lp.fm_count, plan.layers[l + 1].fm_count, lp.ff.kernel.h,
                                 lp.ff.kernel.w);
        }
        if (lp.has_cf) {
            lw.k_cf = KernelBank(lp.fm_count, lp.cm_count, lp.cf.kernel.h, lp.cf.kernel.w);
        }
        if (lp.has_fc) {
            const int below = (l == 0) ? 1 : plan.layers[l - 1].fm_count;
            lw.k_fc = KernelBank(lp.cm_count, below, lp.fc.kernel.h, lp.fc.kernel.w);
        }
        if (lp.cm_count > 0) {
            lw.w_cc = KernelBank(lp.cm_count, lp.cm_count, lp.cm_size.h, lp.cm_size.w);
        }
        if (lp.has_wfc) {
            lw.w_fc = KernelBank(lp.cm_count, plan.layers[l + 1].fm_count, lp.cm_size.h,
                                 lp.cm_size.w);
        }
        lw.fm_bias.assign(lp.fm_count, 0.0);
        lw.cm_bias.assign(lp.cm_count, 0.0);
    }
    p.initial_states.resize(n_sequences);
    for (auto& s : p.initial_states) s = make_state(plan);
    return p;
}

namespace {

void fill_uniform(KernelBank& bank, double r, Rng& rng) {
    for (size_t i = 0; i < bank.size(); ++i) bank.data()[i] = rng.uniform(-r, r);
}

}  // namespace

ParamSet init_params(const ShapePlan& plan, uint64_t seed, int n_sequences) {
    ParamSet p = zero_params(plan, n_sequences);
    Rng rng(seed);
    const int L = plan.layer_count();

    // one bank at a time, range 1/sqrt(bank fan-in per destination unit)
    auto fill_bank = [&](KernelBank& bank, double fan_in) {
        fill_uniform(bank, 1.0 / std::sqrt(fan_in), rng);
    };

    for (int l = 0; l < L; ++l) {
        const LayerPlan& lp = plan.layers[l];
        LayerParams& lw = p.layers[l];
        if (l == 0) {
            fill_bank(p.k_if, static_cast<double>(plan.in_conv.kernel.h) * plan.in_conv.kernel.w);
        }
        if (lp.has_ff) {
            fill_bank(lw.k_ff, static_cast<double>(plan.layers[l + 1].fm_count) *
                                   lp.ff.kernel.h * lp.ff.kernel.w);
        }
        if (lp.has_cf) {
            fill_bank(lw.k_cf,
                      static_cast<double>(lp.cm_count) * lp.cf.kernel.h * lp.cf.kernel.w);
        }
        if (lp.cm_count > 0) {
            fill_bank(lw.w_cc, static_cast<double>(lp.cm_count));
            if (lp.has_wfc) fill_bank(lw.w_fc, static_cast<double>(plan.layers[l + 1].fm_count));
            if (lp.has_fc) {
                const int below = (l == 0) ? 1 : plan.layers[l - 1].fm_count;
                fill_bank(lw.k_fc, static_cast<double>(below) * lp.fc.kernel.h * lp.fc.kernel.w);
            }
        }
    }
    fill_bank(p.k_fo, static_cast<double>(plan.layers[0].fm_count) * plan.out_conv.kernel.h *
                          plan.out_conv.kernel.w);
    return p;
}

void compute_output(const ShapePlan& plan, const ParamSet& params, const NetworkState& state,
                    MapStack& out_hat, MapStack& out_act, Workspace& ws) {
    const auto& ops = kernels::active();
    const ConvGeom& g = plan.out_conv;
    if (out_hat.height() != g.dst.h || out_hat.width() != g.dst.w || out_hat.maps() != 1) {
        out_hat = MapStack(1, g.dst.h, g.dst.w);
        out_act = MapStack(1, g.dst.h, g.dst.w);
    }
    out_hat.fill(params.b_o);
    int pw = 0;
    for (int q = 0; q < plan.layers[0].fm_count; ++q) {
        const double* padded = padded_plane(state.layers[0].fm_act.map(q), g, ws, pw);
        ops.corr_acc(padded, pw, params.k_fo.kernel(0, q), g.kernel.h, g.kernel.w,
                     out_hat.map(0), g.dst.h, g.dst.w);
    }
    scaled_tanh_apply(out_hat.data(), out_act.data(), out_hat.size());
}

void step_forward(const ShapePlan& plan, const ParamSet& params, const NetworkState& prev,
                  const double* input, NetworkState& next, MapStack& out_hat,
                  MapStack& out_act, Workspace& ws) {
    if (input == nullptr) throw TopologyError("step_forward: input frame required");
    const auto& ops = kernels::active();
    const int L = plan.layer_count();
    if (next.layers.size() != static_cast<size_t>(L)) next = make_state(plan);

    // All right-hand sides use step t-1 quantities, so layer order is free.
    for (int l = 0; l < L; ++l) {
        const LayerPlan& lp = plan.layers[l];
        const LayerParams& lw = params.layers[l];
        const double leak = 1.0 - 1.0 / lp.tau;
        const double gain = 1.0 / lp.tau;
        int pw = 0;

        // feature maps
        MapStack& acc = ws.acc;
        if (!acc.same_shape(next.layers[l].fm_hat)) acc = MapStack(lp.fm_count, lp.fm_size.h, lp.fm_size.w);
        for (int pidx = 0; pidx < lp.fm_count; ++pidx) {
            std::fill_n(acc.map(pidx), acc.plane_size(), lw.fm_bias[pidx]);
        }
        if (lp.has_ff) {
            for (int q = 0; q < plan.layers[l + 1].fm_count; ++q) {
                const double* padded = padded_plane(prev.layers[l + 1].fm_act.map(q), lp.ff, ws, pw);
                for (int pidx = 0; pidx < lp.fm_count; ++pidx) {
                    ops.corr_acc(padded, pw, lw.k_ff.kernel(pidx, q), lp.ff.kernel.h,
                                 lp.ff.kernel.w, acc.map(pidx), lp.fm_size.h, lp.fm_size.w);
                }
            }
        }
        if (lp.has_cf) {
            for (int n = 0; n < lp.cm_count; ++n) {
                const double* padded = padded_plane(prev.layers[l].cm_act.map(n), lp.cf, ws, pw);
                for (int pidx = 0; pidx < lp.fm_count; ++pidx) {
                    ops.corr_acc(padded, pw, lw.k_cf.kernel(pidx, n), lp.cf.kernel.h,
                                 lp.cf.kernel.w, acc.map(pidx), lp.fm_size.h, lp.fm_size.w);
                }
            }
        }
        if (l == 0) {
            const double* padded = padded_plane(input, plan.in_conv, ws, pw);
            for (int pidx = 0; pidx < lp.fm_count; ++pidx) {
                ops.corr_acc(padded, pw, params.k_if.kernel(pidx, 0), plan.in_conv.kernel.h,
                             plan.in_conv.kernel.w, acc.map(pidx), lp.fm_size.h, lp.fm_size.w);
            }
        }
        ops.axpby(next.layers[l].fm_hat.data(), leak, prev.layers[l].fm_hat.data(), gain,
                  acc.data(), acc.size());
        scaled_tanh_apply(next.layers[l].fm_hat.data(), next.layers[l].fm_act.data(),
                          next.layers[l].fm_hat.size());

        // context maps
        if (lp.cm_count > 0) {
            MapStack& cacc = ws.cm_acc;
            if (!cacc.same_shape(next.layers[l].cm_hat))
                cacc = MapStack(lp.cm_count, lp.cm_size.h, lp.cm_size.w);
            for (int m = 0; m < lp.cm_count; ++m) {
                std::fill_n(cacc.map(m), cacc.plane_size(), lw.cm_bias[m]);
                for (int n = 0; n < lp.cm_count; ++n) {
                    ops.madd(cacc.map(m), prev.layers[l].cm_act.map(n), lw.w_cc.kernel(m, n),
                             cacc.plane_size());
                }
                if (lp.has_wfc) {
                    for (int q = 0; q < plan.layers[l + 1].fm_count; ++q) {
                        ops.madd(cacc.map(m), prev.layers[l + 1].fm_act.map(q),
                                 lw.w_fc.kernel(m, q), cacc.plane_size());
                    }
                }
            }
            if (lp.has_fc) {
                const int below = (l == 0) ? 1 : plan.layers[l - 1].fm_count;
                for (int r = 0; r < below; ++r) {
                    const double* src = (l == 0) ? input : prev.layers[l - 1].fm_act.map(r);
                    const double* padded = padded_plane(src, lp.fc, ws, pw);
                    for (int m = 0; m < lp.cm_count; ++m) {
                        ops.corr_acc(padded, pw, lw.k_fc.kernel(m, r), lp.fc.kernel.h,
                                     lp.fc.kernel.w, cacc.map(m), lp.cm_size.h, lp.cm_size.w);
                    }
                }
            }
            ops.axpby(next.layers[l].cm_hat.data(), leak, prev.layers[l].cm_hat.data(), gain,
                      cacc.data(), cacc.size());
            scaled_tanh_apply(next.layers[l].cm_hat.data(), next.layers[l].cm_act.data(),
                              next.layers[l].cm_hat.size());
        }
    }

    // prediction output from this step's first-layer FMs
    compute_output(plan, params, next, out_hat, out_act, ws);
}

Tape rollout(const ShapePlan& plan, const ParamSet& params, const NetworkState& start,
             const RolloutOptions& opt, Workspace& ws) {
    if (opt.mode != InputMode::Closed && opt.data == nullptr) {
        throw TopologyError("rollout: open-loop/mixed mode requires input frames");
    }
    if (opt.data != nullptr && opt.mode != InputMode::Closed && opt.data->frames() < opt.steps) {
        throw TopologyError("rollout: not enough input frames for requested steps");
    }
    const size_t npix = static_cast<size_t>(plan.input_size.h) * plan.input_size.w;

    if (opt.lookahead < 1) throw TopologyError("rollout: lookahead must be >= 1");
    Tape tape;
    tape.mode = opt.mode;
    tape.alpha = opt.alpha;
    tape.lookahead = opt.lookahead;
    tape.mix_self = opt.mix_source == nullptr;
    tape.out_hat.reserve(opt.steps + 1);
    tape.outputs.reserve(opt.steps + 1);
    if (opt.record_states) tape.states.reserve(opt.steps + 1);

    NetworkState cur = start;
    refresh_activations(cur);
    MapStack out_hat, out_act;
    compute_output(plan, params, cur, out_hat, out_act, ws);
    tape.out_hat.push_back(out_hat);
    tape.outputs.push_back(out_act);
    if (opt.record_states) tape.states.push_back(cur);
    if (opt.observer) opt.observer(0, cur, out_act);

    std::vector<double> mixed(npix);
    NetworkState next = make_state(plan);
    for (int t = 1; t <= opt.steps; ++t) {
        const int fb = std::max(0, t - opt.lookahead);
        const double* input = nullptr;
        switch (opt.mode) {
            case InputMode::Open:
                input = opt.data->frame(t - 1);
                break;
            case InputMode::Closed:
                input = tape.outputs[fb].data();
                break;
            case InputMode::Mixed: {
                const double* closed =
                    opt.mix_source ? opt.mix_source->frame(fb) : tape.outputs[fb].data();
                kernels::active().axpby(mixed.data(), opt.alpha, opt.data->frame(t - 1),
                                        1.0 - opt.alpha, closed, npix);
                input = mixed.data();
                break;
            }
        }
        tape.inputs.emplace_back(input, input + npix);
        step_forward(plan, params, cur, input, next, out_hat, out_act, ws);
        tape.out_hat.push_back(out_hat);
        tape.outputs.push_back(out_act);
        if (opt.record_states) tape.states.push_back(next);
        if (opt.observer) opt.observer(t, next, out_act);
        std::swap(cur, next);
    }
    return tape;
}

}  // namespace pmnet
