#include "pmnet/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "pmnet/kernels.hpp"

namespace pmnet {

// ---------------------------------------------------------------- train spec

TrainSpec parse_train_spec(const std::string& text) {
    TrainSpec spec;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        auto fail = [&] {
            return TopologyError("train spec line " + std::to_string(lineno) + ": bad value for " + key);
        };
        if (key == "lookahead") { if (!(ls >> spec.lookahead)) throw fail(); }
        else if (key == "alpha") { if (!(ls >> spec.alpha)) throw fail(); }
        else if (key == "learning_rate") { if (!(ls >> spec.learning_rate)) throw fail(); }
        else if (key == "init_state_learning_rate") { if (!(ls >> spec.init_state_learning_rate)) throw fail(); }
        else if (key == "epochs_max") { if (!(ls >> spec.epochs_max)) throw fail(); }
        else if (key == "closed_loop_error_threshold") { if (!(ls >> spec.closed_loop_error_threshold)) throw fail(); }
        else if (key == "seed") { if (!(ls >> spec.seed)) throw fail(); }
        else if (key == "mix_backprop") { int v; if (!(ls >> v)) throw fail(); spec.mix_backprop = v != 0; }
        else if (key == "closed_feedback_delay") { if (!(ls >> spec.closed_feedback_delay)) throw fail(); }
        else if (key == "threads") { if (!(ls >> spec.threads)) throw fail(); }
        else if (key == "checkpoint_epochs") { int e; while (ls >> e) spec.checkpoint_epochs.push_back(e); }
        else throw TopologyError("train spec line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (spec.alpha < 0.0 || spec.alpha > 1.0) throw TopologyError("train spec: alpha must be in [0,1]");
    if (spec.lookahead < 1) throw TopologyError("train spec: lookahead must be >= 1");
    return spec;
}

TrainSpec load_train_spec(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open train spec '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_train_spec(buf.str());
}

std::string serialize_train_spec(const TrainSpec& spec) {
    std::ostringstream out;
    out << "lookahead " << spec.lookahead << "\n";
    out << "alpha " << spec.alpha << "\n";
    out << "learning_rate " << spec.learning_rate << "\n";
    if (spec.init_state_learning_rate >= 0)
        out << "init_state_learning_rate " << spec.init_state_learning_rate << "\n";
    out << "epochs_max " << spec.epochs_max << "\n";
    out << "closed_loop_error_threshold " << spec.closed_loop_error_threshold << "\n";
    out << "seed " << spec.seed << "\n";
    out << "mix_backprop " << (spec.mix_backprop ? 1 : 0) << "\n";
    if (spec.closed_feedback_delay > 0)
        out << "closed_feedback_delay " << spec.closed_feedback_delay << "\n";
    out << "threads " << spec.threads << "\n";
    if (!spec.checkpoint_epochs.empty()) {
        out << "checkpoint_epochs";
        for (int e : spec.checkpoint_epochs) out << " " << e;
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------- loss

LossResult compute_loss(const FrameSequence& outputs, const FrameSequence& targets) {
    if (outputs.height != targets.height || outputs.width != targets.width ||
        outputs.frames() != targets.frames()) {
        throw TopologyError("compute_loss: output/target shape mismatch");
    }
    LossResult r;
    const int T = outputs.frames();
    const size_t npix = outputs.pixels();
    r.per_step.resize(T);
    for (int t = 0; t < T; ++t) {
        const double* o = outputs.frame(t);
        const double* g = targets.frame(t);
        double acc = 0.0;
        for (size_t i = 0; i < npix; ++i) {
            const double d = g[i] - o[i];
            acc += d * d;
        }
        r.per_step[t] = acc / static_cast<double>(npix);
        r.mean += r.per_step[t];
    }
    if (T > 0) r.mean /= T;
    return r;
}

double tape_mse(const Tape& tape, const FrameSequence& data, int lookahead) {
    const int S = static_cast<int>(tape.outputs.size()) - 1;
    const size_t npix = data.pixels();
    double acc = 0.0;
    // the initial state's own output is the first scored prediction
    for (int t = 0; t <= S; ++t) {
        const double* o = tape.outputs[t].data();
        const double* g = data.frame(t + lookahead - 1);
        double e = 0.0;
        for (size_t i = 0; i < npix; ++i) {
            const double d = g[i] - o[i];
            e += d * d;
        }
        acc += e / static_cast<double>(npix);
    }
    return acc / (S + 1);
}

std::vector<double> mix_input(const std::vector<double>& data_frame,
                              const std::vector<double>& closed_prev, double data_share) {
    if (data_frame.size() != closed_prev.size()) throw TopologyError("mix_input: size mismatch");
    std::vector<double> out(data_frame.size());
    kernels::active().axpby(out.data(), data_share, data_frame.data(), 1.0 - data_share,
                            closed_prev.data(), out.size());
    return out;
}

// ------------------------------------------------------------- backward pass

namespace {

Gradients zero_grads(const ShapePlan& plan) {
    ParamSet z = zero_params(plan, 0);
    Gradients g;
    g.k_if = std::move(z.k_if);
    g.k_fo = std::move(z.k_fo);
    g.layers = std::move(z.layers);
    g.initial_state = make_state(plan);
    return g;
}

// dst[i] = act_grad[i] * sigma'(hat[i]) + leak_in[i]
void through_activation(MapStack& dst, const MapStack& act_grad, const MapStack& hat,
                        const MapStack& leak_in) {
    const size_t n = dst.size();
    for (size_t i = 0; i < n; ++i) {
        dst.data()[i] = act_grad.data()[i] * scaled_tanh_prime(hat.data()[i]) + leak_in.data()[i];
    }
}

struct AdjointBuffers {
    std::vector<MapStack> fm_act_cur, fm_act_prev, cm_act_cur, cm_act_prev;
    std::vector<MapStack> fm_hat, cm_hat, fm_leak, cm_leak;
    MapStack fm_scaled, cm_scaled;

    explicit AdjointBuffers(const ShapePlan& plan) {
        const int L = plan.layer_count();
        fm_act_cur.resize(L);
        fm_act_prev.resize(L);
        cm_act_cur.resize(L);
        cm_act_prev.resize(L);
        fm_hat.resize(L);
        cm_hat.resize(L);
        fm_leak.resize(L);
        cm_leak.resize(L);
        for (int l = 0; l < L; ++l) {
            const LayerPlan& lp = plan.layers[l];
            fm_act_cur[l] = MapStack(lp.fm_count, lp.fm_size.h, lp.fm_size.w);
            fm_act_prev[l] = MapStack(lp.fm_count, lp.fm_size.h, lp.fm_size.w);
            fm_hat[l] = MapStack(lp.fm_count, lp.fm_size.h, lp.fm_size.w);
            fm_leak[l] = MapStack(lp.fm_count, lp.fm_size.h, lp.fm_size.w);
            if (lp.cm_count > 0) {
                cm_act_cur[l] = MapStack(lp.cm_count, lp.cm_size.h, lp.cm_size.w);
                cm_act_prev[l] = MapStack(lp.cm_count, lp.cm_size.h, lp.cm_size.w);
                cm_hat[l] = MapStack(lp.cm_count, lp.cm_size.h, lp.cm_size.w);
                cm_leak[l] = MapStack(lp.cm_count, lp.cm_size.h, lp.cm_size.w);
            }
        }
    }
};

}  // namespace

Gradients backward_pass(const ShapePlan& plan, const ParamSet& params, const Tape& tape,
                        const std::vector<MapStack>& out_grads, const BackwardOptions& opt,
                        Workspace& ws) {
    const int S = static_cast<int>(tape.outputs.size()) - 1;
    if (tape.states.size() != tape.outputs.size()) {
        throw TopologyError("backward_pass: tape was not recorded with states");
    }
    if (out_grads.size() != tape.outputs.size()) {
        throw TopologyError("backward_pass: out_grads length mismatch");
    }
    const auto& ops = kernels::active();
    const int L = plan.layer_count();
    const size_t npix = static_cast<size_t>(plan.input_size.h) * plan.input_size.w;

    // coefficient of d(input_u) / d(output_{max(0, u - lookahead)})
    double beta = 0.0;
    if (tape.mode == InputMode::Closed) beta = 1.0;
    if (tape.mode == InputMode::Mixed && tape.mix_self) beta = 1.0 - tape.alpha;
    const int fb_delay = tape.lookahead;

    Gradients g = zero_grads(plan);
    AdjointBuffers adj(plan);
    std::vector<double> ginput(npix, 0.0);
    // gradient w.r.t. the frame fed at step u, kept until the feedback source
    // output (u - lookahead steps earlier) is processed
    std::vector<std::vector<double>> ginput_at(static_cast<size_t>(S) + 1);

    MapStack gout(1, plan.input_size.h, plan.input_size.w);
    MapStack gout_hat(1, plan.input_size.h, plan.input_size.w);

    auto pad_src = [&](const double* src, const ConvGeom& geom, int& pw) {
        const Extent2 p = geom.padded();
        pw = p.w;
        ws.pad.resize(static_cast<size_t>(p.h) * p.w);
        pad_plane(src, geom.src.h, geom.src.w, geom.pad, ws.pad.data());
    };
    auto zero_gpad = [&](const ConvGeom& geom) {
        const Extent2 p = geom.padded();
        ws.gpad.assign(static_cast<size_t>(p.h) * p.w, 0.0);
    };

    for (int t = S; t >= 0; --t) {
        const NetworkState& st = tape.states[t];

        // adjoint of the prediction output: loss term plus closed-loop
        // feedback from the steps this output was fed into
        bool any_out = out_grads[t].size() > 0;
        gout.fill(0.0);
        if (any_out) std::memcpy(gout.data(), out_grads[t].data(), npix * sizeof(double));
        if (beta != 0.0) {
            const int u_first = t == 0 ? 1 : t + fb_delay;
            const int u_last = t == 0 ? std::min(fb_delay, S) : t + fb_delay;
            for (int u = u_first; u <= u_last && u <= S; ++u) {
                if (ginput_at[u].empty()) continue;
                ops.scale_acc(gout.data(), beta, ginput_at[u].data(), npix);
                any_out = true;
            }
        }
        if (any_out) {
            const ConvGeom& geom = plan.out_conv;
            for (size_t i = 0; i < npix; ++i) {
                gout_hat.data()[i] = gout.data()[i] * scaled_tanh_prime(tape.out_hat[t].data()[i]);
            }
            if (opt.param_grads) g.b_o += ops.sum(gout_hat.data(), npix);
            int pw = 0;
            for (int q = 0; q < plan.layers[0].fm_count; ++q) {
                pad_src(st.layers[0].fm_act.map(q), geom, pw);
                zero_gpad(geom);
                if (opt.param_grads) {
                    ops.corr_back_kernel(gout_hat.data(), geom.dst.h, geom.dst.w, ws.pad.data(),
                                         pw, g.k_fo.kernel(0, q), geom.kernel.h, geom.kernel.w);
                }
                ops.corr_back_src(gout_hat.data(), geom.dst.h, geom.dst.w, params.k_fo.kernel(0, q),
                                  geom.kernel.h, geom.kernel.w, ws.gpad.data(), pw);
                unpad_acc(ws.gpad.data(), geom.src.h, geom.src.w, geom.pad,
                          adj.fm_act_cur[0].map(q));
            }
        }

        // internal-state adjoints at t
        for (int l = 0; l < L; ++l) {
            through_activation(adj.fm_hat[l], adj.fm_act_cur[l], st.layers[l].fm_hat,
                               adj.fm_leak[l]);
            if (plan.layers[l].cm_count > 0) {
                through_activation(adj.cm_hat[l], adj.cm_act_cur[l], st.layers[l].cm_hat,
                                   adj.cm_leak[l]);
            }
        }

        if (t == 0) {
            for (int l = 0; l < L; ++l) {
                g.initial_state.layers[l].fm_hat = adj.fm_hat[l];
                if (plan.layers[l].cm_count > 0) g.initial_state.layers[l].cm_hat = adj.cm_hat[l];
            }
            break;
        }

        // propagate step-t equations onto step t-1 and the parameters
        const NetworkState& prev = tape.states[t - 1];
        const double* input_t = tape.inputs[t - 1].data();
        std::fill(ginput.begin(), ginput.end(), 0.0);
        for (int l = 0; l < L; ++l) {
            const LayerPlan& lp = plan.layers[l];
            const LayerParams& lw = params.layers[l];
            const double gain = 1.0 / lp.tau;
            const double leak = 1.0 - gain;
            int pw = 0;

            if (!adj.fm_scaled.same_shape(adj.fm_hat[l]))
                adj.fm_scaled = MapStack(lp.fm_count, lp.fm_size.h, lp.fm_size.w);
            adj.fm_scaled.fill(0.0);
            ops.scale_acc(adj.fm_scaled.data(), gain, adj.fm_hat[l].data(), adj.fm_hat[l].size());

            if (opt.param_grads) {
                for (int p = 0; p < lp.fm_count; ++p) {
                    g.layers[l].fm_bias[p] += ops.sum(adj.fm_scaled.map(p), adj.fm_scaled.plane_size());
                }
            }
            if (lp.has_ff) {
                for (int q = 0; q < plan.layers[l + 1].fm_count; ++q) {
                    pad_src(prev.layers[l + 1].fm_act.map(q), lp.ff, pw);
                    zero_gpad(lp.ff);
                    for (int p = 0; p < lp.fm_count; ++p) {
                        if (opt.param_grads) {
                            ops.corr_back_kernel(adj.fm_scaled.map(p), lp.ff.dst.h, lp.ff.dst.w,
                                                 ws.pad.data(), pw, g.layers[l].k_ff.kernel(p, q),
                                                 lp.ff.kernel.h, lp.ff.kernel.w);
                        }
                        ops.corr_back_src(adj.fm_scaled.map(p), lp.ff.dst.h, lp.ff.dst.w,
                                          lw.k_ff.kernel(p, q), lp.ff.kernel.h, lp.ff.kernel.w,
                                          ws.gpad.data(), pw);
                    }
                    unpad_acc(ws.gpad.data(), lp.ff.src.h, lp.ff.src.w, lp.ff.pad,
                              adj.fm_act_prev[l + 1].map(q));
                }
            }
            if (lp.has_cf) {
                for (int n = 0; n < lp.cm_count; ++n) {
                    pad_src(prev.layers[l].cm_act.map(n), lp.cf, pw);
                    zero_gpad(lp.cf);
                    for (int p = 0; p < lp.fm_count; ++p) {
                        if (opt.param_grads) {
                            ops.corr_back_kernel(adj.fm_scaled.map(p), lp.cf.dst.h, lp.cf.dst.w,
                                                 ws.pad.data(), pw, g.layers[l].k_cf.kernel(p, n),
                                                 lp.cf.kernel.h, lp.cf.kernel.w);
                        }
                        ops.corr_back_src(adj.fm_scaled.map(p), lp.cf.dst.h, lp.cf.dst.w,
                                          lw.k_cf.kernel(p, n), lp.cf.kernel.h, lp.cf.kernel.w,
                                          ws.gpad.data(), pw);
                    }
                    unpad_acc(ws.gpad.data(), lp.cf.src.h, lp.cf.src.w, lp.cf.pad,
                              adj.cm_act_prev[l].map(n));
                }
            }
            if (l == 0) {
                const ConvGeom& geom = plan.in_conv;
                pad_src(input_t, geom, pw);
                zero_gpad(geom);
                for (int p = 0; p < lp.fm_count; ++p) {
                    if (opt.param_grads) {
                        ops.corr_back_kernel(adj.fm_scaled.map(p), geom.dst.h, geom.dst.w,
                                             ws.pad.data(), pw, g.k_if.kernel(p, 0),
                                             geom.kernel.h, geom.kernel.w);
                    }
                    ops.corr_back_src(adj.fm_scaled.map(p), geom.dst.h, geom.dst.w,
                                      params.k_if.kernel(p, 0), geom.kernel.h, geom.kernel.w,
                                      ws.gpad.data(), pw);
                }
                unpad_acc(ws.gpad.data(), geom.src.h, geom.src.w, geom.pad, ginput.data());
            }

            if (lp.cm_count > 0) {
                if (!adj.cm_scaled.same_shape(adj.cm_hat[l]))
                    adj.cm_scaled = MapStack(lp.cm_count, lp.cm_size.h, lp.cm_size.w);
                adj.cm_scaled.fill(0.0);
                ops.scale_acc(adj.cm_scaled.data(), gain, adj.cm_hat[l].data(), adj.cm_hat[l].size());

                const size_t cpix = adj.cm_scaled.plane_size();
                for (int m = 0; m < lp.cm_count; ++m) {
                    if (opt.param_grads) g.layers[l].cm_bias[m] += ops.sum(adj.cm_scaled.map(m), cpix);
                    for (int n = 0; n < lp.cm_count; ++n) {
                        if (opt.param_grads) {
                            ops.madd(g.layers[l].w_cc.kernel(m, n), adj.cm_scaled.map(m),
                                     prev.layers[l].cm_act.map(n), cpix);
                        }
                        ops.madd(adj.cm_act_prev[l].map(n), adj.cm_scaled.map(m),
                                 lw.w_cc.kernel(m, n), cpix);
                    }
                    if (lp.has_wfc) {
                        for (int q = 0; q < plan.layers[l + 1].fm_count; ++q) {
                            if (opt.param_grads) {
                                ops.madd(g.layers[l].w_fc.kernel(m, q), adj.cm_scaled.map(m),
                                         prev.layers[l + 1].fm_act.map(q), cpix);
                            }
                            ops.madd(adj.fm_act_prev[l + 1].map(q), adj.cm_scaled.map(m),
                                     lw.w_fc.kernel(m, q), cpix);
                        }
                    }
                }
                if (lp.has_fc) {
                    const int below = (l == 0) ? 1 : plan.layers[l - 1].fm_count;
                    for (int r = 0; r < below; ++r) {
                        const double* src = (l == 0) ? input_t : prev.layers[l - 1].fm_act.map(r);
                        pad_src(src, lp.fc, pw);
                        zero_gpad(lp.fc);
                        for (int m = 0; m < lp.cm_count; ++m) {
                            if (opt.param_grads) {
                                ops.corr_back_kernel(adj.cm_scaled.map(m), lp.fc.dst.h, lp.fc.dst.w,
                                                     ws.pad.data(), pw, g.layers[l].k_fc.kernel(m, r),
                                                     lp.fc.kernel.h, lp.fc.kernel.w);
                            }
                            ops.corr_back_src(adj.cm_scaled.map(m), lp.fc.dst.h, lp.fc.dst.w,
                                              lw.k_fc.kernel(m, r), lp.fc.kernel.h, lp.fc.kernel.w,
                                              ws.gpad.data(), pw);
                        }
                        if (l == 0) {
                            unpad_acc(ws.gpad.data(), lp.fc.src.h, lp.fc.src.w, lp.fc.pad,
                                      ginput.data());
                        } else {
                            unpad_acc(ws.gpad.data(), lp.fc.src.h, lp.fc.src.w, lp.fc.pad,
                                      adj.fm_act_prev[l - 1].map(r));
                        }
                    }
                }
            }

            // leak contribution stashed for step t-1
            adj.fm_leak[l].fill(0.0);
            ops.scale_acc(adj.fm_leak[l].data(), leak, adj.fm_hat[l].data(), adj.fm_hat[l].size());
            if (lp.cm_count > 0) {
                adj.cm_leak[l].fill(0.0);
                ops.scale_acc(adj.cm_leak[l].data(), leak, adj.cm_hat[l].data(), adj.cm_hat[l].size());
            }
        }

        ginput_at[t] = ginput;
        std::swap(adj.fm_act_cur, adj.fm_act_prev);
        std::swap(adj.cm_act_cur, adj.cm_act_prev);
        for (int l = 0; l < L; ++l) {
            adj.fm_act_prev[l].fill(0.0);
            if (plan.layers[l].cm_count > 0) adj.cm_act_prev[l].fill(0.0);
        }
    }
    return g;
}

// ---------------------------------------------------------------------- bptt

namespace {

std::vector<MapStack> training_out_grads(const ShapePlan& plan, const Tape& tape,
                                         const FrameSequence& data, int lookahead,
                                         double* loss_out) {
    const int S = static_cast<int>(tape.outputs.size()) - 1;
    const size_t npix = static_cast<size_t>(plan.input_size.h) * plan.input_size.w;
    std::vector<MapStack> grads(S + 1);
    const double scale = 2.0 / (static_cast<double>(S + 1) * static_cast<double>(npix));
    double loss = 0.0;
    for (int t = 0; t <= S; ++t) {
        const double* o = tape.outputs[t].data();
        const double* target = data.frame(t + lookahead - 1);
        grads[t] = MapStack(1, plan.input_size.h, plan.input_size.w);
        double e = 0.0;
        for (size_t i = 0; i < npix; ++i) {
            const double d = o[i] - target[i];
            grads[t].data()[i] = scale * d;
            e += d * d;
        }
        loss += e / static_cast<double>(npix);
    }
    if (loss_out) *loss_out = loss / (S + 1);
    return grads;
}

}  // namespace

Gradients bptt(const ShapePlan& plan, const ParamSet& params, int sequence_index,
               const FrameSequence& data, const TrainSpec& spec, Workspace& ws,
               const FrameSequence* recorded_closed) {
    const int T = data.frames();
    if (T <= spec.lookahead) throw TopologyError("bptt: sequence shorter than lookahead");
    const int S = T - spec.lookahead;

    RolloutOptions opt;
    opt.mode = InputMode::Mixed;
    opt.alpha = spec.alpha;
    opt.data = &data;
    opt.steps = S;
    opt.lookahead = spec.feedback_delay();
    opt.record_states = true;

    FrameSequence closed_outputs;
    if (!spec.mix_backprop) {
        // blend this epoch's recorded closed-loop outputs in as constants
        if (recorded_closed != nullptr) {
            opt.mix_source = recorded_closed;
        } else {
            RolloutOptions copt;
            copt.mode = InputMode::Closed;
            copt.steps = S;
            copt.lookahead = spec.feedback_delay();
            Tape closed = rollout(plan, params, params.initial_states[sequence_index], copt, ws);
            closed_outputs.height = plan.input_size.h;
            closed_outputs.width = plan.input_size.w;
            for (const MapStack& o : closed.outputs) closed_outputs.append(o.data());
            opt.mix_source = &closed_outputs;
        }
    }

    Tape tape = rollout(plan, params, params.initial_states[sequence_index], opt, ws);
    double loss = 0.0;
    std::vector<MapStack> ograds = training_out_grads(plan, tape, data, spec.lookahead, &loss);
    if (!std::isfinite(loss)) {
        throw NumericalError("bptt: loss diverged (sequence " + std::to_string(sequence_index) + ")");
    }
    BackwardOptions bopt;
    bopt.lookahead = spec.lookahead;
    Gradients g = backward_pass(plan, params, tape, ograds, bopt, ws);
    g.loss = loss;
    return g;
}

// --------------------------------------------------------------- train epoch

namespace {

void acc_bank(KernelBank& into, const KernelBank& from) {
    kernels::active().scale_acc(into.data(), 1.0, from.data(), from.size());
}

void accumulate_weight_grads(Gradients& into, const Gradients& from) {
    acc_bank(into.k_if, from.k_if);
    acc_bank(into.k_fo, from.k_fo);
    into.b_o += from.b_o;
    for (size_t l = 0; l < into.layers.size(); ++l) {
        LayerParams& a = into.layers[l];
        const LayerParams& b = from.layers[l];
        if (a.k_ff.size()) acc_bank(a.k_ff, b.k_ff);
        if (a.k_cf.size()) acc_bank(a.k_cf, b.k_cf);
        if (a.k_fc.size()) acc_bank(a.k_fc, b.k_fc);
        if (a.w_cc.size()) acc_bank(a.w_cc, b.w_cc);
        if (a.w_fc.size()) acc_bank(a.w_fc, b.w_fc);
        for (size_t i = 0; i < a.fm_bias.size(); ++i) a.fm_bias[i] += b.fm_bias[i];
        for (size_t i = 0; i < a.cm_bias.size(); ++i) a.cm_bias[i] += b.cm_bias[i];
    }
}

void step_bank(KernelBank& w, const KernelBank& g, double lr) {
    kernels::active().scale_acc(w.data(), -lr, g.data(), g.size());
}

void apply_update(ParamSet& params, const Gradients& wsum, const std::vector<Gradients>& per_seq,
                  double lr, double lr_init) {
    step_bank(params.k_if, wsum.k_if, lr);
    step_bank(params.k_fo, wsum.k_fo, lr);
    params.b_o -= lr * wsum.b_o;
    for (size_t l = 0; l < params.layers.size(); ++l) {
        LayerParams& w = params.layers[l];
        const LayerParams& g = wsum.layers[l];
        if (w.k_ff.size()) step_bank(w.k_ff, g.k_ff, lr);
        if (w.k_cf.size()) step_bank(w.k_cf, g.k_cf, lr);
        if (w.k_fc.size()) step_bank(w.k_fc, g.k_fc, lr);
        if (w.w_cc.size()) step_bank(w.w_cc, g.w_cc, lr);
        if (w.w_fc.size()) step_bank(w.w_fc, g.w_fc, lr);
        for (size_t i = 0; i < w.fm_bias.size(); ++i) w.fm_bias[i] -= lr * g.fm_bias[i];
        for (size_t i = 0; i < w.cm_bias.size(); ++i) w.cm_bias[i] -= lr * g.cm_bias[i];
    }
    for (size_t s = 0; s < per_seq.size(); ++s) {
        NetworkState& st = params.initial_states[s];
        const NetworkState& gs = per_seq[s].initial_state;
        for (size_t l = 0; l < st.layers.size(); ++l) {
            kernels::active().scale_acc(st.layers[l].fm_hat.data(), -lr_init,
                                        gs.layers[l].fm_hat.data(), gs.layers[l].fm_hat.size());
            if (st.layers[l].cm_hat.size()) {
                kernels::active().scale_acc(st.layers[l].cm_hat.data(), -lr_init,
                                            gs.layers[l].cm_hat.data(), gs.layers[l].cm_hat.size());
            }
        }
        refresh_activations(st);
    }
}

struct SeqResult {
    Gradients grads;
    double open_mse = 0.0;
    double closed_mse = 0.0;
};

SeqResult process_sequence(const ShapePlan& plan, const ParamSet& params,
                           const FrameSequence& data, int s, const TrainSpec& spec) {
    Workspace ws;
    const int S = data.frames() - spec.lookahead;
    SeqResult r;

    // closed-loop generation first; its outputs double as the constant blend
    // source when the mixed pass is not differentiated through
    RolloutOptions closed;
    closed.mode = InputMode::Closed;
    closed.steps = S;
    closed.lookahead = spec.feedback_delay();
    const Tape ctape = rollout(plan, params, params.initial_states[s], closed, ws);
    r.closed_mse = tape_mse(ctape, data, spec.lookahead);
    FrameSequence closed_outputs(plan.input_size.h, plan.input_size.w);
    if (!spec.mix_backprop) {
        for (const MapStack& o : ctape.outputs) closed_outputs.append(o.data());
    }

    RolloutOptions open;
    open.mode = InputMode::Open;
    open.data = &data;
    open.steps = S;
    open.lookahead = spec.lookahead;
    r.open_mse = tape_mse(rollout(plan, params, params.initial_states[s], open, ws), data,
                          spec.lookahead);

    r.grads = bptt(plan, params, s, data, spec, ws,
                   spec.mix_backprop ? nullptr : &closed_outputs);
    return r;
}

}  // namespace

namespace {

// Shared epoch body. Measures pre-update MSEs; skips the parameter update
// when the closed-loop error is already under `terminate_below` (> 0).
EpochStats run_epoch(const ShapePlan& plan, ParamSet& params,
                     const std::vector<FrameSequence>& dataset, const TrainSpec& spec,
                     int epoch_number, double terminate_below, bool* terminated) {
    const int n = static_cast<int>(dataset.size());
    if (n == 0) throw TopologyError("train_epoch: empty dataset");
    if (params.initial_states.size() != static_cast<size_t>(n)) {
        throw TopologyError("train_epoch: parameter set holds " +
                            std::to_string(params.initial_states.size()) +
                            " initial states for " + std::to_string(n) + " sequences");
    }

    std::vector<SeqResult> results(n);
    if (spec.threads > 1) {
        std::vector<std::future<SeqResult>> futs;
        futs.reserve(n);
        for (int s = 0; s < n; ++s) {
            futs.push_back(std::async(std::launch::async, process_sequence, std::cref(plan),
                                      std::cref(params), std::cref(dataset[s]), s, std::cref(spec)));
        }
        for (int s = 0; s < n; ++s) results[s] = futs[s].get();
    } else {
        for (int s = 0; s < n; ++s) {
            results[s] = process_sequence(plan, params, dataset[s], s, spec);
        }
    }

    EpochStats stats;
    stats.epoch = epoch_number;
    for (const auto& r : results) {
        stats.open_mse += r.open_mse / n;
        stats.closed_mse += r.closed_mse / n;
    }
    if (!std::isfinite(stats.open_mse) || !std::isfinite(stats.closed_mse)) {
        throw NumericalError("train_epoch: MSE diverged at epoch " + std::to_string(epoch_number));
    }

    if (terminate_below > 0.0 && stats.closed_mse < terminate_below) {
        if (terminated) *terminated = true;
        return stats;  // keep the parameters that achieved this error
    }
    if (terminated) *terminated = false;

    // deterministic reduction in ascending sequence order
    Gradients wsum = results[0].grads;
    for (int s = 1; s < n; ++s) accumulate_weight_grads(wsum, results[s].grads);

    std::vector<Gradients> per_seq;
    per_seq.reserve(n);
    for (auto& r : results) per_seq.push_back(std::move(r.grads));
    apply_update(params, wsum, per_seq, spec.learning_rate, spec.init_state_lr());
    return stats;
}

}  // namespace

EpochStats train_epoch(const ShapePlan& plan, ParamSet& params,
                       const std::vector<FrameSequence>& dataset, const TrainSpec& spec,
                       int epoch_number) {
    return run_epoch(plan, params, dataset, spec, epoch_number, 0.0, nullptr);
}

TrainResult train(const ShapePlan& plan, const NetworkConfig& cfg, ParamSet& params,
                  const std::vector<FrameSequence>& dataset, const TrainSpec& spec,
                  const std::function<void(Checkpoint&, bool)>& save,
                  const std::function<void(const EpochStats&)>& on_epoch) {
    TrainResult result;
    double initial_closed = -1.0;
    int divergent_run = 0;

    for (int epoch = 1; epoch <= spec.epochs_max; ++epoch) {
        bool terminated = false;
        EpochStats stats = run_epoch(plan, params, dataset, spec, epoch,
                                     spec.closed_loop_error_threshold, &terminated);
        result.history.push_back(stats);
        result.final_epoch = epoch;
        if (on_epoch) on_epoch(stats);

        if (initial_closed < 0.0) initial_closed = stats.closed_mse;
        divergent_run = (stats.closed_mse > 10.0 * initial_closed) ? divergent_run + 1 : 0;
        if (divergent_run == 50 && !spec.quiet) {
            std::cerr << "warning: closed-loop error above 10x its initial value for 50 epochs\n";
        }

        const bool scheduled = std::find(spec.checkpoint_epochs.begin(), spec.checkpoint_epochs.end(),
                                         epoch) != spec.checkpoint_epochs.end();
        const bool last = terminated || epoch == spec.epochs_max;
        if (save && (scheduled || last)) {
            Checkpoint ck;
            ck.epoch = epoch;
            ck.open_mse = stats.open_mse;
            ck.closed_mse = stats.closed_mse;
            ck.config = cfg;
            ck.params = params;
            save(ck, last);
            params = ck.params;  // keep the f32-rounded values
        }
        if (terminated) {
            result.terminated_early = true;
            break;
        }
    }
    return result;
}

}  // namespace pmnet
