#include "pmnet/regression.hpp"

#include <cmath>

#include "pmnet/kernels.hpp"

namespace pmnet {

RegressionEngine::RegressionEngine(const ShapePlan& plan, const ParamSet& params,
                                   const RegressionConfig& cfg)
    : plan_(plan), params_(params), cfg_(cfg) {
    if (cfg_.window < 1) throw TopologyError("regression window must be >= 1");
    if (cfg_.iterations_per_step < 1) throw TopologyError("iterations_per_step must be >= 1");
    onset_state_ = make_state(plan_);
    entrain_state_ = make_state(plan_);
    window_end_ = onset_state_;
    npix_ = static_cast<size_t>(plan_.input_size.h) * plan_.input_size.w;
}

double RegressionEngine::window_error(const Tape& tape, std::vector<MapStack>* out_grads) const {
    const int w_eff = static_cast<int>(tape.outputs.size()) - 1;
    const int scored = w_eff - cfg_.lookahead + 1;  // onset output included
    if (out_grads) out_grads->assign(w_eff + 1, MapStack());
    if (scored < 1) return -1.0;
    double total = 0.0;
    const double scale = 2.0 / (static_cast<double>(scored) * static_cast<double>(npix_));
    for (int j = 0; j < scored; ++j) {
        const double* o = tape.outputs[j].data();
        const double* g = buffer_[j + cfg_.lookahead - 1].data();
        double e = 0.0;
        if (out_grads) {
            (*out_grads)[j] = MapStack(1, plan_.input_size.h, plan_.input_size.w);
            double* gg = (*out_grads)[j].data();
            for (size_t i = 0; i < npix_; ++i) {
                const double d = o[i] - g[i];
                gg[i] = scale * d;
                e += d * d;
            }
        } else {
            for (size_t i = 0; i < npix_; ++i) {
                const double d = o[i] - g[i];
                e += d * d;
            }
        }
        total += e / static_cast<double>(npix_);
    }
    return total / scored;
}

RegressionEngine::StepResult RegressionEngine::er_step(const double* frame) {
    if (frame == nullptr) throw TopologyError("er_step: frame required");
    ++steps_seen_;
    buffer_.emplace_back(frame, frame + npix_);
    const int w_eff = static_cast<int>(buffer_.size());

    RolloutOptions opt;
    opt.mode = InputMode::Closed;
    opt.steps = w_eff;
    opt.lookahead = cfg_.lookahead;
    opt.record_states = true;

    StepResult result;
    std::vector<MapStack> ograds;
    Tape tape = rollout(plan_, params_, onset_state_, opt, ws_);
    double err = window_error(tape, &ograds);
    result.window_mse = err;

    if (err >= 0.0) {
        for (int it = 0; it < cfg_.iterations_per_step; ++it) {
            if (err < cfg_.threshold) break;
            BackwardOptions bopt;
            bopt.param_grads = false;  // connectivity weights and biases stay fixed
            bopt.lookahead = cfg_.lookahead;
            Gradients g = backward_pass(plan_, params_, tape, ograds, bopt, ws_);
            bool finite = true;
            for (size_t l = 0; l < onset_state_.layers.size(); ++l) {
                MapStack& fm = onset_state_.layers[l].fm_hat;
                const MapStack& gf = g.initial_state.layers[l].fm_hat;
                kernels::active().scale_acc(fm.data(), -cfg_.adaptation_rate, gf.data(), fm.size());
                for (size_t i = 0; i < fm.size(); ++i) finite &= std::isfinite(fm.data()[i]) != 0;
                if (onset_state_.layers[l].cm_hat.size()) {
                    MapStack& cm = onset_state_.layers[l].cm_hat;
                    const MapStack& gc = g.initial_state.layers[l].cm_hat;
                    kernels::active().scale_acc(cm.data(), -cfg_.adaptation_rate, gc.data(),
                                                cm.size());
                    for (size_t i = 0; i < cm.size(); ++i)
                        finite &= std::isfinite(cm.data()[i]) != 0;
                }
            }
            if (!finite) throw NumericalError("error regression diverged at step " +
                                              std::to_string(steps_seen_));
            refresh_activations(onset_state_);
            result.iterations_used = it + 1;
            tape = rollout(plan_, params_, onset_state_, opt, ws_);
            err = window_error(tape, &ograds);
            result.window_mse = err;
        }
    }

    window_end_ = tape.states.back();
    result.prediction.assign(tape.outputs.back().data(), tape.outputs.back().data() + npix_);

    // slide the window: the re-computed state one step after the onset
    // becomes the next onset
    if (w_eff == cfg_.window) {
        onset_state_ = tape.states[1];
        buffer_.pop_front();
    }
    return result;
}

RegressionEngine::StepResult RegressionEngine::entrain_step(const double* frame) {
    if (frame == nullptr) throw TopologyError("entrain_step: frame required");
    ++steps_seen_;
    NetworkState next;
    MapStack out_hat, out_act;
    step_forward(plan_, params_, entrain_state_, frame, next, out_hat, out_act, ws_);
    entrain_state_ = std::move(next);
    StepResult result;
    result.prediction.assign(out_act.data(), out_act.data() + npix_);
    return result;
}

std::vector<std::vector<double>> RegressionEngine::mental_rollout(int extra_steps) {
    RolloutOptions opt;
    opt.mode = InputMode::Closed;
    opt.steps = extra_steps;
    opt.lookahead = cfg_.lookahead;
    Tape tape = rollout(plan_, params_, window_end_, opt, ws_);
    std::vector<std::vector<double>> out;
    for (size_t t = 1; t < tape.outputs.size(); ++t) {
        out.emplace_back(tape.outputs[t].data(), tape.outputs[t].data() + npix_);
    }
    return out;
}

ImitationReport run_imitation(const ShapePlan& plan, const ParamSet& params,
                              const FrameSequence& target, ImitationMode mode,
                              const RegressionConfig& cfg) {
    if (target.frames() == 0) throw TopologyError("run_imitation: empty sequence");
    RegressionEngine engine(plan, params, cfg);
    const size_t npix = target.pixels();
    ImitationReport report;
    int scored = 0;
    for (int t = 0; t < target.frames(); ++t) {
        const RegressionEngine::StepResult r = mode == ImitationMode::ErrorRegression
                                                   ? engine.er_step(target.frame(t))
                                                   : engine.entrain_step(target.frame(t));
        ImitationRow row;
        row.step = t;
        row.window_mse = r.window_mse;
        row.iterations = r.iterations_used;
        if (t + cfg.lookahead < target.frames()) {
            const double* g = target.frame(t + cfg.lookahead);
            double e = 0.0;
            for (size_t i = 0; i < npix; ++i) {
                const double d = r.prediction[i] - g[i];
                e += d * d;
            }
            row.prediction_mse = e / static_cast<double>(npix);
            report.mean_mse += row.prediction_mse;
            ++scored;
        }
        report.rows.push_back(row);
    }
    if (scored > 0) report.mean_mse /= scored;
    return report;
}

}  // namespace pmnet
