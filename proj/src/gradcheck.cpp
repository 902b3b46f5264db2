#include <algorithm>
#include <cmath>

#include "pmnet/learner.hpp"

// Central finite-difference validation of the analytic BPTT gradients.
// Checks both the mixed training path (which differentiates through the
// closed-loop branch of the input blend) and the pure closed-loop path used
// by the regression window.

namespace pmnet {

namespace {

std::vector<TensorRef> every_tensor(ParamSet& p) {
    std::vector<TensorRef> out = weight_tensors(p);
    for (size_t s = 0; s < p.initial_states.size(); ++s) {
        auto st = state_tensors(p.initial_states[s], "init.s" + std::to_string(s) + ".");
        out.insert(out.end(), st.begin(), st.end());
    }
    return out;
}

// Locates the analytic gradient entry matching a tensor name from the
// ParamSet enumeration.
double grad_entry(const ShapePlan& plan, Gradients& g, const std::string& name, size_t idx) {
    ParamSet shell;
    shell.k_if = g.k_if;
    shell.k_fo = g.k_fo;
    shell.b_o = g.b_o;
    shell.layers = g.layers;
    shell.initial_states.push_back(g.initial_state);
    (void)plan;
    for (TensorRef& t : every_tensor(shell)) {
        if (t.name == name) return t.data[idx];
    }
    throw TopologyError("gradcheck: no gradient tensor named " + name);
}

}  // namespace

GradcheckResult run_gradcheck(const NetworkConfig& cfg, uint64_t seed, int steps,
                              int samples_per_class, double tol,
                              const std::function<void(Gradients&)>& corrupt) {
    const ShapePlan plan = validate_config(cfg);
    Workspace ws;
    Rng rng(seed);

    ParamSet params = init_params(plan, seed, 1);
    // non-zero initial state so its gradients are informative
    for (auto& layer : params.initial_states[0].layers) {
        for (size_t i = 0; i < layer.fm_hat.size(); ++i) layer.fm_hat.data()[i] = rng.uniform(-0.5, 0.5);
        for (size_t i = 0; i < layer.cm_hat.size(); ++i) layer.cm_hat.data()[i] = rng.uniform(-0.5, 0.5);
    }
    refresh_activations(params.initial_states[0]);

    TrainSpec spec;
    spec.lookahead = 2;
    spec.alpha = 0.9;
    spec.mix_backprop = true;

    FrameSequence data(plan.input_size.h, plan.input_size.w);
    const int T = steps + spec.lookahead;
    for (int t = 0; t < T; ++t) {
        std::vector<double> frame(data.pixels());
        for (double& v : frame) v = rng.uniform(-0.9, 0.9);
        data.append(frame.data());
    }

    GradcheckResult result;
    result.pass = true;

    struct ModeCase {
        const char* label;
        InputMode mode;
    };
    const ModeCase cases[] = {{"mixed", InputMode::Mixed}, {"closed", InputMode::Closed}};

    for (const ModeCase& mc : cases) {
        auto eval_loss = [&](ParamSet& p) {
            RolloutOptions opt;
            opt.mode = mc.mode;
            opt.alpha = spec.alpha;
            opt.data = &data;
            opt.steps = steps;
            opt.lookahead = spec.lookahead;
            Tape tape = rollout(plan, p, p.initial_states[0], opt, ws);
            return tape_mse(tape, data, spec.lookahead);
        };

        // analytic gradients
        RolloutOptions opt;
        opt.mode = mc.mode;
        opt.alpha = spec.alpha;
        opt.data = &data;
        opt.steps = steps;
        opt.lookahead = spec.lookahead;
        opt.record_states = true;
        Tape tape = rollout(plan, params, params.initial_states[0], opt, ws);
        double loss = 0.0;
        std::vector<MapStack> ograds;
        {
            const size_t npix = data.pixels();
            const int S = steps;
            ograds.resize(S + 1);
            const double scale = 2.0 / (static_cast<double>(S + 1) * static_cast<double>(npix));
            for (int t = 0; t <= S; ++t) {
                ograds[t] = MapStack(1, plan.input_size.h, plan.input_size.w);
                const double* o = tape.outputs[t].data();
                const double* g = data.frame(t + spec.lookahead - 1);
                double e = 0.0;
                for (size_t i = 0; i < npix; ++i) {
                    const double d = o[i] - g[i];
                    ograds[t].data()[i] = scale * d;
                    e += d * d;
                }
                loss += e / npix;
            }
        }
        BackwardOptions bopt;
        bopt.lookahead = spec.lookahead;
        Gradients grads = backward_pass(plan, params, tape, ograds, bopt, ws);
        if (corrupt) corrupt(grads);

        // finite differences on a deterministic sample of every tensor
        Rng pick(seed ^ 0x5bd1e995u);
        for (TensorRef& t : every_tensor(params)) {
            const int n_samples = std::min<size_t>(samples_per_class, t.size);
            for (int k = 0; k < n_samples; ++k) {
                const size_t idx = pick.next_u64() % t.size;
                const double orig = t.data[idx];
                const double h = 1e-5 * std::max(1.0, std::fabs(orig));
                t.data[idx] = orig + h;
                if (t.name.rfind("init.", 0) == 0) refresh_activations(params.initial_states[0]);
                const double lp = eval_loss(params);
                t.data[idx] = orig - h;
                if (t.name.rfind("init.", 0) == 0) refresh_activations(params.initial_states[0]);
                const double lm = eval_loss(params);
                t.data[idx] = orig;
                if (t.name.rfind("init.", 0) == 0) refresh_activations(params.initial_states[0]);

                const double numeric = (lp - lm) / (2.0 * h);
                const double analytic = grad_entry(plan, grads, t.name, idx);
                const double denom = std::max(std::fabs(numeric), std::fabs(analytic));
                double rel;
                if (denom < 1e-7) {
                    rel = std::fabs(numeric - analytic) < 1e-9
                              ? 0.0
                              : std::fabs(numeric - analytic) / 1e-7;
                } else {
                    rel = std::fabs(numeric - analytic) / denom;
                }

                ++result.checked;
                if (rel > result.max_rel_err) result.max_rel_err = rel;
                if (rel > tol || result.worst.size() < 5) {
                    GradcheckEntry entry{std::string(mc.label) + ":" + t.name, idx, analytic,
                                         numeric, rel};
                    result.worst.push_back(entry);
                    std::sort(result.worst.begin(), result.worst.end(),
                              [](const auto& a, const auto& b) { return a.rel_err > b.rel_err; });
                    if (result.worst.size() > 5) result.worst.resize(5);
                }
                if (rel > tol) result.pass = false;
            }
        }
        (void)loss;
    }
    return result;
}

}  // namespace pmnet
