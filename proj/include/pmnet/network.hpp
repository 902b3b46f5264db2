#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pmnet/config.hpp"
#include "pmnet/tensor.hpp"

namespace pmnet {

// An ordered stack of equally sized frames, stored frame-major row-major.
// Pixel values live in [-1, 1]; generated data is binary {-1, +1}.
struct FrameSequence {
    int height = 0, width = 0;
    std::vector<double> data;

    FrameSequence() = default;
    FrameSequence(int h, int w) : height(h), width(w) {}

    size_t pixels() const { return static_cast<size_t>(height) * width; }
    int frames() const { return pixels() ? static_cast<int>(data.size() / pixels()) : 0; }
    double* frame(int t) { return data.data() + t * pixels(); }
    const double* frame(int t) const { return data.data() + t * pixels(); }
    void append(const double* px) { data.insert(data.end(), px, px + pixels()); }
};

// Internal states and activations of every FM and CM at one time step.
struct LayerState {
    MapStack fm_hat, fm_act, cm_hat, cm_act;
};

struct NetworkState {
    std::vector<LayerState> layers;
};

NetworkState make_state(const ShapePlan& plan);  // all zeros
// Recomputes every activation as scaled_tanh of its internal state.
void refresh_activations(NetworkState& state);

// Trainable parameters of one layer.
struct LayerParams {
    KernelBank k_ff;  // FM(l+1) -> FM(l), absent on top layer
    KernelBank k_cf;  // CM(l) -> FM(l)
    KernelBank k_fc;  // FM(l-1) or input -> CM(l)
    KernelBank w_cc;  // element-wise CM(l) -> CM(l), one map per (m, n) pair
    KernelBank w_fc;  // element-wise FM(l+1) -> CM(l), one map per (m, q) pair
    std::vector<double> fm_bias;  // one scalar per FM
    std::vector<double> cm_bias;  // one scalar per CM
};

struct ParamSet {
    KernelBank k_if;  // input -> FM(1)
    KernelBank k_fo;  // FM(1) -> output
    double b_o = 0.0;
    std::vector<LayerParams> layers;
    std::vector<NetworkState> initial_states;  // one per training sequence
};

// Allocates a ParamSet matching the plan. Kernels and element-wise weights
// are drawn uniformly from [-r, r] with r = 1/sqrt(fan-in of the destination
// unit); biases and initial states are zero. Deterministic in the seed.
ParamSet init_params(const ShapePlan& plan, uint64_t seed, int n_sequences);
ParamSet zero_params(const ShapePlan& plan, int n_sequences);

// Scratch buffers reused across steps; one per thread of execution.
struct Workspace {
    std::vector<double> pad;
    std::vector<double> gpad;
    MapStack acc;
    MapStack cm_acc;
};

// Prediction output (Eqs. of the output path) from a state's first-layer FM
// activations.
void compute_output(const ShapePlan& plan, const ParamSet& params, const NetworkState& state,
                    MapStack& out_hat, MapStack& out_act, Workspace& ws);

// One step of the forward dynamics. `input` is the frame driving the input
// pathways this step: the previous data frame in open-loop mode, the
// network's own previous output in closed-loop mode, or a blend.
void step_forward(const ShapePlan& plan, const ParamSet& params, const NetworkState& prev,
                  const double* input, NetworkState& next, MapStack& out_hat,
                  MapStack& out_act, Workspace& ws);

enum class InputMode { Open, Closed, Mixed };

struct RolloutOptions {
    InputMode mode = InputMode::Closed;
    double alpha = 0.9;                       // Mixed: data share of the blend
    const FrameSequence* data = nullptr;      // required for Open/Mixed
    const FrameSequence* mix_source = nullptr;  // Mixed: recorded closed-loop
                                                // outputs; self-feeding if null
    int steps = 0;
    // Output at step t is the prediction of frame t+lookahead, so the
    // phase-consistent closed-loop feedback at step t is the output emitted
    // lookahead steps earlier (clamped to the initial output at the start).
    int lookahead = 2;
    bool record_states = false;  // keep per-step states (needed for BPTT)
    // Called once per step (including step 0) with the fresh state and
    // output; lets long rollouts stream observations instead of taping.
    std::function<void(int, const NetworkState&, const MapStack&)> observer;
};

// Full unrolled record of one forward run. outputs[t] is the prediction
// emitted at step t; outputs[0] comes straight from the initial state.
struct Tape {
    std::vector<NetworkState> states;   // states[0] = initial; empty unless recorded
    std::vector<MapStack> out_hat;      // indices 0..steps
    std::vector<MapStack> outputs;
    std::vector<std::vector<double>> inputs;  // frame fed at step t, indices 1..steps
    InputMode mode = InputMode::Closed;
    double alpha = 0.9;
    int lookahead = 2;     // feedback delay used for the closed-loop branch
    bool mix_self = true;  // Mixed: blend fed this pass's own earlier output
};

Tape rollout(const ShapePlan& plan, const ParamSet& params, const NetworkState& start,
             const RolloutOptions& opt, Workspace& ws);

}  // namespace pmnet
