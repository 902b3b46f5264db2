#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pmnet/network.hpp"

namespace pmnet {

struct TrainSpec {
    int lookahead = 2;        // output at step t is scored against frame t+lookahead
    double alpha = 0.9;       // data share of the open/closed input blend
    double learning_rate = 0.002;
    double init_state_learning_rate = -1.0;  // < 0 -> same as learning_rate
    int epochs_max = 1000;
    double closed_loop_error_threshold = 0.0;  // 0 -> never terminate early
    std::vector<int> checkpoint_epochs;
    uint64_t seed = 1;
    // Differentiate through the closed-loop branch of the input blend (the
    // blend feeds the pass's own previous output back, inside one unrolled
    // graph). When false, each epoch's recorded closed-loop outputs are
    // blended in as constants instead.
    bool mix_backprop = true;
    // Closed-loop feedback delay: which earlier output stands in for the
    // external frame. 0 selects the phase-consistent choice (= lookahead).
    int closed_feedback_delay = 0;
    int threads = 1;
    bool quiet = false;

    double init_state_lr() const {
        return init_state_learning_rate < 0 ? learning_rate : init_state_learning_rate;
    }
    int feedback_delay() const {
        return closed_feedback_delay > 0 ? closed_feedback_delay : lookahead;
    }
};

TrainSpec parse_train_spec(const std::string& text);
TrainSpec load_train_spec(const std::string& path);
std::string serialize_train_spec(const TrainSpec& spec);

// Eq. of the per-pixel error: per-step mean squared error over pixels, and
// the mean over steps. Targets must already be offset by the caller.
struct LossResult {
    double mean = 0.0;
    std::vector<double> per_step;
};
LossResult compute_loss(const FrameSequence& outputs, const FrameSequence& targets);

// MSE of a rollout's scored outputs (steps 1..S) against the data frames
// `lookahead` ahead of the frame each output was emitted from.
double tape_mse(const Tape& tape, const FrameSequence& data, int lookahead);

// data_share * data_frame + (1 - data_share) * closed_loop_prev_output
std::vector<double> mix_input(const std::vector<double>& data_frame,
                              const std::vector<double>& closed_prev, double data_share);

// Gradients of everything trainable: mirrors ParamSet plus the gradient of
// one sequence's initial internal state.
struct Gradients {
    KernelBank k_if, k_fo;
    double b_o = 0.0;
    std::vector<LayerParams> layers;
    NetworkState initial_state;
    double loss = 0.0;
};

struct BackwardOptions {
    bool param_grads = true;
    int lookahead = 2;
};

// Reverse-mode pass over a recorded rollout. out_grads[t] holds dLoss/dO_t
// (zero-size stacks mean "unscored"); indices align with tape.outputs.
// The tape must have been recorded with record_states = true.
Gradients backward_pass(const ShapePlan& plan, const ParamSet& params, const Tape& tape,
                        const std::vector<MapStack>& out_grads, const BackwardOptions& opt,
                        Workspace& ws);

// Forward (mixed input) + loss + backward for one training sequence. When
// spec.mix_backprop is false and the epoch's closed-loop outputs were already
// recorded, pass them as recorded_closed to avoid a duplicate rollout.
Gradients bptt(const ShapePlan& plan, const ParamSet& params, int sequence_index,
               const FrameSequence& data, const TrainSpec& spec, Workspace& ws,
               const FrameSequence* recorded_closed = nullptr);

struct EpochStats {
    int epoch = 0;
    double open_mse = 0.0;
    double closed_mse = 0.0;
};

// One full epoch: closed-loop evaluation, open-loop evaluation, and a mixed
// training pass with BPTT per sequence (in fixed order), then one parameter
// update. Returns pre-update MSEs, matching the termination rule.
EpochStats train_epoch(const ShapePlan& plan, ParamSet& params,
                       const std::vector<FrameSequence>& dataset, const TrainSpec& spec,
                       int epoch_number = 0);

struct Checkpoint {
    int epoch = 0;
    double open_mse = 0.0;
    double closed_mse = 0.0;
    NetworkConfig config;
    ParamSet params;
};

// Tensors are stored as 32-bit floats. Saving rounds the in-memory parameters
// to storage precision first, so a run that continues after a save behaves
// bit-identically to one restarted from the file.
void quantize_params_f32(ParamSet& params);
void save_checkpoint(const std::string& path, Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Full training loop with termination and scheduled checkpointing.
// save(checkpoint, is_final) is invoked at scheduled epochs and at the end;
// on_epoch(stats) after every epoch's evaluation.
struct TrainResult {
    std::vector<EpochStats> history;
    int final_epoch = 0;
    bool terminated_early = false;
};
TrainResult train(const ShapePlan& plan, const NetworkConfig& cfg, ParamSet& params,
                  const std::vector<FrameSequence>& dataset, const TrainSpec& spec,
                  const std::function<void(Checkpoint&, bool)>& save = {},
                  const std::function<void(const EpochStats&)>& on_epoch = {});

// Uniform access to every trainable tensor, used by the update step,
// checkpoint IO and the finite-difference checker.
struct TensorRef {
    std::string name;
    double* data = nullptr;
    size_t size = 0;
    std::vector<int> dims;
};
std::vector<TensorRef> weight_tensors(ParamSet& p);
std::vector<TensorRef> state_tensors(NetworkState& s, const std::string& prefix);

// Central finite-difference check of the analytic gradients over every
// parameter class, including per-sequence initial states, in both the mixed
// training path and the pure closed-loop path.
struct GradcheckEntry {
    std::string tensor;
    size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};
struct GradcheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
    bool pass = false;
    std::vector<GradcheckEntry> worst;
};
GradcheckResult run_gradcheck(const NetworkConfig& cfg, uint64_t seed, int steps,
                              int samples_per_class = 6, double tol = 1e-4,
                              const std::function<void(Gradients&)>& corrupt = {});

}  // namespace pmnet
