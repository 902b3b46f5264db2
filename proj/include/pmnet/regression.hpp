#pragma once

#include <deque>
#include <vector>

#include "pmnet/learner.hpp"

// Online predictive imitation. The error-regression engine keeps a ring
// buffer of the recent input frames and the latent state at the window
// onset; each step it re-generates the window closed-loop, back-propagates
// the window reconstruction error, and descends on the onset state only,
// with all connectivity weights and biases fixed. Entrainment is the
// open-loop baseline: the external frame drives the network directly.

namespace pmnet {

struct RegressionConfig {
    int window = 20;
    int iterations_per_step = 100;
    double adaptation_rate = 0.1;
    // Early-exit bound on the window error (mean per-pixel MSE over the
    // scored window steps). +inf disables adaptation entirely.
    double threshold = 0.0;
    int lookahead = 2;
};

class RegressionEngine {
public:
    RegressionEngine(const ShapePlan& plan, const ParamSet& params, const RegressionConfig& cfg);

    struct StepResult {
        std::vector<double> prediction;  // look-ahead prediction emitted this step
        double window_mse = -1.0;        // after the last adaptation; -1 before scoring starts
        int iterations_used = 0;
    };

    // Feed the next observed frame; adapt the onset state; emit the
    // prediction of the frame `lookahead` steps ahead.
    StepResult er_step(const double* frame);

    // Open-loop baseline: one forward step driven by the external frame.
    StepResult entrain_step(const double* frame);

    // Closed-loop look-ahead from the current window end (mental simulation);
    // returns the outputs of the extra steps.
    std::vector<std::vector<double>> mental_rollout(int extra_steps);

    int steps_seen() const { return steps_seen_; }

private:
    const ShapePlan& plan_;
    const ParamSet& params_;
    RegressionConfig cfg_;
    Workspace ws_;
    NetworkState onset_state_;
    NetworkState entrain_state_;
    std::deque<std::vector<double>> buffer_;
    NetworkState window_end_;
    int steps_seen_ = 0;
    size_t npix_ = 0;

    double window_error(const Tape& tape, std::vector<MapStack>* out_grads) const;
};

enum class ImitationMode { ErrorRegression, Entrainment };

struct ImitationRow {
    int step = 0;
    double window_mse = -1.0;
    double prediction_mse = -1.0;  // against the frame `lookahead` ahead
    int iterations = 0;
};

struct ImitationReport {
    std::vector<ImitationRow> rows;
    double mean_mse = 0.0;  // over steps with an available target
};

ImitationReport run_imitation(const ShapePlan& plan, const ParamSet& params,
                              const FrameSequence& target, ImitationMode mode,
                              const RegressionConfig& cfg);

}  // namespace pmnet
