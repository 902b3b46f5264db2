#pragma once

#include <string>
#include <vector>

#include "pmnet/network.hpp"

// Trajectory analysis over closed-loop rollouts: dimensionality reduction,
// limit-cycle / fixed-point detection, and the per-checkpoint attractor
// census.

namespace pmnet {

enum class MapKind { FM, CM, Output };

struct TrajectoryRecord {
    std::string source;
    int steps = 0;
    int dim = 0;
    std::vector<double> data;  // steps x dim, row-major

    double* row(int t) { return data.data() + static_cast<size_t>(t) * dim; }
    const double* row(int t) const { return data.data() + static_cast<size_t>(t) * dim; }
};

// Streams the requested map set of a closed-loop rollout into a record.
// layer is 1-based; ignored for MapKind::Output.
TrajectoryRecord record_trajectory(const ShapePlan& plan, const ParamSet& params,
                                   const NetworkState& start, int steps, int layer, MapKind kind,
                                   Workspace& ws);

struct PcaResult {
    int components = 0;
    std::vector<double> projected;  // steps x components
    std::vector<double> explained;  // variance ratio per component
    std::vector<double> axes;       // components x dim
    std::vector<double> mean;       // dim
    bool degenerate = false;        // zero-variance input
};

// Mean-centered projection onto the top principal axes, via eigendecomposition
// of the smaller of the covariance and Gram matrices. Components are ordered
// by descending variance; each axis is signed so its largest-magnitude
// loading is positive.
PcaResult pca(const TrajectoryRecord& traj, int n_components);

// Symmetric eigen-decomposition by cyclic Jacobi rotations, descending
// eigenvalues. Exposed for tests.
void symmetric_eigen(std::vector<double>& a, int n, std::vector<double>& values,
                     std::vector<double>& vectors);

enum class AttractorKind { None, FixedPoint, LimitCycle };

struct AttractorOptions {
    int late_begin = 700;
    int late_end = 1000;    // window scaled to [0.7 T, T] for shorter trajectories
    double eps_fix = 1e-3;  // max step displacement, relative to trajectory scale
    double eps_recur = 0.05;  // recurrence distance bound, relative
    int min_period = 2;
};

struct AttractorVerdict {
    AttractorKind kind = AttractorKind::None;
    int period = 0;
    double recurrence = -1.0;      // normalized recurrence distance at the period
    double pixel_fidelity = -1.0;  // filled by the census
};

AttractorVerdict detect_attractor(const TrajectoryRecord& traj, const AttractorOptions& opt = {});

struct CensusOptions {
    int rollout_steps = 1000;
    int analysis_layer = 1;  // lower layer whose CM activations are analyzed
    AttractorOptions attractor;
    double fidelity_bound = 0.25;  // per-pixel MSE vs best-aligned target cycle
    double merge_eps = 0.05;       // cycle RMS distance (relative) below which verdicts merge
};

struct SequenceVerdict {
    int sequence = 0;
    AttractorVerdict verdict;
    bool embeds_target = false;
    int group = -1;  // merged-attractor group id when embeds_target
};

struct CensusReport {
    int distinct_attractors = 0;
    std::vector<SequenceVerdict> sequences;
};

// 1000-step closed-loop rollout from every trained initial state; limit-cycle
// detection on lower-layer CM activations; pixel fidelity of late-window
// outputs against the best-aligned cycle of that sequence's target pattern.
// Distinct attractors = embeds-target verdicts deduplicated by phase-aligned
// cycle distance.
CensusReport attractor_census(const ShapePlan& plan, const ParamSet& params,
                              const std::vector<FrameSequence>& dataset,
                              const CensusOptions& opt = {});

// Per-pixel MSE of a frame stream against the best phase alignment of one
// cycle of the target sequence (the target's own detected period).
double pixel_fidelity(const std::vector<std::vector<double>>& frames, const FrameSequence& target,
                      size_t npix);

}  // namespace pmnet
