#include "pmnet/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace pmnet {

TrajectoryRecord record_trajectory(const ShapePlan& plan, const ParamSet& params,
                                   const NetworkState& start, int steps, int layer, MapKind kind,
                                   Workspace& ws) {
    TrajectoryRecord rec;
    rec.steps = steps + 1;
    if (kind == MapKind::Output) {
        rec.dim = plan.input_size.h * plan.input_size.w;
        rec.source = "output";
    } else {
        if (layer < 1 || layer > plan.layer_count()) throw TopologyError("no such layer");
        const LayerPlan& lp = plan.layers[layer - 1];
        if (kind == MapKind::CM && lp.cm_count == 0) {
            throw TopologyError("layer " + std::to_string(layer) + " has no context maps");
        }
        rec.dim = kind == MapKind::FM ? lp.fm_count * lp.fm_size.h * lp.fm_size.w
                                      : lp.cm_count * lp.cm_size.h * lp.cm_size.w;
        rec.source = "L" + std::to_string(layer) + (kind == MapKind::FM ? ".fm" : ".cm");
    }
    rec.data.resize(static_cast<size_t>(rec.steps) * rec.dim);

    RolloutOptions opt;
    opt.mode = InputMode::Closed;
    opt.steps = steps;
    opt.observer = [&](int t, const NetworkState& state, const MapStack& out) {
        double* dst = rec.row(t);
        if (kind == MapKind::Output) {
            std::memcpy(dst, out.data(), sizeof(double) * rec.dim);
        } else if (kind == MapKind::FM) {
            std::memcpy(dst, state.layers[layer - 1].fm_act.data(), sizeof(double) * rec.dim);
        } else {
            std::memcpy(dst, state.layers[layer - 1].cm_act.data(), sizeof(double) * rec.dim);
        }
    };
    rollout(plan, params, start, opt, ws);
    for (double v : rec.data) {
        if (!std::isfinite(v)) throw NumericalError("trajectory contains non-finite values");
    }
    return rec;
}

// --------------------------------------------------------------------- eigen

void symmetric_eigen(std::vector<double>& a, int n, std::vector<double>& values,
                     std::vector<double>& vectors) {
    vectors.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) vectors[static_cast<size_t>(i) * n + i] = 1.0;

    auto A = [&](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };
    auto V = [&](int i, int j) -> double& { return vectors[static_cast<size_t>(i) * n + j]; };

    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
        if (off < 1e-24) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = A(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    values.resize(n);
    for (int i = 0; i < n; ++i) values[i] = A(i, i);
    // order by descending eigenvalue (columns of V follow)
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) { return values[x] > values[y]; });
    std::vector<double> sorted_vals(n);
    std::vector<double> sorted_vecs(vectors.size());
    for (int i = 0; i < n; ++i) {
        sorted_vals[i] = values[order[i]];
        for (int k = 0; k < n; ++k) {
            sorted_vecs[static_cast<size_t>(k) * n + i] = V(k, order[i]);
        }
    }
    values = std::move(sorted_vals);
    vectors = std::move(sorted_vecs);
}

// ----------------------------------------------------------------------- pca

PcaResult pca(const TrajectoryRecord& traj, int n_components) {
    const int T = traj.steps;
    const int D = traj.dim;
    if (T < 2) throw TopologyError("pca: need at least two steps");
    if (n_components < 1 || n_components > std::min(T, D)) {
        throw TopologyError("pca: component count out of range");
    }

    PcaResult r;
    r.components = n_components;
    r.mean.assign(D, 0.0);
    for (int t = 0; t < T; ++t) {
        const double* x = traj.row(t);
        for (int d = 0; d < D; ++d) r.mean[d] += x[d] / T;
    }
    std::vector<double> centered(static_cast<size_t>(T) * D);
    double total_var = 0.0;
    for (int t = 0; t < T; ++t) {
        for (int d = 0; d < D; ++d) {
            const double v = traj.row(t)[d] - r.mean[d];
            centered[static_cast<size_t>(t) * D + d] = v;
            total_var += v * v;
        }
    }
    total_var /= (T - 1);
    r.projected.assign(static_cast<size_t>(T) * n_components, 0.0);
    r.axes.assign(static_cast<size_t>(n_components) * D, 0.0);
    r.explained.assign(n_components, 0.0);
    if (total_var < 1e-18) {
        r.degenerate = true;
        return r;
    }

    std::vector<double> values, vectors;
    if (D <= T) {
        // eigen-decomposition of the D x D covariance matrix
        std::vector<double> cov(static_cast<size_t>(D) * D, 0.0);
        for (int t = 0; t < T; ++t) {
            const double* x = centered.data() + static_cast<size_t>(t) * D;
            for (int i = 0; i < D; ++i) {
                for (int j = i; j < D; ++j) cov[static_cast<size_t>(i) * D + j] += x[i] * x[j];
            }
        }
        for (int i = 0; i < D; ++i) {
            for (int j = i; j < D; ++j) {
                const double v = cov[static_cast<size_t>(i) * D + j] / (T - 1);
                cov[static_cast<size_t>(i) * D + j] = v;
                cov[static_cast<size_t>(j) * D + i] = v;
            }
        }
        symmetric_eigen(cov, D, values, vectors);
        for (int c = 0; c < n_components; ++c) {
            for (int d = 0; d < D; ++d) {
                r.axes[static_cast<size_t>(c) * D + d] = vectors[static_cast<size_t>(d) * D + c];
            }
        }
    } else {
        // Gram trick: eigenvectors of X X^T / (T-1), axes recovered as X^T u
        std::vector<double> gram(static_cast<size_t>(T) * T, 0.0);
        for (int s = 0; s < T; ++s) {
            const double* xs = centered.data() + static_cast<size_t>(s) * D;
            for (int t = s; t < T; ++t) {
                const double* xt = centered.data() + static_cast<size_t>(t) * D;
                double acc = 0.0;
                for (int d = 0; d < D; ++d) acc += xs[d] * xt[d];
                gram[static_cast<size_t>(s) * T + t] = acc / (T - 1);
                gram[static_cast<size_t>(t) * T + s] = gram[static_cast<size_t>(s) * T + t];
            }
        }
        symmetric_eigen(gram, T, values, vectors);
        const double lam_max = std::max(values[0], 0.0);
        for (int c = 0; c < n_components; ++c) {
            const double lam = std::max(values[c], 0.0);
            // a numerically-zero eigenvalue has no principal direction; keep
            // the axis at zero rather than normalizing noise
            if (lam < 1e-12 * lam_max) continue;
            double* axis = r.axes.data() + static_cast<size_t>(c) * D;
            for (int t = 0; t < T; ++t) {
                const double u = vectors[static_cast<size_t>(t) * T + c];
                const double* xt = centered.data() + static_cast<size_t>(t) * D;
                for (int d = 0; d < D; ++d) axis[d] += u * xt[d];
            }
            double norm = 0.0;
            for (int d = 0; d < D; ++d) norm += axis[d] * axis[d];
            norm = std::sqrt(norm);
            if (norm > 0) {
                for (int d = 0; d < D; ++d) axis[d] /= norm;
            }
        }
    }

    // sign convention: the largest-magnitude loading of each axis is positive
    for (int c = 0; c < n_components; ++c) {
        double* axis = r.axes.data() + static_cast<size_t>(c) * D;
        int arg = 0;
        for (int d = 1; d < D; ++d) {
            if (std::fabs(axis[d]) > std::fabs(axis[arg])) arg = d;
        }
        if (axis[arg] < 0) {
            for (int d = 0; d < D; ++d) axis[d] = -axis[d];
        }
    }

    double eigen_total = 0.0;
    for (double v : values) eigen_total += std::max(v, 0.0);
    for (int c = 0; c < n_components; ++c) {
        r.explained[c] = eigen_total > 0 ? std::max(values[c], 0.0) / eigen_total : 0.0;
    }
    for (int t = 0; t < T; ++t) {
        const double* x = centered.data() + static_cast<size_t>(t) * D;
        for (int c = 0; c < n_components; ++c) {
            const double* axis = r.axes.data() + static_cast<size_t>(c) * D;
            double acc = 0.0;
            for (int d = 0; d < D; ++d) acc += x[d] * axis[d];
            r.projected[static_cast<size_t>(t) * n_components + c] = acc;
        }
    }
    return r;
}

// ---------------------------------------------------------------- attractors

namespace {

double row_distance(const TrajectoryRecord& traj, int s, int t) {
    const double* a = traj.row(s);
    const double* b = traj.row(t);
    double acc = 0.0;
    for (int d = 0; d < traj.dim; ++d) {
        const double diff = a[d] - b[d];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

}  // namespace

AttractorVerdict detect_attractor(const TrajectoryRecord& traj, const AttractorOptions& opt) {
    AttractorVerdict verdict;
    int a = opt.late_begin;
    int b = opt.late_end;
    if (traj.steps < opt.late_end) {
        // proportional window for shorter trajectories
        a = static_cast<int>(0.7 * traj.steps);
        b = traj.steps;
    }
    if (b > traj.steps) throw TopologyError("detect_attractor: window exceeds trajectory");
    if (b - a < 2 * opt.min_period) throw TopologyError("detect_attractor: window too short");

    // window scale: RMS distance from the window mean
    std::vector<double> mean(traj.dim, 0.0);
    for (int t = a; t < b; ++t) {
        const double* x = traj.row(t);
        for (int d = 0; d < traj.dim; ++d) mean[d] += x[d] / (b - a);
    }
    double scale = 0.0;
    for (int t = a; t < b; ++t) {
        const double* x = traj.row(t);
        for (int d = 0; d < traj.dim; ++d) {
            const double v = x[d] - mean[d];
            scale += v * v;
        }
    }
    scale = std::sqrt(scale / (b - a));

    // global scale and raw magnitude, for the fixed-point test: a window
    // whose residual motion is negligible against the whole trajectory (a
    // decayed transient) sits at a fixed point even if that motion is not
    // small relative to itself
    std::vector<double> gmean(traj.dim, 0.0);
    double value_rms = 0.0;
    for (int t = 0; t < traj.steps; ++t) {
        const double* x = traj.row(t);
        for (int d = 0; d < traj.dim; ++d) {
            gmean[d] += x[d] / traj.steps;
            value_rms += x[d] * x[d];
        }
    }
    value_rms = std::sqrt(value_rms / traj.steps);
    double global_scale = 0.0;
    for (int t = 0; t < traj.steps; ++t) {
        const double* x = traj.row(t);
        for (int d = 0; d < traj.dim; ++d) {
            const double v = x[d] - gmean[d];
            global_scale += v * v;
        }
    }
    global_scale = std::sqrt(global_scale / traj.steps);

    double max_step = 0.0;
    for (int t = a; t + 1 < b; ++t) max_step = std::max(max_step, row_distance(traj, t, t + 1));
    if (global_scale < 1e-9 * std::max(value_rms, 1.0) ||
        max_step <= opt.eps_fix * std::max(global_scale, 1e-12)) {
        verdict.kind = AttractorKind::FixedPoint;
        return verdict;
    }

    // a cycle is stationary across the window; drift and decay are not
    {
        const int half = (b - a) / 2;
        double shift = 0.0;
        for (int d = 0; d < traj.dim; ++d) {
            double m1 = 0.0, m2 = 0.0;
            for (int t = a; t < a + half; ++t) m1 += traj.row(t)[d] / half;
            for (int t = b - half; t < b; ++t) m2 += traj.row(t)[d] / half;
            shift += (m1 - m2) * (m1 - m2);
        }
        if (std::sqrt(shift) > 0.25 * scale) return verdict;  // None
    }

    const int max_period = (b - a) / 2;
    for (int p = opt.min_period; p <= max_period; ++p) {
        double dist = 0.0;
        int count = 0;
        for (int t = a; t + p < b; ++t) {
            dist += row_distance(traj, t, t + p);
            ++count;
        }
        dist /= count;
        const double normalized = dist / std::max(scale, 1e-12);
        if (normalized < opt.eps_recur) {
            // reject slow drift: one period must traverse a real excursion
            double arc = 0.0;
            for (int t = a; t < a + p; ++t) arc += row_distance(traj, t, t + 1);
            if (arc >= std::max(4.0 * dist, 0.1 * scale)) {
                verdict.kind = AttractorKind::LimitCycle;
                verdict.period = p;
                verdict.recurrence = normalized;
                return verdict;
            }
        }
    }
    return verdict;
}

// -------------------------------------------------------------------- census

double pixel_fidelity(const std::vector<std::vector<double>>& frames, const FrameSequence& target,
                      size_t npix) {
    if (frames.empty()) return -1.0;
    // one cycle of the target: detect its own period on the pixel trajectory,
    // scanning the whole sequence
    TrajectoryRecord ttraj;
    ttraj.steps = target.frames();
    ttraj.dim = static_cast<int>(npix);
    ttraj.data = target.data;
    AttractorOptions topt;
    topt.late_begin = 0;
    topt.late_end = ttraj.steps;
    topt.eps_recur = 0.2;  // rasterized cycles with non-integer periods recur approximately
    const AttractorVerdict tv = detect_attractor(ttraj, topt);
    const int period = tv.kind == AttractorKind::LimitCycle
                           ? tv.period
                           : std::min(target.frames(), 25);

    // The true period is generally not an integer, so a single global phase
    // alignment drifts across a long window. Align each period-length chunk
    // independently instead; a frozen output still fails because the
    // reference cycles within every chunk.
    const int chunks = static_cast<int>(frames.size()) / period;
    if (chunks == 0) {
        double best = -1.0;
        for (int phase = 0; phase < period; ++phase) {
            double mse = 0.0;
            for (size_t t = 0; t < frames.size(); ++t) {
                const double* o = frames[t].data();
                const double* g = target.frame(static_cast<int>((phase + t) % period));
                double e = 0.0;
                for (size_t i = 0; i < npix; ++i) {
                    const double d = o[i] - g[i];
                    e += d * d;
                }
                mse += e / static_cast<double>(npix);
            }
            mse /= static_cast<double>(frames.size());
            if (best < 0 || mse < best) best = mse;
        }
        return best;
    }
    double total = 0.0;
    for (int c = 0; c < chunks; ++c) {
        double best = -1.0;
        for (int phase = 0; phase < period; ++phase) {
            double mse = 0.0;
            for (int t = 0; t < period; ++t) {
                const double* o = frames[static_cast<size_t>(c) * period + t].data();
                const double* g = target.frame((phase + t) % period);
                double e = 0.0;
                for (size_t i = 0; i < npix; ++i) {
                    const double d = o[i] - g[i];
                    e += d * d;
                }
                mse += e / static_cast<double>(npix);
            }
            mse /= period;
            if (best < 0 || mse < best) best = mse;
        }
        total += best;
    }
    return total / chunks;
}

namespace {

// RMS distance between two output cycles under the best phase alignment,
// relative to the first cycle's RMS amplitude.
double cycle_distance(const std::vector<std::vector<double>>& a,
                      const std::vector<std::vector<double>>& b, size_t npix) {
    const size_t L = std::min(a.size(), b.size());
    double best = -1.0;
    for (size_t phase = 0; phase < L; ++phase) {
        double acc = 0.0;
        for (size_t t = 0; t < L; ++t) {
            const double* x = a[t].data();
            const double* y = b[(t + phase) % L].data();
            for (size_t i = 0; i < npix; ++i) {
                const double d = x[i] - y[i];
                acc += d * d;
            }
        }
        acc = std::sqrt(acc / (L * npix));
        if (best < 0 || acc < best) best = acc;
    }
    double amp = 0.0;
    std::vector<double> mean(npix, 0.0);
    for (const auto& f : a) {
        for (size_t i = 0; i < npix; ++i) mean[i] += f[i] / a.size();
    }
    for (const auto& f : a) {
        for (size_t i = 0; i < npix; ++i) {
            const double v = f[i] - mean[i];
            amp += v * v;
        }
    }
    amp = std::sqrt(amp / (a.size() * npix));
    return best / std::max(amp, 1e-9);
}

}  // namespace

CensusReport attractor_census(const ShapePlan& plan, const ParamSet& params,
                              const std::vector<FrameSequence>& dataset, const CensusOptions& opt) {
    if (params.initial_states.size() != dataset.size()) {
        throw TopologyError("attractor_census: initial state / sequence count mismatch");
    }
    const size_t npix = static_cast<size_t>(plan.input_size.h) * plan.input_size.w;
    const int layer = opt.analysis_layer;
    const bool use_cm = plan.layers[layer - 1].cm_count > 0;

    CensusReport report;
    std::vector<std::vector<std::vector<double>>> cycles(dataset.size());

    for (size_t s = 0; s < dataset.size(); ++s) {
        Workspace ws;
        // one rollout streaming both the analyzed map set and the outputs
        TrajectoryRecord rec;
        rec.steps = opt.rollout_steps + 1;
        const MapStack& probe = use_cm ? params.initial_states[s].layers[layer - 1].cm_act
                                       : params.initial_states[s].layers[layer - 1].fm_act;
        rec.dim = static_cast<int>(probe.size());
        rec.data.resize(static_cast<size_t>(rec.steps) * rec.dim);
        std::vector<std::vector<double>> outputs(rec.steps);

        RolloutOptions ropt;
        ropt.mode = InputMode::Closed;
        ropt.steps = opt.rollout_steps;
        ropt.observer = [&](int t, const NetworkState& state, const MapStack& out) {
            const MapStack& src =
                use_cm ? state.layers[layer - 1].cm_act : state.layers[layer - 1].fm_act;
            std::memcpy(rec.row(t), src.data(), sizeof(double) * rec.dim);
            outputs[t].assign(out.data(), out.data() + npix);
        };
        rollout(plan, params, params.initial_states[s], ropt, ws);

        SequenceVerdict sv;
        sv.sequence = static_cast<int>(s);
        bool finite = true;
        for (double v : rec.data) finite &= std::isfinite(v) != 0;
        if (finite) {
            sv.verdict = detect_attractor(rec, opt.attractor);
        }
        if (sv.verdict.kind == AttractorKind::LimitCycle) {
            // the pixel-level generation must itself cycle and keep tracking
            // the target pattern
            TrajectoryRecord otraj;
            otraj.steps = rec.steps;
            otraj.dim = static_cast<int>(npix);
            otraj.data.resize(static_cast<size_t>(otraj.steps) * npix);
            for (int t = 0; t < otraj.steps; ++t) {
                std::memcpy(otraj.row(t), outputs[t].data(), sizeof(double) * npix);
            }
            const AttractorVerdict ov = detect_attractor(otraj, opt.attractor);

            int a = opt.attractor.late_begin, b = opt.attractor.late_end;
            if (rec.steps < opt.attractor.late_end) {
                a = static_cast<int>(0.7 * rec.steps);
                b = rec.steps;
            }
            std::vector<std::vector<double>> late(outputs.begin() + a, outputs.begin() + b);
            sv.verdict.pixel_fidelity = pixel_fidelity(late, dataset[s], npix);
            sv.embeds_target = ov.kind == AttractorKind::LimitCycle &&
                               sv.verdict.pixel_fidelity >= 0 &&
                               sv.verdict.pixel_fidelity < opt.fidelity_bound;
            if (sv.embeds_target) {
                const int p = ov.period;
                cycles[s].assign(outputs.begin() + a, outputs.begin() + std::min(b, a + p));
            }
        }
        report.sequences.push_back(sv);
    }

    // deduplicate embedding attractors by phase-aligned cycle distance
    std::vector<int> group(dataset.size(), -1);
    int next_group = 0;
    for (size_t i = 0; i < dataset.size(); ++i) {
        if (!report.sequences[i].embeds_target) continue;
        for (size_t j = 0; j < i; ++j) {
            if (!report.sequences[j].embeds_target || group[j] < 0) continue;
            const int pi = static_cast<int>(cycles[i].size());
            const int pj = static_cast<int>(cycles[j].size());
            if (std::fabs(pi - pj) > 1 + 0.15 * std::min(pi, pj)) continue;
            if (cycle_distance(cycles[i], cycles[j], npix) < opt.merge_eps) {
                group[i] = group[j];
                break;
            }
        }
        if (group[i] < 0) group[i] = next_group++;
        report.sequences[i].group = group[i];
    }
    report.distinct_attractors = next_group;
    return report;
}

}  // namespace pmnet
