// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Training-dependent criteria share three seeded toy runs (plus
// single-subject counterparts) prepared once under the work directory.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "pmnet/analysis.hpp"
#include "pmnet/cli.hpp"
#include "pmnet/learner.hpp"
#include "pmnet/movegen.hpp"
#include "pmnet/regression.hpp"

namespace fs = std::filesystem;
using namespace pmnet;

namespace {

// ---------------------------------------------------------------- reporting

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- toy setup

// Dataset: two whole-body primitives by two subjects at the pinned toy scale.
// Data is identical across seeds; only parameter inits differ.
constexpr int kPrimitives[2] = {2, 6};
constexpr int kTrainSubjects[2] = {1, 2};
constexpr int kUnseenSubject = 3;
constexpr uint64_t kDataSeed = 101;
constexpr double kPeriod = 25.0;
constexpr int kCycles = 4;
constexpr Extent2 kFrame{16, 16};

int g_epoch_budget = 3000;
constexpr double kTerminationThreshold = 0.015;
constexpr double kConvergenceTarget = 0.02;  // criterion 3
const std::vector<int> kCheckpointEpochs = {30, 300, 1000};
constexpr uint64_t kSeeds[3] = {1, 2, 3};

TrainSpec toy_train_spec(uint64_t seed) {
    TrainSpec spec;
    spec.lookahead = 2;
    spec.alpha = 0.65;
    spec.learning_rate = 0.05;
    spec.epochs_max = g_epoch_budget;
    spec.closed_loop_error_threshold = kTerminationThreshold;
    spec.checkpoint_epochs = kCheckpointEpochs;
    spec.seed = seed;
    spec.mix_backprop = false;  // blend each epoch's recorded closed outputs
    spec.threads = 2;
    spec.quiet = true;
    return spec;
}

std::vector<FrameSequence> make_dataset(const std::vector<int>& subjects) {
    std::vector<FrameSequence> ds;
    for (int pid : kPrimitives) {
        for (int subj : subjects) {
            ds.push_back(generate_primitive(pid, make_subject(subj, kDataSeed), kCycles, kPeriod,
                                            kFrame));
        }
    }
    return ds;
}

// switching stream over the trained primitives, demonstrated by an unseen
// subject: the desk-scale switch test
FrameSequence make_switch_stream(std::vector<int>* boundaries) {
    const std::vector<ScriptEntry> script = {{kPrimitives[0], 3}, {kPrimitives[1], 3},
                                             {kPrimitives[0], 3}};
    return generate_script(script, make_subject(kUnseenSubject, kDataSeed), kPeriod, kFrame,
                           boundaries);
}

struct SeedRun {
    uint64_t seed = 0;
    std::vector<std::pair<int, fs::path>> checkpoints;  // (epoch, path), final last
    double train_seconds = 0.0;
    int final_epoch = 0;
    double final_closed = 0.0;
    bool reached_target = false;
};

SeedRun train_run(const fs::path& dir, uint64_t seed, const std::vector<FrameSequence>& dataset,
                  const NetworkConfig& cfg, const ShapePlan& plan) {
    SeedRun run;
    run.seed = seed;
    fs::create_directories(dir);

    ParamSet params = init_params(plan, seed, static_cast<int>(dataset.size()));
    TrainSpec spec = toy_train_spec(seed);
    const auto t0 = std::chrono::steady_clock::now();
    double best_closed = std::numeric_limits<double>::infinity();
    auto save = [&](Checkpoint& ck, bool is_final) {
        char name[48];
        if (is_final) std::snprintf(name, sizeof(name), "ckpt-final.pmn");
        else std::snprintf(name, sizeof(name), "ckpt-%06d.pmn", ck.epoch);
        const fs::path path = dir / name;
        save_checkpoint(path.string(), ck);
        run.checkpoints.emplace_back(ck.epoch, path);
        if (is_final) {
            run.final_epoch = ck.epoch;
            run.final_closed = ck.closed_mse;
        }
    };
    train(plan, cfg, params, dataset, spec, save, [&](const EpochStats& st) {
        best_closed = std::min(best_closed, st.closed_mse);
    });
    run.train_seconds = seconds_since(t0);
    run.reached_target = best_closed < kConvergenceTarget;
    return run;
}

// ------------------------------------------------------------ criteria 1-2

void criterion_1_gradcheck() {
    const auto t0 = std::chrono::steady_clock::now();
    const GradcheckResult r = run_gradcheck(builtin_config("toy"), 12345, 10, 6, 1e-4);
    const double secs = seconds_since(t0);
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "%d samples across every parameter class, max rel err %.3g, %.1f s", r.checked,
                  r.max_rel_err, secs);
    report(1, r.pass && secs < 120.0, "gradient check vs central finite differences", detail);
}

void criterion_2_topology() {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    const NetworkConfig base = builtin_config("paper");
    try {
        const ShapePlan plan = validate_config(base);
        const int fm[6] = {32, 26, 20, 12, 2, 1};
        for (int l = 0; l < 6; ++l) {
            if (plan.layers[l].fm_size.h != fm[l] || plan.layers[l].fm_size.w != fm[l]) pass = false;
        }
        for (int l = 0; l + 1 < 6; ++l) {
            if (!(plan.layers[l].cm_size == plan.layers[l + 1].fm_size)) pass = false;
        }
        if (plan.input_size.h != 36) pass = false;
    } catch (const TopologyError&) {
        pass = false;
    }
    int rejected = 0, tried = 0;
    for (int l = 0; l < 6; ++l) {
        for (int delta : {-1, +1}) {
            for (int field = 0; field < 2; ++field) {
                NetworkConfig cfg = base;
                Extent2& target = field == 0 ? cfg.layers[l].fm_size : cfg.layers[l].cm_size;
                target.h += delta;
                target.w += delta;
                ++tried;
                try {
                    validate_config(cfg);
                } catch (const TopologyError&) {
                    ++rejected;
                }
            }
        }
    }
    const double secs = seconds_since(t0);
    if (rejected != tried) pass = false;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "FM chain 36>32>26>20>12>2>1, CM(l)=FM(l+1), %d/%d size perturbations rejected, %.2f s",
                  rejected, tried, secs);
    report(2, pass && secs < 1.0, "full-size topology validation", buf);
}

// --------------------------------------------------------------- criterion 9

void criterion_9_degeneracy() {
    const NetworkConfig cfg = builtin_config("toy");
    const ShapePlan plan = validate_config(cfg);
    Workspace ws;
    bool pass = true;
    std::string which;

    // (a) alpha=1 training gradients identical to the pure open-loop path
    {
        ParamSet p = init_params(plan, 31, 1);
        Rng rng(32);
        for (auto& layer : p.initial_states[0].layers) {
            for (size_t i = 0; i < layer.fm_hat.size(); ++i)
                layer.fm_hat.data()[i] = rng.uniform(-0.4, 0.4);
            for (size_t i = 0; i < layer.cm_hat.size(); ++i)
                layer.cm_hat.data()[i] = rng.uniform(-0.4, 0.4);
        }
        refresh_activations(p.initial_states[0]);
        FrameSequence data(plan.input_size.h, plan.input_size.w);
        for (int t = 0; t < 14; ++t) {
            std::vector<double> f(data.pixels());
            for (double& v : f) v = rng.uniform(-0.9, 0.9);
            data.append(f.data());
        }
        TrainSpec spec;
        spec.alpha = 1.0;
        Gradients gm = bptt(plan, p, 0, data, spec, ws);

        RolloutOptions opt;
        opt.mode = InputMode::Open;
        opt.data = &data;
        opt.steps = data.frames() - spec.lookahead;
        opt.record_states = true;
        Tape tape = rollout(plan, p, p.initial_states[0], opt, ws);
        const size_t npix = data.pixels();
        std::vector<MapStack> ograds(opt.steps + 1);
        const double scale = 2.0 / ((opt.steps + 1) * static_cast<double>(npix));
        for (int t = 0; t <= opt.steps; ++t) {
            ograds[t] = MapStack(1, plan.input_size.h, plan.input_size.w);
            for (size_t i = 0; i < npix; ++i) {
                ograds[t].data()[i] =
                    scale * (tape.outputs[t].data()[i] - data.frame(t + spec.lookahead - 1)[i]);
            }
        }
        BackwardOptions bopt;
        Gradients go = backward_pass(plan, p, tape, ograds, bopt, ws);
        for (size_t i = 0; i < gm.k_if.size() && pass; ++i)
            pass &= gm.k_if.data()[i] == go.k_if.data()[i];
        for (size_t i = 0; i < gm.k_fo.size() && pass; ++i)
            pass &= gm.k_fo.data()[i] == go.k_fo.data()[i];
        pass &= gm.b_o == go.b_o;
        for (size_t l = 0; l < gm.layers.size() && pass; ++l) {
            for (size_t i = 0; i < gm.layers[l].w_cc.size() && pass; ++i)
                pass &= gm.layers[l].w_cc.data()[i] == go.layers[l].w_cc.data()[i];
        }
        if (!pass) which = "alpha=1 open-loop equivalence";
    }

    // (b) tau=1 removes state memory exactly
    if (pass) {
        NetworkConfig c1 = cfg;
        for (auto& l : c1.layers) l.tau = 1.0;
        const ShapePlan p1 = validate_config(c1);
        ParamSet p = init_params(p1, 17, 1);
        Rng rng(5);
        NetworkState a = make_state(p1);
        for (auto& layer : a.layers) {
            for (size_t i = 0; i < layer.fm_hat.size(); ++i) layer.fm_hat.data()[i] = rng.uniform(-2, 2);
            for (size_t i = 0; i < layer.cm_hat.size(); ++i) layer.cm_hat.data()[i] = rng.uniform(-2, 2);
        }
        refresh_activations(a);
        NetworkState b = a;
        for (auto& layer : b.layers) {
            for (size_t i = 0; i < layer.fm_hat.size(); ++i) layer.fm_hat.data()[i] = rng.uniform(-2, 2);
            for (size_t i = 0; i < layer.cm_hat.size(); ++i) layer.cm_hat.data()[i] = rng.uniform(-2, 2);
        }
        std::vector<double> frame(static_cast<size_t>(p1.input_size.h) * p1.input_size.w);
        for (double& v : frame) v = rng.uniform(-1, 1);
        NetworkState na, nb;
        MapStack oh, oa, obh, ob;
        step_forward(p1, p, a, frame.data(), na, oh, oa, ws);
        step_forward(p1, p, b, frame.data(), nb, obh, ob, ws);
        for (size_t l = 0; l < na.layers.size() && pass; ++l) {
            for (size_t i = 0; i < na.layers[l].fm_hat.size() && pass; ++i)
                pass &= na.layers[l].fm_hat.data()[i] == nb.layers[l].fm_hat.data()[i];
            for (size_t i = 0; i < na.layers[l].cm_hat.size() && pass; ++i)
                pass &= na.layers[l].cm_hat.data()[i] == nb.layers[l].cm_hat.data()[i];
        }
        if (!pass) which = "tau=1 memoryless step";
    }

    // (c) threshold = +inf makes er_step adaptation-free pure closed-loop
    if (pass) {
        ParamSet p = init_params(plan, 7, 1);
        RegressionConfig rc;
        rc.threshold = std::numeric_limits<double>::infinity();
        RegressionEngine engine(plan, p, rc);
        RolloutOptions opt;
        opt.mode = InputMode::Closed;
        opt.steps = 25;
        const Tape ref = rollout(plan, p, make_state(plan), opt, ws);
        const FrameSequence probe = make_dataset({1})[0];
        for (int t = 0; t < 25 && pass; ++t) {
            const auto r = engine.er_step(probe.frame(t));
            pass &= r.iterations_used == 0;
            for (size_t i = 0; i < probe.pixels() && pass; ++i) {
                pass &= std::fabs(r.prediction[i] - ref.outputs[t + 1].data()[i]) < 1e-12;
            }
        }
        if (!pass) which = "threshold=inf adaptation-free er_step";
    }

    // (d) zero loss implies exactly zero gradients
    if (pass) {
        ParamSet p = zero_params(plan, 1);
        FrameSequence data(plan.input_size.h, plan.input_size.w);
        std::vector<double> zeros(data.pixels(), 0.0);
        for (int t = 0; t < 12; ++t) data.append(zeros.data());
        TrainSpec spec;
        Gradients g = bptt(plan, p, 0, data, spec, ws);
        double acc = std::fabs(g.b_o) + g.loss;
        for (size_t i = 0; i < g.k_if.size(); ++i) acc += std::fabs(g.k_if.data()[i]);
        for (size_t i = 0; i < g.k_fo.size(); ++i) acc += std::fabs(g.k_fo.data()[i]);
        for (const auto& l : g.layers) {
            for (size_t i = 0; i < l.w_cc.size(); ++i) acc += std::fabs(l.w_cc.data()[i]);
            for (size_t i = 0; i < l.k_fc.size(); ++i) acc += std::fabs(l.k_fc.data()[i]);
            for (double v : l.fm_bias) acc += std::fabs(v);
        }
        for (const auto& l : g.initial_state.layers) {
            for (size_t i = 0; i < l.fm_hat.size(); ++i) acc += std::fabs(l.fm_hat.data()[i]);
            for (size_t i = 0; i < l.cm_hat.size(); ++i) acc += std::fabs(l.cm_hat.data()[i]);
        }
        pass &= acc == 0.0;
        if (!pass) which = "zero-loss zero-gradient";
    }

    report(9, pass, "degeneracy suite (alpha=1, tau=1, threshold=inf, zero-loss)",
           pass ? "all exact" : "failed: " + which);
}

// -------------------------------------------------------------- criterion 10

void criterion_10_roundtrips(const fs::path& work) {
    bool pass = true;
    std::string which;
    const fs::path dir = work / "roundtrip";
    fs::create_directories(dir);

    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };

    {
        const FrameSequence seq = make_dataset({1})[0];
        save_pmv((dir / "a.pmv").string(), seq);
        const FrameSequence loaded = load_pmv((dir / "a.pmv").string());
        pass &= loaded.data == seq.data;
        save_pmv((dir / "b.pmv").string(), loaded);
        pass &= slurp(dir / "a.pmv") == slurp(dir / "b.pmv");
        if (!pass) which = "PMV round-trip";
    }

    if (pass) {
        const NetworkConfig cfg = builtin_config("toy");
        const ShapePlan plan = validate_config(cfg);
        Checkpoint ck;
        ck.epoch = 123;
        ck.open_mse = 0.5;
        ck.closed_mse = 0.7;
        ck.config = cfg;
        ck.params = init_params(plan, 77, 2);
        save_checkpoint((dir / "a.pmn").string(), ck);
        Checkpoint loaded = load_checkpoint((dir / "a.pmn").string());
        save_checkpoint((dir / "b.pmn").string(), loaded);
        pass &= slurp(dir / "a.pmn") == slurp(dir / "b.pmn");
        if (!pass) which = "checkpoint round-trip";
    }

    if (pass) {
        cli::GenDataArgs gen;
        gen.script = "P2";
        gen.subjects = 1;
        gen.seed = 9;
        gen.size = 16;
        gen.cycles = 2;
        for (const char* sub : {"g1", "g2"}) {
            gen.out_dir = (dir / sub).string();
            cli::cmd_gen_data(gen);
        }
        pass &= slurp(dir / "g1" / "P2x2_s1.pmv") == slurp(dir / "g2" / "P2x2_s1.pmv");

        cli::TrainArgs ta;
        ta.config = "toy";
        ta.data = {(dir / "g1").string()};
        ta.spec.epochs_max = 4;
        ta.spec.learning_rate = 0.02;
        ta.spec.seed = 3;
        ta.spec.threads = 2;
        ta.spec.quiet = true;
        for (const char* sub : {"t1", "t2"}) {
            ta.out_dir = (dir / sub).string();
            cli::cmd_train(ta);
        }
        pass &= slurp(dir / "t1" / "ckpt-final.pmn") == slurp(dir / "t2" / "ckpt-final.pmn");
        pass &= slurp(dir / "t1" / "ckpt-final.pmn.mse.csv") ==
                slurp(dir / "t2" / "ckpt-final.pmn.mse.csv");
        if (!pass) which = "fixed-seed end-to-end rerun";
    }

    report(10, pass, "bit-exact round-trips and reproducible reruns",
           pass ? "PMV, checkpoint and end-to-end reruns identical" : "failed: " + which);
}

struct SeedArtifacts {
    SeedRun multi;
    SeedRun single;
    std::vector<CensusReport> census;         // per multi checkpoint
    std::vector<double> er_mean;              // per multi checkpoint
    std::vector<double> entrain_mean;         // per multi checkpoint
    std::vector<ImitationReport> er_reports;  // per multi checkpoint
    double single_er_mean = -1.0;
};

}  // namespace

int main(int argc, char** argv) {
    fs::path work = "acceptance-artifacts";
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--work") == 0 && i + 1 < argc) work = argv[++i];
        if (std::strcmp(argv[i], "--epochs") == 0 && i + 1 < argc)
            g_epoch_budget = std::atoi(argv[++i]);
    }
    fs::remove_all(work);
    fs::create_directories(work);

    std::printf("acceptance suite, work dir %s, epoch budget %d\n", work.string().c_str(),
                g_epoch_budget);
    criterion_1_gradcheck();
    criterion_2_topology();
    criterion_9_degeneracy();
    criterion_10_roundtrips(work);

    // --- shared toy training runs -------------------------------------------
    const NetworkConfig cfg = builtin_config("toy");
    const ShapePlan plan = validate_config(cfg);
    const std::vector<FrameSequence> multi_ds =
        make_dataset({kTrainSubjects[0], kTrainSubjects[1]});
    const std::vector<FrameSequence> single_ds = make_dataset({kTrainSubjects[0]});
    std::vector<int> switch_boundaries;
    const FrameSequence switch_stream = make_switch_stream(&switch_boundaries);

    std::vector<SeedArtifacts> seeds(3);
    for (int k = 0; k < 3; ++k) {
        const uint64_t seed = kSeeds[k];
        std::printf("-- seed %llu: training (multi, then single-subject)...\n",
                    static_cast<unsigned long long>(seed));
        std::fflush(stdout);
        seeds[k].multi = train_run(work / ("seed" + std::to_string(seed)) / "multi", seed,
                                   multi_ds, cfg, plan);
        seeds[k].single = train_run(work / ("seed" + std::to_string(seed)) / "single", seed,
                                    single_ds, cfg, plan);
        std::printf("   multi: %d epochs, closed %.4f, %.0f s; single: %d epochs, closed %.4f\n",
                    seeds[k].multi.final_epoch, seeds[k].multi.final_closed,
                    seeds[k].multi.train_seconds, seeds[k].single.final_epoch,
                    seeds[k].single.final_closed);
        std::fflush(stdout);
    }

    // --- criterion 3: convergence ---------------------------------------------
    {
        int ok = 0;
        bool time_ok = true;
        std::string detail;
        for (const auto& s : seeds) {
            if (s.multi.reached_target) ++ok;
            if (s.multi.train_seconds > 1800.0) time_ok = false;
            char buf[96];
            std::snprintf(buf, sizeof(buf), "seed %llu: %.4f@%d in %.0fs; ",
                          static_cast<unsigned long long>(s.multi.seed), s.multi.final_closed,
                          s.multi.final_epoch, s.multi.train_seconds);
            detail += buf;
        }
        report(3, ok >= 2 && time_ok, "toy training reaches closed-loop MSE < 0.02",
               detail + std::to_string(ok) + "/3 seeds");
    }

    // --- censuses for criteria 4 and 5 ----------------------------------------
    for (auto& s : seeds) {
        for (const auto& [epoch, path] : s.multi.checkpoints) {
            const Checkpoint ck = load_checkpoint(path.string());
            s.census.push_back(attractor_census(plan, ck.params, multi_ds, {}));
            (void)epoch;
        }
    }

    // --- criterion 4: census trend ---------------------------------------------
    {
        int ok = 0;
        std::string detail;
        for (const auto& s : seeds) {
            const size_t n = s.multi.checkpoints.size();
            std::string counts;
            for (size_t i = 0; i < n; ++i) {
                counts += std::to_string(s.census[i].distinct_attractors);
                if (i + 1 < n) counts += ",";
            }
            bool pass = false;
            if (n >= 2) {
                const int early = s.census.front().distinct_attractors;
                const int final_count = s.census.back().distinct_attractors;
                const int mid = s.census[n - 2].distinct_attractors;
                pass = early == 0 && mid >= 1 && final_count >= mid;
            }
            if (pass) ++ok;
            detail += "seed " + std::to_string(s.multi.seed) + ": [" + counts + "]; ";
        }
        report(4, ok >= 2, "attractor census: 0 early, >= 1 mid, non-decreasing to final",
               detail + std::to_string(ok) + "/3 seeds");
    }

    // --- criterion 5: transient-memory reproduction -----------------------------
    {
        int ok = 0;
        std::string detail;
        for (const auto& s : seeds) {
            int idx = -1;  // latest non-final checkpoint with a zero census
            for (size_t i = 0; i + 1 < s.multi.checkpoints.size(); ++i) {
                if (s.census[i].distinct_attractors == 0) idx = static_cast<int>(i);
            }
            if (idx < 0) {
                detail += "seed " + std::to_string(s.multi.seed) + ": no zero-census checkpoint; ";
                continue;
            }
            const Checkpoint ck = load_checkpoint(s.multi.checkpoints[idx].second.string());
            const double converged = s.multi.final_closed;
            bool all_early_match = true;
            bool all_late_fail = true;
            Workspace ws;
            for (size_t q = 0; q < multi_ds.size(); ++q) {
                RolloutOptions opt;
                opt.mode = InputMode::Closed;
                opt.steps = 50;
                const Tape tape = rollout(plan, ck.params, ck.params.initial_states[q], opt, ws);
                double mse = 0.0;
                const size_t npix = multi_ds[q].pixels();
                for (int t = 1; t <= opt.steps; ++t) {
                    double e = 0.0;
                    for (size_t i = 0; i < npix; ++i) {
                        const double d = tape.outputs[t].data()[i] - multi_ds[q].frame(t + 1)[i];
                        e += d * d;
                    }
                    mse += e / npix / opt.steps;
                }
                if (mse >= 2.0 * converged) all_early_match = false;
                if (s.census[idx].sequences[q].embeds_target) all_late_fail = false;
            }
            const bool pass = all_early_match && all_late_fail;
            if (pass) ++ok;
            char buf[128];
            std::snprintf(buf, sizeof(buf), "seed %llu@ep%d: early%s late%s; ",
                          static_cast<unsigned long long>(s.multi.seed),
                          s.multi.checkpoints[idx].first, all_early_match ? "+" : "-",
                          all_late_fail ? "+" : "-");
            detail += buf;
        }
        report(5, ok >= 2, "transient dynamics regenerate targets early while late fidelity fails",
               detail + std::to_string(ok) + "/3 seeds");
    }

    // --- imitation runs for criteria 6-8 -----------------------------------------
    for (auto& s : seeds) {
        for (const auto& [epoch, path] : s.multi.checkpoints) {
            const Checkpoint ck = load_checkpoint(path.string());
            RegressionConfig rc;
            rc.window = 20;
            rc.iterations_per_step = 100;
            rc.adaptation_rate = 0.1;
            rc.threshold = 0.5 * ck.closed_mse;
            ImitationReport er =
                run_imitation(plan, ck.params, switch_stream, ImitationMode::ErrorRegression, rc);
            const ImitationReport en =
                run_imitation(plan, ck.params, switch_stream, ImitationMode::Entrainment, rc);
            s.er_mean.push_back(er.mean_mse);
            s.entrain_mean.push_back(en.mean_mse);
            s.er_reports.push_back(std::move(er));
            (void)epoch;
        }
        const Checkpoint single_ck = load_checkpoint(s.single.checkpoints.back().second.string());
        RegressionConfig rc;
        rc.window = 20;
        rc.iterations_per_step = 100;
        rc.adaptation_rate = 0.1;
        rc.threshold = 0.5 * single_ck.closed_mse;
        s.single_er_mean = run_imitation(plan, single_ck.params, switch_stream,
                                         ImitationMode::ErrorRegression, rc)
                               .mean_mse;
        std::printf("-- seed %llu imitation done\n",
                    static_cast<unsigned long long>(s.multi.seed));
        std::fflush(stdout);
    }

    // --- criterion 6: error regression beats entrainment --------------------------
    {
        int ok = 0;
        std::string detail;
        for (const auto& s : seeds) {
            bool strict = true;
            std::string pairs;
            for (size_t i = 0; i < s.er_mean.size(); ++i) {
                if (!(s.er_mean[i] < s.entrain_mean[i])) strict = false;
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.3f|%.3f ", s.er_mean[i], s.entrain_mean[i]);
                pairs += buf;
            }
            if (strict) ++ok;
            detail += "seed " + std::to_string(s.multi.seed) + ": " + pairs + "; ";
        }
        report(6, ok >= 2, "error regression beats entrainment at every saved checkpoint",
               detail + std::to_string(ok) + "/3 seeds (er|entrain)");
    }

    // --- criterion 7: switch spike and recovery ------------------------------------
    {
        int ok = 0;
        std::string detail;
        const int W = 20;
        for (const auto& s : seeds) {
            const ImitationReport& er = s.er_reports.back();  // final checkpoint
            const int b = switch_boundaries.front();
            double pre = 0.0;
            int pre_n = 0;
            for (int t = std::max(0, b - W); t < b; ++t) {
                if (er.rows[t].window_mse >= 0) {
                    pre += er.rows[t].window_mse;
                    ++pre_n;
                }
            }
            pre = pre_n ? pre / pre_n : 0.0;
            double spike = 0.0;
            int spike_at = b;
            for (int t = b; t < std::min<int>(b + W, er.rows.size()); ++t) {
                if (er.rows[t].window_mse > spike) {
                    spike = er.rows[t].window_mse;
                    spike_at = t;
                }
            }
            bool recovered = false;
            for (int t = spike_at; t < std::min<int>(b + 2 * W, er.rows.size()); ++t) {
                if (er.rows[t].window_mse >= 0 && er.rows[t].window_mse < 1.5 * pre) {
                    recovered = true;
                    break;
                }
            }
            const bool pass = pre > 0 && spike > 3.0 * pre && recovered;
            if (pass) ++ok;
            char buf[128];
            std::snprintf(buf, sizeof(buf), "seed %llu: pre %.4f spike %.4f rec%s; ",
                          static_cast<unsigned long long>(s.multi.seed), pre, spike,
                          recovered ? "+" : "-");
            detail += buf;
        }
        report(7, ok >= 2, "window error spikes >3x at a primitive switch and recovers within 2W",
               detail + std::to_string(ok) + "/3 seeds");
    }

    // --- criterion 8: multi- vs single-subject training -----------------------------
    {
        int ok = 0;
        std::string detail;
        for (const auto& s : seeds) {
            const double multi_mse = s.er_mean.back();
            const bool pass = multi_mse <= s.single_er_mean;
            if (pass) ++ok;
            char buf[96];
            std::snprintf(buf, sizeof(buf), "seed %llu: multi %.4f vs single %.4f; ",
                          static_cast<unsigned long long>(s.multi.seed), multi_mse,
                          s.single_er_mean);
            detail += buf;
        }
        report(8, ok >= 2, "multi-subject training imitates an unseen subject at least as well",
               detail + std::to_string(ok) + "/3 seeds");
    }

    std::printf("%s: %d criterion(s) failed\n",
                g_failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL", g_failures);
    return g_failures == 0 ? 0 : 1;
}
