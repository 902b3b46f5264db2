#include "pmnet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "pmnet/analysis.hpp"
#include "pmnet/movegen.hpp"
#include "pmnet/regression.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pmnet::cli {

namespace {

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw IoError("cannot create output directory '" + path + "': " + ec.message());
}

std::string hash_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for hashing");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

// every run drops a manifest next to its outputs
void write_manifest(const std::string& out_dir, const std::string& command, const json& args,
                    uint64_t seed, const std::vector<std::string>& input_files,
                    const std::vector<std::string>& output_names) {
    json m;
    m["command"] = command;
    m["args"] = args;
    m["seed"] = seed;
    json inputs = json::object();
    for (const std::string& p : input_files) inputs[fs::path(p).filename().string()] = hash_file(p);
    m["inputs"] = inputs;
    m["outputs"] = output_names;
    m["hash"] = "fnv1a64";
    std::ofstream f(fs::path(out_dir) / "manifest.json", std::ios::trunc);
    if (!f) throw IoError("cannot write manifest in '" + out_dir + "'");
    f << m.dump(2) << "\n";
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::string>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write '" + path + "'");
    f << header << "\n";
    for (const std::string& r : rows) f << r << "\n";
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

NetworkConfig load_config_arg(const std::string& arg) {
    if (arg == "toy" || arg == "paper") return builtin_config(arg);
    return load_network_config(arg);
}

}  // namespace

std::vector<std::string> collect_pmv_files(const std::vector<std::string>& paths) {
    std::vector<std::string> files;
    for (const std::string& p : paths) {
        if (fs::is_directory(p)) {
            std::vector<std::string> found;
            for (const auto& entry : fs::directory_iterator(p)) {
                if (entry.path().extension() == ".pmv") found.push_back(entry.path().string());
            }
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        } else {
            files.push_back(p);
        }
    }
    if (files.empty()) throw IoError("no PMV files found");
    return files;
}

std::vector<FrameSequence> load_dataset(const std::vector<std::string>& files) {
    std::vector<FrameSequence> dataset;
    dataset.reserve(files.size());
    for (const std::string& f : files) dataset.push_back(load_pmv(f));
    return dataset;
}

std::vector<std::string> cmd_gen_data(const GenDataArgs& args) {
    if (args.out_dir.empty()) throw IoError("gen-data: output directory required");
    ensure_dir(args.out_dir);
    auto scripts = parse_scripts(args.script, args.period, args.target_frames);
    // bare "PN" tokens default to the requested cycle count
    for (auto& script : scripts) {
        if (script.size() == 1 && script[0].repetitions == 6) {
            script[0].repetitions = args.cycles;
        }
    }
    std::vector<std::string> written;
    for (const auto& script : scripts) {
        for (int s = 0; s < args.subjects; ++s) {
            const int subject_id = args.first_subject + s;
            const SubjectProfile prof = make_subject(subject_id, args.seed);
            const FrameSequence seq =
                generate_script(script, prof, args.period, {args.size, args.size});
            const std::string name =
                script_name(script) + "_s" + std::to_string(subject_id) + ".pmv";
            save_pmv((fs::path(args.out_dir) / name).string(), seq);
            written.push_back(name);
        }
    }
    json jargs = {{"script", args.script},       {"subjects", args.subjects},
                  {"first_subject", args.first_subject}, {"period", args.period},
                  {"cycles", args.cycles},       {"size", args.size}};
    write_manifest(args.out_dir, "gen-data", jargs, args.seed, {}, written);
    return written;
}

TrainOutcome cmd_train(const TrainArgs& args) {
    if (args.out_dir.empty()) throw IoError("train: output directory required");
    ensure_dir(args.out_dir);
    const NetworkConfig cfg = load_config_arg(args.config);
    const ShapePlan plan = validate_config(cfg);
    const std::vector<std::string> files = collect_pmv_files(args.data);
    const std::vector<FrameSequence> dataset = load_dataset(files);
    for (const FrameSequence& seq : dataset) {
        if (seq.height != plan.input_size.h || seq.width != plan.input_size.w) {
            throw TopologyError("train: sequence size " + std::to_string(seq.height) + "x" +
                                std::to_string(seq.width) + " does not match network input");
        }
        if (seq.frames() <= args.spec.lookahead) {
            throw TopologyError("train: sequence shorter than the lookahead");
        }
    }

    ParamSet params = init_params(plan, args.spec.seed, static_cast<int>(dataset.size()));
    TrainOutcome outcome;
    std::vector<std::string> mse_rows;
    const TrainSpec& spec = args.spec;

    auto save = [&](Checkpoint& ck, bool is_final) {
        char name[64];
        if (is_final) {
            std::snprintf(name, sizeof(name), "ckpt-final.pmn");
        } else {
            std::snprintf(name, sizeof(name), "ckpt-%06d.pmn", ck.epoch);
        }
        const std::string path = (fs::path(args.out_dir) / name).string();
        save_checkpoint(path, ck);
        write_csv(path + ".mse.csv", "epoch,open_mse,closed_mse", mse_rows);
        outcome.checkpoints.push_back(name);
    };

    auto on_epoch = [&](const EpochStats& stats) {
        mse_rows.push_back(std::to_string(stats.epoch) + "," + fmt(stats.open_mse) + "," +
                           fmt(stats.closed_mse));
    };
    const TrainResult result = train(plan, cfg, params, dataset, spec, save, on_epoch);

    outcome.final_epoch = result.final_epoch;
    outcome.terminated_early = result.terminated_early;
    outcome.final_closed_mse = result.history.back().closed_mse;

    json jargs = {{"config", args.config},
                  {"spec", serialize_train_spec(spec)},
                  {"data", json(files)}};
    std::vector<std::string> inputs = files;
    if (args.config != "toy" && args.config != "paper") inputs.push_back(args.config);
    if (!args.spec_file.empty()) inputs.push_back(args.spec_file);
    write_manifest(args.out_dir, "train", jargs, spec.seed, inputs, outcome.checkpoints);
    return outcome;
}

void cmd_generate(const GenerateArgs& args) {
    if (args.out_dir.empty()) throw IoError("generate: output directory required");
    ensure_dir(args.out_dir);
    const Checkpoint ck = load_checkpoint(args.checkpoint);
    const ShapePlan plan = validate_config(ck.config);
    if (args.sequence_id < 0 ||
        args.sequence_id >= static_cast<int>(ck.params.initial_states.size())) {
        throw TopologyError("generate: unknown sequence id " + std::to_string(args.sequence_id));
    }

    InputMode mode;
    if (args.mode == "closed") mode = InputMode::Closed;
    else if (args.mode == "open") mode = InputMode::Open;
    else throw TopologyError("generate: mode must be open or closed");

    FrameSequence input;
    int steps = args.steps;
    std::vector<std::string> input_files;
    if (mode == InputMode::Open) {
        input_files = collect_pmv_files(args.data);
        if (args.sequence_id >= static_cast<int>(input_files.size())) {
            throw TopologyError("generate: no input file for sequence id");
        }
        input = load_pmv(input_files[args.sequence_id]);
        if (steps < 0) steps = input.frames() - args.lookahead;
        if (steps > input.frames()) throw TopologyError("generate: steps exceed input length");
    } else if (steps < 0) {
        throw TopologyError("generate: closed-loop mode requires --steps");
    }

    // parse trajectory export selections
    struct Probe {
        int layer;
        MapKind kind;
        std::string name;
    };
    std::vector<Probe> probes;
    std::stringstream ss(args.record);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (token.empty()) continue;
        const auto colon = token.find(':');
        if (colon == std::string::npos) throw TopologyError("generate: bad record spec " + token);
        Probe p;
        p.layer = std::stoi(token.substr(0, colon));
        const std::string kind = token.substr(colon + 1);
        if (kind == "fm") p.kind = MapKind::FM;
        else if (kind == "cm") p.kind = MapKind::CM;
        else if (kind == "out") p.kind = MapKind::Output;
        else throw TopologyError("generate: record kind must be fm, cm or out");
        p.name = (p.kind == MapKind::Output ? "out" : "L" + std::to_string(p.layer) +
                                                          (p.kind == MapKind::FM ? "_fm" : "_cm"));
        probes.push_back(p);
    }

    // single rollout streaming the outputs and every requested trajectory
    std::vector<TrajectoryRecord> recs(probes.size());
    for (size_t i = 0; i < probes.size(); ++i) {
        recs[i].steps = steps + 1;
        if (probes[i].kind == MapKind::Output) {
            recs[i].dim = plan.input_size.h * plan.input_size.w;
        } else {
            if (probes[i].layer < 1 || probes[i].layer > plan.layer_count()) {
                throw TopologyError("generate: no such layer in record spec");
            }
            const LayerPlan& lp = plan.layers[probes[i].layer - 1];
            if (probes[i].kind == MapKind::CM && lp.cm_count == 0) {
                throw TopologyError("generate: layer has no context maps");
            }
            recs[i].dim = probes[i].kind == MapKind::FM
                              ? lp.fm_count * lp.fm_size.h * lp.fm_size.w
                              : lp.cm_count * lp.cm_size.h * lp.cm_size.w;
        }
        recs[i].data.resize(static_cast<size_t>(recs[i].steps) * recs[i].dim);
    }

    FrameSequence generated(plan.input_size.h, plan.input_size.w);
    Workspace ws;
    RolloutOptions opt;
    opt.mode = mode;
    opt.steps = steps;
    opt.lookahead = args.lookahead;
    opt.data = mode == InputMode::Open ? &input : nullptr;
    opt.observer = [&](int t, const NetworkState& state, const MapStack& out) {
        generated.append(out.data());
        for (size_t i = 0; i < probes.size(); ++i) {
            const double* src = probes[i].kind == MapKind::Output
                                    ? out.data()
                                    : (probes[i].kind == MapKind::FM
                                           ? state.layers[probes[i].layer - 1].fm_act.data()
                                           : state.layers[probes[i].layer - 1].cm_act.data());
            std::copy(src, src + recs[i].dim, recs[i].row(t));
        }
    };
    rollout(plan, ck.params, ck.params.initial_states[args.sequence_id], opt, ws);

    std::vector<std::string> outputs;
    const std::string pmv_name = "generated.pmv";
    save_pmv((fs::path(args.out_dir) / pmv_name).string(), generated);
    outputs.push_back(pmv_name);
    for (size_t i = 0; i < probes.size(); ++i) {
        std::string header = "step";
        for (int d = 0; d < recs[i].dim; ++d) header += ",u" + std::to_string(d);
        std::vector<std::string> rows;
        rows.reserve(recs[i].steps);
        for (int t = 0; t < recs[i].steps; ++t) {
            std::string row = std::to_string(t);
            for (int d = 0; d < recs[i].dim; ++d) row += "," + fmt(recs[i].row(t)[d]);
            rows.push_back(std::move(row));
        }
        const std::string name = "traj_" + probes[i].name + ".csv";
        write_csv((fs::path(args.out_dir) / name).string(), header, rows);
        outputs.push_back(name);
    }

    json jargs = {{"checkpoint", args.checkpoint}, {"sequence_id", args.sequence_id},
                  {"mode", args.mode},             {"steps", steps},
                  {"record", args.record}};
    std::vector<std::string> inputs{args.checkpoint};
    inputs.insert(inputs.end(), input_files.begin(), input_files.end());
    write_manifest(args.out_dir, "generate", jargs, 0, inputs, outputs);
}

ImitateOutcome cmd_imitate(const ImitateArgs& args) {
    if (args.out_dir.empty()) throw IoError("imitate: output directory required");
    ensure_dir(args.out_dir);
    const Checkpoint ck = load_checkpoint(args.checkpoint);
    const ShapePlan plan = validate_config(ck.config);
    const FrameSequence target = load_pmv(args.target);
    if (target.height != plan.input_size.h || target.width != plan.input_size.w) {
        throw TopologyError("imitate: target frame size does not match the checkpoint");
    }

    RegressionConfig cfg;
    cfg.window = args.window;
    cfg.iterations_per_step = args.iterations;
    cfg.adaptation_rate = args.rate;
    cfg.lookahead = args.lookahead;
    cfg.threshold = args.threshold >= 0 ? args.threshold : 0.5 * ck.closed_mse;

    ImitationMode mode;
    if (args.mode == "er") mode = ImitationMode::ErrorRegression;
    else if (args.mode == "entrain") mode = ImitationMode::Entrainment;
    else throw TopologyError("imitate: mode must be er or entrain");

    const ImitationReport report = run_imitation(plan, ck.params, target, mode, cfg);

    std::vector<std::string> rows;
    rows.reserve(report.rows.size());
    FrameSequence predictions(plan.input_size.h, plan.input_size.w);
    RegressionEngine replay(plan, ck.params, cfg);  // regenerate frames for the PMV export
    for (const ImitationRow& r : report.rows) {
        rows.push_back(std::to_string(r.step) + "," + fmt(r.window_mse) + "," +
                       fmt(r.prediction_mse) + "," + std::to_string(r.iterations));
    }
    for (int t = 0; t < target.frames(); ++t) {
        const auto r = mode == ImitationMode::ErrorRegression ? replay.er_step(target.frame(t))
                                                              : replay.entrain_step(target.frame(t));
        predictions.append(r.prediction.data());
    }

    const std::string csv_name = "imitation.csv";
    const std::string pmv_name = "predictions.pmv";
    write_csv((fs::path(args.out_dir) / csv_name).string(),
              "step,window_mse,prediction_mse,iterations_used", rows);
    save_pmv((fs::path(args.out_dir) / pmv_name).string(), predictions);

    json jargs = {{"checkpoint", args.checkpoint}, {"target", args.target}, {"mode", args.mode},
                  {"window", args.window},         {"iterations", args.iterations},
                  {"rate", args.rate},             {"threshold", cfg.threshold}};
    write_manifest(args.out_dir, "imitate", jargs, 0, {args.checkpoint, args.target},
                   {csv_name, pmv_name});

    ImitateOutcome outcome;
    outcome.mean_mse = report.mean_mse;
    return outcome;
}

void cmd_analyze(const AnalyzeArgs& args) {
    if (args.out_dir.empty()) throw IoError("analyze: output directory required");
    if (args.checkpoints.empty()) throw IoError("analyze: at least one checkpoint required");
    ensure_dir(args.out_dir);

    std::vector<std::string> outputs;
    const std::vector<std::string> files = collect_pmv_files(args.data);
    const std::vector<FrameSequence> dataset = load_dataset(files);

    if (args.census) {
        std::vector<std::string> rows;
        for (const std::string& ck_path : args.checkpoints) {
            const Checkpoint ck = load_checkpoint(ck_path);
            const ShapePlan plan = validate_config(ck.config);
            CensusOptions opt;
            opt.rollout_steps = args.steps;
            const CensusReport report = attractor_census(plan, ck.params, dataset, opt);
            rows.push_back(std::to_string(ck.epoch) + "," + fmt(ck.closed_mse) + "," +
                           std::to_string(report.distinct_attractors));
        }
        const std::string name = "census.csv";
        write_csv((fs::path(args.out_dir) / name).string(), "epoch,learning_mse,attractor_count",
                  rows);
        outputs.push_back(name);
    }

    if (!args.pca.empty()) {
        std::stringstream ss(args.pca);
        std::string layer_s, kind_s, n_s;
        std::getline(ss, layer_s, ':');
        std::getline(ss, kind_s, ':');
        std::getline(ss, n_s, ':');
        if (layer_s.empty() || kind_s.empty() || n_s.empty()) {
            throw TopologyError("analyze: --pca expects layer:kind:components");
        }
        const int layer = std::stoi(layer_s);
        const int n = std::stoi(n_s);
        MapKind kind;
        if (kind_s == "fm") kind = MapKind::FM;
        else if (kind_s == "cm") kind = MapKind::CM;
        else if (kind_s == "out") kind = MapKind::Output;
        else throw TopologyError("analyze: kind must be fm, cm or out");

        for (const std::string& ck_path : args.checkpoints) {
            const Checkpoint ck = load_checkpoint(ck_path);
            const ShapePlan plan = validate_config(ck.config);
            Workspace ws;
            for (size_t s = 0; s < ck.params.initial_states.size(); ++s) {
                const TrajectoryRecord rec = record_trajectory(
                    plan, ck.params, ck.params.initial_states[s], args.steps, layer, kind, ws);
                const PcaResult r = pca(rec, n);
                std::string header = "step";
                for (int c = 1; c <= n; ++c) header += ",pc" + std::to_string(c);
                std::vector<std::string> rows;
                for (int t = 0; t < rec.steps; ++t) {
                    std::string row = std::to_string(t);
                    for (int c = 0; c < n; ++c) {
                        row += "," + fmt(r.projected[static_cast<size_t>(t) * n + c]);
                    }
                    rows.push_back(std::move(row));
                }
                const std::string name = "pca_" + fs::path(ck_path).stem().string() + "_seq" +
                                         std::to_string(s) + ".csv";
                write_csv((fs::path(args.out_dir) / name).string(), header, rows);
                outputs.push_back(name);
            }
        }
    }

    json jargs = {{"checkpoints", json(args.checkpoints)},
                  {"census", args.census},
                  {"pca", args.pca},
                  {"steps", args.steps}};
    std::vector<std::string> inputs = args.checkpoints;
    inputs.insert(inputs.end(), files.begin(), files.end());
    write_manifest(args.out_dir, "analyze", jargs, 0, inputs, outputs);
}

bool cmd_gradcheck(const GradcheckArgs& args) {
    const NetworkConfig cfg = load_config_arg(args.config);
    const GradcheckResult r =
        run_gradcheck(cfg, args.seed, args.steps, args.samples, args.tolerance);
    std::cout << "gradcheck: " << r.checked << " samples, max rel err " << r.max_rel_err
              << (r.pass ? " PASS" : " FAIL") << "\n";
    if (!r.pass) {
        for (const GradcheckEntry& e : r.worst) {
            std::cout << "  " << e.tensor << "[" << e.index << "] analytic " << e.analytic
                      << " numeric " << e.numeric << " rel " << e.rel_err << "\n";
        }
    }
    return r.pass;
}

void cmd_dump(const DumpArgs& args) {
    if (args.out_dir.empty()) throw IoError("dump: output directory required");
    ensure_dir(args.out_dir);
    const FrameSequence seq = load_pmv(args.pmv);
    std::vector<std::string> outputs;
    for (int t = 0; t < seq.frames(); ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%05d.pgm", t);
        save_pgm((fs::path(args.out_dir) / name).string(), seq, t);
        outputs.push_back(name);
    }
    write_manifest(args.out_dir, "dump", {{"pmv", args.pmv}}, 0, {args.pmv}, outputs);
}

}  // namespace pmnet::cli
