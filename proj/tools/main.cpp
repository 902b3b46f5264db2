#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pmnet/cli.hpp"
#include "pmnet/kernels.hpp"

using namespace pmnet;

int main(int argc, char** argv) {
    CLI::App app{"multiscale predictive recurrent network: data generation, training, "
                 "generation, predictive imitation and attractor analysis"};
    app.require_subcommand(1);

    std::string kernels_backend = "auto";
    app.add_option("--kernels", kernels_backend,
                   "arithmetic backend: auto, scalar, avx2 or neon");

    cli::GenDataArgs gen;
    auto* cgen = app.add_subcommand("gen-data", "render synthetic movement sequences to PMV files");
    cgen->add_option("--script", gen.script,
                     "comma list: P1..P6, P3, P3x4, P1x4-P2x4, CONCAT_A, CONCAT_B, SWITCH_TEST");
    cgen->add_option("--subjects", gen.subjects, "number of subjects");
    cgen->add_option("--first-subject", gen.first_subject, "first subject id");
    cgen->add_option("--seed", gen.seed, "master seed for subject idiosyncrasies");
    cgen->add_option("--period", gen.period, "nominal cycle period in frames");
    cgen->add_option("--cycles", gen.cycles, "cycles for single-primitive scripts");
    cgen->add_option("--size", gen.size, "frame height/width in pixels");
    cgen->add_option("--target-frames", gen.target_frames, "length target for SWITCH_TEST");
    cgen->add_option("--out", gen.out_dir, "output directory")->required();

    cli::TrainArgs train;
    bool train_spec_given = false;
    std::string train_spec_path;
    std::string checkpoints_list;
    auto* ctrain = app.add_subcommand("train", "train a network on PMV sequences");
    ctrain->add_option("--config", train.config, "network config file or builtin (toy, paper)");
    ctrain->add_option("--data", train.data, "PMV files or directories")->required();
    ctrain->add_option("--spec", train_spec_path, "train-spec file");
    ctrain->add_option("--epochs", train.spec.epochs_max, "maximum epochs");
    ctrain->add_option("--lr", train.spec.learning_rate, "learning rate");
    ctrain->add_option("--alpha", train.spec.alpha, "data share of the input blend");
    ctrain->add_option("--threshold", train.spec.closed_loop_error_threshold,
                       "closed-loop MSE termination bound");
    ctrain->add_option("--seed", train.spec.seed, "parameter init seed");
    ctrain->add_option("--threads", train.spec.threads, "worker threads across sequences");
    ctrain->add_option("--checkpoints", checkpoints_list, "comma list of checkpoint epochs");
    ctrain->add_option("--out", train.out_dir, "output directory")->required();

    cli::GenerateArgs generate;
    auto* cgenr = app.add_subcommand("generate", "closed/open-loop generation from a checkpoint");
    cgenr->add_option("--checkpoint", generate.checkpoint)->required();
    cgenr->add_option("--sequence-id", generate.sequence_id, "trained sequence index");
    cgenr->add_option("--mode", generate.mode, "closed or open");
    cgenr->add_option("--steps", generate.steps, "rollout length");
    cgenr->add_option("--data", generate.data, "input PMV files/dirs (open mode)");
    cgenr->add_option("--record", generate.record,
                      "trajectory exports, comma list of layer:kind (kind: fm, cm, out)");
    cgenr->add_option("--out", generate.out_dir, "output directory")->required();

    cli::ImitateArgs imitate;
    auto* cimit = app.add_subcommand("imitate", "predictive imitation of a target stream");
    cimit->add_option("--checkpoint", imitate.checkpoint)->required();
    cimit->add_option("--target", imitate.target, "target PMV file")->required();
    cimit->add_option("--mode", imitate.mode, "er (error regression) or entrain");
    cimit->add_option("--window", imitate.window, "regression window length");
    cimit->add_option("--iters", imitate.iterations, "latent updates per frame");
    cimit->add_option("--rate", imitate.rate, "adaptation rate");
    cimit->add_option("--threshold", imitate.threshold,
                      "window-error early exit (default: half the checkpoint closed MSE)");
    cimit->add_option("--out", imitate.out_dir, "output directory")->required();

    cli::AnalyzeArgs analyze;
    auto* canal = app.add_subcommand("analyze", "attractor census and PCA trajectory export");
    canal->add_option("--checkpoints", analyze.checkpoints, "checkpoint files")->required();
    canal->add_option("--data", analyze.data, "training PMV files/dirs")->required();
    canal->add_flag("--census", analyze.census, "count limit-cycle attractors embedding targets");
    canal->add_option("--pca", analyze.pca, "layer:kind:components, e.g. 1:cm:2");
    canal->add_option("--steps", analyze.steps, "closed-loop rollout length");
    canal->add_option("--out", analyze.out_dir, "output directory")->required();

    cli::GradcheckArgs gradcheck;
    auto* cgrad = app.add_subcommand("gradcheck",
                                     "finite-difference check of every gradient class");
    cgrad->add_option("--config", gradcheck.config, "network config file or builtin");
    cgrad->add_option("--seed", gradcheck.seed);
    cgrad->add_option("--steps", gradcheck.steps, "unrolled steps");
    cgrad->add_option("--samples", gradcheck.samples, "samples per tensor");
    cgrad->add_option("--tolerance", gradcheck.tolerance, "relative error bound");

    cli::DumpArgs dump;
    auto* cdump = app.add_subcommand("dump", "dump a PMV sequence as per-frame PGM images");
    cdump->add_option("--pmv", dump.pmv)->required();
    cdump->add_option("--out", dump.out_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        kernels::select(kernels_backend);
        if (cgen->parsed()) {
            cli::cmd_gen_data(gen);
        } else if (ctrain->parsed()) {
            if (!train_spec_path.empty()) {
                // file first, explicit flags override
                TrainSpec from_file = load_train_spec(train_spec_path);
                TrainSpec flags = train.spec;
                train.spec = from_file;
                if (ctrain->count("--epochs")) train.spec.epochs_max = flags.epochs_max;
                if (ctrain->count("--lr")) train.spec.learning_rate = flags.learning_rate;
                if (ctrain->count("--alpha")) train.spec.alpha = flags.alpha;
                if (ctrain->count("--threshold")) {
                    train.spec.closed_loop_error_threshold = flags.closed_loop_error_threshold;
                }
                if (ctrain->count("--seed")) train.spec.seed = flags.seed;
                if (ctrain->count("--threads")) train.spec.threads = flags.threads;
                train.spec_file = train_spec_path;
            }
            if (!checkpoints_list.empty()) {
                train.spec.checkpoint_epochs.clear();
                std::stringstream ss(checkpoints_list);
                std::string tok;
                while (std::getline(ss, tok, ',')) {
                    if (!tok.empty()) train.spec.checkpoint_epochs.push_back(std::stoi(tok));
                }
            }
            const cli::TrainOutcome r = cli::cmd_train(train);
            std::cout << "trained " << r.final_epoch << " epochs, closed-loop MSE "
                      << r.final_closed_mse << (r.terminated_early ? " (threshold reached)" : "")
                      << "\n";
        } else if (cgenr->parsed()) {
            cli::cmd_generate(generate);
        } else if (cimit->parsed()) {
            const cli::ImitateOutcome r = cli::cmd_imitate(imitate);
            std::cout << "mean prediction MSE " << r.mean_mse << "\n";
        } else if (canal->parsed()) {
            cli::cmd_analyze(analyze);
        } else if (cgrad->parsed()) {
            if (!cli::cmd_gradcheck(gradcheck)) return 3;
        } else if (cdump->parsed()) {
            cli::cmd_dump(dump);
        }
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const TopologyError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
