#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmnet/learner.hpp"

// Command implementations behind the pmnet binary. Each command validates its
// inputs, writes its artifacts under an output directory, and drops a
// manifest.json recording arguments, seeds and content hashes of the inputs,
// so identical manifests imply identical outputs.

namespace pmnet::cli {

struct GenDataArgs {
    std::string script = "P1..P6";
    int subjects = 5;
    int first_subject = 1;
    uint64_t seed = 1;
    std::string out_dir;
    double period = 25.0;
    int cycles = 6;  // repetitions for bare "PN" tokens
    int size = 36;
    int target_frames = 2000;  // SWITCH_TEST length target
};
// one PMV per (script, subject); returns the written file names
std::vector<std::string> cmd_gen_data(const GenDataArgs& args);

struct TrainArgs {
    std::string config = "toy";  // builtin name or config file path
    std::vector<std::string> data;  // PMV files or directories
    std::string spec_file;          // optional train-spec file
    TrainSpec spec;                 // effective spec (flags already applied)
    std::string out_dir;
};
struct TrainOutcome {
    int final_epoch = 0;
    bool terminated_early = false;
    double final_closed_mse = 0.0;
    std::vector<std::string> checkpoints;
};
TrainOutcome cmd_train(const TrainArgs& args);

struct GenerateArgs {
    std::string checkpoint;
    int sequence_id = 0;
    std::string mode = "closed";  // closed | open
    int steps = -1;               // -1: full data length in open mode
    std::vector<std::string> data;  // required in open mode
    std::string record = "1:cm";    // comma list of layer:kind trajectory exports
    int lookahead = 2;
    std::string out_dir;
};
void cmd_generate(const GenerateArgs& args);

struct ImitateArgs {
    std::string checkpoint;
    std::string target;        // PMV file
    std::string mode = "er";   // er | entrain
    int window = 20;
    int iterations = 100;
    double rate = 0.1;
    double threshold = -1.0;   // <0: half the checkpoint's closed-loop MSE
    int lookahead = 2;
    std::string out_dir;
};
struct ImitateOutcome {
    double mean_mse = 0.0;
};
ImitateOutcome cmd_imitate(const ImitateArgs& args);

struct AnalyzeArgs {
    std::vector<std::string> checkpoints;
    std::vector<std::string> data;
    bool census = false;
    std::string pca;  // "layer:kind:components", e.g. "1:cm:2"
    int steps = 1000;
    std::string out_dir;
};
void cmd_analyze(const AnalyzeArgs& args);

struct GradcheckArgs {
    std::string config = "toy";
    uint64_t seed = 1;
    int steps = 10;
    int samples = 6;
    double tolerance = 1e-4;
};
// returns true when every sampled gradient agrees with finite differences
bool cmd_gradcheck(const GradcheckArgs& args);

struct DumpArgs {
    std::string pmv;
    std::string out_dir;
};
void cmd_dump(const DumpArgs& args);

// helpers shared with tests
std::vector<std::string> collect_pmv_files(const std::vector<std::string>& paths);
std::vector<FrameSequence> load_dataset(const std::vector<std::string>& files);

}  // namespace pmnet::cli
