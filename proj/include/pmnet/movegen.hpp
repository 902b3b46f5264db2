#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pmnet/network.hpp"

// Synthetic generator of binary whole-body movement sequences: six cyclic
// whole-body primitives composed from arm and leg sub-primitives, rendered
// as a stick figure with per-subject idiosyncrasies.

namespace pmnet {

enum class ArmPrim { A1, A2, A3 };  // horizontal extension, vertical extension, circles
enum class LegPrim { L1, L2, L3 };  // raising legs, standing still, bending legs
enum class ArmPhase { Co, Anti };

struct PrimitiveSpec {
    int id = 0;  // 1..6
    ArmPrim left_arm = ArmPrim::A1;
    ArmPrim right_arm = ArmPrim::A1;
    ArmPhase phase = ArmPhase::Co;
    LegPrim legs = LegPrim::L2;
};

// The fixed six-primitive syntax.
const std::array<PrimitiveSpec, 6>& primitive_table();

// Multiplicative jitters and a phase offset, deterministic in (id, seed).
struct SubjectProfile {
    int id = 0;
    double amplitude_scale = 1.0;   // in [0.85, 1.15]
    double period_scale = 1.0;      // in [0.85, 1.15]
    double limb_length_scale = 1.0; // in [0.85, 1.15]
    double phase_offset = 0.0;      // in [0, 2pi)
};
SubjectProfile make_subject(int id, uint64_t master_seed);

// Joint-angle set; index 0 = left, 1 = right. Angles measured from the
// downward vertical, positive rotating outward from the body.
struct Pose {
    double arm_theta[2] = {0, 0};
    double arm_elbow[2] = {0, 0};
    double leg_theta[2] = {0, 0};
    double leg_knee[2] = {0, 0};
    double squat = 0.0;  // hip drop, normalized units
};

Pose pose_at(const PrimitiveSpec& prim, const SubjectProfile& subject, double cycle_phase);
Pose lerp(const Pose& a, const Pose& b, double t);

// Rasterizes the stick figure; body pixels +1, background -1.
void render_frame(const Pose& pose, const SubjectProfile& subject, int h, int w, double* out);

FrameSequence generate_primitive(int primitive_id, const SubjectProfile& subject, int cycles = 6,
                                 double period = 25.0, Extent2 size = {36, 36});

struct ScriptEntry {
    int primitive_id = 0;
    int repetitions = 4;  // cycles of this primitive before the next
};

// Concatenation at cycle boundaries with a 2-frame pose blend between
// segments. boundaries (optional) receives the frame index where each
// segment after the first begins.
FrameSequence generate_script(const std::vector<ScriptEntry>& script, const SubjectProfile& subject,
                              double period = 25.0, Extent2 size = {36, 36},
                              std::vector<int>* boundaries = nullptr);

// Builtins: CONCAT_A (P1..P5 x4), CONCAT_B (P5..P1 x4), SWITCH_TEST
// (P1-P2-P5-P3-P4-P6-P4-P3-P5-P2-P1 with repetitions chosen to land near
// target_frames). Also accepts "P3", "P3x4", dash-joined concatenations
// ("P1x4-P2x4") and the range form "P1..P6" (one entry per primitive).
std::vector<std::vector<ScriptEntry>> parse_scripts(const std::string& text, double period,
                                                    int target_frames = 2000);
std::string script_name(const std::vector<ScriptEntry>& script);

// PMV container: magic "PMV1", u32 frame count/height/width, then 32-bit
// little-endian floats, frame-major row-major.
void save_pmv(const std::string& path, const FrameSequence& seq);
FrameSequence load_pmv(const std::string& path);

// Per-frame PGM dumps (binary P5, 0/255) for eyeballing sequences.
void save_pgm(const std::string& path, const FrameSequence& seq, int frame);
void append_pgm_frame(FrameSequence& seq, const std::string& path);  // thresholds at mid-gray

}  // namespace pmnet
