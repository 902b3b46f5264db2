#include "pmnet/movegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pmnet {

namespace {

constexpr double kPi = 3.14159265358979323846;

// stick-figure proportions in normalized [0,1] coordinates, y pointing down
constexpr double kHipY = 0.62;
constexpr double kTorso = 0.22;
constexpr double kHeadR = 0.07;
constexpr double kUpperArm = 0.14;
constexpr double kForearm = 0.13;
constexpr double kHipHalf = 0.055;
constexpr double kThigh = 0.17;
constexpr double kShank = 0.15;
constexpr double kLimbRadiusPx = 1.4;  // limbs render 2-3 px thick

double raised_cos(double u) { return 0.5 - 0.5 * std::cos(u); }  // 0..1 over one cycle

struct Vec {
    double x = 0, y = 0;
};

Vec limb_dir(double theta, double side) { return {side * std::sin(theta), std::cos(theta)}; }

double dist_to_segment(double px, double py, Vec a, Vec b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - a.x) * vx + (py - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

void arm_angles(ArmPrim prim, double u, double amp, double& theta, double& elbow) {
    switch (prim) {
        case ArmPrim::A1:  // extending the arms horizontally
            theta = 1.40 + 0.085 * amp * std::sin(u);
            elbow = 0.10 + 0.04 * raised_cos(u);
            break;
        case ArmPrim::A2:  // extending the arms vertically
            theta = 2.50 + 0.080 * amp * std::sin(u);
            elbow = 0.08 + 0.035 * raised_cos(u);
            break;
        case ArmPrim::A3:  // big circles with laterally extended arms
            theta = std::fmod(u, 2.0 * kPi);
            elbow = 0.18;
            break;
    }
}

void leg_angles(LegPrim prim, double u, double amp, double side_sign, double& theta,
                double& knee, double& squat) {
    switch (prim) {
        case LegPrim::L1: {  // alternately raising the legs
            const double s = std::sin(u);
            const double lift = side_sign > 0 ? std::max(0.0, -s) : std::max(0.0, s);
            theta = 0.06 + 0.080 * amp * lift;
            knee = 0.5 * (theta - 0.06);
            squat = 0.0;
            break;
        }
        case LegPrim::L2:  // standing still
            theta = 0.06;
            knee = 0.0;
            squat = 0.0;
            break;
        case LegPrim::L3: {  // bending both legs
            const double bend = raised_cos(u);
            theta = 0.06 + 0.080 * amp * bend;
            knee = -1.5 * (theta - 0.06);
            squat = 0.015 * amp * bend;
            break;
        }
    }
}

}  // namespace

const std::array<PrimitiveSpec, 6>& primitive_table() {
    static const std::array<PrimitiveSpec, 6> table = {{
        {1, ArmPrim::A2, ArmPrim::A1, ArmPhase::Co, LegPrim::L1},
        {2, ArmPrim::A1, ArmPrim::A2, ArmPhase::Anti, LegPrim::L2},
        {3, ArmPrim::A3, ArmPrim::A3, ArmPhase::Co, LegPrim::L1},
        {4, ArmPrim::A3, ArmPrim::A3, ArmPhase::Anti, LegPrim::L2},
        {5, ArmPrim::A1, ArmPrim::A1, ArmPhase::Co, LegPrim::L3},
        {6, ArmPrim::A2, ArmPrim::A2, ArmPhase::Anti, LegPrim::L3},
    }};
    return table;
}

SubjectProfile make_subject(int id, uint64_t master_seed) {
    Rng rng(Rng::mix(master_seed, static_cast<uint64_t>(id)));
    SubjectProfile s;
    s.id = id;
    s.amplitude_scale = rng.uniform(0.85, 1.15);
    // snapped so that the default period 25 lands on a whole frame count and
    // rasterized cycles repeat exactly; clamped to keep the scale in range
    s.period_scale = std::clamp(std::round(rng.uniform(0.85, 1.15) * 25.0), 22.0, 28.0) / 25.0;
    s.limb_length_scale = rng.uniform(0.85, 1.15);
    s.phase_offset = rng.uniform(0.0, 2.0 * kPi);
    return s;
}

Pose pose_at(const PrimitiveSpec& prim, const SubjectProfile& subject, double cycle_phase) {
    const double amp = subject.amplitude_scale;
    Pose pose;
    // poses snap to a fixed set of key phases per cycle, so consecutive
    // frames mostly repeat and transitions land on a coarse grid
    constexpr double kPosesPerCycle = 12.0;
    const double quantum = 2.0 * kPi / kPosesPerCycle;
    const double u = std::floor((cycle_phase + subject.phase_offset) / quantum) * quantum;
    const double u_right = prim.phase == ArmPhase::Anti ? u + kPi : u;
    arm_angles(prim.left_arm, u, amp, pose.arm_theta[0], pose.arm_elbow[0]);
    arm_angles(prim.right_arm, u_right, amp, pose.arm_theta[1], pose.arm_elbow[1]);
    double squat_l = 0.0, squat_r = 0.0;
    leg_angles(prim.legs, u, amp, -1.0, pose.leg_theta[0], pose.leg_knee[0], squat_l);
    leg_angles(prim.legs, u, amp, +1.0, pose.leg_theta[1], pose.leg_knee[1], squat_r);
    pose.squat = 0.5 * (squat_l + squat_r);
    return pose;
}

Pose lerp(const Pose& a, const Pose& b, double t) {
    Pose p;
    for (int s = 0; s < 2; ++s) {
        p.arm_theta[s] = a.arm_theta[s] + t * (b.arm_theta[s] - a.arm_theta[s]);
        p.arm_elbow[s] = a.arm_elbow[s] + t * (b.arm_elbow[s] - a.arm_elbow[s]);
        p.leg_theta[s] = a.leg_theta[s] + t * (b.leg_theta[s] - a.leg_theta[s]);
        p.leg_knee[s] = a.leg_knee[s] + t * (b.leg_knee[s] - a.leg_knee[s]);
    }
    p.squat = a.squat + t * (b.squat - a.squat);
    return p;
}

void render_frame(const Pose& pose, const SubjectProfile& subject, int h, int w, double* out) {
    const double L = subject.limb_length_scale;
    const Vec hip{0.5, kHipY + pose.squat};
    const Vec neck{0.5, hip.y - kTorso * L};
    const Vec head{0.5, neck.y - (kHeadR * L + 0.015)};

    Vec elbow[2], hand[2], hipj[2], knee[2], foot[2];
    for (int s = 0; s < 2; ++s) {
        const double side = s == 0 ? -1.0 : 1.0;
        const double th = std::clamp(pose.arm_theta[s], -0.3, 2.0 * kPi + 0.3);
        Vec d = limb_dir(th, side);
        elbow[s] = {neck.x + kUpperArm * L * d.x, neck.y + kUpperArm * L * d.y};
        Vec d2 = limb_dir(th + std::clamp(pose.arm_elbow[s], -1.2, 1.2), side);
        hand[s] = {elbow[s].x + kForearm * L * d2.x, elbow[s].y + kForearm * L * d2.y};

        hipj[s] = {hip.x + side * kHipHalf, hip.y};
        const double lt = std::clamp(pose.leg_theta[s], -0.2, 1.4);
        Vec ld = limb_dir(lt, side);
        knee[s] = {hipj[s].x + kThigh * L * ld.x, hipj[s].y + kThigh * L * ld.y};
        Vec ld2 = limb_dir(lt + std::clamp(pose.leg_knee[s], -1.4, 1.4), side);
        foot[s] = {knee[s].x + kShank * L * ld2.x, knee[s].y + kShank * L * ld2.y};
    }

    struct Seg {
        Vec a, b;
    };
    const Seg segments[] = {
        {hip, neck},           {neck, elbow[0]},    {elbow[0], hand[0]}, {neck, elbow[1]},
        {elbow[1], hand[1]},   {hipj[0], knee[0]},  {knee[0], foot[0]},  {hipj[1], knee[1]},
        {knee[1], foot[1]},    {hipj[0], hipj[1]},
    };

    const double radius = kLimbRadiusPx / std::max(h, w);
    const double head_r = kHeadR * L;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double px = (x + 0.5) / w;
            const double py = (y + 0.5) / h;
            bool on = false;
            const double hd = std::hypot(px - head.x, py - head.y);
            if (hd <= head_r) on = true;
            for (const Seg& s : segments) {
                if (on) break;
                if (dist_to_segment(px, py, s.a, s.b) <= radius) on = true;
            }
            out[static_cast<size_t>(y) * w + x] = on ? 1.0 : -1.0;
        }
    }
}

FrameSequence generate_primitive(int primitive_id, const SubjectProfile& subject, int cycles,
                                 double period, Extent2 size) {
    std::vector<ScriptEntry> script{{primitive_id, cycles}};
    return generate_script(script, subject, period, size);
}

FrameSequence generate_script(const std::vector<ScriptEntry>& script, const SubjectProfile& subject,
                              double period, Extent2 size, std::vector<int>* boundaries) {
    if (script.empty()) throw TopologyError("generate_script: empty script");
    const auto& table = primitive_table();
    const double period_eff = period * subject.period_scale;

    FrameSequence seq(size.h, size.w);
    std::vector<double> frame(seq.pixels());
    if (boundaries) boundaries->clear();

    Pose prev_end;
    bool have_prev = false;
    for (const ScriptEntry& entry : script) {
        if (entry.primitive_id < 1 || entry.primitive_id > 6) {
            throw TopologyError("unknown primitive id P" + std::to_string(entry.primitive_id));
        }
        if (entry.repetitions < 1) throw TopologyError("script repetitions must be >= 1");
        const PrimitiveSpec& prim = table[entry.primitive_id - 1];
        const int frames = static_cast<int>(std::lround(entry.repetitions * period_eff));

        const Pose first = pose_at(prim, subject, 0.0);
        if (have_prev) {
            // continuous pose interpolation over a 2-frame blend
            for (int k = 1; k <= 2; ++k) {
                const Pose blended = lerp(prev_end, first, k / 3.0);
                render_frame(blended, subject, size.h, size.w, frame.data());
                seq.append(frame.data());
            }
            if (boundaries) boundaries->push_back(seq.frames());
        }
        for (int t = 0; t < frames; ++t) {
            const double u = 2.0 * kPi * t / period_eff;
            const Pose pose = pose_at(prim, subject, u);
            render_frame(pose, subject, size.h, size.w, frame.data());
            seq.append(frame.data());
            if (t == frames - 1) prev_end = pose;
        }
        have_prev = true;
    }
    return seq;
}

namespace {

std::vector<ScriptEntry> ids_to_script(std::initializer_list<int> ids, int reps) {
    std::vector<ScriptEntry> s;
    for (int id : ids) s.push_back({id, reps});
    return s;
}

std::vector<ScriptEntry> parse_one_script(const std::string& token, double period,
                                          int target_frames) {
    if (token == "CONCAT_A") return ids_to_script({1, 2, 3, 4, 5}, 4);
    if (token == "CONCAT_B") return ids_to_script({5, 4, 3, 2, 1}, 4);
    if (token == "SWITCH_TEST") {
        const std::initializer_list<int> ids = {1, 2, 5, 3, 4, 6, 4, 3, 5, 2, 1};
        const int reps = std::max(
            1, static_cast<int>(std::lround(target_frames / (11.0 * period))));
        return ids_to_script(ids, reps);
    }
    // dash-joined list of PN or PNxR tokens
    std::vector<ScriptEntry> script;
    std::stringstream ss(token);
    std::string part;
    while (std::getline(ss, part, '-')) {
        if (part.size() < 2 || part[0] != 'P') throw TopologyError("bad script token '" + part + "'");
        const auto xpos = part.find('x');
        ScriptEntry e;
        try {
            e.primitive_id = std::stoi(part.substr(1, xpos == std::string::npos ? std::string::npos
                                                                                : xpos - 1));
            e.repetitions = xpos == std::string::npos ? 6 : std::stoi(part.substr(xpos + 1));
        } catch (const std::exception&) {
            throw TopologyError("bad script token '" + part + "'");
        }
        script.push_back(e);
    }
    if (script.empty()) throw TopologyError("empty script '" + token + "'");
    return script;
}

}  // namespace

std::vector<std::vector<ScriptEntry>> parse_scripts(const std::string& text, double period,
                                                    int target_frames) {
    std::vector<std::vector<ScriptEntry>> out;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (token.empty()) continue;
        const auto range = token.find("..");
        if (range != std::string::npos && token[0] == 'P') {
            const int lo = std::stoi(token.substr(1, range - 1));
            const int hi = std::stoi(token.substr(range + 3));
            for (int id = lo; id <= hi; ++id) out.push_back({{id, 6}});
        } else {
            out.push_back(parse_one_script(token, period, target_frames));
        }
    }
    if (out.empty()) throw TopologyError("no scripts in '" + text + "'");
    return out;
}

std::string script_name(const std::vector<ScriptEntry>& script) {
    std::string name;
    for (const ScriptEntry& e : script) {
        if (!name.empty()) name += "-";
        name += "P" + std::to_string(e.primitive_id);
        if (e.repetitions != 6) name += "x" + std::to_string(e.repetitions);
    }
    return name;
}

// ------------------------------------------------------------------- PMV io

void save_pmv(const std::string& path, const FrameSequence& seq) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write PMV file '" + path + "'");
    f.write("PMV1", 4);
    const uint32_t dims[3] = {static_cast<uint32_t>(seq.frames()),
                              static_cast<uint32_t>(seq.height),
                              static_cast<uint32_t>(seq.width)};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::vector<float> data(seq.data.size());
    for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(seq.data[i]);
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!f) throw IoError("short write to PMV file '" + path + "'");
}

FrameSequence load_pmv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open PMV file '" + path + "'");
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "PMV1", 4) != 0) throw IoError("not a PMV file: " + path);
    uint32_t dims[3];
    f.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!f) throw IoError("corrupt PMV header: " + path);
    FrameSequence seq(static_cast<int>(dims[1]), static_cast<int>(dims[2]));
    const size_t n = static_cast<size_t>(dims[0]) * dims[1] * dims[2];
    std::vector<float> data(n);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!f) throw IoError("corrupt PMV file (truncated): " + path);
    seq.data.resize(n);
    for (size_t i = 0; i < n; ++i) seq.data[i] = static_cast<double>(data[i]);
    return seq;
}

void save_pgm(const std::string& path, const FrameSequence& seq, int frame) {
    if (frame < 0 || frame >= seq.frames()) throw IoError("PGM frame index out of range");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write PGM file '" + path + "'");
    f << "P5\n" << seq.width << " " << seq.height << "\n255\n";
    const double* src = seq.frame(frame);
    for (size_t i = 0; i < seq.pixels(); ++i) {
        const unsigned char v = src[i] > 0.0 ? 255 : 0;
        f.write(reinterpret_cast<const char*>(&v), 1);
    }
}

void append_pgm_frame(FrameSequence& seq, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open PGM file '" + path + "'");
    std::string magic;
    f >> magic;
    if (magic != "P5") throw IoError("unsupported PGM (need binary P5): " + path);
    int w = 0, h = 0, maxval = 0;
    f >> w >> h >> maxval;
    f.get();  // single whitespace after the header
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw IoError("bad PGM header: " + path);
    if (seq.height == 0) {
        seq.height = h;
        seq.width = w;
    }
    if (seq.height != h || seq.width != w) throw IoError("PGM size mismatch: " + path);
    std::vector<unsigned char> buf(static_cast<size_t>(w) * h);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("corrupt PGM file: " + path);
    std::vector<double> frame(buf.size());
    for (size_t i = 0; i < buf.size(); ++i) frame[i] = buf[i] > maxval / 2 ? 1.0 : -1.0;
    seq.append(frame.data());
}

}  // namespace pmnet
