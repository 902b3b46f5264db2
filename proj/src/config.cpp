#include "pmnet/config.hpp"

#include <fstream>
#include <sstream>

namespace pmnet {
namespace {

std::string ext_str(Extent2 e) {
    return std::to_string(e.h) + "x" + std::to_string(e.w);
}

// Padding is only legitimate when the source is smaller than the target; a
// source at least as large must produce the target by exact valid convolution.
ConvGeom resolve_conv(Extent2 src, Extent2 dst, Extent2 k, const std::string& what) {
    ConvGeom g;
    g.src = src;
    g.dst = dst;
    g.kernel = k;
    try {
        g.pad = resolve_padding(src, dst, k);
    } catch (const TopologyError& e) {
        throw TopologyError(what + ": " + e.what());
    }
    if (src.h >= dst.h && g.pad.top + g.pad.bottom != 0) {
        throw TopologyError(what + ": source height " + std::to_string(src.h) +
                            " >= target " + std::to_string(dst.h) +
                            " requires exact valid convolution, kernel " + ext_str(k) +
                            " does not fit");
    }
    if (src.w >= dst.w && g.pad.left + g.pad.right != 0) {
        throw TopologyError(what + ": source width " + std::to_string(src.w) +
                            " >= target " + std::to_string(dst.w) +
                            " requires exact valid convolution, kernel " + ext_str(k) +
                            " does not fit");
    }
    return g;
}

void check_extent(Extent2 e, const std::string& what) {
    if (e.h < 1 || e.w < 1) throw TopologyError(what + ": size must be >= 1, got " + ext_str(e));
}

}  // namespace

ShapePlan validate_config(const NetworkConfig& cfg) {
    if (cfg.layers.empty()) throw TopologyError("config has no layers");
    check_extent(cfg.input_size, "input");
    check_extent(cfg.input_kernel, "input_kernel");
    check_extent(cfg.output_kernel, "output_kernel");

    const int L = static_cast<int>(cfg.layers.size());
    ShapePlan plan;
    plan.input_size = cfg.input_size;
    plan.layers.resize(L);

    for (int l = 0; l < L; ++l) {
        const LayerSpec& spec = cfg.layers[l];
        LayerPlan& lp = plan.layers[l];
        const std::string tag = "layer " + std::to_string(l + 1);
        if (spec.tau < 1.0) throw TopologyError(tag + ": tau must be >= 1");
        if (spec.fm_count < 1) throw TopologyError(tag + ": needs at least one feature map");
        if (spec.cm_count < 0) throw TopologyError(tag + ": negative context map count");
        check_extent(spec.fm_size, tag + " fm_size");
        check_extent(spec.fm_kernel, tag + " fm_kernel");
        if (spec.cm_count > 0) check_extent(spec.cm_size, tag + " cm_size");

        lp.tau = spec.tau;
        lp.fm_count = spec.fm_count;
        lp.cm_count = spec.cm_count;
        lp.fm_size = spec.fm_size;
        lp.cm_size = spec.cm_size;

        // element-wise top-down term: CM(l) and FM(l+1) must be the same size
        if (l + 1 < L && spec.cm_count > 0) {
            if (spec.cm_size != cfg.layers[l + 1].fm_size) {
                throw TopologyError(tag + ": cm_size " + ext_str(spec.cm_size) +
                                    " != layer " + std::to_string(l + 2) + " fm_size " +
                                    ext_str(cfg.layers[l + 1].fm_size) +
                                    " (element-wise top-down term)");
            }
            lp.has_wfc = true;
        }

        // top-down convolution FM(l+1) -> FM(l)
        if (l + 1 < L) {
            lp.ff = resolve_conv(cfg.layers[l + 1].fm_size, spec.fm_size, spec.fm_kernel,
                                 tag + " k_ff");
            lp.has_ff = true;
        }

        // lateral convolution CM(l) -> FM(l)
        if (spec.cm_count > 0) {
            lp.cf = resolve_conv(spec.cm_size, spec.fm_size, spec.fm_kernel, tag + " k_cf");
            lp.has_cf = true;
        }

        // bottom-up convolution into CM(l)
        if (spec.cm_count > 0) {
            const Extent2 below = (l == 0) ? cfg.input_size : cfg.layers[l - 1].fm_size;
            Extent2 k = spec.cm_kernel;
            if (k.h == 0 && k.w == 0) {
                k = {below.h - spec.cm_size.h + 1, below.w - spec.cm_size.w + 1};
                if (k.h < 1 || k.w < 1) {
                    throw TopologyError(tag + ": cm_kernel not given and source " +
                                        ext_str(below) + " smaller than cm target " +
                                        ext_str(spec.cm_size));
                }
            }
            lp.fc = resolve_conv(below, spec.cm_size, k, tag + " k_fc");
            lp.has_fc = true;
        }
    }

    plan.in_conv = resolve_conv(cfg.input_size, cfg.layers[0].fm_size, cfg.input_kernel, "k_if");
    plan.out_conv = resolve_conv(cfg.layers[0].fm_size, cfg.input_size, cfg.output_kernel, "k_fo");
    return plan;
}

NetworkConfig parse_network_config(const std::string& text) {
    NetworkConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool saw_layers = false;
    size_t declared_layers = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        auto fail = [&](const std::string& msg) -> TopologyError {
            return TopologyError("config line " + std::to_string(lineno) + ": " + msg);
        };
        if (key == "input") {
            if (!(ls >> cfg.input_size.h >> cfg.input_size.w)) throw fail("expected 'input H W'");
        } else if (key == "input_kernel") {
            if (!(ls >> cfg.input_kernel.h >> cfg.input_kernel.w)) throw fail("expected two sizes");
        } else if (key == "output_kernel") {
            if (!(ls >> cfg.output_kernel.h >> cfg.output_kernel.w)) throw fail("expected two sizes");
        } else if (key == "layers") {
            if (!(ls >> declared_layers)) throw fail("expected layer count");
            saw_layers = true;
        } else if (key == "layer") {
            int idx = 0;
            if (!(ls >> idx)) throw fail("expected layer index");
            if (idx != static_cast<int>(cfg.layers.size()) + 1) {
                throw fail("layers must appear in order starting at 1");
            }
            LayerSpec spec;
            std::string field;
            while (ls >> field) {
                if (field == "tau") {
                    if (!(ls >> spec.tau)) throw fail("bad tau");
                } else if (field == "fm") {
                    if (!(ls >> spec.fm_size.h >> spec.fm_size.w >> spec.fm_count))
                        throw fail("expected 'fm H W N'");
                } else if (field == "cm") {
                    if (!(ls >> spec.cm_size.h >> spec.cm_size.w >> spec.cm_count))
                        throw fail("expected 'cm H W N'");
                } else if (field == "fm_kernel") {
                    if (!(ls >> spec.fm_kernel.h >> spec.fm_kernel.w)) throw fail("bad fm_kernel");
                } else if (field == "cm_kernel") {
                    if (!(ls >> spec.cm_kernel.h >> spec.cm_kernel.w)) throw fail("bad cm_kernel");
                } else {
                    throw fail("unknown layer field '" + field + "'");
                }
            }
            cfg.layers.push_back(spec);
        } else {
            throw fail("unknown key '" + key + "'");
        }
    }
    if (saw_layers && declared_layers != cfg.layers.size()) {
        throw TopologyError("config declares " + std::to_string(declared_layers) +
                            " layers but defines " + std::to_string(cfg.layers.size()));
    }
    return cfg;
}

NetworkConfig load_network_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_network_config(buf.str());
}

std::string serialize_network_config(const NetworkConfig& cfg) {
    std::ostringstream out;
    out << "input " << cfg.input_size.h << " " << cfg.input_size.w << "\n";
    out << "input_kernel " << cfg.input_kernel.h << " " << cfg.input_kernel.w << "\n";
    out << "output_kernel " << cfg.output_kernel.h << " " << cfg.output_kernel.w << "\n";
    out << "layers " << cfg.layers.size() << "\n";
    for (size_t l = 0; l < cfg.layers.size(); ++l) {
        const LayerSpec& s = cfg.layers[l];
        out << "layer " << (l + 1) << " tau " << s.tau;
        out << " fm " << s.fm_size.h << " " << s.fm_size.w << " " << s.fm_count;
        out << " cm " << s.cm_size.h << " " << s.cm_size.w << " " << s.cm_count;
        out << " fm_kernel " << s.fm_kernel.h << " " << s.fm_kernel.w;
        if (s.cm_kernel.h != 0 || s.cm_kernel.w != 0) {
            out << " cm_kernel " << s.cm_kernel.h << " " << s.cm_kernel.w;
        }
        out << "\n";
    }
    return out.str();
}

NetworkConfig builtin_config(const std::string& name) {
    if (name == "paper") {
        return parse_network_config(
            "input 36 36\n"
            "input_kernel 5 5\n"
            "output_kernel 5 5\n"
            "layers 6\n"
            "layer 1 tau 2  fm 32 32 10 cm 26 26 10 fm_kernel 7 7   cm_kernel 11 11\n"
            "layer 2 tau 4  fm 26 26 10 cm 20 20 10 fm_kernel 7 7   cm_kernel 13 13\n"
            "layer 3 tau 8  fm 20 20 20 cm 12 12 10 fm_kernel 9 9   cm_kernel 15 15\n"
            "layer 4 tau 16 fm 12 12 40 cm 2 2   25 fm_kernel 11 11 cm_kernel 19 19\n"
            "layer 5 tau 32 fm 2 2   10 cm 1 1   10 fm_kernel 2 2   cm_kernel 12 12\n"
            "layer 6 tau 64 fm 1 1   10 cm 1 1   5  fm_kernel 1 1   cm_kernel 2 2\n");
    }
    if (name == "toy") {
        return parse_network_config(
            "input 16 16\n"
            "input_kernel 5 5\n"
            "output_kernel 7 7\n"
            "layers 3\n"
            "layer 1 tau 2 fm 12 12 4 cm 8 8 4 fm_kernel 7 7 cm_kernel 9 9\n"
            "layer 2 tau 4 fm 8 8 4  cm 4 4 4 fm_kernel 3 3 cm_kernel 9 9\n"
            "layer 3 tau 8 fm 4 4 2  cm 1 1 2 fm_kernel 3 3 cm_kernel 8 8\n");
    }
    throw TopologyError("unknown builtin config '" + name + "'");
}

}  // namespace pmnet
