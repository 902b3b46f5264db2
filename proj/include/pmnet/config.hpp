#pragma once

#include <string>
#include <vector>

#include "pmnet/tensor.hpp"

namespace pmnet {

// One context layer: feature maps plus (optionally) context maps.
// fm_kernel is the kernel size of the convolutions that produce this layer's
// FMs (top-down from the layer above, and laterally from this layer's CMs).
// cm_kernel is the bottom-up kernel into this layer's CMs; 0 means "derive
// the valid-convolution size from the source and target map sizes".
struct LayerSpec {
    double tau = 1.0;
    Extent2 fm_size;
    int fm_count = 0;
    Extent2 cm_size;
    int cm_count = 0;
    Extent2 fm_kernel;
    Extent2 cm_kernel;  // {0,0} -> derived
};

struct NetworkConfig {
    Extent2 input_size;
    Extent2 input_kernel;
    Extent2 output_kernel;
    std::vector<LayerSpec> layers;  // index 0 = lowest (fastest) layer
};

// Geometry of one convolution site, fully resolved.
struct ConvGeom {
    Extent2 src, dst, kernel;
    PadSpec pad;
    Extent2 padded() const { return {pad.top + src.h + pad.bottom, pad.left + src.w + pad.right}; }
};

struct LayerPlan {
    double tau = 1.0;
    int fm_count = 0, cm_count = 0;
    Extent2 fm_size, cm_size;
    ConvGeom ff;  // FM(l+1) -> FM(l); absent on the top layer
    ConvGeom cf;  // CM(l)   -> FM(l)
    ConvGeom fc;  // FM(l-1) or input -> CM(l)
    bool has_ff = false;
    bool has_cf = false;
    bool has_fc = false;
    bool has_wfc = false;  // elementwise FM(l+1) -> CM(l)
};

// Every kernel dimension and padding resolved, ready to drive the forward
// and backward passes.
struct ShapePlan {
    Extent2 input_size;
    ConvGeom in_conv;   // input -> FM(1)
    ConvGeom out_conv;  // FM(1) -> output
    std::vector<LayerPlan> layers;
    int layer_count() const { return static_cast<int>(layers.size()); }
};

// Checks the whole topology and derives the shape plan. Beyond the shape
// algebra of resolve_padding, zero padding is only accepted where the source
// map is smaller than the target; a source at least as large as the target
// must line up as an exact valid convolution. Element-wise top-down input
// requires cm_size(l) == fm_size(l+1). Throws TopologyError naming the
// offending connection.
ShapePlan validate_config(const NetworkConfig& cfg);

// Text form: one "key value..." per line, '#' comments. See README for the
// schema. parse accepts the output of serialize bit-exactly.
NetworkConfig parse_network_config(const std::string& text);
NetworkConfig load_network_config(const std::string& path);
std::string serialize_network_config(const NetworkConfig& cfg);

// Built-in configurations: "paper" (the full-size network) and "toy"
// (the small three-layer setup used by the test and acceptance suites).
NetworkConfig builtin_config(const std::string& name);

}  // namespace pmnet
