#include "pmnet/kernels.hpp"

#include <cstdlib>

#include "pmnet/common.hpp"

namespace pmnet::kernels {

#if defined(__x86_64__) || defined(_M_X64)
const Ops* avx2_ops();
#endif
#if defined(__aarch64__)
const Ops* neon_ops();
#endif

namespace {

std::vector<const Ops*> detect() {
    std::vector<const Ops*> out;
    out.push_back(&scalar());
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
        out.push_back(avx2_ops());
    }
#endif
#if defined(__aarch64__)
    out.push_back(neon_ops());
#endif
    return out;
}

const Ops* pick(const std::string& name) {
    if (name == "auto" || name.empty()) return available().back();
    for (const Ops* ops : available()) {
        if (name == ops->name) return ops;
    }
    throw TopologyError("unknown kernel backend '" + name + "'");
}

const Ops*& active_slot() {
    static const Ops* slot = [] {
        const char* env = std::getenv("PMNET_KERNELS");
        return pick(env ? env : "auto");
    }();
    return slot;
}

}  // namespace

const std::vector<const Ops*>& available() {
    static const std::vector<const Ops*> all = detect();
    return all;
}

const Ops& active() { return *active_slot(); }

void select(const std::string& name) { active_slot() = pick(name); }

}  // namespace pmnet::kernels
