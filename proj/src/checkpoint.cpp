#include <cstring>
#include <fstream>

#include "pmnet/learner.hpp"

// Checkpoint file: magic "PMN1", u32 version, u32 epoch, f32 open/closed MSE,
// length-prefixed config text, u32 sequence count, then a manifest of named
// tensors (name, dims, element offset) followed by the data section of
// 32-bit little-endian floats, row-major.

namespace pmnet {

namespace {

constexpr char kMagic[4] = {'P', 'M', 'N', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::string& out, uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }
void put_f32(std::string& out, float v) { out.append(reinterpret_cast<const char*>(&v), 4); }

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    const std::string& path;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw IoError("corrupt checkpoint (truncated): " + path);
    }
    uint32_t u32() {
        need(4);
        uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    float f32() {
        need(4);
        float v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

std::vector<TensorRef> weight_tensors(ParamSet& p) {
    std::vector<TensorRef> out;
    auto add_bank = [&](const std::string& name, KernelBank& b) {
        if (b.size() == 0) return;
        out.push_back({name, b.data(), b.size(), {b.out_maps(), b.in_maps(), b.kh(), b.kw()}});
    };
    auto add_vec = [&](const std::string& name, std::vector<double>& v) {
        if (v.empty()) return;
        out.push_back({name, v.data(), v.size(), {static_cast<int>(v.size())}});
    };
    add_bank("k_if", p.k_if);
    add_bank("k_fo", p.k_fo);
    out.push_back({"b_o", &p.b_o, 1, {1}});
    for (size_t l = 0; l < p.layers.size(); ++l) {
        const std::string tag = "L" + std::to_string(l + 1) + ".";
        add_bank(tag + "k_ff", p.layers[l].k_ff);
        add_bank(tag + "k_cf", p.layers[l].k_cf);
        add_bank(tag + "k_fc", p.layers[l].k_fc);
        add_bank(tag + "w_cc", p.layers[l].w_cc);
        add_bank(tag + "w_fc", p.layers[l].w_fc);
        add_vec(tag + "fm_bias", p.layers[l].fm_bias);
        add_vec(tag + "cm_bias", p.layers[l].cm_bias);
    }
    return out;
}

std::vector<TensorRef> state_tensors(NetworkState& s, const std::string& prefix) {
    std::vector<TensorRef> out;
    for (size_t l = 0; l < s.layers.size(); ++l) {
        const std::string tag = prefix + "L" + std::to_string(l + 1) + ".";
        MapStack& fm = s.layers[l].fm_hat;
        out.push_back({tag + "fm", fm.data(), fm.size(), {fm.maps(), fm.height(), fm.width()}});
        MapStack& cm = s.layers[l].cm_hat;
        if (cm.size() > 0) {
            out.push_back({tag + "cm", cm.data(), cm.size(), {cm.maps(), cm.height(), cm.width()}});
        }
    }
    return out;
}

namespace {

std::vector<TensorRef> all_tensors(ParamSet& p) {
    std::vector<TensorRef> out = weight_tensors(p);
    for (size_t s = 0; s < p.initial_states.size(); ++s) {
        auto st = state_tensors(p.initial_states[s], "init.s" + std::to_string(s) + ".");
        out.insert(out.end(), st.begin(), st.end());
    }
    return out;
}

}  // namespace

void quantize_params_f32(ParamSet& params) {
    for (TensorRef& t : all_tensors(params)) {
        for (size_t i = 0; i < t.size; ++i) {
            t.data[i] = static_cast<double>(static_cast<float>(t.data[i]));
        }
    }
    for (auto& st : params.initial_states) refresh_activations(st);
}

void save_checkpoint(const std::string& path, Checkpoint& ck) {
    quantize_params_f32(ck.params);
    const std::string cfg_text = serialize_network_config(ck.config);
    std::vector<TensorRef> tensors = all_tensors(ck.params);

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<uint32_t>(ck.epoch));
    put_f32(out, static_cast<float>(ck.open_mse));
    put_f32(out, static_cast<float>(ck.closed_mse));
    put_u32(out, static_cast<uint32_t>(cfg_text.size()));
    out.append(cfg_text);
    put_u32(out, static_cast<uint32_t>(ck.params.initial_states.size()));

    put_u32(out, static_cast<uint32_t>(tensors.size()));
    uint64_t offset = 0;
    for (const TensorRef& t : tensors) {
        put_u32(out, static_cast<uint32_t>(t.name.size()));
        out.append(t.name);
        put_u32(out, static_cast<uint32_t>(t.dims.size()));
        for (int d : t.dims) put_u32(out, static_cast<uint32_t>(d));
        put_u64(out, offset);
        offset += t.size;
    }
    put_u64(out, offset);
    for (const TensorRef& t : tensors) {
        for (size_t i = 0; i < t.size; ++i) put_f32(out, static_cast<float>(t.data[i]));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint '" + path + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf, 0, path};

    if (r.str(4) != std::string(kMagic, 4)) throw IoError("not a checkpoint file: " + path);
    if (r.u32() != kVersion) throw IoError("unsupported checkpoint version: " + path);

    Checkpoint ck;
    ck.epoch = static_cast<int>(r.u32());
    ck.open_mse = r.f32();
    ck.closed_mse = r.f32();
    const uint32_t cfg_len = r.u32();
    ck.config = parse_network_config(r.str(cfg_len));
    const uint32_t n_sequences = r.u32();

    const ShapePlan plan = validate_config(ck.config);
    ck.params = zero_params(plan, static_cast<int>(n_sequences));
    std::vector<TensorRef> tensors = all_tensors(ck.params);

    const uint32_t count = r.u32();
    if (count != tensors.size()) {
        throw IoError("checkpoint manifest does not match config-derived tensors: " + path);
    }
    std::vector<uint64_t> offsets(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = r.u32();
        const std::string name = r.str(name_len);
        if (name != tensors[i].name) {
            throw IoError("checkpoint tensor '" + name + "' does not match expected '" +
                          tensors[i].name + "': " + path);
        }
        const uint32_t ndims = r.u32();
        if (ndims != tensors[i].dims.size()) throw IoError("tensor rank mismatch for " + name);
        size_t n = 1;
        for (uint32_t d = 0; d < ndims; ++d) {
            const uint32_t dim = r.u32();
            if (static_cast<int>(dim) != tensors[i].dims[d]) {
                throw IoError("tensor shape mismatch for " + name + ": " + path);
            }
            n *= dim;
        }
        if (n != tensors[i].size) throw IoError("tensor size mismatch for " + name);
        offsets[i] = r.u64();
    }
    const uint64_t total = r.u64();
    r.need(total * 4);
    const size_t data_start = r.pos;
    for (uint32_t i = 0; i < count; ++i) {
        if (offsets[i] + tensors[i].size > total) {
            throw IoError("tensor offset out of range in checkpoint: " + path);
        }
        const char* src = buf.data() + data_start + offsets[i] * 4;
        for (size_t k = 0; k < tensors[i].size; ++k) {
            float v;
            std::memcpy(&v, src + k * 4, 4);
            tensors[i].data[k] = static_cast<double>(v);
        }
    }
    for (auto& st : ck.params.initial_states) refresh_activations(st);
    return ck;
}

}  // namespace pmnet
