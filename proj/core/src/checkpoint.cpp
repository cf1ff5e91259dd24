// SPDX-License-Identifier: Apache-2.0
#include "crome/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace crome {

namespace {

constexpr char kMagic[8] = {'C', 'R', 'O', 'M', 'E', 'C', 'K', 'P'};

struct Writer {
    std::ofstream os;
    explicit Writer(const std::string& path) : os(path, std::ios::binary) {
        if (!os) throw DataError("cannot write checkpoint: " + path);
    }
    void bytes(const void* p, size_t n) { os.write(static_cast<const char*>(p), n); }
    void u32(uint32_t v) { bytes(&v, 4); }
    void u64(uint64_t v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void doubles(const std::vector<Scalar>& v) {
        u64(v.size());
        bytes(v.data(), v.size() * sizeof(Scalar));
    }
};

struct Reader {
    std::ifstream is;
    explicit Reader(const std::string& path) : is(path, std::ios::binary) {
        if (!is) throw DataError("cannot read checkpoint: " + path);
    }
    void bytes(void* p, size_t n) {
        is.read(static_cast<char*>(p), n);
        if (static_cast<size_t>(is.gcount()) != n)
            throw CheckpointCorruptError("checkpoint truncated");
    }
    uint32_t u32() {
        uint32_t v;
        bytes(&v, 4);
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        bytes(&v, 8);
        return v;
    }
    std::string str() {
        const uint32_t n = u32();
        if (n > (1u << 20)) throw CheckpointCorruptError("checkpoint name too long");
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    std::vector<Scalar> doubles() {
        const uint64_t n = u64();
        if (n > (1ull << 32)) throw CheckpointCorruptError("checkpoint buffer too large");
        std::vector<Scalar> v(n);
        bytes(v.data(), n * sizeof(Scalar));
        return v;
    }
};

}  // namespace

Checkpoint Checkpoint::from_registry(const ParamRegistry& reg) {
    Checkpoint c;
    for (const auto& [name, t] : reg)
        c.tensors[name] = TensorEntry{t.shape(), t.values()};
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    Writer w(path);
    w.bytes(kMagic, sizeof kMagic);
    w.u32(Checkpoint::kFormatVersion);
    w.u64(ckpt.rng_state);
    w.u64(ckpt.optimizer_step);

    w.u32(static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, e] : ckpt.tensors) {
        w.str(name);
        w.u32(0);  // dtype tag: 0 = f64 little-endian
        w.u32(static_cast<uint32_t>(e.shape.size()));
        for (int64_t d : e.shape) w.u64(static_cast<uint64_t>(d));
        w.doubles(e.values);
    }

    w.u32(static_cast<uint32_t>(ckpt.optimizer.size()));
    for (const auto& [name, e] : ckpt.optimizer) {
        w.str(name);
        w.doubles(e.m);
        w.doubles(e.v);
    }

    w.str(ckpt.meta_json);
    if (!w.os) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw CheckpointCorruptError("bad checkpoint magic in " + path);
    const uint32_t version = r.u32();
    if (version != Checkpoint::kFormatVersion)
        throw CheckpointVersionError("unsupported checkpoint version " +
                                     std::to_string(version));

    Checkpoint c;
    c.rng_state = r.u64();
    c.optimizer_step = r.u64();

    const uint32_t n_tensors = r.u32();
    for (uint32_t i = 0; i < n_tensors; ++i) {
        const std::string name = r.str();
        const uint32_t dtype = r.u32();
        if (dtype != 0) throw CheckpointCorruptError("unknown dtype tag");
        const uint32_t ndim = r.u32();
        if (ndim > 8) throw CheckpointCorruptError("implausible tensor rank");
        Checkpoint::TensorEntry e;
        for (uint32_t d = 0; d < ndim; ++d)
            e.shape.push_back(static_cast<int64_t>(r.u64()));
        e.values = r.doubles();
        if (shape_numel(e.shape) != static_cast<int64_t>(e.values.size()))
            throw CheckpointCorruptError("tensor payload does not match shape");
        c.tensors[name] = std::move(e);
    }

    const uint32_t n_opt = r.u32();
    for (uint32_t i = 0; i < n_opt; ++i) {
        const std::string name = r.str();
        Checkpoint::OptEntry e;
        e.m = r.doubles();
        e.v = r.doubles();
        c.optimizer[name] = std::move(e);
    }

    c.meta_json = r.str();
    return c;
}

void apply_checkpoint(const Checkpoint& ckpt, ParamRegistry& reg,
                      const std::set<std::string>& prefixes) {
    for (const auto& name : reg.names()) {
        if (!prefixes.empty()) {
            bool match = false;
            for (const auto& p : prefixes)
                if (name_matches_prefix(name, p)) {
                    match = true;
                    break;
                }
            if (!match) continue;
        }
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end())
            throw CheckpointMissingTensorError("checkpoint is missing tensor '" + name + "'");
        Tensor& t = reg.get(name);
        if (it->second.shape != t.shape())
            throw CheckpointCorruptError("checkpoint tensor '" + name +
                                         "' has shape " + shape_str(it->second.shape) +
                                         ", expected " + shape_str(t.shape()));
        t.values() = it->second.values;
    }
}

}  // namespace crome
