#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "glimt/errors.hpp"
#include "glimt/formats.hpp"
#include "glimt/model.hpp"
#include "glimt/rng.hpp"
#include "glimt/tensor.hpp"

namespace glimt {

constexpr char kCheckpointMagic[4] = {'G', 'L', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::string config_json;
    std::uint64_t updates = 0;
    std::string rng_state;
    std::vector<std::pair<std::string, Tensor>> params;
};

namespace detail {

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t read_u64_le(std::istream& in, const std::string& path, std::size_t offset) {
    unsigned char buf[8];
    read_exact(in, buf, 8, path, offset);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf[i]) << (8 * i);
    return v;
}

inline void write_f64_le(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64_le(out, bits);
}

inline double read_f64_le(std::istream& in, const std::string& path, std::size_t offset) {
    const std::uint64_t bits = read_u64_le(in, path, offset);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline void write_lp_string(std::ostream& out, const std::string& s) {
    write_u32_le(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_lp_string(std::istream& in, const std::string& path,
                                  std::size_t& offset) {
    const std::uint32_t n = read_u32_le(in, path, offset);
    offset += 4;
    std::string s(n, '\0');
    if (n != 0) read_exact(in, s.data(), n, path, offset);
    offset += n;
    return s;
}

}  // namespace detail

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("write_checkpoint: cannot open " + path);
    out.write(kCheckpointMagic, 4);
    detail::write_u32_le(out, ck.version);
    detail::write_lp_string(out, ck.config_json);
    detail::write_u64_le(out, ck.updates);
    detail::write_lp_string(out, ck.rng_state);
    detail::write_u32_le(out, static_cast<std::uint32_t>(ck.params.size()));
    for (const auto& [name, tensor] : ck.params) {
        detail::write_lp_string(out, name);
        detail::write_u32_le(out, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d : tensor.shape()) {
            detail::write_u32_le(out, static_cast<std::uint32_t>(d));
        }
        for (std::size_t i = 0; i < tensor.size(); ++i) detail::write_f64_le(out, tensor[i]);
    }
    if (!out) throw io_error("write_checkpoint: write failed for " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("read_checkpoint: cannot open " + path);
    char magic[4];
    detail::read_exact(in, magic, 4, path, 0);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw format_error(path + ": bad magic at offset 0");
    }
    std::size_t offset = 4;
    Checkpoint ck;
    ck.version = detail::read_u32_le(in, path, offset);
    offset += 4;
    if (ck.version != kCheckpointVersion) {
        throw format_error(path + ": unsupported version at offset 4");
    }
    ck.config_json = detail::read_lp_string(in, path, offset);
    ck.updates = detail::read_u64_le(in, path, offset);
    offset += 8;
    ck.rng_state = detail::read_lp_string(in, path, offset);
    const std::uint32_t count = detail::read_u32_le(in, path, offset);
    offset += 4;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = detail::read_lp_string(in, path, offset);
        const std::uint32_t rank = detail::read_u32_le(in, path, offset);
        offset += 4;
        std::vector<std::size_t> shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape[d] = detail::read_u32_le(in, path, offset);
            offset += 4;
        }
        Tensor t(shape);
        for (std::size_t j = 0; j < t.size(); ++j) {
            t[j] = detail::read_f64_le(in, path, offset);
            offset += 8;
        }
        ck.params.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

inline Checkpoint make_checkpoint(const ModelParams& params, const std::string& config_json,
                                  std::uint64_t updates, const Rng& rng) {
    Checkpoint ck;
    ck.config_json = config_json;
    ck.updates = updates;
    ck.rng_state = rng.serialize();
    params.visit([&ck](const char* name, const Tensor& t) { ck.params.emplace_back(name, t); });
    return ck;
}

/// Restores model parameters by name; every model array must be present with
/// a matching shape.
inline void load_model_params(const Checkpoint& ck, ModelParams& params) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, tensor] : ck.params) by_name[name] = &tensor;
    params.visit([&by_name](const char* name, Tensor& t) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw config_error(std::string("checkpoint: missing parameter ") + name);
        }
        if (it->second->shape() != t.shape()) {
            throw config_error(std::string("checkpoint: shape mismatch for ") + name);
        }
        t = *it->second;
    });
}

}  // namespace glimt
