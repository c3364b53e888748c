#pragma once

#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "glimt/errors.hpp"
#include "glimt/tensor.hpp"

namespace glimt {
namespace detail {

inline void read_exact(std::istream& in, void* buf, std::size_t n, const std::string& path,
                       std::size_t offset) {
    in.read(static_cast<char*>(buf), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw format_error(path + ": truncated at offset " + std::to_string(offset));
    }
}

inline std::uint32_t load_u32_be(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline std::uint32_t load_u32_le(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

inline void store_u32_le(std::uint32_t v, unsigned char* p) {
    p[0] = static_cast<unsigned char>(v & 0xff);
    p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
    p[2] = static_cast<unsigned char>((v >> 16) & 0xff);
    p[3] = static_cast<unsigned char>((v >> 24) & 0xff);
}

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4];
    store_u32_le(v, buf);
    out.write(reinterpret_cast<const char*>(buf), 4);
}

inline std::uint32_t read_u32_le(std::istream& in, const std::string& path, std::size_t offset) {
    unsigned char buf[4];
    read_exact(in, buf, 4, path, offset);
    return load_u32_le(buf);
}

inline void write_f32_le(std::ostream& out, float v) {
    std::uint32_t bits;
    static_assert(sizeof bits == sizeof v);
    std::memcpy(&bits, &v, 4);
    write_u32_le(out, bits);
}

inline float read_f32_le(std::istream& in, const std::string& path, std::size_t offset) {
    const std::uint32_t bits = read_u32_le(in, path, offset);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

constexpr std::uint32_t kIdxImageMagic = 0x00000803;  // uint8 payload, rank 3

/// Loads an IDX container of uint8 images (big-endian header), scaling pixel
/// values to [0,1].
inline std::vector<Tensor> read_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("read_idx_images: cannot open " + path);
    unsigned char header[16];
    detail::read_exact(in, header, 16, path, 0);
    const std::uint32_t magic = detail::load_u32_be(header);
    if (magic != kIdxImageMagic) {
        throw format_error(path + ": bad magic at offset 0 (got 0x" + [magic] {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%08x", magic);
            return std::string(buf);
        }() + ")");
    }
    const std::size_t count = detail::load_u32_be(header + 4);
    const std::size_t rows = detail::load_u32_be(header + 8);
    const std::size_t cols = detail::load_u32_be(header + 12);
    if (rows == 0 || cols == 0) throw format_error(path + ": zero image extents at offset 8");
    std::vector<Tensor> images;
    images.reserve(count);
    std::vector<unsigned char> buf(rows * cols);
    for (std::size_t i = 0; i < count; ++i) {
        detail::read_exact(in, buf.data(), buf.size(), path, 16 + i * buf.size());
        Tensor img({rows, cols});
        for (std::size_t j = 0; j < buf.size(); ++j) img[j] = buf[j] / 255.0;
        images.push_back(std::move(img));
    }
    return images;
}

/// Writes a [0,1]-valued image as an 8-bit binary PGM. The optional comment
/// (no newlines) is stored as a header comment line.
inline void write_pgm(const std::string& path, const Tensor& image,
                      const std::string& comment = "") {
    if (image.rank() != 2) throw invalid_argument("write_pgm: image must be rank-2");
    if (comment.find('\n') != std::string::npos) {
        throw invalid_argument("write_pgm: comment must be a single line");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("write_pgm: cannot open " + path);
    out << "P5\n";
    if (!comment.empty()) out << "# " << comment << "\n";
    out << image.cols() << " " << image.rows() << "\n255\n";
    std::vector<unsigned char> buf(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) {
        double v = image[i];
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw io_error("write_pgm: write failed for " + path);
}

/// Reads an 8-bit binary PGM into a [0,1]-valued image.
inline Tensor read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("read_pgm: cannot open " + path);
    auto next_token = [&in, &path]() {
        std::string tok;
        int c = in.get();
        while (c != EOF) {
            if (c == '#') {
                while (c != EOF && c != '\n') c = in.get();
            } else if (std::isspace(c)) {
                c = in.get();
            } else {
                break;
            }
        }
        while (c != EOF && !std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            c = in.get();
        }
        if (tok.empty()) throw format_error(path + ": truncated PGM header");
        return tok;
    };
    if (next_token() != "P5") throw format_error(path + ": not a binary PGM (P5)");
    const long cols = std::stol(next_token());
    const long rows = std::stol(next_token());
    const long maxval = std::stol(next_token());
    if (cols <= 0 || rows <= 0) throw format_error(path + ": bad PGM extents");
    if (maxval <= 0 || maxval > 255) throw format_error(path + ": unsupported PGM maxval");
    std::vector<unsigned char> buf(static_cast<std::size_t>(rows * cols));
    detail::read_exact(in, buf.data(), buf.size(), path, 0);
    Tensor img({static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)});
    for (std::size_t i = 0; i < buf.size(); ++i) img[i] = buf[i] / static_cast<double>(maxval);
    return img;
}

constexpr char kEpisodeMagic[4] = {'G', 'L', 'E', 'P'};
constexpr std::uint32_t kEpisodeVersion = 1;

/// Writes one episode (inputs then targets, 32-bit little-endian floats).
inline void write_glep(const std::string& path, const std::vector<Tensor>& inputs,
                       const std::vector<Tensor>& targets) {
    if (inputs.empty() || inputs.size() != targets.size()) {
        throw invalid_argument("write_glep: inputs and targets must be non-empty, equal-length");
    }
    const std::size_t h = inputs[0].rows(), w = inputs[0].cols();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("write_glep: cannot open " + path);
    out.write(kEpisodeMagic, 4);
    detail::write_u32_le(out, kEpisodeVersion);
    detail::write_u32_le(out, static_cast<std::uint32_t>(h));
    detail::write_u32_le(out, static_cast<std::uint32_t>(w));
    detail::write_u32_le(out, static_cast<std::uint32_t>(inputs.size()));
    for (const auto* frames : {&inputs, &targets}) {
        for (const Tensor& f : *frames) {
            if (f.rank() != 2 || f.rows() != h || f.cols() != w) {
                throw invalid_argument("write_glep: inconsistent frame shapes");
            }
            for (std::size_t i = 0; i < f.size(); ++i) {
                detail::write_f32_le(out, static_cast<float>(f[i]));
            }
        }
    }
    if (!out) throw io_error("write_glep: write failed for " + path);
}

/// Reads one episode container; inverse of write_glep.
inline void read_glep(const std::string& path, std::vector<Tensor>& inputs,
                      std::vector<Tensor>& targets) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("read_glep: cannot open " + path);
    char magic[4];
    detail::read_exact(in, magic, 4, path, 0);
    if (std::memcmp(magic, kEpisodeMagic, 4) != 0) {
        throw format_error(path + ": bad magic at offset 0");
    }
    const std::uint32_t version = detail::read_u32_le(in, path, 4);
    if (version != kEpisodeVersion) {
        throw format_error(path + ": unsupported version at offset 4");
    }
    const std::uint32_t h = detail::read_u32_le(in, path, 8);
    const std::uint32_t w = detail::read_u32_le(in, path, 12);
    const std::uint32_t horizon = detail::read_u32_le(in, path, 16);
    if (h == 0 || w == 0 || horizon == 0) {
        throw format_error(path + ": zero extents at offset 8");
    }
    inputs.clear();
    targets.clear();
    std::size_t offset = 20;
    for (auto* frames : {&inputs, &targets}) {
        for (std::uint32_t t = 0; t < horizon; ++t) {
            Tensor f({h, w});
            for (std::size_t i = 0; i < f.size(); ++i) {
                f[i] = detail::read_f32_le(in, path, offset);
                offset += 4;
            }
            frames->push_back(std::move(f));
        }
    }
}

}  // namespace glimt
