#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "glimt/tensor.hpp"

namespace glimt {

/// Deterministic random source. All draws go through explicit conversions
/// of raw mt19937_64 output so the stream is identical across standard
/// library implementations, and the full state round-trips through text.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller. Always consumes exactly two uniform
    /// draws and keeps no spare, so the draw count is predictable.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    Tensor normal_tensor(std::vector<std::size_t> shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal();
        return t;
    }

    std::uint64_t raw() { return engine_(); }

    /// Independent child stream for (master seed, index) pairs: episode
    /// streams stay identical no matter how work is scheduled.
    static Rng stream(std::uint64_t master_seed, std::uint64_t index) {
        return Rng(mix(mix(master_seed) + 0x9e3779b97f4a7c15ull * (index + 1)));
    }

    std::string serialize() const {
        std::ostringstream oss;
        oss << engine_;
        return oss.str();
    }

    static Rng deserialize(const std::string& state) {
        Rng r(0);
        std::istringstream iss(state);
        iss >> r.engine_;
        if (!iss) throw format_error("Rng::deserialize: unparsable engine state");
        return r;
    }

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    // splitmix64 finalizer; decorrelates consecutive seeds.
    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
};

}  // namespace glimt
