#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "glimt/tape.hpp"
#include "glimt/tensor.hpp"

namespace glimt {

/// Additive floor applied to every unnormalized filter weight, so rows keep
/// summing to one even when the grid sits far outside the image.
constexpr double kFilterFloor = 1e-8;

/// Decoded read-op control signal. center_* are normalized coordinates in
/// [-1, 1] (-1 = left/top edge, +1 = right/bottom edge); delta and sigma are
/// in pixels; gamma holds one non-negative reading strength per active scale.
struct GlimpseParams {
    double center_x = 0.0;
    double center_y = 0.0;
    double delta = 1.0;
    double sigma = 1.0;
    std::vector<double> gamma;

    void validate() const {
        if (!(delta > 0.0)) throw invalid_argument("GlimpseParams: delta must be positive");
        if (!(sigma > 0.0)) throw invalid_argument("GlimpseParams: sigma must be positive");
        for (double g : gamma) {
            if (!(g >= 0.0)) throw invalid_argument("GlimpseParams: gamma must be non-negative");
        }
    }
};

/// Normalized Gaussian filter grids for one scale: fx is N x W, fy is N x H.
/// Every row is non-negative and sums to one.
struct Filterbank {
    Tensor fx;
    Tensor fy;
};

/// Continuous pixel coordinates of the filter means along one axis.
/// Pixel a ∈ {0..extent-1} sits at coordinate a; a normalized center of -1
/// maps to pixel 0 and +1 to pixel extent-1. Filter i of N is offset
/// (i - N/2 + 0.5) * delta from the mapped center (1-based i in the usual
/// grid convention, hence the half-step).
inline std::vector<double> filter_means(double center, double delta, std::size_t grid_side,
                                        std::size_t extent) {
    std::vector<double> mu(grid_side);
    const double mapped = (center + 1.0) * 0.5 * static_cast<double>(extent - 1);
    for (std::size_t i = 0; i < grid_side; ++i) {
        const double offset = (static_cast<double>(i + 1) - static_cast<double>(grid_side) / 2.0 - 0.5);
        mu[i] = mapped + offset * delta;
    }
    return mu;
}

namespace detail {

// Shared forward kernel: floored Gaussian rows, renormalized to sum one.
inline Tensor gaussian_rows_value(const std::vector<double>& mu, double sigma,
                                  std::size_t extent) {
    const std::size_t n = mu.size();
    Tensor f = Tensor::zeros({n, extent});
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t a = 0; a < extent; ++a) {
            const double d = static_cast<double>(a) - mu[i];
            const double u = std::exp(-d * d * inv2s2) + kFilterFloor;
            f.at(i, a) = u;
            sum += u;
        }
        const double inv = 1.0 / sum;
        for (std::size_t a = 0; a < extent; ++a) f.at(i, a) *= inv;
    }
    return f;
}

}  // namespace detail

/// Build the Gaussian filter grid for one scale.
inline Filterbank build_filterbank(std::pair<double, double> center, double delta, double sigma,
                                   std::size_t grid_side, std::size_t height, std::size_t width) {
    if (grid_side < 1) throw invalid_argument("build_filterbank: grid_side must be >= 1");
    if (height < 1 || width < 1) throw invalid_argument("build_filterbank: empty image");
    if (!(delta > 0.0)) throw invalid_argument("build_filterbank: delta must be positive");
    if (!(sigma > 0.0)) throw invalid_argument("build_filterbank: sigma must be positive");
    Filterbank fb;
    fb.fx = detail::gaussian_rows_value(filter_means(center.first, delta, grid_side, width),
                                        sigma, width);
    fb.fy = detail::gaussian_rows_value(filter_means(center.second, delta, grid_side, height),
                                        sigma, height);
    return fb;
}

/// Apply one scale's filter grid: gamma * (fy · image · fxᵀ), flattened.
inline Tensor apply_filterbank(const Tensor& image, const Filterbank& fb, double gamma) {
    const std::size_t n = fb.fy.rows(), h = image.rows(), w = image.cols();
    Tensor tmp = Tensor::zeros({n, w});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < h; ++r) {
            const double fyr = fb.fy.at(i, r);
            if (fyr == 0.0) continue;
            for (std::size_t c = 0; c < w; ++c) tmp.at(i, c) += fyr * image.at(r, c);
        }
    }
    Tensor out = Tensor::zeros({n * n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < w; ++c) acc += tmp.at(i, c) * fb.fx.at(j, c);
            out[i * n + j] = gamma * acc;
        }
    }
    return out;
}

/// Multi-scale read. Scale multiplier m widens both the spacing and the
/// filter width (m*delta, m*sigma); scales are concatenated in the given
/// order, conventionally {1} or {1, 2}. Output length grid_side² * |scales|.
inline Tensor read_glimpse(const Tensor& image, const GlimpseParams& params,
                           const std::vector<int>& scales, std::size_t grid_side) {
    if (scales.empty()) throw invalid_argument("read_glimpse: empty scale list");
    if (image.rank() != 2) throw invalid_argument("read_glimpse: image must be rank-2");
    if (params.gamma.size() < scales.size()) {
        throw invalid_argument("read_glimpse: one gamma per scale required");
    }
    params.validate();
    const std::size_t h = image.rows(), w = image.cols();
    std::vector<double> out;
    out.reserve(grid_side * grid_side * scales.size());
    for (std::size_t s = 0; s < scales.size(); ++s) {
        const double m = static_cast<double>(scales[s]);
        Filterbank fb = build_filterbank({params.center_x, params.center_y}, m * params.delta,
                                         m * params.sigma, grid_side, h, w);
        Tensor r = apply_filterbank(image, fb, params.gamma[s]);
        out.insert(out.end(), r.values().begin(), r.values().end());
    }
    return Tensor::vector(std::move(out));
}

/// Map a control latent to glimpse parameters:
///   center  = tanh(z[0]), tanh(z[1])
///   delta   = delta_ref * exp(z[2])
///   sigma   = sigma_ref * exp(z[3])
///   gamma_s = exp(z[4 + s])
/// Exponent arguments are clamped to ±30 so any finite latent decodes to
/// finite, strictly positive spacing and width.
constexpr double kDecodeExpClamp = 30.0;

inline GlimpseParams decode_glimpse(const Tensor& latent, double delta_ref, double sigma_ref,
                                    std::size_t n_scales) {
    if (latent.rank() != 1 || latent.size() != 4 + n_scales) {
        throw invalid_argument("decode_glimpse: latent dimension must be " +
                               std::to_string(4 + n_scales) + ", got " +
                               std::to_string(latent.size()));
    }
    auto cexp = [](double v) {
        v = v < -kDecodeExpClamp ? -kDecodeExpClamp : (v > kDecodeExpClamp ? kDecodeExpClamp : v);
        return std::exp(v);
    };
    GlimpseParams p;
    p.center_x = std::tanh(latent[0]);
    p.center_y = std::tanh(latent[1]);
    p.delta = delta_ref * cexp(latent[2]);
    p.sigma = sigma_ref * cexp(latent[3]);
    p.gamma.resize(n_scales);
    for (std::size_t s = 0; s < n_scales; ++s) p.gamma[s] = cexp(latent[4 + s]);
    return p;
}

// ---- tape-side versions ----

struct GlimpseVars {
    Var center_x, center_y, delta, sigma;  // scalars
    std::vector<Var> gamma;                // scalars, one per scale
};

struct FilterbankVars {
    Var fx, fy;
};

/// Filter means as a differentiable op: mu_i = (c+1)(E-1)/2 + offset_i * delta.
inline Var grid_means(Tape& tape, Var center, Var delta, std::size_t grid_side,
                      std::size_t extent) {
    const double c = tape.value(center)[0];
    const double d = tape.value(delta)[0];
    if (tape.value(center).size() != 1 || tape.value(delta).size() != 1) {
        throw invalid_argument("grid_means: center and delta must be scalars");
    }
    Tensor mu = Tensor::vector(filter_means(c, d, grid_side, extent));
    if (!tape.wants_grad(center) && !tape.wants_grad(delta)) {
        return tape.constant(std::move(mu));
    }
    Var out = tape.push(std::move(mu), true, nullptr);
    const int oid = out.id, cid = center.id, did = delta.id;
    const double half_span = 0.5 * static_cast<double>(extent - 1);
    const double half_grid = static_cast<double>(grid_side) / 2.0;
    tape.set_backward(out, [oid, cid, did, half_span, half_grid](Tape& t) {
        const Tensor& g = t.grad(Var{oid});
        if (t.wants_grad(Var{cid})) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i];
            t.grad_ref(Var{cid})[0] += acc * half_span;
        }
        if (t.wants_grad(Var{did})) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double offset = static_cast<double>(i + 1) - half_grid - 0.5;
                acc += g[i] * offset;
            }
            t.grad_ref(Var{did})[0] += acc;
        }
    });
    return out;
}

/// Floored, row-normalized Gaussian filter rows as a differentiable op.
/// Differentiable in the filter means and in sigma.
inline Var gaussian_rows(Tape& tape, Var mu, Var sigma, std::size_t extent) {
    const Tensor& vmu = tape.value(mu);
    const double s = tape.value(sigma)[0];
    if (vmu.rank() != 1) throw invalid_argument("gaussian_rows: mu must be rank-1");
    if (tape.value(sigma).size() != 1) throw invalid_argument("gaussian_rows: sigma must be a scalar");
    if (!(s > 0.0)) throw invalid_argument("gaussian_rows: sigma must be positive");

    Tensor f = detail::gaussian_rows_value(vmu.values(), s, extent);
    if (!tape.wants_grad(mu) && !tape.wants_grad(sigma)) return tape.constant(std::move(f));

    const std::size_t n = vmu.size();
    Var out = tape.push(std::move(f), true, nullptr);
    const int oid = out.id, mid = mu.id, sid = sigma.id;
    tape.set_backward(out, [oid, mid, sid, n, extent](Tape& t) {
        const Tensor& g = t.grad(Var{oid});
        const Tensor& vm = t.value(Var{mid});
        const double sv = t.value(Var{sid})[0];
        const double inv2s2 = 1.0 / (2.0 * sv * sv);
        const double inv_s2 = 1.0 / (sv * sv);
        const double inv_s3 = 1.0 / (sv * sv * sv);
        double sigma_acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            // Recompute the unnormalized weights for this row.
            double sum = 0.0;
            std::vector<double> e(extent);
            for (std::size_t a = 0; a < extent; ++a) {
                const double d = static_cast<double>(a) - vm[i];
                e[a] = std::exp(-d * d * inv2s2);
                sum += e[a] + kFilterFloor;
            }
            const double inv_sum = 1.0 / sum;
            // F_a = (e_a + eps)/S;  dF_a/dx = (de_a/dx)/S - F_a * (sum_b de_b/dx)/S
            double g_dot_f = 0.0;  // sum_a G_a * F_a
            double g_dot_demu = 0.0, sum_demu = 0.0;
            double g_dot_desig = 0.0, sum_desig = 0.0;
            for (std::size_t a = 0; a < extent; ++a) {
                const double d = static_cast<double>(a) - vm[i];
                const double fa = (e[a] + kFilterFloor) * inv_sum;
                const double demu = e[a] * d * inv_s2;       // d e_a / d mu_i
                const double desig = e[a] * d * d * inv_s3;  // d e_a / d sigma
                const double ga = g[i * extent + a];
                g_dot_f += ga * fa;
                g_dot_demu += ga * demu;
                sum_demu += demu;
                g_dot_desig += ga * desig;
                sum_desig += desig;
            }
            if (t.wants_grad(Var{mid})) {
                t.grad_ref(Var{mid})[i] += (g_dot_demu - g_dot_f * sum_demu) * inv_sum;
            }
            sigma_acc += (g_dot_desig - g_dot_f * sum_desig) * inv_sum;
        }
        if (t.wants_grad(Var{sid})) t.grad_ref(Var{sid})[0] += sigma_acc;
    });
    return out;
}

/// Differentiable filterbank for one scale.
inline FilterbankVars build_filterbank(Tape& tape, Var center_x, Var center_y, Var delta,
                                       Var sigma, std::size_t grid_side, std::size_t height,
                                       std::size_t width) {
    if (grid_side < 1) throw invalid_argument("build_filterbank: grid_side must be >= 1");
    if (!(tape.value(delta)[0] > 0.0)) throw invalid_argument("build_filterbank: delta must be positive");
    if (!(tape.value(sigma)[0] > 0.0)) throw invalid_argument("build_filterbank: sigma must be positive");
    FilterbankVars fb;
    fb.fx = gaussian_rows(tape, grid_means(tape, center_x, delta, grid_side, width), sigma, width);
    fb.fy = gaussian_rows(tape, grid_means(tape, center_y, delta, grid_side, height), sigma, height);
    return fb;
}

/// Differentiable multi-scale read of an image variable.
inline Var read_glimpse(Tape& tape, Var image, const GlimpseVars& params,
                        const std::vector<int>& scales, std::size_t grid_side) {
    if (scales.empty()) throw invalid_argument("read_glimpse: empty scale list");
    if (params.gamma.size() < scales.size()) {
        throw invalid_argument("read_glimpse: one gamma per scale required");
    }
    const Tensor& img = tape.value(image);
    if (img.rank() != 2) throw invalid_argument("read_glimpse: image must be rank-2");
    const std::size_t h = img.rows(), w = img.cols();
    std::vector<Var> parts;
    parts.reserve(scales.size());
    for (std::size_t s = 0; s < scales.size(); ++s) {
        const double m = static_cast<double>(scales[s]);
        Var d_s = m == 1.0 ? params.delta : tape.scale(params.delta, m);
        Var s_s = m == 1.0 ? params.sigma : tape.scale(params.sigma, m);
        FilterbankVars fb =
            build_filterbank(tape, params.center_x, params.center_y, d_s, s_s, grid_side, h, w);
        Var filtered = tape.matmul(fb.fy, image);            // [N, W]
        Var patch = tape.matmul_nt(filtered, fb.fx);         // [N, N]
        Var flat = tape.reshape(patch, {grid_side * grid_side});
        parts.push_back(tape.smul(flat, params.gamma[s]));
    }
    return parts.size() == 1 ? parts[0] : tape.concat(parts);
}

/// Differentiable latent -> glimpse decoding; see the value-level overload
/// for the exact map.
inline GlimpseVars decode_glimpse(Tape& tape, Var latent, double delta_ref, double sigma_ref,
                                  std::size_t n_scales) {
    const Tensor& z = tape.value(latent);
    if (z.rank() != 1 || z.size() != 4 + n_scales) {
        throw invalid_argument("decode_glimpse: latent dimension must be " +
                               std::to_string(4 + n_scales) + ", got " + std::to_string(z.size()));
    }
    GlimpseVars p;
    p.center_x = tape.tanh(tape.slice(latent, 0, 1));
    p.center_y = tape.tanh(tape.slice(latent, 1, 1));
    auto cexp = [&](std::size_t idx) {
        return tape.exp(tape.clamp(tape.slice(latent, idx, 1), -kDecodeExpClamp, kDecodeExpClamp));
    };
    p.delta = tape.scale(cexp(2), delta_ref);
    p.sigma = tape.scale(cexp(3), sigma_ref);
    p.gamma.reserve(n_scales);
    for (std::size_t s = 0; s < n_scales; ++s) p.gamma.push_back(cexp(4 + s));
    return p;
}

/// Value snapshot of tape-side glimpse parameters, for traces and rendering.
inline GlimpseParams snapshot(const Tape& tape, const GlimpseVars& vars) {
    GlimpseParams p;
    p.center_x = tape.value(vars.center_x)[0];
    p.center_y = tape.value(vars.center_y)[0];
    p.delta = tape.value(vars.delta)[0];
    p.sigma = tape.value(vars.sigma)[0];
    p.gamma.reserve(vars.gamma.size());
    for (Var g : vars.gamma) p.gamma.push_back(tape.value(g)[0]);
    return p;
}

}  // namespace glimt
