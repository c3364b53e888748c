#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "glimt/attention.hpp"
#include "glimt/formats.hpp"
#include "glimt/model.hpp"
#include "glimt/tensor.hpp"

namespace glimt {

namespace detail {

inline void blit(Tensor& canvas, const Tensor& tile, std::size_t row0, std::size_t col0) {
    for (std::size_t r = 0; r < tile.rows(); ++r) {
        for (std::size_t c = 0; c < tile.cols(); ++c) {
            canvas.at(row0 + r, col0 + c) = tile.at(r, c);
        }
    }
}

}  // namespace detail

/// Per-frame attention footprint of the 1x scale: fy' · fx, max-normalized.
inline Tensor attention_footprint(const GlimpseParams& g, std::size_t grid_side, std::size_t h,
                                  std::size_t w) {
    Filterbank fb = build_filterbank({g.center_x, g.center_y}, g.delta, g.sigma, grid_side, h, w);
    Tensor a = Tensor::zeros({h, w});
    double maxv = 0.0;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < grid_side; ++i) acc += fb.fy.at(i, r) * fb.fx.at(i, c);
            a.at(r, c) = acc;
            maxv = std::max(maxv, acc);
        }
    }
    if (maxv > 0.0) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] /= maxv;
    }
    return a;
}

/// Three-row summary strip: inputs on top, beliefs in the middle, attention
/// footprints at the bottom, with one-pixel gray separators. Output extents:
/// (3H + 2) x (T*W + T - 1).
inline Tensor compose_trace_strip(const Trace& trace, const std::vector<Tensor>& inputs,
                                  std::size_t grid_side) {
    if (trace.steps.size() != inputs.size() || inputs.empty()) {
        throw invalid_argument("compose_trace_strip: trace and episode lengths disagree");
    }
    const std::size_t h = inputs[0].rows(), w = inputs[0].cols(), horizon = inputs.size();
    Tensor strip = Tensor::full({3 * h + 2, horizon * w + horizon - 1}, 0.5);
    for (std::size_t t = 0; t < horizon; ++t) {
        const std::size_t col0 = t * (w + 1);
        detail::blit(strip, inputs[t], 0, col0);
        detail::blit(strip, trace.steps[t].belief, h + 1, col0);
        detail::blit(strip, attention_footprint(trace.steps[t].glimpse, grid_side, h, w),
                     2 * h + 2, col0);
    }
    return strip;
}

inline void render_trace(const Trace& trace, const std::vector<Tensor>& inputs,
                         const std::string& path, std::size_t grid_side,
                         const std::string& comment = "") {
    write_pgm(path, compose_trace_strip(trace, inputs, grid_side), comment);
}

}  // namespace glimt
