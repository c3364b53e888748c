#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "glimt/formats.hpp"
#include "glimt/objective.hpp"
#include "glimt/rng.hpp"
#include "glimt/tensor.hpp"

namespace glimt {

struct ObjectSpec {
    enum class Shape { cross, circle };
    Shape shape = Shape::cross;
    std::size_t half_extent = 2;
    double intensity = 1.0;
    bool is_target = false;

    void validate() const {
        if (half_extent < 1) throw invalid_argument("ObjectSpec: half_extent must be >= 1");
        if (!(intensity > 0.0 && intensity <= 1.0)) {
            throw invalid_argument("ObjectSpec: intensity must be in (0,1]");
        }
    }
};

struct TaskSpec {
    std::size_t frame_h = 20;
    std::size_t frame_w = 20;
    std::size_t horizon = 15;
    std::size_t warmup = 5;
    std::vector<ObjectSpec> objects;
    double max_speed = 1.5;
    double reset_prob = 0.05;
    double noise_prob = 0.05;
    double poisson_rate = 0.0;  // 0 picks the default for (horizon, warmup)

    void validate() const {
        if (horizon <= warmup) throw invalid_argument("TaskSpec: horizon must exceed warmup");
        if (!(max_speed > 0.0)) throw invalid_argument("TaskSpec: max_speed must be positive");
        if (reset_prob < 0.0 || reset_prob > 1.0 || noise_prob < 0.0 || noise_prob > 1.0) {
            throw invalid_argument("TaskSpec: probabilities must lie in [0,1]");
        }
        for (const ObjectSpec& o : objects) o.validate();
    }

    double rate() const { return poisson_rate > 0.0 ? poisson_rate : default_poisson_rate(horizon, warmup); }
};

struct Episode {
    std::vector<Tensor> inputs;
    std::vector<Tensor> targets;
    CostWeights weights;
};

/// Folds a freshly advanced coordinate back into [lo, hi], flipping the
/// velocity once per wall hit. Handles multi-bounce steps in closed form.
inline std::pair<double, double> reflect_into(double pos, double vel, double lo, double hi) {
    const double span = hi - lo;
    if (span < 0.0) throw invalid_argument("reflect_into: empty interval");
    if (span == 0.0) return {lo, vel};
    double rel = std::fmod(pos - lo, 2.0 * span);
    if (rel < 0.0) rel += 2.0 * span;
    if (rel <= span) return {lo + rel, vel};
    return {lo + (2.0 * span - rel), -vel};
}

struct Trajectory {
    std::vector<std::array<double, 2>> positions;  // (row, col) per step
    std::size_t resets = 0;
};

namespace detail {

inline std::array<double, 2> disc_velocity(Rng& rng, double max_speed) {
    const double r = max_speed * std::sqrt(rng.uniform());
    const double theta = 2.0 * M_PI * rng.uniform();
    return {r * std::sin(theta), r * std::cos(theta)};
}

}  // namespace detail

/// Bouncing trajectory of one object center. The valid interior keeps the
/// object margin pixels away from every edge.
inline Trajectory sample_trajectory(Rng& rng, std::size_t horizon, std::size_t frame_h,
                                    std::size_t frame_w, double max_speed, double reset_prob,
                                    double margin) {
    if (horizon == 0) throw invalid_argument("sample_trajectory: empty horizon");
    if (!(max_speed > 0.0)) throw invalid_argument("sample_trajectory: max_speed must be positive");
    const double hi_r = static_cast<double>(frame_h - 1) - margin;
    const double hi_c = static_cast<double>(frame_w - 1) - margin;
    if (hi_r < margin || hi_c < margin) {
        throw invalid_argument("sample_trajectory: object does not fit in the frame");
    }
    Trajectory traj;
    traj.positions.resize(horizon);
    std::array<double, 2> pos = {margin + rng.uniform() * (hi_r - margin),
                                 margin + rng.uniform() * (hi_c - margin)};
    std::array<double, 2> vel = detail::disc_velocity(rng, max_speed);
    traj.positions[0] = pos;
    for (std::size_t t = 1; t < horizon; ++t) {
        if (reset_prob > 0.0 && rng.uniform() < reset_prob) {
            vel = detail::disc_velocity(rng, max_speed);
            ++traj.resets;
        }
        auto [pr, vr] = reflect_into(pos[0] + vel[0], vel[0], margin, hi_r);
        auto [pc, vc] = reflect_into(pos[1] + vel[1], vel[1], margin, hi_c);
        pos = {pr, pc};
        vel = {vr, vc};
        traj.positions[t] = pos;
    }
    return traj;
}

namespace detail {

inline void add_pixel(Tensor& frame, long r, long c, double intensity) {
    if (r < 0 || c < 0 || r >= static_cast<long>(frame.rows()) ||
        c >= static_cast<long>(frame.cols())) {
        return;
    }
    frame[static_cast<std::size_t>(r) * frame.cols() + static_cast<std::size_t>(c)] += intensity;
}

inline void rasterize(Tensor& frame, const ObjectSpec& obj, double row, double col) {
    const long r0 = std::lround(row), c0 = std::lround(col);
    const long he = static_cast<long>(obj.half_extent);
    if (obj.shape == ObjectSpec::Shape::cross) {
        for (long dc = -he; dc <= he; ++dc) add_pixel(frame, r0, c0 + dc, obj.intensity);
        for (long dr = -he; dr <= he; ++dr) {
            if (dr != 0) add_pixel(frame, r0 + dr, c0, obj.intensity);
        }
    } else {
        for (long dr = -he; dr <= he; ++dr) {
            for (long dc = -he; dc <= he; ++dc) {
                if (dr * dr + dc * dc <= he * he) add_pixel(frame, r0 + dr, c0 + dc, obj.intensity);
            }
        }
    }
}

}  // namespace detail

/// Rasterizes objects at their (rounded) centers, optionally sprinkles
/// uniform noise per pixel, and clips to [0,1].
inline Tensor render_frame(const std::vector<ObjectSpec>& objects,
                           const std::vector<std::array<double, 2>>& centers, std::size_t frame_h,
                           std::size_t frame_w, double noise_prob, Rng& rng) {
    if (objects.size() != centers.size()) {
        throw invalid_argument("render_frame: one center per object required");
    }
    Tensor frame = Tensor::zeros({frame_h, frame_w});
    for (std::size_t i = 0; i < objects.size(); ++i) {
        objects[i].validate();
        detail::rasterize(frame, objects[i], centers[i][0], centers[i][1]);
    }
    if (noise_prob > 0.0) {
        for (std::size_t i = 0; i < frame.size(); ++i) {
            if (rng.uniform() < noise_prob) frame[i] += rng.uniform();
        }
    }
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = std::clamp(frame[i], 0.0, 1.0);
    return frame;
}

/// Samples one tracking episode: noisy multi-object inputs, clean
/// target-only target frames, Poisson cost weights.
inline Episode make_episode(const TaskSpec& spec, Rng& rng) {
    spec.validate();
    std::vector<Trajectory> trajectories;
    trajectories.reserve(spec.objects.size());
    for (const ObjectSpec& obj : spec.objects) {
        trajectories.push_back(sample_trajectory(rng, spec.horizon, spec.frame_h, spec.frame_w,
                                                 spec.max_speed, spec.reset_prob,
                                                 static_cast<double>(obj.half_extent)));
    }
    std::vector<ObjectSpec> target_objects;
    for (const ObjectSpec& obj : spec.objects) {
        if (obj.is_target) target_objects.push_back(obj);
    }
    Episode ep;
    ep.weights = poisson_weights(spec.rate(), spec.horizon, spec.warmup);
    for (std::size_t t = 0; t < spec.horizon; ++t) {
        std::vector<std::array<double, 2>> centers;
        centers.reserve(spec.objects.size());
        for (const Trajectory& traj : trajectories) centers.push_back(traj.positions[t]);
        ep.inputs.push_back(
            render_frame(spec.objects, centers, spec.frame_h, spec.frame_w, spec.noise_prob, rng));
    }
    for (std::size_t t = 0; t < spec.horizon; ++t) {
        std::vector<std::array<double, 2>> centers;
        for (std::size_t o = 0; o < spec.objects.size(); ++o) {
            if (spec.objects[o].is_target) centers.push_back(trajectories[o].positions[t]);
        }
        ep.targets.push_back(
            render_frame(target_objects, centers, spec.frame_h, spec.frame_w, 0.0, rng));
    }
    return ep;
}

/// A copying episode: the same still image as every input and target frame.
inline Episode make_static_episode(const Tensor& image, std::size_t horizon, std::size_t warmup,
                                   double poisson_rate = 0.0) {
    if (image.rank() != 2) throw invalid_argument("make_static_episode: image must be rank-2");
    if (horizon <= warmup) {
        throw invalid_argument("make_static_episode: horizon must exceed warmup");
    }
    const double rate =
        poisson_rate > 0.0 ? poisson_rate : default_poisson_rate(horizon, warmup);
    Episode ep;
    ep.weights = poisson_weights(rate, horizon, warmup);
    ep.inputs.assign(horizon, image);
    ep.targets.assign(horizon, image);
    return ep;
}

/// Random sprite image for the self-contained copying task: a few crosses
/// and circles at random positions and intensities, no noise.
inline Tensor make_shapes_image(std::size_t frame_h, std::size_t frame_w, Rng& rng) {
    Tensor frame = Tensor::zeros({frame_h, frame_w});
    const std::size_t count = 2 + static_cast<std::size_t>(rng.uniform() * 3.0);
    for (std::size_t i = 0; i < count; ++i) {
        ObjectSpec obj;
        obj.shape = rng.uniform() < 0.5 ? ObjectSpec::Shape::cross : ObjectSpec::Shape::circle;
        obj.half_extent = 2 + static_cast<std::size_t>(rng.uniform() * 3.0);
        obj.intensity = 0.6 + 0.4 * rng.uniform();
        const double margin = static_cast<double>(obj.half_extent);
        const double row = margin + rng.uniform() * (static_cast<double>(frame_h - 1) - 2 * margin);
        const double col = margin + rng.uniform() * (static_cast<double>(frame_w - 1) - 2 * margin);
        detail::rasterize(frame, obj, row, col);
    }
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = std::clamp(frame[i], 0.0, 1.0);
    return frame;
}

/// A named episode distribution plus the geometry the model needs for it.
struct EpisodeSource {
    std::string name;
    std::size_t frame_h = 0;
    std::size_t frame_w = 0;
    std::size_t horizon = 0;
    std::size_t warmup = 0;
    std::vector<int> scales;
    std::function<Episode(Rng&)> sample;
};

inline TaskSpec tracking_spec(std::size_t distractors, bool second_target = false) {
    TaskSpec spec;
    ObjectSpec cross;
    cross.shape = ObjectSpec::Shape::cross;
    cross.is_target = true;
    spec.objects.push_back(cross);
    if (second_target) {
        ObjectSpec extra;
        extra.shape = ObjectSpec::Shape::circle;
        extra.is_target = true;
        spec.objects.push_back(extra);
    }
    for (std::size_t i = 0; i < distractors; ++i) {
        ObjectSpec circle;
        circle.shape = ObjectSpec::Shape::circle;
        spec.objects.push_back(circle);
    }
    return spec;
}

/// Task registry. Names: "copy-shapes" (static 28x28 sprites), "track1"
/// (cross target + 1 circle distractor), "track2" (+ 2 distractors),
/// "trackmix" (cross + circle targets, 1 distractor), "idx:<path>" (static
/// episodes over an IDX image file), "pgmdir:<path>" (static episodes over a
/// directory of equal-sized PGMs).
inline EpisodeSource make_task_source(const std::string& name) {
    EpisodeSource src;
    src.name = name;
    auto static_source = [&src](std::vector<Tensor> images) {
        if (images.empty()) throw config_error(src.name + ": no images found");
        src.frame_h = images[0].rows();
        src.frame_w = images[0].cols();
        for (const Tensor& img : images) {
            if (img.rows() != src.frame_h || img.cols() != src.frame_w) {
                throw config_error(src.name + ": images disagree on extents");
            }
        }
        src.horizon = 8;
        src.warmup = 2;
        src.scales = {1};
        src.sample = [images = std::move(images), horizon = src.horizon,
                      warmup = src.warmup](Rng& rng) {
            std::size_t idx = static_cast<std::size_t>(rng.uniform() * images.size());
            if (idx >= images.size()) idx = images.size() - 1;
            return make_static_episode(images[idx], horizon, warmup);
        };
    };
    if (name == "copy-shapes") {
        src.frame_h = src.frame_w = 28;
        src.horizon = 8;
        src.warmup = 2;
        src.scales = {1};
        src.sample = [](Rng& rng) {
            return make_static_episode(make_shapes_image(28, 28, rng), 8, 2);
        };
    } else if (name == "track1" || name == "track2" || name == "trackmix") {
        TaskSpec spec = name == "track1"   ? tracking_spec(1)
                        : name == "track2" ? tracking_spec(2)
                                           : tracking_spec(1, /*second_target=*/true);
        src.frame_h = spec.frame_h;
        src.frame_w = spec.frame_w;
        src.horizon = spec.horizon;
        src.warmup = spec.warmup;
        src.scales = {1, 2};
        src.sample = [spec](Rng& rng) { return make_episode(spec, rng); };
    } else if (name.rfind("idx:", 0) == 0) {
        static_source(read_idx_images(name.substr(4)));
    } else if (name.rfind("pgmdir:", 0) == 0) {
        const std::filesystem::path dir = name.substr(7);
        std::vector<std::filesystem::path> files;
        if (!std::filesystem::is_directory(dir)) {
            throw config_error(name + ": not a directory");
        }
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        std::vector<Tensor> images;
        images.reserve(files.size());
        for (const auto& f : files) images.push_back(read_pgm(f.string()));
        static_source(std::move(images));
    } else {
        throw config_error("unknown task: " + name);
    }
    return src;
}

inline void write_episode(const std::string& path, const Episode& ep) {
    write_glep(path, ep.inputs, ep.targets);
}

inline Episode read_episode(const std::string& path, std::size_t warmup, double poisson_rate = 0.0) {
    Episode ep;
    read_glep(path, ep.inputs, ep.targets);
    if (warmup >= ep.inputs.size()) {
        throw invalid_argument("read_episode: warmup must be below the stored horizon");
    }
    const double rate = poisson_rate > 0.0
                            ? poisson_rate
                            : default_poisson_rate(ep.inputs.size(), warmup);
    ep.weights = poisson_weights(rate, ep.inputs.size(), warmup);
    return ep;
}

}  // namespace glimt
