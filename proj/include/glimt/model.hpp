#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "glimt/attention.hpp"
#include "glimt/lstm.hpp"
#include "glimt/rng.hpp"
#include "glimt/tape.hpp"
#include "glimt/tensor.hpp"

namespace glimt {

/// Static model geometry. The per-episode horizon comes from the episode
/// itself; this fixes frame extents, sensor layout, and state sizes.
struct ModelConfig {
    std::size_t frame_h = 20;
    std::size_t frame_w = 20;
    std::size_t grid_side = 2;
    std::vector<int> scales = {1, 2};
    std::size_t hidden_controller = 64;
    std::size_t hidden_observer = 64;
    std::size_t hidden_guide = 64;
    std::size_t z_o_dim = 32;

    // The movement latent carries (center_x, center_y, log-delta, log-sigma)
    // plus one log-strength per scale.
    std::size_t z_c_dim() const { return 4 + scales.size(); }
    std::size_t reading_len() const { return grid_side * grid_side * scales.size(); }
    double delta_ref() const { return static_cast<double>(frame_w) / 4.0; }
    double sigma_ref() const { return static_cast<double>(frame_w) / 8.0; }

    void validate() const {
        if (frame_h < 1 || frame_w < 1) throw config_error("ModelConfig: empty frame");
        if (grid_side < 1) throw config_error("ModelConfig: grid_side must be >= 1");
        if (scales.empty()) throw config_error("ModelConfig: at least one scale required");
        for (int s : scales) {
            if (s < 1) throw config_error("ModelConfig: scales must be positive");
        }
        if (hidden_controller == 0 || hidden_observer == 0 || hidden_guide == 0) {
            throw config_error("ModelConfig: hidden sizes must be positive");
        }
        if (z_o_dim == 0) throw config_error("ModelConfig: z_o_dim must be positive");
    }
};

/// Affine head producing either a distribution (mean, log variance fused in
/// one output) or a canvas write.
struct AffineHead {
    Tensor weight;
    Tensor bias;
};

struct HeadVars {
    Var weight;
    Var bias;
};

struct GaussianVars {
    Var mean;
    Var log_variance;
};

struct ModelParams {
    LstmCell controller;  // input: z_o sample
    LstmCell observer;    // input: reading
    LstmCell guide;       // input: [reading, residual reading]
    AffineHead prior_c;   // controller hidden -> z_c distribution
    AffineHead prior_o;   // observer hidden  -> z_o distribution
    AffineHead guide_c;   // guide hidden     -> z_c distribution
    AffineHead guide_o;   // guide hidden     -> z_o distribution
    AffineHead write;     // controller hidden -> canvas increment

    /// Fixed iteration order shared by the optimizer, checkpoints, and the
    /// tape registration below.
    template <typename F>
    void visit(F&& f) {
        f("controller.weight", controller.weight);
        f("controller.bias", controller.bias);
        f("observer.weight", observer.weight);
        f("observer.bias", observer.bias);
        f("guide.weight", guide.weight);
        f("guide.bias", guide.bias);
        f("prior_c.weight", prior_c.weight);
        f("prior_c.bias", prior_c.bias);
        f("prior_o.weight", prior_o.weight);
        f("prior_o.bias", prior_o.bias);
        f("guide_c.weight", guide_c.weight);
        f("guide_c.bias", guide_c.bias);
        f("guide_o.weight", guide_o.weight);
        f("guide_o.bias", guide_o.bias);
        f("write.weight", write.weight);
        f("write.bias", write.bias);
    }
    template <typename F>
    void visit(F&& f) const {
        const_cast<ModelParams*>(this)->visit(
            [&f](const char* name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
    }
};

inline AffineHead make_affine_head(std::size_t input, std::size_t output, Rng& rng) {
    AffineHead head;
    head.weight = Tensor({output, input});
    const double bound = 1.0 / std::sqrt(static_cast<double>(input));
    for (std::size_t i = 0; i < head.weight.size(); ++i) {
        head.weight[i] = (2.0 * rng.uniform() - 1.0) * bound;
    }
    head.bias = Tensor::zeros({output});
    return head;
}

/// Initial log-variance bias for latent heads. Unit-variance latents at
/// initialization drown the percept channel in sampling noise faster than the
/// write path can learn to use it, and training then settles on a static
/// mean-frame belief; starting the channels quiet (sigma ~ 0.37) keeps the
/// reading signal visible to the controller from the first update.
inline constexpr double kLogVarInit = -2.0;

/// A latent head is an affine head whose log-variance bias block starts at
/// kLogVarInit instead of zero. Guide and prior heads share this so their
/// initial KL stays near zero.
inline AffineHead make_latent_head(std::size_t input, std::size_t z_dim, Rng& rng) {
    AffineHead head = make_affine_head(input, 2 * z_dim, rng);
    for (std::size_t i = z_dim; i < 2 * z_dim; ++i) head.bias[i] = kLogVarInit;
    return head;
}

inline ModelParams make_model_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t r = cfg.reading_len();
    ModelParams p;
    p.controller = make_lstm_cell(cfg.z_o_dim, cfg.hidden_controller, rng);
    p.observer = make_lstm_cell(r, cfg.hidden_observer, rng);
    p.guide = make_lstm_cell(2 * r, cfg.hidden_guide, rng);
    p.prior_c = make_latent_head(cfg.hidden_controller, cfg.z_c_dim(), rng);
    p.prior_o = make_latent_head(cfg.hidden_observer, cfg.z_o_dim, rng);
    p.guide_c = make_latent_head(cfg.hidden_guide, cfg.z_c_dim(), rng);
    p.guide_o = make_latent_head(cfg.hidden_guide, cfg.z_o_dim, rng);
    p.write = make_affine_head(cfg.hidden_controller, cfg.frame_h * cfg.frame_w, rng);
    return p;
}

struct ModelVars {
    LstmVars controller, observer, guide;
    HeadVars prior_c, prior_o, guide_c, guide_o, write;
    std::vector<Var> ordered;  // same order as ModelParams::visit
};

inline ModelVars register_model(Tape& tape, const ModelParams& params, bool needs_grad = true) {
    ModelVars v;
    auto reg = [&](const Tensor& t) {
        Var var = tape.push(t, needs_grad, nullptr);
        v.ordered.push_back(var);
        return var;
    };
    v.controller = {reg(params.controller.weight), reg(params.controller.bias)};
    v.observer = {reg(params.observer.weight), reg(params.observer.bias)};
    v.guide = {reg(params.guide.weight), reg(params.guide.bias)};
    v.prior_c = {reg(params.prior_c.weight), reg(params.prior_c.bias)};
    v.prior_o = {reg(params.prior_o.weight), reg(params.prior_o.bias)};
    v.guide_c = {reg(params.guide_c.weight), reg(params.guide_c.bias)};
    v.guide_o = {reg(params.guide_o.weight), reg(params.guide_o.bias)};
    v.write = {reg(params.write.weight), reg(params.write.bias)};
    return v;
}

/// Distribution head: fused affine to [mean, raw log variance], with the log
/// variance clamped to the configured interval.
inline GaussianVars apply_head(Tape& tape, const HeadVars& head, Var h, std::size_t z_dim) {
    Var out = tape.affine(head.weight, h, head.bias);
    if (tape.value(out).size() != 2 * z_dim) {
        throw invalid_argument("apply_head: head output must be twice the latent dimension");
    }
    Var mean = tape.slice(out, 0, z_dim);
    Var logvar = tape.clamp(tape.slice(out, z_dim, z_dim), kLogVarMin, kLogVarMax);
    return {mean, logvar};
}

/// Additive canvas update; belief is the canvas squashed to (0,1).
inline std::pair<Var, Var> update_belief(Tape& tape, const HeadVars& write, Var canvas_prev,
                                         Var h_controller) {
    Var inc = tape.affine(write.weight, h_controller, write.bias);
    Var canvas = tape.add(canvas_prev, inc);
    return {canvas, tape.sigmoid(canvas)};
}

enum class RolloutMode { prior, guide };

struct StepVars {
    Var z_c, z_o;
    GaussianVars prior_c, prior_o;
    GaussianVars guide_c, guide_o;  // populated in guide mode only
    Var reading;
    Var residual_reading;  // guide mode only
    Var canvas, belief;
    GlimpseVars glimpse;
};

struct RolloutGraph {
    RolloutMode mode = RolloutMode::prior;
    std::vector<StepVars> steps;
};

/// One value-level step of a finished rollout.
struct StepRecord {
    Tensor z_c, z_o;
    GaussianParams prior_c, prior_o;
    std::optional<GaussianParams> guide_c, guide_o;
    Tensor reading;
    std::optional<Tensor> residual_reading;
    Tensor belief;  // frame-shaped
    GlimpseParams glimpse;
};

struct Trace {
    RolloutMode mode = RolloutMode::prior;
    std::vector<StepRecord> steps;
};

inline GaussianParams snapshot(const Tape& tape, const GaussianVars& g) {
    return {tape.value(g.mean), tape.value(g.log_variance)};
}

/// Unrolls the model over the episode frames on the given tape.
///
/// Per step: sample the movement latent (from its prior, or from the guide in
/// guide mode), decode the glimpse, read the input (and the reconstruction
/// residual in guide mode), advance the observer, sample the percept latent,
/// advance the controller, write to the canvas. Both priors are recorded at
/// every step so KL terms are defined against the sampled latents.
///
/// `replay_readings`, when given, substitutes the stored vector for the
/// input reading at each step; everything else (including noise consumption)
/// is unchanged. This is the hook used to verify the per-step input
/// bandwidth: the model's only access to the input frame is this vector.
inline RolloutGraph build_rollout(Tape& tape, const ModelVars& vars, const ModelConfig& cfg,
                                  const std::vector<Tensor>& inputs,
                                  const std::vector<Tensor>* targets, RolloutMode mode, Rng& rng,
                                  const std::vector<Tensor>* replay_readings = nullptr) {
    cfg.validate();
    if (inputs.empty()) throw invalid_argument("build_rollout: no input frames");
    if (mode == RolloutMode::guide && targets == nullptr) {
        throw invalid_argument("build_rollout: guide mode requires targets");
    }
    if (targets != nullptr && targets->size() != inputs.size()) {
        throw invalid_argument("build_rollout: inputs and targets disagree on horizon");
    }
    if (replay_readings != nullptr && replay_readings->size() != inputs.size()) {
        throw invalid_argument("build_rollout: replay readings disagree on horizon");
    }
    const std::size_t pixels = cfg.frame_h * cfg.frame_w;
    for (const Tensor& f : inputs) {
        if (f.rank() != 2 || f.rows() != cfg.frame_h || f.cols() != cfg.frame_w) {
            throw invalid_argument("build_rollout: frame shape mismatch");
        }
    }

    RolloutGraph graph;
    graph.mode = mode;
    LstmState s_c = lstm_initial_state(tape, cfg.hidden_controller);
    LstmState s_o = lstm_initial_state(tape, cfg.hidden_observer);
    LstmState s_g = lstm_initial_state(tape, cfg.hidden_guide);
    Var canvas = tape.constant(Tensor::zeros({pixels}));
    Var belief = tape.sigmoid(canvas);

    for (std::size_t t = 0; t < inputs.size(); ++t) {
        StepVars sv;

        GaussianVars prior_c = apply_head(tape, vars.prior_c, s_c.h, cfg.z_c_dim());
        sv.prior_c = prior_c;
        const Tensor noise_c = rng.normal_tensor({cfg.z_c_dim()});
        Var noise_c_var = tape.constant(noise_c);
        if (mode == RolloutMode::guide) {
            sv.guide_c = apply_head(tape, vars.guide_c, s_g.h, cfg.z_c_dim());
            sv.z_c = tape.gaussian_sample(sv.guide_c.mean, sv.guide_c.log_variance, noise_c_var);
        } else {
            sv.z_c = tape.gaussian_sample(prior_c.mean, prior_c.log_variance, noise_c_var);
        }

        sv.glimpse = decode_glimpse(tape, sv.z_c, cfg.delta_ref(), cfg.sigma_ref(),
                                    cfg.scales.size());
        Var frame = tape.constant(inputs[t]);
        Var reading = replay_readings != nullptr
                          ? tape.constant((*replay_readings)[t])
                          : read_glimpse(tape, frame, sv.glimpse, cfg.scales, cfg.grid_side);
        if (tape.value(reading).size() != cfg.reading_len()) {
            throw invalid_argument("build_rollout: reading length mismatch");
        }
        sv.reading = reading;

        if (mode == RolloutMode::guide) {
            Var target = tape.constant((*targets)[t].reshaped({pixels}));
            Var residual = tape.reshape(tape.sub(target, belief), {cfg.frame_h, cfg.frame_w});
            sv.residual_reading = read_glimpse(tape, residual, sv.glimpse, cfg.scales,
                                               cfg.grid_side);
            s_g = lstm_step(tape, vars.guide, tape.concat({reading, sv.residual_reading}), s_g);
        }

        s_o = lstm_step(tape, vars.observer, reading, s_o);
        GaussianVars prior_o = apply_head(tape, vars.prior_o, s_o.h, cfg.z_o_dim);
        sv.prior_o = prior_o;
        Var noise_o_var = tape.constant(rng.normal_tensor({cfg.z_o_dim}));
        if (mode == RolloutMode::guide) {
            sv.guide_o = apply_head(tape, vars.guide_o, s_g.h, cfg.z_o_dim);
            sv.z_o = tape.gaussian_sample(sv.guide_o.mean, sv.guide_o.log_variance, noise_o_var);
        } else {
            sv.z_o = tape.gaussian_sample(prior_o.mean, prior_o.log_variance, noise_o_var);
        }

        s_c = lstm_step(tape, vars.controller, sv.z_o, s_c);
        auto cb = update_belief(tape, vars.write, canvas, s_c.h);
        canvas = cb.first;
        belief = cb.second;
        sv.canvas = canvas;
        sv.belief = belief;

        if (!tape.value(s_c.h).all_finite() || !tape.value(s_c.c).all_finite() ||
            !tape.value(s_o.h).all_finite() || !tape.value(s_o.c).all_finite() ||
            !tape.value(canvas).all_finite()) {
            throw numeric_error("rollout: non-finite state at step " + std::to_string(t));
        }
        graph.steps.push_back(sv);
    }
    return graph;
}

inline Trace extract_trace(const Tape& tape, const RolloutGraph& graph, const ModelConfig& cfg) {
    Trace trace;
    trace.mode = graph.mode;
    trace.steps.reserve(graph.steps.size());
    for (const StepVars& sv : graph.steps) {
        StepRecord rec;
        rec.z_c = tape.value(sv.z_c);
        rec.z_o = tape.value(sv.z_o);
        rec.prior_c = snapshot(tape, sv.prior_c);
        rec.prior_o = snapshot(tape, sv.prior_o);
        if (graph.mode == RolloutMode::guide) {
            rec.guide_c = snapshot(tape, sv.guide_c);
            rec.guide_o = snapshot(tape, sv.guide_o);
            rec.residual_reading = tape.value(sv.residual_reading);
        }
        rec.reading = tape.value(sv.reading);
        rec.belief = tape.value(sv.belief).reshaped({cfg.frame_h, cfg.frame_w});
        rec.glimpse = snapshot(tape, sv.glimpse);
        trace.steps.push_back(std::move(rec));
    }
    return trace;
}

/// Value-level rollout: runs the model without recording gradients.
inline Trace rollout(const ModelParams& params, const ModelConfig& cfg,
                     const std::vector<Tensor>& inputs, const std::vector<Tensor>* targets,
                     RolloutMode mode, Rng& rng,
                     const std::vector<Tensor>* replay_readings = nullptr) {
    Tape tape;
    ModelVars vars = register_model(tape, params, /*needs_grad=*/false);
    RolloutGraph graph =
        build_rollout(tape, vars, cfg, inputs, targets, mode, rng, replay_readings);
    return extract_trace(tape, graph, cfg);
}

}  // namespace glimt
