#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "glimt/bound.hpp"
#include "glimt/checkpoint.hpp"
#include "glimt/data.hpp"
#include "glimt/model.hpp"
#include "glimt/objective.hpp"
#include "glimt/rng.hpp"

namespace glimt {

struct TrainConfig {
    std::string task = "track1";
    std::size_t hidden_controller = 64;
    std::size_t hidden_observer = 64;
    std::size_t hidden_guide = 64;
    std::size_t z_o_dim = 32;
    std::size_t grid_side = 2;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double clip_norm = 10.0;
    std::size_t batch_size = 32;
    std::size_t total_updates = 2000;
    double kl_anneal_frac = 0.2;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    std::size_t log_every = 50;
    std::size_t checkpoint_every = 1000;

    void validate() const {
        if (task.empty()) throw config_error("TrainConfig: task must be set");
        if (batch_size == 0) throw config_error("TrainConfig: batch_size must be positive");
        if (log_every == 0) throw config_error("TrainConfig: log_every must be positive");
        if (!(learning_rate > 0.0)) throw config_error("TrainConfig: learning_rate must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw config_error("TrainConfig: moment decays must lie in [0,1)");
        }
        if (!(adam_epsilon > 0.0)) throw config_error("TrainConfig: adam_epsilon must be positive");
        if (!(clip_norm > 0.0)) throw config_error("TrainConfig: clip_norm must be positive");
        if (kl_anneal_frac < 0.0 || kl_anneal_frac > 1.0) {
            throw config_error("TrainConfig: kl_anneal_frac must lie in [0,1]");
        }
        if (out_dir.empty()) throw config_error("TrainConfig: out_dir must be set");
    }
};

inline std::string train_config_to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["task"] = c.task;
    j["hidden_controller"] = c.hidden_controller;
    j["hidden_observer"] = c.hidden_observer;
    j["hidden_guide"] = c.hidden_guide;
    j["z_o_dim"] = c.z_o_dim;
    j["grid_side"] = c.grid_side;
    j["learning_rate"] = c.learning_rate;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["adam_epsilon"] = c.adam_epsilon;
    j["clip_norm"] = c.clip_norm;
    j["batch_size"] = c.batch_size;
    j["total_updates"] = c.total_updates;
    j["kl_anneal_frac"] = c.kl_anneal_frac;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["log_every"] = c.log_every;
    j["checkpoint_every"] = c.checkpoint_every;
    return j.dump(2);
}

/// Strict parse: unknown keys are rejected so config typos fail loudly.
inline TrainConfig parse_train_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("config parse error: ") + e.what());
    }
    if (!j.is_object()) throw config_error("config must be a JSON object");
    TrainConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "task") c.task = value.get<std::string>();
            else if (key == "hidden_controller") c.hidden_controller = value.get<std::size_t>();
            else if (key == "hidden_observer") c.hidden_observer = value.get<std::size_t>();
            else if (key == "hidden_guide") c.hidden_guide = value.get<std::size_t>();
            else if (key == "z_o_dim") c.z_o_dim = value.get<std::size_t>();
            else if (key == "grid_side") c.grid_side = value.get<std::size_t>();
            else if (key == "learning_rate") c.learning_rate = value.get<double>();
            else if (key == "beta1") c.beta1 = value.get<double>();
            else if (key == "beta2") c.beta2 = value.get<double>();
            else if (key == "adam_epsilon") c.adam_epsilon = value.get<double>();
            else if (key == "clip_norm") c.clip_norm = value.get<double>();
            else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
            else if (key == "total_updates") c.total_updates = value.get<std::size_t>();
            else if (key == "kl_anneal_frac") c.kl_anneal_frac = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "out_dir") c.out_dir = value.get<std::string>();
            else if (key == "log_every") c.log_every = value.get<std::size_t>();
            else if (key == "checkpoint_every") c.checkpoint_every = value.get<std::size_t>();
            else throw config_error("config: unknown key \"" + key + "\"");
        }
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("config value error: ") + e.what());
    }
    c.validate();
    return c;
}

inline ModelConfig model_config_for(const TrainConfig& cfg, const EpisodeSource& src) {
    ModelConfig m;
    m.frame_h = src.frame_h;
    m.frame_w = src.frame_w;
    m.grid_side = cfg.grid_side;
    m.scales = src.scales;
    m.hidden_controller = cfg.hidden_controller;
    m.hidden_observer = cfg.hidden_observer;
    m.hidden_guide = cfg.hidden_guide;
    m.z_o_dim = cfg.z_o_dim;
    m.validate();
    return m;
}

/// KL weight at a given update: linear 0 -> 1 over the first anneal_frac of
/// training, then flat 1.
inline double kl_beta_at(std::size_t update, std::size_t total_updates, double anneal_frac) {
    if (anneal_frac <= 0.0 || total_updates == 0) return 1.0;
    const double ramp = anneal_frac * static_cast<double>(total_updates);
    const double beta = static_cast<double>(update) / ramp;
    return beta >= 1.0 ? 1.0 : beta;
}

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t step = 0;
};

inline AdamState make_adam_state(const ModelParams& params) {
    AdamState s;
    params.visit([&s](const char*, const Tensor& t) {
        s.m.push_back(Tensor::zeros(t.shape()));
        s.v.push_back(Tensor::zeros(t.shape()));
    });
    return s;
}

/// Scales gradients so the global L2 norm is at most max_norm; returns the
/// pre-clip norm.
inline double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor& g : grads) {
        for (std::size_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (Tensor& g : grads) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= scale;
        }
    }
    return norm;
}

inline void adam_update(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
                        double lr, double beta1, double beta2, double epsilon) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    std::size_t k = 0;
    params.visit([&](const char*, Tensor& p) {
        const Tensor& g = grads[k];
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + epsilon);
        }
        ++k;
    });
}

namespace detail {

inline std::string format_metric(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

struct TrainResult {
    TrainConfig config;
    ModelParams params;
    std::string checkpoint_path;
    std::string metrics_path;
    double first_bound = std::numeric_limits<double>::quiet_NaN();
    double final_bound = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t updates_applied = 0;
};

/// SVI training loop: guide-mode rollouts, averaged clipped gradients,
/// adaptive-moment updates, CSV metrics, periodic checkpoints. Single
/// threaded; runs with the same config and seed are bit-identical.
inline TrainResult train(const TrainConfig& cfg) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const EpisodeSource src = make_task_source(cfg.task);
    const ModelConfig mcfg = model_config_for(cfg, src);
    const std::string config_json = train_config_to_json(cfg);
    {
        std::ofstream out(fs::path(cfg.out_dir) / "config.json", std::ios::binary);
        if (!out) throw io_error("train: cannot write config.json in " + cfg.out_dir);
        out << config_json << "\n";
    }

    Rng init_rng = Rng::stream(cfg.seed, 0);
    ModelParams params = make_model_params(mcfg, init_rng);
    AdamState opt = make_adam_state(params);
    std::size_t param_count = 0;
    params.visit([&param_count](const char*, const Tensor&) { ++param_count; });

    const std::string metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
    std::ofstream metrics(metrics_path, std::ios::binary);
    if (!metrics) throw io_error("train: cannot write " + metrics_path);
    metrics << "update,weighted_nll,total_kl,bound\n";

    TrainResult result;
    result.config = cfg;
    std::uint64_t episode_counter = 0;

    struct BatchStats {
        double weighted_nll = 0.0;
        double total_kl = 0.0;
        double bound = 0.0;
    };

    // Computes the batch bound and mean gradients for the current parameters.
    auto run_batch = [&](std::size_t update, double beta,
                         std::vector<Tensor>* grads) -> BatchStats {
        if (grads != nullptr) {
            grads->clear();
            params.visit([grads](const char*, const Tensor& t) {
                grads->push_back(Tensor::zeros(t.shape()));
            });
        }
        BatchStats stats;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            Rng rng = Rng::stream(cfg.seed, 1 + episode_counter);
            ++episode_counter;
            Episode ep = src.sample(rng);
            Tape tape;
            ModelVars vars = register_model(tape, params, grads != nullptr);
            RolloutGraph graph = build_rollout(tape, vars, mcfg, ep.inputs, &ep.targets,
                                               RolloutMode::guide, rng);
            BoundResult bound = variational_bound(tape, graph, ep.targets, ep.weights, beta);
            if (!std::isfinite(bound.breakdown.loss)) {
                throw numeric_error("train: non-finite loss at update " + std::to_string(update));
            }
            stats.weighted_nll += bound.breakdown.weighted_nll;
            stats.total_kl += bound.breakdown.total_kl;
            stats.bound += bound.breakdown.loss;
            if (grads != nullptr) {
                tape.backward(bound.loss);
                for (std::size_t k = 0; k < param_count; ++k) {
                    const Tensor& g = tape.grad(vars.ordered[k]);
                    Tensor& acc = (*grads)[k];
                    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
                }
            }
        }
        const double inv = 1.0 / static_cast<double>(cfg.batch_size);
        stats.weighted_nll *= inv;
        stats.total_kl *= inv;
        stats.bound *= inv;
        if (grads != nullptr) {
            for (Tensor& g : *grads) {
                for (std::size_t i = 0; i < g.size(); ++i) g[i] *= inv;
            }
        }
        return stats;
    };

    auto write_row = [&metrics](std::uint64_t update, const BatchStats& s) {
        metrics << update << ',' << detail::format_metric(s.weighted_nll) << ','
                << detail::format_metric(s.total_kl) << ',' << detail::format_metric(s.bound)
                << '\n';
        metrics.flush();
    };

    auto save_checkpoint = [&](const std::string& name, std::uint64_t updates) {
        Checkpoint ck = make_checkpoint(params, config_json, updates,
                                        Rng::stream(cfg.seed, 1 + episode_counter));
        const std::string path = (fs::path(cfg.out_dir) / name).string();
        write_checkpoint(path, ck);
        return path;
    };

    const auto started = std::chrono::steady_clock::now();
    std::vector<Tensor> grads;
    for (std::size_t u = 0; u < cfg.total_updates; ++u) {
        const double beta = kl_beta_at(u, cfg.total_updates, cfg.kl_anneal_frac);
        BatchStats stats;
        try {
            stats = run_batch(u, beta, &grads);
            const double norm = clip_global_norm(grads, cfg.clip_norm);
            if (!std::isfinite(norm)) {
                throw numeric_error("train: non-finite gradient at update " + std::to_string(u));
            }
        } catch (const numeric_error& e) {
            const std::string saved = save_checkpoint("last_good.glck", u);
            std::ofstream diag(fs::path(cfg.out_dir) / "abort.txt", std::ios::binary);
            diag << e.what() << "\nlast good checkpoint: " << saved << "\n";
            throw numeric_error(std::string(e.what()) + " (last good checkpoint: " + saved + ")");
        }
        if (u % cfg.log_every == 0) {
            write_row(u, stats);
            if (u == 0) result.first_bound = stats.bound;
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            std::fprintf(stderr, "update %zu bound %.6f nll %.6f kl %.6f (%.1fs)\n", u,
                         stats.bound, stats.weighted_nll, stats.total_kl, secs);
        }
        adam_update(params, grads, opt, cfg.learning_rate, cfg.beta1, cfg.beta2,
                    cfg.adam_epsilon);
        result.updates_applied = u + 1;
        if (cfg.checkpoint_every != 0 && (u + 1) % cfg.checkpoint_every == 0 &&
            u + 1 != cfg.total_updates) {
            char name[48];
            std::snprintf(name, sizeof name, "checkpoint_%06zu.glck", u + 1);
            save_checkpoint(name, u + 1);
        }
    }

    if (cfg.total_updates > 0) {
        BatchStats stats = run_batch(cfg.total_updates, 1.0, nullptr);
        write_row(cfg.total_updates, stats);
        result.final_bound = stats.bound;
        if (std::isnan(result.first_bound)) result.first_bound = stats.bound;
    }
    metrics.close();
    result.checkpoint_path = save_checkpoint("checkpoint_final.glck", cfg.total_updates);
    result.metrics_path = metrics_path;
    result.params = params;
    return result;
}

struct EvalReport {
    std::size_t episodes = 0;
    std::uint64_t seed = 0;
    std::vector<double> weights;
    std::vector<double> per_step_mse;  // model, per-pixel mean
    std::vector<double> per_step_nll;  // model, per-frame sum
    double weighted_mse = 0.0;
    double weighted_nll = 0.0;
    double baseline_half_mse = 0.0;
    double baseline_half_nll = 0.0;
    double baseline_mean_mse = 0.0;
    double baseline_mean_nll = 0.0;
};

/// Prior-mode evaluation: rollouts never see targets. Reports per-step and
/// cost-weighted reconstruction error against two baselines: the all-0.5
/// belief and the source's mean target frame (estimated over the evaluated
/// episodes).
inline EvalReport evaluate(const ModelParams& params, const ModelConfig& mcfg,
                           const EpisodeSource& src, std::size_t n_episodes, std::uint64_t seed) {
    if (n_episodes == 0) throw invalid_argument("evaluate: need at least one episode");
    std::vector<Episode> episodes;
    std::vector<Rng> rngs;
    episodes.reserve(n_episodes);
    rngs.reserve(n_episodes);
    Tensor mean_frame = Tensor::zeros({mcfg.frame_h, mcfg.frame_w});
    for (std::size_t i = 0; i < n_episodes; ++i) {
        Rng rng = Rng::stream(seed, 1 + i);
        episodes.push_back(src.sample(rng));
        rngs.push_back(rng);  // rollout continues this episode's stream
        for (const Tensor& y : episodes.back().targets) {
            for (std::size_t p = 0; p < y.size(); ++p) mean_frame[p] += y[p];
        }
    }
    const std::size_t horizon = episodes[0].inputs.size();
    const double frames = static_cast<double>(n_episodes * horizon);
    for (std::size_t p = 0; p < mean_frame.size(); ++p) mean_frame[p] /= frames;
    Tensor mean_clamped = mean_frame;
    for (std::size_t p = 0; p < mean_clamped.size(); ++p) {
        mean_clamped[p] = std::clamp(mean_clamped[p], 1e-3, 1.0 - 1e-3);
    }

    EvalReport report;
    report.episodes = n_episodes;
    report.seed = seed;
    report.weights = episodes[0].weights.weights;
    report.per_step_mse.assign(horizon, 0.0);
    report.per_step_nll.assign(horizon, 0.0);
    std::vector<double> half_mse(horizon, 0.0), half_nll(horizon, 0.0);
    std::vector<double> mean_mse(horizon, 0.0), mean_nll(horizon, 0.0);
    const double pixels = static_cast<double>(mcfg.frame_h * mcfg.frame_w);

    for (std::size_t i = 0; i < n_episodes; ++i) {
        const Episode& ep = episodes[i];
        Trace trace = rollout(params, mcfg, ep.inputs, nullptr, RolloutMode::prior, rngs[i]);
        for (std::size_t t = 0; t < horizon; ++t) {
            const Tensor& b = trace.steps[t].belief;
            const Tensor& y = ep.targets[t];
            double mse = 0.0;
            for (std::size_t p = 0; p < y.size(); ++p) {
                const double d = b[p] - y[p];
                mse += d * d;
            }
            report.per_step_mse[t] += mse / pixels;
            report.per_step_nll[t] += reconstruction_nll(b, y);
            double hm = 0.0, mm = 0.0;
            for (std::size_t p = 0; p < y.size(); ++p) {
                const double dh = 0.5 - y[p];
                hm += dh * dh;
                const double dm = mean_frame[p] - y[p];
                mm += dm * dm;
            }
            half_mse[t] += hm / pixels;
            half_nll[t] += pixels * std::log(2.0);
            mean_mse[t] += mm / pixels;
            mean_nll[t] += reconstruction_nll(mean_clamped, y);
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n_episodes);
    for (std::size_t t = 0; t < horizon; ++t) {
        report.per_step_mse[t] *= inv_n;
        report.per_step_nll[t] *= inv_n;
        half_mse[t] *= inv_n;
        half_nll[t] *= inv_n;
        mean_mse[t] *= inv_n;
        mean_nll[t] *= inv_n;
        const double w = report.weights[t];
        report.weighted_mse += w * report.per_step_mse[t];
        report.weighted_nll += w * report.per_step_nll[t];
        report.baseline_half_mse += w * half_mse[t];
        report.baseline_half_nll += w * half_nll[t];
        report.baseline_mean_mse += w * mean_mse[t];
        report.baseline_mean_nll += w * mean_nll[t];
    }
    return report;
}

}  // namespace glimt
