#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "glimt/glimt.hpp"

namespace {

namespace fs = std::filesystem;

int guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const glimt::config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const glimt::numeric_error& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const glimt::io_error& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 4;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

void run_generate(const std::string& task, const std::string& out_dir, std::uint64_t seed,
                  std::size_t episodes) {
    glimt::EpisodeSource src = glimt::make_task_source(task);
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < episodes; ++i) {
        glimt::Rng rng = glimt::Rng::stream(seed, 1 + i);
        glimt::Episode ep = src.sample(rng);
        char name[32];
        std::snprintf(name, sizeof name, "ep_%05zu.glep", i);
        glimt::write_episode((fs::path(out_dir) / name).string(), ep);
    }
    std::ofstream manifest(fs::path(out_dir) / "manifest.json", std::ios::binary);
    if (!manifest) throw glimt::io_error("generate: cannot write manifest in " + out_dir);
    manifest << "{\n  \"task\": \"" << task << "\",\n  \"seed\": " << seed
             << ",\n  \"episodes\": " << episodes << ",\n  \"frame_h\": " << src.frame_h
             << ",\n  \"frame_w\": " << src.frame_w << ",\n  \"horizon\": " << src.horizon
             << ",\n  \"warmup\": " << src.warmup << "\n}\n";
    std::printf("wrote %zu episodes to %s\n", episodes, out_dir.c_str());
}

void run_train(const std::string& config_path, const std::string& out_dir) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw glimt::io_error("train: cannot open config " + config_path);
    std::stringstream buf;
    buf << in.rdbuf();
    glimt::TrainConfig cfg = glimt::parse_train_config(buf.str());
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    cfg.validate();
    glimt::TrainResult result = glimt::train(cfg);
    std::printf("trained %llu updates; first bound %.6f, final bound %.6f\n",
                static_cast<unsigned long long>(result.updates_applied), result.first_bound,
                result.final_bound);
    std::printf("checkpoint: %s\nmetrics: %s\n", result.checkpoint_path.c_str(),
                result.metrics_path.c_str());
}

struct LoadedModel {
    glimt::TrainConfig config;
    glimt::EpisodeSource source;
    glimt::ModelConfig model_config;
    glimt::ModelParams params;
};

LoadedModel load_model(const std::string& checkpoint_path, const std::string& task_override) {
    glimt::Checkpoint ck = glimt::read_checkpoint(checkpoint_path);
    LoadedModel m;
    m.config = glimt::parse_train_config(ck.config_json);
    const std::string task = task_override.empty() ? m.config.task : task_override;
    m.source = glimt::make_task_source(task);
    m.model_config = glimt::model_config_for(m.config, m.source);
    glimt::Rng dummy(0);
    m.params = glimt::make_model_params(m.model_config, dummy);
    glimt::load_model_params(ck, m.params);
    return m;
}

void run_eval(const std::string& checkpoint_path, const std::string& task, std::size_t episodes,
              std::uint64_t seed) {
    LoadedModel m = load_model(checkpoint_path, task);
    glimt::EvalReport r =
        glimt::evaluate(m.params, m.model_config, m.source, episodes, seed);
    std::printf("task %s, %zu episodes, seed %llu\n", m.source.name.c_str(), r.episodes,
                static_cast<unsigned long long>(r.seed));
    std::printf("%5s %10s %12s %12s\n", "step", "weight", "mse", "nll");
    for (std::size_t t = 0; t < r.per_step_mse.size(); ++t) {
        std::printf("%5zu %10.6f %12.6f %12.3f\n", t, r.weights[t], r.per_step_mse[t],
                    r.per_step_nll[t]);
    }
    std::printf("weighted mse %.6f (all-0.5 %.6f, mean-frame %.6f)\n", r.weighted_mse,
                r.baseline_half_mse, r.baseline_mean_mse);
    std::printf("weighted nll %.3f (all-0.5 %.3f, mean-frame %.3f)\n", r.weighted_nll,
                r.baseline_half_nll, r.baseline_mean_nll);
}

void run_render(const std::string& checkpoint_path, const std::string& task,
                const std::string& out_path, std::uint64_t seed) {
    LoadedModel m = load_model(checkpoint_path, task);
    glimt::Rng rng = glimt::Rng::stream(seed, 1);
    glimt::Episode ep = m.source.sample(rng);
    glimt::Trace trace = glimt::rollout(m.params, m.model_config, ep.inputs, nullptr,
                                        glimt::RolloutMode::prior, rng);
    glimt::render_trace(trace, ep.inputs, out_path, m.model_config.grid_side,
                        "task " + m.source.name + " seed " + std::to_string(seed));
    std::printf("wrote %s\n", out_path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sequential glimpse model: data generation, training, evaluation, rendering"};
    app.require_subcommand(1);

    std::string task, out_dir, config_path, checkpoint_path, out_path;
    std::uint64_t seed = 1;
    std::size_t episodes = 16;

    CLI::App* generate = app.add_subcommand("generate", "write episodes to a directory");
    generate->add_option("--task", task, "task name")->required();
    generate->add_option("--out", out_dir, "output directory")->required();
    generate->add_option("--seed", seed, "master seed");
    generate->add_option("--episodes", episodes, "episode count");

    CLI::App* train = app.add_subcommand("train", "train a model from a JSON config");
    train->add_option("--config", config_path, "JSON config file")->required();
    train->add_option("--out", out_dir, "output directory (overrides config)");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--task", task, "task name (default: checkpoint's task)");
    eval->add_option("--episodes", episodes, "episode count");
    eval->add_option("--seed", seed, "master seed");

    CLI::App* render = app.add_subcommand("render", "render a rollout strip to a PGM");
    render->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    render->add_option("--task", task, "task name (default: checkpoint's task)");
    render->add_option("--out", out_path, "output .pgm file")->required();
    render->add_option("--seed", seed, "master seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (generate->parsed()) {
        return guarded([&] { run_generate(task, out_dir, seed, episodes); });
    }
    if (train->parsed()) {
        return guarded([&] { run_train(config_path, out_dir); });
    }
    if (eval->parsed()) {
        return guarded([&] { run_eval(checkpoint_path, task, episodes, seed); });
    }
    return guarded([&] { run_render(checkpoint_path, task, out_path, seed); });
}
