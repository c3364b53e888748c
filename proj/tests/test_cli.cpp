#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "glimt/data.hpp"
#include "glimt/formats.hpp"

using namespace glimt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::path("test_tmp") / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(GLIMT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_tiny_config(const std::string& path, const std::string& out_dir) {
    std::ofstream out(path);
    out << "{\n"
        << "  \"task\": \"copy-shapes\",\n"
        << "  \"hidden_controller\": 4,\n"
        << "  \"hidden_observer\": 4,\n"
        << "  \"hidden_guide\": 4,\n"
        << "  \"z_o_dim\": 2,\n"
        << "  \"batch_size\": 1,\n"
        << "  \"total_updates\": 2,\n"
        << "  \"log_every\": 1,\n"
        << "  \"checkpoint_every\": 0,\n"
        << "  \"seed\": 5,\n"
        << "  \"out_dir\": \"" << out_dir << "\"\n"
        << "}\n";
}

}  // namespace

TEST_CASE("cli rejects missing or unknown subcommands", "[cli]") {
    REQUIRE(run_cli("") == 2);
    REQUIRE(run_cli("frobnicate") == 2);
    REQUIRE(run_cli("generate") == 2);  // missing required flags
}

TEST_CASE("generate writes episodes, a manifest, and is reproducible", "[cli]") {
    TempDir tmp("cligen");
    const std::string out = tmp.file("eps");
    REQUIRE(run_cli("generate --task track1 --out " + out + " --seed 3 --episodes 3") == 0);
    REQUIRE(fs::exists(fs::path(out) / "manifest.json"));
    for (int i = 0; i < 3; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "ep_%05d.glep", i);
        REQUIRE(fs::exists(fs::path(out) / name));
    }
    Episode ep = read_episode((fs::path(out) / "ep_00000.glep").string(), 5);
    REQUIRE(ep.inputs.size() == 15);
    REQUIRE(ep.inputs[0].rows() == 20);

    const std::string first = slurp((fs::path(out) / "ep_00001.glep").string());
    const std::string out2 = tmp.file("eps2");
    REQUIRE(run_cli("generate --task track1 --out " + out2 + " --seed 3 --episodes 3") == 0);
    REQUIRE(slurp((fs::path(out2) / "ep_00001.glep").string()) == first);

    REQUIRE(run_cli("generate --task nonsense --out " + tmp.file("x") + " --episodes 1") == 2);
}

TEST_CASE("train, eval, and render run end to end from the command line", "[cli]") {
    TempDir tmp("clitrain");
    const std::string cfg_path = tmp.file("config.json");
    const std::string run_dir = tmp.file("run");
    write_tiny_config(cfg_path, run_dir);

    REQUIRE(run_cli("train --config " + cfg_path) == 0);
    REQUIRE(fs::exists(fs::path(run_dir) / "metrics.csv"));
    const std::string ckpt = (fs::path(run_dir) / "checkpoint_final.glck").string();
    REQUIRE(fs::exists(ckpt));

    REQUIRE(run_cli("eval --checkpoint " + ckpt + " --episodes 2 --seed 4") == 0);

    const std::string strip = tmp.file("trace.pgm");
    REQUIRE(run_cli("render --checkpoint " + ckpt + " --out " + strip + " --seed 4") == 0);
    Tensor img = read_pgm(strip);
    REQUIRE(img.rows() == 3 * 28 + 2);
    REQUIRE(img.cols() == 8 * 28 + 7);

    // The --out flag overrides the configured output directory.
    const std::string run2 = tmp.file("run2");
    REQUIRE(run_cli("train --config " + cfg_path + " --out " + run2) == 0);
    REQUIRE(fs::exists(fs::path(run2) / "metrics.csv"));
}

TEST_CASE("cli maps error kinds to exit codes", "[cli]") {
    TempDir tmp("clierr");
    REQUIRE(run_cli("train --config " + tmp.file("absent.json")) == 4);

    const std::string bad = tmp.file("bad.json");
    std::ofstream(bad) << "{\"learning_rte\": 0.1}";
    REQUIRE(run_cli("train --config " + bad) == 2);

    REQUIRE(run_cli("eval --checkpoint " + tmp.file("absent.glck")) == 4);
    REQUIRE(run_cli("render --checkpoint " + tmp.file("absent.glck") + " --out " +
                    tmp.file("x.pgm")) == 4);
}
