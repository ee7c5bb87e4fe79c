#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gearfuse/common.hpp"
#include "gearfuse/config.hpp"
#include "gearfuse/pipeline.hpp"

using namespace gearfuse;
namespace fs = std::filesystem;

namespace {

/// Small end-to-end configuration: 5 classes, short segments, one PSO run.
cli::RunConfig micro_config() {
    cli::RunConfig cfg;
    cfg.seed = 4;
    cfg.dataset_per_class = 10;
    cfg.dataset_segment_length = 256;
    cfg.dataset_sample_rate_hz = 2048.0;
    cfg.pso_swarm_size = 6;
    cfg.pso_max_iterations = 3;
    cfg.pso_repeats = 1;
    cfg.pso_target_rows = 32;
    cfg.pso_target_cols = 32;
    cfg.dtcwt_levels = 3;
    cfg.grid_astft_size = 8;
    cfg.grid_dtcwt_size = 32;
    cfg.model_branch_channels = 2;
    cfg.model_base_channels = 4;
    cfg.train_batch_size = 8;
    cfg.train_epochs = 1;
    cfg.train_learning_rate = 1e-3;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("config parsing, defaults, rejection and echo round trip") {
    cli::RunConfig cfg;
    CHECK(cfg.train_batch_size == 32);
    CHECK(cfg.train_epochs == 25);
    CHECK(cfg.train_learning_rate == doctest::Approx(1e-4));
    CHECK(cfg.pso_swarm_size == 30);
    CHECK(cfg.pso_max_iterations == 20);
    CHECK(cfg.pso_repeats == 10);
    CHECK(cfg.dataset_segment_length == 1536);

    cfg.set("train.epochs", "7");
    CHECK(cfg.train_epochs == 7);
    cfg.set("model.variant", "single_dtcwt");
    CHECK(cfg.model_variant == "single_dtcwt");
    CHECK_THROWS_AS(cfg.set("no.such.key", "1"), ValidationError);
    CHECK_THROWS_AS(cfg.set("train.epochs", "banana"), ValidationError);

    std::ostringstream echo1;
    cfg.echo(echo1);
    // reparse the echo into a fresh config: must echo identically
    cli::RunConfig cfg2;
    std::istringstream lines(echo1.str());
    std::string line;
    while (std::getline(lines, line)) {
        const auto eq = line.find('=');
        REQUIRE(eq != std::string::npos);
        std::string key = line.substr(0, eq - 1);
        std::string value = line.substr(eq + 2);
        if (!value.empty() || key.rfind("paths.", 0) == 0)
            cfg2.set(key, value);
    }
    std::ostringstream echo2;
    cfg2.echo(echo2);
    CHECK(echo1.str() == echo2.str());
}

TEST_CASE("config file loading ignores comments and validates") {
    TempDir dir("gf_cfg_test");
    const std::string path = dir.str() + "/run.cfg";
    {
        std::ofstream f(path);
        f << "# comment line\n";
        f << "seed = 9\n";
        f << "train.epochs = 3   # trailing comment\n";
        f << "\n";
    }
    cli::RunConfig cfg;
    cfg.load_file(path);
    CHECK(cfg.seed == 9);
    CHECK(cfg.train_epochs == 3);

    {
        std::ofstream f(path);
        f << "not a key value line\n";
    }
    cli::RunConfig cfg2;
    CHECK_THROWS_AS(cfg2.load_file(path), ValidationError);

    cli::RunConfig bad = micro_config();
    bad.dataset_classes = 7;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("pipeline end to end at micro scale") {
    TempDir dir("gf_pipe_test");
    cli::RunConfig cfg = micro_config();

    pipeline::cmd_synth(cfg, dir.str());
    const std::string ds = dir.str() + "/dataset.gfd";
    REQUIRE(fs::exists(ds));
    CHECK(fs::exists(dir.str() + "/config_echo.txt"));

    // identical seed -> identical bytes
    const std::string bytes1 = slurp(ds);
    pipeline::cmd_synth(cfg, dir.str());
    CHECK(slurp(ds) == bytes1);

    pipeline::cmd_preprocess(cfg, dir.str());
    const std::string cache = dir.str() + "/cache.gfc";
    REQUIRE(fs::exists(cache));
    CHECK(fs::exists(dir.str() + "/schedules.csv"));

    // cache reload equals recompute
    auto data_loaded = pipeline::load_cache(cache);
    auto data_fresh = pipeline::preprocess_dataset(signal::load_dataset(ds), cfg);
    REQUIRE(data_loaded.train.size() == data_fresh.train.size());
    CHECK(data_loaded.train.size() == 30);  // 5 classes x 10 x 0.6
    for (std::size_t i = 0; i < data_loaded.train.size(); ++i) {
        const auto& a = data_loaded.train[i];
        const auto& b = data_fresh.train[i];
        CHECK(a.label == b.label);
        REQUIRE(a.astft.size() == b.astft.size());
        for (std::size_t j = 0; j < a.astft.size(); ++j)
            CHECK(std::abs(a.astft[j] - b.astft[j]) <= 1e-6f);
        for (std::size_t j = 0; j < a.dtcwt.size(); ++j)
            CHECK(std::abs(a.dtcwt[j] - b.dtcwt[j]) <= 1e-6f);
    }
    // grids scaled into [0, 1]
    for (const auto& s : data_loaded.test)
        for (float v : s.astft) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }

    pipeline::cmd_train(cfg, dir.str());
    REQUIRE(fs::exists(dir.str() + "/model.gfnn"));
    REQUIRE(fs::exists(dir.str() + "/curves.csv"));
    REQUIRE(fs::exists(dir.str() + "/confusion.csv"));
    REQUIRE(fs::exists(dir.str() + "/metrics.txt"));

    pipeline::cmd_eval(cfg, dir.str());
    const std::string train_metrics = slurp(dir.str() + "/metrics.txt");
    const std::string eval_metrics = slurp(dir.str() + "/eval_metrics.txt");
    // both files lead with the same test accuracy line
    CHECK(train_metrics.substr(0, train_metrics.find('\n')) ==
          eval_metrics.substr(0, eval_metrics.find('\n')));

    pipeline::cmd_export_tf(cfg, dir.str(), 2);
    const std::string pgm = slurp(dir.str() + "/sample_2_astft.pgm");
    CHECK(pgm.rfind("P5\n8 8\n255\n", 0) == 0);
    CHECK(fs::exists(dir.str() + "/sample_2_dtcwt.csv"));
    // re-export is byte-identical
    pipeline::cmd_export_tf(cfg, dir.str(), 2);
    CHECK(slurp(dir.str() + "/sample_2_astft.pgm") == pgm);

    pipeline::cmd_pso_trace(cfg, dir.str());
    const std::string trace = slurp(dir.str() + "/pso_trace.csv");
    CHECK(trace.rfind("iteration,best_fitness\n", 0) == 0);
    CHECK(trace.find("schedule,") != std::string::npos);

    cfg.train_epochs = 1;
    pipeline::cmd_ablate(cfg, dir.str());
    std::ifstream ab(dir.str() + "/ablation.csv");
    std::string line;
    std::size_t rows = 0;
    std::getline(ab, line);
    CHECK(line == "variant,accuracy,seconds");
    while (std::getline(ab, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 5);
}

TEST_CASE("missing inputs raise io errors") {
    TempDir dir("gf_missing_test");
    cli::RunConfig cfg = micro_config();
    CHECK_THROWS_AS(pipeline::cmd_preprocess(cfg, dir.str()), IoError);
    CHECK_THROWS_AS(pipeline::cmd_train(cfg, dir.str()), IoError);
    CHECK_THROWS_AS(pipeline::cmd_eval(cfg, dir.str()), IoError);
    CHECK_THROWS_AS(pipeline::cmd_ablate(cfg, dir.str()), IoError);
    CHECK_THROWS_AS(pipeline::cmd_export_tf(cfg, dir.str(), 0), IoError);
}

#ifdef GEARFUSE_CLI_BIN
TEST_CASE("cli binary exit codes follow the contract") {
    TempDir dir("gf_exit_test");
    const std::string bin = GEARFUSE_CLI_BIN;
    const std::string cfg_path = dir.str() + "/micro.cfg";
    {
        std::ofstream f(cfg_path);
        f << "dataset.per_class = 10\ndataset.segment_length = 256\n";
        f << "pso.swarm_size = 6\npso.max_iterations = 3\npso.repeats = 1\n";
        f << "pso.target_rows = 32\npso.target_cols = 32\n";
        f << "dtcwt.levels = 3\ngrid.astft_size = 8\ngrid.dtcwt_size = 32\n";
        f << "model.branch_channels = 2\nmodel.base_channels = 4\n";
        f << "train.batch_size = 8\ntrain.epochs = 1\ntrain.learning_rate = 0.001\n";
    }
    auto run = [&](const std::string& args) {
        const std::string cmd = bin + " " + args + " >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };
    CHECK(run("synth --config " + cfg_path + " --out " + dir.str()) == 0);
    // missing cache -> io error -> exit 1
    CHECK(run("train --config " + cfg_path + " --out " + dir.str()) == 1);
    // bad config value -> validation error -> exit 2
    {
        std::ofstream f(cfg_path, std::ios::app);
        f << "dataset.classes = 9\n";
    }
    CHECK(run("synth --config " + cfg_path + " --out " + dir.str()) == 2);
    // unknown config key -> validation error -> exit 2
    {
        std::ofstream f(dir.str() + "/bad.cfg");
        f << "definitely.not.a.key = 1\n";
    }
    CHECK(run("synth --config " + dir.str() + "/bad.cfg --out " + dir.str()) == 2);
}
#endif
