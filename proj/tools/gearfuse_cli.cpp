// gearfuse: synthetic gear-fault diagnosis pipeline
//   synth -> preprocess -> train -> eval / ablate, plus grid export and a
//   window-search trace. See README.md for the config key reference.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "gearfuse/common.hpp"
#include "gearfuse/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    bool seed_set = false;
    std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "key=value config file");
    cmd->add_option("--out", args.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--seed", args.seed, "override config seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
}

gearfuse::cli::RunConfig make_config(const CommonArgs& args) {
    gearfuse::cli::RunConfig cfg;
    if (!args.config_path.empty()) cfg.load_file(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gear fault diagnosis pipeline (ASTFT + DTCWT feature fusion)"};
    app.require_subcommand(1);

    CommonArgs args;
    std::size_t sample_index = 0;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
    add_common(synth, args);
    CLI::App* preprocess =
        app.add_subcommand("preprocess", "PSO window search + ASTFT/DTCWT grids");
    add_common(preprocess, args);
    CLI::App* train = app.add_subcommand("train", "train the classifier on the cache");
    add_common(train, args);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a saved checkpoint on the test split");
    add_common(eval, args);
    CLI::App* ablate = app.add_subcommand("ablate", "train all five model variants");
    add_common(ablate, args);
    CLI::App* export_tf =
        app.add_subcommand("export-tf", "write one sample's grids as PGM and CSV");
    add_common(export_tf, args);
    export_tf->add_option("--sample", sample_index, "sample index across train/val/test");
    CLI::App* pso_trace =
        app.add_subcommand("pso-trace", "run one window search and dump its trace");
    add_common(pso_trace, args);

    CLI11_PARSE(app, argc, argv);

    try {
        const gearfuse::cli::RunConfig cfg = make_config(args);
        if (synth->parsed()) gearfuse::pipeline::cmd_synth(cfg, args.out_dir);
        if (preprocess->parsed()) gearfuse::pipeline::cmd_preprocess(cfg, args.out_dir);
        if (train->parsed()) gearfuse::pipeline::cmd_train(cfg, args.out_dir);
        if (eval->parsed()) gearfuse::pipeline::cmd_eval(cfg, args.out_dir);
        if (ablate->parsed()) gearfuse::pipeline::cmd_ablate(cfg, args.out_dir);
        if (export_tf->parsed())
            gearfuse::pipeline::cmd_export_tf(cfg, args.out_dir, sample_index);
        if (pso_trace->parsed()) gearfuse::pipeline::cmd_pso_trace(cfg, args.out_dir);
    } catch (const gearfuse::ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 2;
    } catch (const gearfuse::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
