#pragma once

#include <cstdint>
#include <string>

#include "gearfuse/config.hpp"
#include "gearfuse/fusion.hpp"
#include "gearfuse/signal.hpp"

namespace gearfuse::pipeline {

/// Resolved output-file locations for one run directory.
struct OutPaths {
    std::string dir;
    std::string dataset;
    std::string cache;
    std::string model;

    static OutPaths resolve(const cli::RunConfig& cfg, const std::string& out_dir);
};

void echo_config(const cli::RunConfig& cfg, const std::string& out_dir);

signal::DatasetSpec dataset_spec_from_config(const cli::RunConfig& cfg);

void cmd_synth(const cli::RunConfig& cfg, const std::string& out_dir);
void cmd_preprocess(const cli::RunConfig& cfg, const std::string& out_dir);
void cmd_train(const cli::RunConfig& cfg, const std::string& out_dir);
void cmd_eval(const cli::RunConfig& cfg, const std::string& out_dir);
void cmd_ablate(const cli::RunConfig& cfg, const std::string& out_dir);
void cmd_export_tf(const cli::RunConfig& cfg, const std::string& out_dir,
                   std::size_t sample_index);
void cmd_pso_trace(const cli::RunConfig& cfg, const std::string& out_dir);

/// Preprocessed tensor cache ("GFC1") I/O, shared by preprocess/train/eval.
void save_cache(const fusion::PreparedDataset& data, const std::string& path);
fusion::PreparedDataset load_cache(const std::string& path);

/// In-memory preprocessing identical to cmd_preprocess (used by tests and
/// the acceptance suite).
fusion::PreparedDataset preprocess_dataset(const signal::DatasetSplit& split,
                                           const cli::RunConfig& cfg);

fusion::ModelConfig model_config_from(const cli::RunConfig& cfg,
                                      const fusion::PreparedDataset& data);

}  // namespace gearfuse::pipeline
