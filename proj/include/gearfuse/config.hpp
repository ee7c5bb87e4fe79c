#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace gearfuse::cli {

/// Flat key=value run configuration. Unknown keys are rejected; every field
/// has a documented default and the full set is echoed into output dirs.
struct RunConfig {
    std::uint64_t seed = 1;

    std::size_t dataset_classes = 5;  // 5 or 6 fault classes
    std::size_t dataset_per_class = 1000;
    std::size_t dataset_segment_length = 1536;
    double dataset_sample_rate_hz = 2048.0;
    double dataset_mesh_freq_hz = 144.0;
    double dataset_shaft_freq_hz = 8.0;
    double dataset_snr_db = 15.0;
    bool dataset_export_csv = false;

    std::size_t stft_hop = 16;

    std::size_t pso_swarm_size = 30;
    std::size_t pso_max_iterations = 20;
    double pso_inertia = 0.729;
    double pso_cognitive = 1.49445;
    double pso_social = 1.49445;
    std::size_t pso_repeats = 10;
    std::size_t pso_target_rows = 96;
    std::size_t pso_target_cols = 96;
    bool pso_per_sample = false;

    std::size_t dtcwt_levels = 4;

    std::size_t grid_astft_size = 32;
    std::size_t grid_dtcwt_size = 128;

    std::size_t model_branch_channels = 4;
    std::size_t model_base_channels = 8;
    std::string model_variant = "fusion";

    std::size_t train_batch_size = 32;
    std::size_t train_epochs = 25;
    double train_learning_rate = 1e-4;

    std::string paths_dataset;  // defaults to <out>/dataset.gfd
    std::string paths_cache;    // defaults to <out>/cache.gfc
    std::string paths_model;    // defaults to <out>/model.gfnn

    void set(const std::string& key, const std::string& value);
    void load_file(const std::string& path);
    void echo(std::ostream& out) const;
    void validate() const;
};

}  // namespace gearfuse::cli
