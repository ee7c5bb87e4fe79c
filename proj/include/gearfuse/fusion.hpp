#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gearfuse/nn.hpp"
#include "gearfuse/tfa.hpp"

namespace gearfuse::fusion {

enum class Variant : std::uint32_t {
    fusion = 0,
    single_astft = 1,
    single_dtcwt = 2,
    raw_v = 3,
    raw_h = 4,
};

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
    std::size_t class_count = 5;
    std::size_t fusion_size = 64;      // spatial size both branches resample to
    std::size_t astft_size = 32;       // branch A input (channel V grid)
    std::size_t dtcwt_size = 128;      // branch B input (channel H grid)
    std::size_t raw_length = 1536;     // raw-variant input width
    std::size_t branch_channels = 4;
    std::size_t base_channels = 8;     // trunk stem width; stages use 1x/2x/4x
    Variant variant = Variant::fusion;
    bool stage3_strided = false;       // replaces stage-3 dilation with stride 2
    std::uint64_t seed = 1;
};

/// One preprocessed sample. Grids are min-max scaled to [0,1]; raw segments
/// are kept so the raw-input ablation variants can run from the same cache.
struct SamplePair {
    std::vector<float> astft;  // astft_size^2, from channel V
    std::vector<float> dtcwt;  // dtcwt_size^2, from channel H
    std::vector<float> raw_h;
    std::vector<float> raw_v;
    std::uint32_t label = 0;
};

struct PreparedDataset {
    std::vector<SamplePair> train, validation, test;
    std::vector<std::string> class_names;
    std::size_t astft_size = 32;
    std::size_t dtcwt_size = 128;
    std::size_t raw_length = 0;
    std::vector<tfa::WindowSchedule> class_schedules;  // one per class

    std::size_t class_count() const { return class_names.size(); }
};

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 25;
    double learning_rate = 1e-4;
    std::uint64_t seed = 1;
};

struct Metrics {
    std::vector<double> train_loss, val_loss, train_acc, val_acc;
    std::vector<std::size_t> confusion;  // class_count^2, row = true class
    std::size_t class_count = 0;
    double test_accuracy = 0.0;
    double wall_seconds = 0.0;

    std::size_t& confusion_at(std::size_t truth, std::size_t pred) {
        return confusion[truth * class_count + pred];
    }
};

struct ResidualBlock {
    nn::Conv2dLayer conv1;
    nn::BatchNormLayer bn1;
    nn::ReluLayer relu1;
    nn::Conv2dLayer conv2;
    nn::BatchNormLayer bn2;
    bool has_projection = false;
    nn::Conv2dLayer proj;
    nn::BatchNormLayer proj_bn;

    nn::Tensor4 forward(const nn::Tensor4& x, bool training);
    nn::Tensor4 backward(const nn::Tensor4& upstream);

    nn::Tensor4 cached_input;  // for the identity skip
};

/// Dual-branch feature-fusion classifier and its ablation variants.
class FusionModel {
public:
    explicit FusionModel(const ModelConfig& config);

    struct Batch {
        nn::Tensor4 astft;  // (N,1,S,S)
        nn::Tensor4 dtcwt;  // (N,1,D,D)
        nn::Tensor4 raw;    // (N,1,1,L)
        std::vector<std::uint32_t> labels;
    };

    nn::Tensor4 forward(const Batch& batch, bool training);
    /// Backpropagates from logit gradients; accumulates parameter grads.
    void backward(const nn::Tensor4& logit_grad);
    void adam_update(double lr);

    std::vector<nn::LayerState*> parameter_states();
    std::size_t parameter_count();
    const ModelConfig& config() const { return config_; }
    /// Spatial size of the trunk output (GAP input).
    std::size_t trunk_output_size() const { return trunk_out_; }

    void save_checkpoint(const std::string& path);
    void load_checkpoint(const std::string& path);

private:
    ModelConfig config_;
    std::size_t trunk_out_ = 0;

    // branch A: transposed-conv upsampling (astft), branch B: dilated
    // downsampling (dtcwt); single/raw variants use the entry conv directly
    nn::Deconv2dLayer branch_a_;
    nn::BatchNormLayer branch_a_bn_;
    nn::ReluLayer branch_a_relu_;
    std::size_t branch_a_pre_crop_ = 0;

    nn::Conv2dLayer branch_b_;
    nn::BatchNormLayer branch_b_bn_;
    nn::ReluLayer branch_b_relu_;

    nn::Conv2dLayer fuse_;
    nn::BatchNormLayer fuse_bn_;
    nn::ReluLayer fuse_relu_;
    nn::MaxPoolLayer pool_;

    nn::Conv2dLayer stem_;
    nn::BatchNormLayer stem_bn_;
    nn::ReluLayer stem_relu_;
    std::vector<ResidualBlock> blocks_;
    nn::GapLayer gap_;
    nn::Conv2dLayer head_;

    // backward bookkeeping
    std::size_t cached_batch_ = 0;
};

Metrics train(FusionModel& model, const PreparedDataset& data, const TrainConfig& config);

Metrics evaluate(FusionModel& model, const std::vector<SamplePair>& split,
                 std::size_t class_count);

struct AblationRow {
    std::string variant;
    double accuracy = 0.0;
    double seconds = 0.0;
};

/// Trains all five variants with a shared seed and reports test accuracy.
std::vector<AblationRow> run_ablation(const PreparedDataset& data, const TrainConfig& tc,
                                      const ModelConfig& base);

void write_metrics_csv(const Metrics& metrics, const std::string& path);
void write_confusion_csv(const Metrics& metrics, const std::vector<std::string>& class_names,
                         const std::string& path);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

}  // namespace gearfuse::fusion
