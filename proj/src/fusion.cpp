#include "gearfuse/fusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "gearfuse/common.hpp"

namespace gearfuse::fusion {

namespace {

constexpr char kCheckpointMagic[4] = {'G', 'F', 'N', 'N'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t layer_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t x = base + 0x9E3779B97F4A7C15ULL * (index + 1);
    x ^= x >> 33;
    x *= 0xFF51AFD7ED558CCDULL;
    x ^= x >> 33;
    return x;
}

nn::Tensor4 concat_channels(const nn::Tensor4& a, const nn::Tensor4& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw ValidationError("concat: spatial/batch mismatch");
    nn::Tensor4 out(a.n, a.c + b.c, a.h, a.w);
    for (std::size_t bn = 0; bn < a.n; ++bn) {
        for (std::size_t c = 0; c < a.c; ++c)
            for (std::size_t i = 0; i < a.h; ++i)
                for (std::size_t j = 0; j < a.w; ++j)
                    out.at(bn, c, i, j) = a.at(bn, c, i, j);
        for (std::size_t c = 0; c < b.c; ++c)
            for (std::size_t i = 0; i < a.h; ++i)
                for (std::size_t j = 0; j < a.w; ++j)
                    out.at(bn, a.c + c, i, j) = b.at(bn, c, i, j);
    }
    return out;
}

void split_channels(const nn::Tensor4& grad, std::size_t c_a, nn::Tensor4& grad_a,
                    nn::Tensor4& grad_b) {
    grad_a = nn::Tensor4(grad.n, c_a, grad.h, grad.w);
    grad_b = nn::Tensor4(grad.n, grad.c - c_a, grad.h, grad.w);
    for (std::size_t bn = 0; bn < grad.n; ++bn) {
        for (std::size_t c = 0; c < c_a; ++c)
            for (std::size_t i = 0; i < grad.h; ++i)
                for (std::size_t j = 0; j < grad.w; ++j)
                    grad_a.at(bn, c, i, j) = grad.at(bn, c, i, j);
        for (std::size_t c = c_a; c < grad.c; ++c)
            for (std::size_t i = 0; i < grad.h; ++i)
                for (std::size_t j = 0; j < grad.w; ++j)
                    grad_b.at(bn, c - c_a, i, j) = grad.at(bn, c, i, j);
    }
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("checkpoint: unexpected end");
}

struct EvalPass {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<std::size_t> confusion;
};

}  // namespace

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::fusion: return "fusion";
        case Variant::single_astft: return "single_astft";
        case Variant::single_dtcwt: return "single_dtcwt";
        case Variant::raw_v: return "raw_V";
        case Variant::raw_h: return "raw_H";
    }
    return "unknown";
}

Variant variant_from_name(const std::string& name) {
    for (Variant v : {Variant::fusion, Variant::single_astft, Variant::single_dtcwt,
                      Variant::raw_v, Variant::raw_h})
        if (name == variant_name(v)) return v;
    throw ValidationError("unknown model variant: " + name);
}

nn::Tensor4 ResidualBlock::forward(const nn::Tensor4& x, bool training) {
    cached_input = x;
    nn::Tensor4 y = conv1.forward(x);
    y = bn1.forward(y, training);
    y = relu1.forward(y);
    y = conv2.forward(y);
    y = bn2.forward(y, training);
    nn::Tensor4 skip = has_projection ? proj_bn.forward(proj.forward(x), training) : x;
    if (!y.same_shape(skip)) throw ValidationError("residual block: skip shape mismatch");
    for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] += skip.values[i];
    return y;
}

nn::Tensor4 ResidualBlock::backward(const nn::Tensor4& upstream) {
    nn::Tensor4 g = bn2.backward(upstream);
    g = conv2.backward(g);
    g = relu1.backward(g);
    g = bn1.backward(g);
    g = conv1.backward(g);
    nn::Tensor4 skip_grad =
        has_projection ? proj.backward(proj_bn.backward(upstream)) : upstream;
    for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] += skip_grad.values[i];
    return g;
}

namespace {

struct Shape {
    std::size_t c, h, w;
};

ResidualBlock make_block(std::size_t in_c, std::size_t out_c, std::size_t stride,
                         std::size_t dilation, Shape& shape, std::uint64_t seed) {
    ResidualBlock block;
    nn::ConvSpec c1;
    c1.out_channels = out_c;
    c1.kernel_h = 3;
    c1.kernel_w = 3;
    c1.stride = stride;
    c1.dilation_h = c1.dilation_w = dilation;
    // H = 1 rows always need the full dilated extent padded in
    c1.pad_h = shape.h == 1 ? dilation : (stride == 2 ? 0 : dilation);
    c1.pad_w = stride == 2 ? 0 : dilation;
    block.conv1 = nn::Conv2dLayer(in_c, c1, false, layer_seed(seed, 1));
    block.bn1 = nn::BatchNormLayer(out_c);

    const std::size_t h1 = nn::conv_out_dim(shape.h, 3, dilation, stride, c1.pad_h);
    const std::size_t w1 = nn::conv_out_dim(shape.w, 3, dilation, stride, c1.pad_w);

    nn::ConvSpec c2 = c1;
    c2.stride = 1;
    c2.pad_h = dilation;
    c2.pad_w = dilation;
    block.conv2 = nn::Conv2dLayer(out_c, c2, false, layer_seed(seed, 2));
    block.bn2 = nn::BatchNormLayer(out_c);

    const std::size_t h2 = nn::conv_out_dim(h1, 3, dilation, 1, c2.pad_h);
    const std::size_t w2 = nn::conv_out_dim(w1, 3, dilation, 1, c2.pad_w);

    block.has_projection = stride != 1 || in_c != out_c;
    if (block.has_projection) {
        nn::ConvSpec p;
        p.out_channels = out_c;
        if (stride == 2) {
            p.kernel_h = std::min<std::size_t>(2, shape.h);
            p.kernel_w = 2;
            p.stride = 2;
        } else {
            p.kernel_h = p.kernel_w = 1;
        }
        block.proj = nn::Conv2dLayer(in_c, p, false, layer_seed(seed, 3));
        block.proj_bn = nn::BatchNormLayer(out_c);
        const std::size_t hp = nn::conv_out_dim(shape.h, p.kernel_h, 1, p.stride, 0);
        const std::size_t wp = nn::conv_out_dim(shape.w, p.kernel_w, 1, p.stride, 0);
        if (hp != h2 || wp != w2)
            throw ValidationError("residual block: projection size " + std::to_string(hp) + "x" +
                                  std::to_string(wp) + " vs main " + std::to_string(h2) + "x" +
                                  std::to_string(w2));
    }
    shape = {out_c, h2, w2};
    return block;
}

}  // namespace

FusionModel::FusionModel(const ModelConfig& config) : config_(config) {
    const std::size_t cb = config.branch_channels;
    const std::size_t c0 = config.base_channels;
    const Variant variant = config.variant;
    if (config.class_count < 2) throw ValidationError("model: need at least 2 classes");

    const bool use_a =
        variant == Variant::fusion || variant == Variant::single_astft;
    const bool use_b =
        variant == Variant::fusion || variant == Variant::single_dtcwt;
    const bool raw = variant == Variant::raw_v || variant == Variant::raw_h;

    std::size_t entry_channels = 1;
    Shape shape{1, 1, config.raw_length};

    if (use_a) {
        nn::ConvSpec da;
        da.transposed = true;
        da.out_channels = cb;
        da.kernel_h = da.kernel_w = 4;
        da.stride = 2;
        branch_a_ = nn::Deconv2dLayer(1, da, layer_seed(config.seed, 10));
        branch_a_bn_ = nn::BatchNormLayer(cb);
        branch_a_pre_crop_ = nn::deconv_out_dim(config.astft_size, 4, 2);
        if (branch_a_pre_crop_ < config.fusion_size)
            throw ValidationError(
                "fusion geometry: transposed conv yields " +
                std::to_string(branch_a_pre_crop_) + " < fusion size " +
                std::to_string(config.fusion_size));
    }
    if (use_b) {
        nn::ConvSpec db;
        db.out_channels = cb;
        db.kernel_h = db.kernel_w = 3;
        db.stride = 2;
        db.dilation_h = db.dilation_w = 2;
        bool found = false;
        for (std::size_t p = 0; p <= 4 && !found; ++p) {
            if (config.dtcwt_size + 2 * p >= 5 &&
                nn::conv_out_dim(config.dtcwt_size, 3, 2, 2, p) == config.fusion_size) {
                db.pad_h = db.pad_w = p;
                found = true;
            }
        }
        if (!found)
            throw ValidationError(
                "fusion geometry: no padding maps dtcwt " + std::to_string(config.dtcwt_size) +
                " onto fusion size " + std::to_string(config.fusion_size) +
                " (k=3, r=2, s=2)");
        branch_b_ = nn::Conv2dLayer(1, db, false, layer_seed(config.seed, 11));
        branch_b_bn_ = nn::BatchNormLayer(cb);
    }
    if (!raw) {
        entry_channels = (use_a ? cb : 0) + (use_b ? cb : 0);
        shape = {entry_channels, config.fusion_size, config.fusion_size};
    }

    nn::ConvSpec fs;
    fs.out_channels = c0;
    fs.kernel_h = fs.kernel_w = 1;
    fuse_ = nn::Conv2dLayer(entry_channels, fs, false, layer_seed(config.seed, 12));
    fuse_bn_ = nn::BatchNormLayer(c0);
    shape.c = c0;

    pool_.kernel_h = shape.h == 1 ? 1 : 2;
    pool_.kernel_w = 2;
    pool_.stride_h = pool_.kernel_h;
    pool_.stride_w = 2;
    shape.h = (shape.h - pool_.kernel_h) / pool_.stride_h + 1;
    shape.w = (shape.w - pool_.kernel_w) / pool_.stride_w + 1;

    nn::ConvSpec st;
    st.out_channels = c0;
    st.kernel_h = st.kernel_w = 3;
    st.stride = 2;
    st.pad_h = shape.h == 1 ? 1 : 0;
    st.pad_w = 0;
    stem_ = nn::Conv2dLayer(c0, st, false, layer_seed(config.seed, 13));
    stem_bn_ = nn::BatchNormLayer(c0);
    shape.h = nn::conv_out_dim(shape.h, 3, 1, 2, st.pad_h);
    shape.w = nn::conv_out_dim(shape.w, 3, 1, 2, st.pad_w);

    // stage 1 keeps resolution, stage 2 strides, stage 3 dilates instead of
    // striding (unless stage3_strided asks for the plain-ResNet geometry)
    blocks_.reserve(6);
    blocks_.push_back(make_block(c0, c0, 1, 1, shape, layer_seed(config.seed, 20)));
    blocks_.push_back(make_block(c0, c0, 1, 1, shape, layer_seed(config.seed, 21)));
    blocks_.push_back(make_block(c0, 2 * c0, 2, 1, shape, layer_seed(config.seed, 22)));
    blocks_.push_back(make_block(2 * c0, 2 * c0, 1, 1, shape, layer_seed(config.seed, 23)));
    if (config.stage3_strided) {
        blocks_.push_back(make_block(2 * c0, 4 * c0, 2, 1, shape, layer_seed(config.seed, 24)));
        blocks_.push_back(make_block(4 * c0, 4 * c0, 1, 1, shape, layer_seed(config.seed, 25)));
    } else {
        blocks_.push_back(make_block(2 * c0, 4 * c0, 1, 2, shape, layer_seed(config.seed, 24)));
        blocks_.push_back(make_block(4 * c0, 4 * c0, 1, 2, shape, layer_seed(config.seed, 25)));
    }
    trunk_out_ = shape.h;

    nn::ConvSpec hd;
    hd.out_channels = config.class_count;
    hd.kernel_h = hd.kernel_w = 1;
    head_ = nn::Conv2dLayer(4 * c0, hd, true, layer_seed(config.seed, 30));
    // zero-initialized head: the untrained model emits uniform class
    // probabilities (first-batch loss = ln K)
    std::fill(head_.weights.params.begin(), head_.weights.params.end(), 0.0);
}

nn::Tensor4 FusionModel::forward(const Batch& batch, bool training) {
    const Variant variant = config_.variant;
    nn::Tensor4 x;

    if (variant == Variant::fusion || variant == Variant::single_astft) {
        nn::Tensor4 a = branch_a_.forward(batch.astft);
        a = nn::center_crop(a, config_.fusion_size, config_.fusion_size);
        a = branch_a_bn_.forward(a, training);
        a = branch_a_relu_.forward(a);
        x = std::move(a);
    }
    if (variant == Variant::fusion || variant == Variant::single_dtcwt) {
        nn::Tensor4 b = branch_b_.forward(batch.dtcwt);
        b = branch_b_bn_.forward(b, training);
        b = branch_b_relu_.forward(b);
        x = variant == Variant::fusion ? concat_channels(x, b) : std::move(b);
    }
    if (variant == Variant::raw_v || variant == Variant::raw_h) x = batch.raw;

    cached_batch_ = x.n;
    x = fuse_.forward(x);
    x = fuse_bn_.forward(x, training);
    x = fuse_relu_.forward(x);
    x = pool_.forward(x);
    x = stem_.forward(x);
    x = stem_bn_.forward(x, training);
    x = stem_relu_.forward(x);
    for (auto& block : blocks_) x = block.forward(x, training);
    x = gap_.forward(x);
    return head_.forward(x);
}

void FusionModel::backward(const nn::Tensor4& logit_grad) {
    nn::Tensor4 g = head_.backward(logit_grad);
    g = gap_.backward(g);
    for (std::size_t i = blocks_.size(); i-- > 0;) g = blocks_[i].backward(g);
    g = stem_relu_.backward(g);
    g = stem_bn_.backward(g);
    g = stem_.backward(g);
    g = pool_.backward(g);
    g = fuse_relu_.backward(g);
    g = fuse_bn_.backward(g);
    g = fuse_.backward(g);

    const Variant variant = config_.variant;
    if (variant == Variant::raw_v || variant == Variant::raw_h) return;

    nn::Tensor4 grad_a, grad_b;
    if (variant == Variant::fusion)
        split_channels(g, config_.branch_channels, grad_a, grad_b);
    else if (variant == Variant::single_astft)
        grad_a = std::move(g);
    else
        grad_b = std::move(g);

    if (variant == Variant::fusion || variant == Variant::single_astft) {
        grad_a = branch_a_relu_.backward(grad_a);
        grad_a = branch_a_bn_.backward(grad_a);
        grad_a = nn::center_crop_backward(grad_a, branch_a_pre_crop_, branch_a_pre_crop_);
        branch_a_.backward(grad_a);
    }
    if (variant == Variant::fusion || variant == Variant::single_dtcwt) {
        grad_b = branch_b_relu_.backward(grad_b);
        grad_b = branch_b_bn_.backward(grad_b);
        branch_b_.backward(grad_b);
    }
}

std::vector<nn::LayerState*> FusionModel::parameter_states() {
    std::vector<nn::LayerState*> states;
    auto add = [&states](nn::LayerState& s) {
        if (!s.params.empty()) states.push_back(&s);
    };
    const Variant variant = config_.variant;
    if (variant == Variant::fusion || variant == Variant::single_astft) {
        add(branch_a_.weights);
        add(branch_a_bn_.params);
    }
    if (variant == Variant::fusion || variant == Variant::single_dtcwt) {
        add(branch_b_.weights);
        add(branch_b_bn_.params);
    }
    add(fuse_.weights);
    add(fuse_bn_.params);
    add(stem_.weights);
    add(stem_bn_.params);
    for (auto& block : blocks_) {
        add(block.conv1.weights);
        add(block.bn1.params);
        add(block.conv2.weights);
        add(block.bn2.params);
        if (block.has_projection) {
            add(block.proj.weights);
            add(block.proj_bn.params);
        }
    }
    add(head_.weights);
    add(head_.bias);
    return states;
}

std::size_t FusionModel::parameter_count() {
    std::size_t total = 0;
    for (const auto* s : parameter_states()) total += s->params.size();
    return total;
}

void FusionModel::adam_update(double lr) {
    for (auto* s : parameter_states()) nn::adam_step(*s, lr);
}

namespace {

/// Checkpoints serialize each parameter state plus the BN running stats in
/// parameter_states() order.
struct CheckpointArray {
    std::uint32_t tag;
    std::vector<double>* data;
};

}  // namespace

void FusionModel::save_checkpoint(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(kCheckpointMagic, 4);
    write_pod(f, kCheckpointVersion);
    write_pod(f, static_cast<std::uint32_t>(config_.variant));
    write_pod(f, static_cast<std::uint32_t>(config_.class_count));

    auto states = parameter_states();
    // BN layers also contribute running statistics
    std::vector<std::vector<double>*> arrays;
    for (auto* s : states) arrays.push_back(&s->params);
    auto add_bn = [&arrays](nn::BatchNormLayer& bn) {
        if (bn.state.gamma.empty()) return;
        arrays.push_back(&bn.state.running_mean);
        arrays.push_back(&bn.state.running_var);
    };
    const Variant variant = config_.variant;
    if (variant == Variant::fusion || variant == Variant::single_astft) add_bn(branch_a_bn_);
    if (variant == Variant::fusion || variant == Variant::single_dtcwt) add_bn(branch_b_bn_);
    add_bn(fuse_bn_);
    add_bn(stem_bn_);
    for (auto& block : blocks_) {
        add_bn(block.bn1);
        add_bn(block.bn2);
        if (block.has_projection) add_bn(block.proj_bn);
    }

    write_pod(f, static_cast<std::uint32_t>(arrays.size()));
    for (const auto* arr : arrays) {
        write_pod(f, static_cast<std::uint64_t>(arr->size()));
        f.write(reinterpret_cast<const char*>(arr->data()),
                static_cast<std::streamsize>(arr->size() * sizeof(double)));
    }
    if (!f) throw IoError("write failed: " + path);
}

void FusionModel::load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw IoError("checkpoint: bad magic");
    std::uint32_t version, variant, classes;
    read_pod(f, version);
    if (version != kCheckpointVersion) throw IoError("checkpoint: unsupported version");
    read_pod(f, variant);
    read_pod(f, classes);
    if (variant != static_cast<std::uint32_t>(config_.variant) || classes != config_.class_count)
        throw ValidationError("checkpoint: model configuration mismatch");

    auto states = parameter_states();
    std::vector<std::vector<double>*> arrays;
    for (auto* s : states) arrays.push_back(&s->params);
    auto add_bn = [&arrays](nn::BatchNormLayer& bn) {
        if (bn.state.gamma.empty()) return;
        arrays.push_back(&bn.state.running_mean);
        arrays.push_back(&bn.state.running_var);
    };
    const Variant v = config_.variant;
    if (v == Variant::fusion || v == Variant::single_astft) add_bn(branch_a_bn_);
    if (v == Variant::fusion || v == Variant::single_dtcwt) add_bn(branch_b_bn_);
    add_bn(fuse_bn_);
    add_bn(stem_bn_);
    for (auto& block : blocks_) {
        add_bn(block.bn1);
        add_bn(block.bn2);
        if (block.has_projection) add_bn(block.proj_bn);
    }

    std::uint32_t count;
    read_pod(f, count);
    if (count != arrays.size()) throw IoError("checkpoint: array count mismatch");
    for (auto* arr : arrays) {
        std::uint64_t len;
        read_pod(f, len);
        if (len != arr->size()) throw IoError("checkpoint: array length mismatch");
        f.read(reinterpret_cast<char*>(arr->data()),
               static_cast<std::streamsize>(len * sizeof(double)));
        if (!f) throw IoError("checkpoint: unexpected end");
    }
}

namespace {

FusionModel::Batch make_batch(const std::vector<SamplePair>& samples,
                              const std::vector<std::size_t>& indices, std::size_t begin,
                              std::size_t end, const ModelConfig& config) {
    const std::size_t n = end - begin;
    FusionModel::Batch batch;
    batch.labels.resize(n);
    const Variant variant = config.variant;
    const bool use_a = variant == Variant::fusion || variant == Variant::single_astft;
    const bool use_b = variant == Variant::fusion || variant == Variant::single_dtcwt;
    if (use_a) batch.astft = nn::Tensor4(n, 1, config.astft_size, config.astft_size);
    if (use_b) batch.dtcwt = nn::Tensor4(n, 1, config.dtcwt_size, config.dtcwt_size);
    if (variant == Variant::raw_v || variant == Variant::raw_h)
        batch.raw = nn::Tensor4(n, 1, 1, config.raw_length);

    for (std::size_t k = 0; k < n; ++k) {
        const SamplePair& s = samples[indices[begin + k]];
        batch.labels[k] = s.label;
        if (use_a)
            for (std::size_t i = 0; i < s.astft.size(); ++i)
                batch.astft.values[k * s.astft.size() + i] = static_cast<double>(s.astft[i]);
        if (use_b)
            for (std::size_t i = 0; i < s.dtcwt.size(); ++i)
                batch.dtcwt.values[k * s.dtcwt.size() + i] = static_cast<double>(s.dtcwt[i]);
        if (variant == Variant::raw_v || variant == Variant::raw_h) {
            const auto& raw = variant == Variant::raw_v ? s.raw_v : s.raw_h;
            for (std::size_t i = 0; i < raw.size(); ++i)
                batch.raw.values[k * raw.size() + i] = static_cast<double>(raw[i]);
        }
    }
    return batch;
}

EvalPass eval_pass(FusionModel& model, const std::vector<SamplePair>& split,
                   std::size_t class_count, std::size_t batch_size) {
    EvalPass pass;
    pass.confusion.assign(class_count * class_count, 0);
    if (split.empty()) return pass;
    std::vector<std::size_t> indices(split.size());
    std::iota(indices.begin(), indices.end(), 0);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < split.size(); begin += batch_size) {
        const std::size_t end = std::min(begin + batch_size, split.size());
        auto batch = make_batch(split, indices, begin, end, model.config());
        nn::Tensor4 logits = model.forward(batch, false);
        auto sm = nn::softmax_xent(logits, batch.labels);
        loss_sum += sm.loss * static_cast<double>(end - begin);
        for (std::size_t k = 0; k < end - begin; ++k) {
            std::size_t pred = 0;
            double best = sm.probabilities.at(k, 0, 0, 0);
            for (std::size_t c = 1; c < class_count; ++c)
                if (sm.probabilities.at(k, c, 0, 0) > best) {
                    best = sm.probabilities.at(k, c, 0, 0);
                    pred = c;
                }
            pass.confusion[batch.labels[k] * class_count + pred] += 1;
            if (pred == batch.labels[k]) ++correct;
        }
    }
    pass.loss = loss_sum / static_cast<double>(split.size());
    pass.accuracy = static_cast<double>(correct) / static_cast<double>(split.size());
    return pass;
}

}  // namespace

Metrics train(FusionModel& model, const PreparedDataset& data, const TrainConfig& config) {
    if (data.train.empty() || data.validation.empty())
        throw ValidationError("train: empty dataset splits");
    if (data.class_count() != model.config().class_count)
        throw ValidationError("train: class count mismatch between dataset and model");
    const auto start = std::chrono::steady_clock::now();

    Metrics metrics;
    metrics.class_count = data.class_count();
    std::mt19937_64 shuffle_rng(config.seed);
    std::vector<std::size_t> indices(data.train.size());
    std::iota(indices.begin(), indices.end(), 0);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(indices.begin(), indices.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t begin = 0; begin < indices.size(); begin += config.batch_size) {
            const std::size_t end = std::min(begin + config.batch_size, indices.size());
            auto batch = make_batch(data.train, indices, begin, end, model.config());
            nn::Tensor4 logits = model.forward(batch, true);
            auto sm = nn::softmax_xent(logits, batch.labels);
            loss_sum += sm.loss * static_cast<double>(end - begin);
            for (std::size_t k = 0; k < end - begin; ++k) {
                std::size_t pred = 0;
                double best = sm.probabilities.at(k, 0, 0, 0);
                for (std::size_t c = 1; c < metrics.class_count; ++c)
                    if (sm.probabilities.at(k, c, 0, 0) > best) {
                        best = sm.probabilities.at(k, c, 0, 0);
                        pred = c;
                    }
                if (pred == batch.labels[k]) ++correct;
            }
            model.backward(sm.logit_grad);
            model.adam_update(config.learning_rate);
        }
        metrics.train_loss.push_back(loss_sum / static_cast<double>(indices.size()));
        metrics.train_acc.push_back(static_cast<double>(correct) /
                                    static_cast<double>(indices.size()));
        EvalPass val = eval_pass(model, data.validation, metrics.class_count, config.batch_size);
        metrics.val_loss.push_back(val.loss);
        metrics.val_acc.push_back(val.accuracy);
    }

    EvalPass test = eval_pass(model, data.test, metrics.class_count, config.batch_size);
    metrics.confusion = test.confusion;
    metrics.test_accuracy = test.accuracy;
    metrics.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return metrics;
}

Metrics evaluate(FusionModel& model, const std::vector<SamplePair>& split,
                 std::size_t class_count) {
    Metrics metrics;
    metrics.class_count = class_count;
    const auto start = std::chrono::steady_clock::now();
    EvalPass pass = eval_pass(model, split, class_count, 32);
    metrics.confusion = pass.confusion;
    metrics.test_accuracy = pass.accuracy;
    metrics.val_loss.push_back(pass.loss);
    metrics.val_acc.push_back(pass.accuracy);
    metrics.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return metrics;
}

std::vector<AblationRow> run_ablation(const PreparedDataset& data, const TrainConfig& tc,
                                      const ModelConfig& base) {
    std::vector<AblationRow> rows;
    for (Variant v : {Variant::fusion, Variant::single_astft, Variant::single_dtcwt,
                      Variant::raw_v, Variant::raw_h}) {
        ModelConfig mc = base;
        mc.variant = v;
        FusionModel model(mc);
        Metrics metrics = train(model, data, tc);
        rows.push_back({variant_name(v), metrics.test_accuracy, metrics.wall_seconds});
    }
    return rows;
}

void write_metrics_csv(const Metrics& metrics, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "epoch,train_loss,val_loss,train_acc,val_acc\n";
    char buf[160];
    for (std::size_t e = 0; e < metrics.train_loss.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", e + 1,
                      metrics.train_loss[e], metrics.val_loss[e], metrics.train_acc[e],
                      metrics.val_acc[e]);
        f << buf;
    }
    if (!f) throw IoError("write failed: " + path);
}

void write_confusion_csv(const Metrics& metrics, const std::vector<std::string>& class_names,
                         const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "true\\pred";
    for (const auto& name : class_names) f << "," << name;
    f << "\n";
    for (std::size_t r = 0; r < metrics.class_count; ++r) {
        f << class_names[r];
        for (std::size_t c = 0; c < metrics.class_count; ++c)
            f << "," << metrics.confusion[r * metrics.class_count + c];
        f << "\n";
    }
    if (!f) throw IoError("write failed: " + path);
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "variant,accuracy,seconds\n";
    char buf[128];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.3f\n", row.variant.c_str(), row.accuracy,
                      row.seconds);
        f << buf;
    }
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace gearfuse::fusion
