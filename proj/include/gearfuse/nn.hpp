#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gearfuse::nn {

/// Batched activation/parameter tensor, row-major (N, C, H, W), 64-bit.
struct Tensor4 {
    std::size_t n = 0, c = 0, h = 0, w = 0;
    std::vector<double> values;

    Tensor4() = default;
    Tensor4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_, double fill = 0.0)
        : n(n_), c(c_), h(h_), w(w_), values(n_ * c_ * h_ * w_, fill) {}

    std::size_t size() const { return values.size(); }
    std::size_t index(std::size_t in, std::size_t ic, std::size_t ih, std::size_t iw) const {
        return ((in * c + ic) * h + ih) * w + iw;
    }
    double& at(std::size_t in, std::size_t ic, std::size_t ih, std::size_t iw) {
        return values[index(in, ic, ih, iw)];
    }
    double at(std::size_t in, std::size_t ic, std::size_t ih, std::size_t iw) const {
        return values[index(in, ic, ih, iw)];
    }
    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

struct ConvSpec {
    std::size_t out_channels = 1;
    std::size_t kernel_h = 1, kernel_w = 1;
    std::size_t stride = 1;
    std::size_t dilation_h = 1, dilation_w = 1;
    std::size_t pad_h = 0, pad_w = 0;
    bool transposed = false;
};

/// ceil((in + 2p - (k + (k-1)(r-1))) / s) + 1; the ceiling is realized by
/// implicit zero rows/cols past the high edge.
std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t r, std::size_t s,
                         std::size_t p);
/// (in - 1) * s + k
std::size_t deconv_out_dim(std::size_t in, std::size_t k, std::size_t s);

/// Cross-correlation with stride/dilation/zero padding.
/// weights: (out_channels, in_channels, kernel_h, kernel_w).
Tensor4 conv2d(const Tensor4& input, const Tensor4& weights, const ConvSpec& spec);

struct ConvGrads {
    Tensor4 input_grad;
    Tensor4 weight_grad;
};
ConvGrads conv2d_backward(const Tensor4& input, const Tensor4& weights, const ConvSpec& spec,
                          const Tensor4& upstream);

/// Transposed convolution (adjoint of the stride-s convolution).
/// weights: (in_channels, out_channels, kernel_h, kernel_w).
Tensor4 deconv2d(const Tensor4& input, const Tensor4& weights, const ConvSpec& spec);
ConvGrads deconv2d_backward(const Tensor4& input, const Tensor4& weights, const ConvSpec& spec,
                            const Tensor4& upstream);

/// Symmetric spatial crop; the extra row/col is removed from the high side
/// when the margin is odd.
Tensor4 center_crop(const Tensor4& input, std::size_t target_h, std::size_t target_w);
Tensor4 center_crop_backward(const Tensor4& upstream, std::size_t orig_h, std::size_t orig_w);

struct BatchNormState {
    std::vector<double> gamma, beta;
    std::vector<double> running_mean, running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    explicit BatchNormState(std::size_t channels = 0)
        : gamma(channels, 1.0), beta(channels, 0.0), running_mean(channels, 0.0),
          running_var(channels, 1.0) {}
};

struct BatchNormCache {
    Tensor4 x_hat;
    std::vector<double> inv_std;
};

/// Training mode uses batch statistics (per channel over N*H*W, which must
/// be >= 2) and updates the running estimates; inference uses running stats.
Tensor4 batchnorm(const Tensor4& input, BatchNormState& state, bool training,
                  BatchNormCache* cache = nullptr);

struct BatchNormGrads {
    Tensor4 input_grad;
    std::vector<double> gamma_grad, beta_grad;
};
BatchNormGrads batchnorm_backward(const Tensor4& upstream, const BatchNormCache& cache,
                                  const BatchNormState& state);

Tensor4 relu(const Tensor4& input);
Tensor4 relu_backward(const Tensor4& upstream, const Tensor4& input);

/// Per-dimension pooling window (clamped windows let 1xL inputs pool along
/// the long axis only).
Tensor4 maxpool2(const Tensor4& input, std::size_t kernel_h, std::size_t kernel_w,
                 std::size_t stride_h, std::size_t stride_w);
Tensor4 maxpool2_backward(const Tensor4& upstream, const Tensor4& input, std::size_t kernel_h,
                          std::size_t kernel_w, std::size_t stride_h, std::size_t stride_w);

Tensor4 maxpool(const Tensor4& input, std::size_t k, std::size_t stride);
Tensor4 maxpool_backward(const Tensor4& upstream, const Tensor4& input, std::size_t k,
                         std::size_t stride);

/// Spatial mean per (sample, channel); output is (N, C, 1, 1).
Tensor4 gap(const Tensor4& input);
Tensor4 gap_backward(const Tensor4& upstream, std::size_t h, std::size_t w);

struct SoftmaxResult {
    Tensor4 probabilities;  // (N, K, 1, 1), rows sum to 1
    double loss = 0.0;      // mean negative log-likelihood
    Tensor4 logit_grad;     // (p - onehot) / N
};
SoftmaxResult softmax_xent(const Tensor4& logits, const std::vector<std::uint32_t>& labels);

/// Parameters with their gradient and Adam moment buffers.
struct LayerState {
    std::vector<double> params;
    std::vector<double> grads;
    std::vector<double> m1;
    std::vector<double> m2;
    std::uint64_t step = 0;

    explicit LayerState(std::size_t count = 0)
        : params(count, 0.0), grads(count, 0.0), m1(count, 0.0), m2(count, 0.0) {}
    void zero_grads() { std::fill(grads.begin(), grads.end(), 0.0); }
};

/// Bias-corrected Adam update; increments the step counter and zeroes the
/// gradients afterwards.
void adam_step(LayerState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

/// Central finite differences on up to max_coords randomly sampled entries
/// of x. loss_fn must recompute the scalar loss from the current x.
GradCheckReport grad_check(const std::function<double()>& loss_fn, std::vector<double>& x,
                           const std::vector<double>& analytic_grad, double h = 1e-5,
                           std::size_t max_coords = 200, std::uint64_t seed = 0);

// ---------------------------------------------------------------------
// Layer wrappers: cache activations for backprop, own parameter state.
// ---------------------------------------------------------------------

struct Conv2dLayer {
    ConvSpec spec;
    std::size_t in_channels = 0;
    LayerState weights;
    LayerState bias;  // empty when bias is disabled

    Conv2dLayer() = default;
    Conv2dLayer(std::size_t in_c, const ConvSpec& s, bool with_bias, std::uint64_t seed);
    Tensor4 forward(const Tensor4& x);
    Tensor4 backward(const Tensor4& upstream);

    Tensor4 cached_input;
};

struct Deconv2dLayer {
    ConvSpec spec;
    std::size_t in_channels = 0;
    LayerState weights;

    Deconv2dLayer() = default;
    Deconv2dLayer(std::size_t in_c, const ConvSpec& s, std::uint64_t seed);
    Tensor4 forward(const Tensor4& x);
    Tensor4 backward(const Tensor4& upstream);

    Tensor4 cached_input;
};

struct BatchNormLayer {
    BatchNormState state;
    // gamma and beta gradients/moments live here (gamma first, then beta)
    LayerState params;

    BatchNormLayer() = default;
    explicit BatchNormLayer(std::size_t channels);
    Tensor4 forward(const Tensor4& x, bool training);
    Tensor4 backward(const Tensor4& upstream);
    /// Copies LayerState params into the BatchNormState vectors (call after
    /// adam_step or checkpoint load).
    void sync_state_from_params();

    BatchNormCache cache;
};

struct ReluLayer {
    Tensor4 cached_input;
    Tensor4 forward(const Tensor4& x) {
        cached_input = x;
        return relu(x);
    }
    Tensor4 backward(const Tensor4& upstream) { return relu_backward(upstream, cached_input); }
};

struct MaxPoolLayer {
    std::size_t kernel_h = 2, kernel_w = 2, stride_h = 2, stride_w = 2;
    Tensor4 cached_input;
    Tensor4 forward(const Tensor4& x) {
        cached_input = x;
        return maxpool2(x, kernel_h, kernel_w, stride_h, stride_w);
    }
    Tensor4 backward(const Tensor4& upstream) {
        return maxpool2_backward(upstream, cached_input, kernel_h, kernel_w, stride_h, stride_w);
    }
};

struct GapLayer {
    std::size_t cached_h = 0, cached_w = 0;
    Tensor4 forward(const Tensor4& x) {
        cached_h = x.h;
        cached_w = x.w;
        return gap(x);
    }
    Tensor4 backward(const Tensor4& upstream) {
        return gap_backward(upstream, cached_h, cached_w);
    }
};

}  // namespace gearfuse::nn
