#include "gearfuse/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "gearfuse/common.hpp"

namespace gearfuse::nn {

namespace {

void check_weights_shape(const Tensor4& weights, std::size_t d0, std::size_t d1, std::size_t kh,
                         std::size_t kw, const char* what) {
    if (weights.n != d0 || weights.c != d1 || weights.h != kh || weights.w != kw)
        throw ValidationError(std::string(what) + ": weight shape mismatch");
}

Tensor4 tensor_from_flat(const std::vector<double>& flat, std::size_t n, std::size_t c,
                         std::size_t h, std::size_t w) {
    Tensor4 t(n, c, h, w);
    std::copy(flat.begin(), flat.end(), t.values.begin());
    return t;
}

void he_init(std::vector<double>& params, std::size_t fan_in, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& p : params) p = dist(rng);
}

}  // namespace

std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t r, std::size_t s,
                         std::size_t p) {
    const std::size_t extent = (k - 1) * r + 1;
    const std::size_t padded = in + 2 * p;
    if (padded < extent) throw ValidationError("conv2d: kernel larger than padded input");
    const std::size_t span = padded - extent;
    return (span + s - 1) / s + 1;
}

std::size_t deconv_out_dim(std::size_t in, std::size_t k, std::size_t s) {
    if (in == 0) throw ValidationError("deconv2d: empty input dim");
    return (in - 1) * s + k;
}

namespace {

/// Valid kernel-tap range [t0, t1) so that 0 <= base + t*dilation < extent.
inline void tap_range(std::ptrdiff_t base, std::size_t k, std::size_t dilation,
                      std::ptrdiff_t extent, std::size_t& t0, std::size_t& t1) {
    const auto d = static_cast<std::ptrdiff_t>(dilation);
    std::ptrdiff_t lo = base < 0 ? (-base + d - 1) / d : 0;
    std::ptrdiff_t hi = base >= extent
                            ? 0
                            : std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(k),
                                                       (extent - 1 - base) / d + 1);
    t0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(lo, 0));
    t1 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(t0)));
}

}  // namespace

Tensor4 conv2d(const Tensor4& input, const Tensor4& weights, const ConvSpec& spec) {
    if (spec.transposed) throw ValidationError("conv2d: spec is transposed");
    check_weights_shape(weights, spec.out_channels, input.c, spec.kernel_h, spec.kernel_w,
                        "conv2d");
    const std::size_t oh = conv_out_dim(input.h, spec.kernel_h, spec.dilation_h, spec.stride,
                                        spec.pad_h);
    const std::size_t ow = conv_out_dim(input.w, spec.kernel_w, spec.dilation_w, spec.stride,
                                        spec.pad_w);
    Tensor4 out(input.n, spec.out_channels, oh, ow);

    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(input.h);
    const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(input.w);
    const std::size_t in_plane = input.h * input.w;
    const std::size_t w_per_oc = input.c * spec.kernel_h * spec.kernel_w;
    parallel_for(input.n * spec.out_channels, [&](std::size_t job) {
        const std::size_t b = job / spec.out_channels;
        const std::size_t oc = job % spec.out_channels;
        const double* x_batch = input.values.data() + b * input.c * in_plane;
        const double* w_oc = weights.values.data() + oc * w_per_oc;
        double* out_row = out.values.data() + (b * spec.out_channels + oc) * oh * ow;
        for (std::size_t i = 0; i < oh; ++i) {
            const std::ptrdiff_t base_r = static_cast<std::ptrdiff_t>(i * spec.stride) -
                                          static_cast<std::ptrdiff_t>(spec.pad_h);
            std::size_t m0, m1;
            tap_range(base_r, spec.kernel_h, spec.dilation_h, H, m0, m1);
            for (std::size_t j = 0; j < ow; ++j) {
                const std::ptrdiff_t base_c = static_cast<std::ptrdiff_t>(j * spec.stride) -
                                              static_cast<std::ptrdiff_t>(spec.pad_w);
                std::size_t n0, n1;
                tap_range(base_c, spec.kernel_w, spec.dilation_w, W, n0, n1);
                double acc = 0.0;
                for (std::size_t ic = 0; ic < input.c; ++ic) {
                    const double* x_plane = x_batch + ic * in_plane;
                    const double* w_ic = w_oc + ic * spec.kernel_h * spec.kernel_w;
                    for (std::size_t m = m0; m < m1; ++m) {
                        const double* x_row =
                            x_plane +
                            static_cast<std::size_t>(base_r +
                                                     static_cast<std::ptrdiff_t>(m * spec.dilation_h)) *
                                input.w;
                        const double* w_row = w_ic + m * spec.kernel_w;
                        for (std::size_t kn = n0; kn < n1; ++kn)
                            acc += x_row[static_cast<std::size_t>(
                                       base_c + static_cast<std::ptrdiff_t>(kn * spec.dilation_w))] *
                                   w_row[kn];
                    }
                }
                out_row[i * ow + j] = acc;
            }
        }
    });
    return out;
}

ConvGrads conv2d_backward(const Tensor4& input, const Tensor4& weights, const ConvSpec& spec,
                          const Tensor4& upstream) {
    const std::size_t oh = conv_out_dim(input.h, spec.kernel_h, spec.dilation_h, spec.stride,
                                        spec.pad_h);
    const std::size_t ow = conv_out_dim(input.w, spec.kernel_w, spec.dilation_w, spec.stride,
                                        spec.pad_w);
    if (upstream.n != input.n || upstream.c != spec.out_channels || upstream.h != oh ||
        upstream.w != ow)
        throw ValidationError("conv2d_backward: upstream shape mismatch");

    ConvGrads grads;
    grads.input_grad = Tensor4(input.n, input.c, input.h, input.w);
    grads.weight_grad = Tensor4(weights.n, weights.c, weights.h, weights.w);

    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(input.h);
    const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(input.w);

    // placements touching each input row/col, precomputed once
    struct Tap {
        std::size_t tap, out;
    };
    std::vector<std::vector<Tap>> row_taps(input.h), col_taps(input.w);
    for (std::size_t p = 0; p < input.h; ++p)
        for (std::size_t m = 0; m < spec.kernel_h; ++m) {
            const std::ptrdiff_t num = static_cast<std::ptrdiff_t>(p + spec.pad_h) -
                                       static_cast<std::ptrdiff_t>(m * spec.dilation_h);
            if (num < 0 || num % static_cast<std::ptrdiff_t>(spec.stride) != 0) continue;
            const std::size_t i = static_cast<std::size_t>(num) / spec.stride;
            if (i < oh) row_taps[p].push_back({m, i});
        }
    for (std::size_t q = 0; q < input.w; ++q)
        for (std::size_t kn = 0; kn < spec.kernel_w; ++kn) {
            const std::ptrdiff_t num = static_cast<std::ptrdiff_t>(q + spec.pad_w) -
                                       static_cast<std::ptrdiff_t>(kn * spec.dilation_w);
            if (num < 0 || num % static_cast<std::ptrdiff_t>(spec.stride) != 0) continue;
            const std::size_t j = static_cast<std::size_t>(num) / spec.stride;
            if (j < ow) col_taps[q].push_back({kn, j});
        }

    // dL/dx: gather over (oc, m, n) placements
    parallel_for(input.n * input.c, [&](std::size_t job) {
        const std::size_t b = job / input.c;
        const std::size_t ic = job % input.c;
        double* gx = grads.input_grad.values.data() + (b * input.c + ic) * input.h * input.w;
        for (std::size_t p = 0; p < input.h; ++p)
            for (std::size_t q = 0; q < input.w; ++q) {
                double acc = 0.0;
                for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
                    const double* up_plane =
                        upstream.values.data() + (b * spec.out_channels + oc) * oh * ow;
                    const double* w_base = weights.values.data() +
                                           (oc * input.c + ic) * spec.kernel_h * spec.kernel_w;
                    for (const Tap& rt : row_taps[p]) {
                        const double* up_row = up_plane + rt.out * ow;
                        const double* w_row = w_base + rt.tap * spec.kernel_w;
                        for (const Tap& ct : col_taps[q])
                            acc += up_row[ct.out] * w_row[ct.tap];
                    }
                }
                gx[p * input.w + q] = acc;
            }
    });

    // dL/dw: valid output range hoisted per kernel tap
    parallel_for(spec.out_channels * input.c, [&](std::size_t job) {
        const std::size_t oc = job / input.c;
        const std::size_t ic = job % input.c;
        for (std::size_t m = 0; m < spec.kernel_h; ++m)
            for (std::size_t kn = 0; kn < spec.kernel_w; ++kn) {
                double acc = 0.0;
                for (std::size_t b = 0; b < input.n; ++b) {
                    const double* x_plane =
                        input.values.data() + (b * input.c + ic) * input.h * input.w;
                    const double* up_plane =
                        upstream.values.data() + (b * spec.out_channels + oc) * oh * ow;
                    for (std::size_t i = 0; i < oh; ++i) {
                        const std::ptrdiff_t row =
                            static_cast<std::ptrdiff_t>(i * spec.stride) +
                            static_cast<std::ptrdiff_t>(m * spec.dilation_h) -
                            static_cast<std::ptrdiff_t>(spec.pad_h);
                        if (row < 0 || row >= H) continue;
                        const double* x_row =
                            x_plane + static_cast<std::size_t>(row) * input.w;
                        const double* up_row = up_plane + i * ow;
                        const std::ptrdiff_t col0 =
                            static_cast<std::ptrdiff_t>(kn * spec.dilation_w) -
                            static_cast<std::ptrdiff_t>(spec.pad_w);
                        for (std::size_t j = 0; j < ow; ++j) {
                            const std::ptrdiff_t col =
                                static_cast<std::ptrdiff_t>(j * spec.stride) + col0;
                            if (col < 0 || col >= W) continue;
                            acc += x_row[static_cast<std::size_t>(col)] * up_row[j];
                        }
                    }
                }
                grads.weight_grad.at(oc, ic, m, kn) = acc;
            }
    });
    return grads;
}

Tensor4 deconv2d(const Tensor4& input, const Tensor4& weights, const ConvSpec& spec) {
    if (!spec.transposed) throw ValidationError("deconv2d: spec must be transposed");
    if (spec.dilation_h != 1 || spec.dilation_w != 1)
        throw ValidationError("deconv2d: dilation must be 1");
    check_weights_shape(weights, input.c, spec.out_channels, spec.kernel_h, spec.kernel_w,
                        "deconv2d");
    const std::size_t oh = deconv_out_dim(input.h, spec.kernel_h, spec.stride);
    const std::size_t ow = deconv_out_dim(input.w, spec.kernel_w, spec.stride);
    Tensor4 out(input.n, spec.out_channels, oh, ow);

    // gather form of the scatter out[i*s+m, j*s+n] += x[i,j] w[m,n]:
    // contributions to (r, c) come from i = (r-m)/s, j = (c-n)/s
    parallel_for(input.n * spec.out_channels, [&](std::size_t job) {
        const std::size_t b = job / spec.out_channels;
        const std::size_t oc = job % spec.out_channels;
        for (std::size_t r = 0; r < oh; ++r)
            for (std::size_t cc = 0; cc < ow; ++cc) {
                double acc = 0.0;
                for (std::size_t ic = 0; ic < input.c; ++ic)
                    for (std::size_t i = 0; i < input.h; ++i) {
                        if (i * spec.stride > r) break;
                        const std::size_t m = r - i * spec.stride;
                        if (m >= spec.kernel_h) continue;
                        for (std::size_t j = 0; j < input.w; ++j) {
                            if (j * spec.stride > cc) break;
                            const std::size_t kn = cc - j * spec.stride;
                            if (kn >= spec.kernel_w) continue;
                            acc += input.at(b, ic, i, j) * weights.at(ic, oc, m, kn);
                        }
                    }
                out.at(b, oc, r, cc) = acc;
            }
    });
    return out;
}

ConvGrads deconv2d_backward(const Tensor4& input, const Tensor4& weights, const ConvSpec& spec,
                            const Tensor4& upstream) {
    const std::size_t oh = deconv_out_dim(input.h, spec.kernel_h, spec.stride);
    const std::size_t ow = deconv_out_dim(input.w, spec.kernel_w, spec.stride);
    if (upstream.n != input.n || upstream.c != spec.out_channels || upstream.h != oh ||
        upstream.w != ow)
        throw ValidationError("deconv2d_backward: upstream shape mismatch");

    ConvGrads grads;
    grads.input_grad = Tensor4(input.n, input.c, input.h, input.w);
    grads.weight_grad = Tensor4(weights.n, weights.c, weights.h, weights.w);

    parallel_for(input.n * input.c, [&](std::size_t job) {
        const std::size_t b = job / input.c;
        const std::size_t ic = job % input.c;
        for (std::size_t i = 0; i < input.h; ++i)
            for (std::size_t j = 0; j < input.w; ++j) {
                double acc = 0.0;
                for (std::size_t oc = 0; oc < spec.out_channels; ++oc)
                    for (std::size_t m = 0; m < spec.kernel_h; ++m)
                        for (std::size_t kn = 0; kn < spec.kernel_w; ++kn)
                            acc += upstream.at(b, oc, i * spec.stride + m, j * spec.stride + kn) *
                                   weights.at(ic, oc, m, kn);
                grads.input_grad.at(b, ic, i, j) = acc;
            }
    });

    parallel_for(input.c * spec.out_channels, [&](std::size_t job) {
        const std::size_t ic = job / spec.out_channels;
        const std::size_t oc = job % spec.out_channels;
        for (std::size_t m = 0; m < spec.kernel_h; ++m)
            for (std::size_t kn = 0; kn < spec.kernel_w; ++kn) {
                double acc = 0.0;
                for (std::size_t b = 0; b < input.n; ++b)
                    for (std::size_t i = 0; i < input.h; ++i)
                        for (std::size_t j = 0; j < input.w; ++j)
                            acc += input.at(b, ic, i, j) *
                                   upstream.at(b, oc, i * spec.stride + m, j * spec.stride + kn);
                grads.weight_grad.at(ic, oc, m, kn) = acc;
            }
    });
    return grads;
}

Tensor4 center_crop(const Tensor4& input, std::size_t target_h, std::size_t target_w) {
    if (target_h > input.h || target_w > input.w)
        throw ValidationError("center_crop: target larger than input");
    const std::size_t off_h = (input.h - target_h) / 2;
    const std::size_t off_w = (input.w - target_w) / 2;
    Tensor4 out(input.n, input.c, target_h, target_w);
    for (std::size_t b = 0; b < input.n; ++b)
        for (std::size_t ch = 0; ch < input.c; ++ch)
            for (std::size_t i = 0; i < target_h; ++i)
                for (std::size_t j = 0; j < target_w; ++j)
                    out.at(b, ch, i, j) = input.at(b, ch, i + off_h, j + off_w);
    return out;
}

Tensor4 center_crop_backward(const Tensor4& upstream, std::size_t orig_h, std::size_t orig_w) {
    const std::size_t off_h = (orig_h - upstream.h) / 2;
    const std::size_t off_w = (orig_w - upstream.w) / 2;
    Tensor4 out(upstream.n, upstream.c, orig_h, orig_w);
    for (std::size_t b = 0; b < upstream.n; ++b)
        for (std::size_t ch = 0; ch < upstream.c; ++ch)
            for (std::size_t i = 0; i < upstream.h; ++i)
                for (std::size_t j = 0; j < upstream.w; ++j)
                    out.at(b, ch, i + off_h, j + off_w) = upstream.at(b, ch, i, j);
    return out;
}

Tensor4 batchnorm(const Tensor4& input, BatchNormState& state, bool training,
                  BatchNormCache* cache) {
    if (state.gamma.size() != input.c) throw ValidationError("batchnorm: channel mismatch");
    const std::size_t m = input.n * input.h * input.w;
    Tensor4 out(input.n, input.c, input.h, input.w);

    if (training) {
        if (m < 2) throw ValidationError("batchnorm: need at least 2 values per channel");
        if (cache) {
            cache->x_hat = Tensor4(input.n, input.c, input.h, input.w);
            cache->inv_std.assign(input.c, 0.0);
        }
        for (std::size_t ch = 0; ch < input.c; ++ch) {
            double mean = 0.0;
            for (std::size_t b = 0; b < input.n; ++b)
                for (std::size_t i = 0; i < input.h; ++i)
                    for (std::size_t j = 0; j < input.w; ++j) mean += input.at(b, ch, i, j);
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (std::size_t b = 0; b < input.n; ++b)
                for (std::size_t i = 0; i < input.h; ++i)
                    for (std::size_t j = 0; j < input.w; ++j) {
                        const double d = input.at(b, ch, i, j) - mean;
                        var += d * d;
                    }
            var /= static_cast<double>(m);
            const double inv_std = 1.0 / std::sqrt(var + state.eps);
            state.running_mean[ch] = (1.0 - state.momentum) * state.running_mean[ch] +
                                     state.momentum * mean;
            state.running_var[ch] = (1.0 - state.momentum) * state.running_var[ch] +
                                    state.momentum * var;
            if (cache) cache->inv_std[ch] = inv_std;
            for (std::size_t b = 0; b < input.n; ++b)
                for (std::size_t i = 0; i < input.h; ++i)
                    for (std::size_t j = 0; j < input.w; ++j) {
                        const double xh = (input.at(b, ch, i, j) - mean) * inv_std;
                        if (cache) cache->x_hat.at(b, ch, i, j) = xh;
                        out.at(b, ch, i, j) = state.gamma[ch] * xh + state.beta[ch];
                    }
        }
    } else {
        for (std::size_t ch = 0; ch < input.c; ++ch) {
            const double inv_std = 1.0 / std::sqrt(state.running_var[ch] + state.eps);
            for (std::size_t b = 0; b < input.n; ++b)
                for (std::size_t i = 0; i < input.h; ++i)
                    for (std::size_t j = 0; j < input.w; ++j)
                        out.at(b, ch, i, j) =
                            state.gamma[ch] * (input.at(b, ch, i, j) - state.running_mean[ch]) *
                                inv_std +
                            state.beta[ch];
        }
    }
    return out;
}

BatchNormGrads batchnorm_backward(const Tensor4& upstream, const BatchNormCache& cache,
                                  const BatchNormState& state) {
    const Tensor4& x_hat = cache.x_hat;
    if (!upstream.same_shape(x_hat)) throw ValidationError("batchnorm_backward: shape mismatch");
    const double m = static_cast<double>(upstream.n * upstream.h * upstream.w);

    BatchNormGrads grads;
    grads.input_grad = Tensor4(upstream.n, upstream.c, upstream.h, upstream.w);
    grads.gamma_grad.assign(upstream.c, 0.0);
    grads.beta_grad.assign(upstream.c, 0.0);

    for (std::size_t ch = 0; ch < upstream.c; ++ch) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < upstream.n; ++b)
            for (std::size_t i = 0; i < upstream.h; ++i)
                for (std::size_t j = 0; j < upstream.w; ++j) {
                    const double dy = upstream.at(b, ch, i, j);
                    sum_dy += dy;
                    sum_dy_xhat += dy * x_hat.at(b, ch, i, j);
                }
        grads.beta_grad[ch] = sum_dy;
        grads.gamma_grad[ch] = sum_dy_xhat;
        const double scale = state.gamma[ch] * cache.inv_std[ch] / m;
        for (std::size_t b = 0; b < upstream.n; ++b)
            for (std::size_t i = 0; i < upstream.h; ++i)
                for (std::size_t j = 0; j < upstream.w; ++j) {
                    const double dy = upstream.at(b, ch, i, j);
                    grads.input_grad.at(b, ch, i, j) =
                        scale * (m * dy - sum_dy - x_hat.at(b, ch, i, j) * sum_dy_xhat);
                }
    }
    return grads;
}

Tensor4 relu(const Tensor4& input) {
    Tensor4 out = input;
    for (double& v : out.values) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor4 relu_backward(const Tensor4& upstream, const Tensor4& input) {
    if (!upstream.same_shape(input)) throw ValidationError("relu_backward: shape mismatch");
    Tensor4 out = upstream;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        if (input.values[i] <= 0.0) out.values[i] = 0.0;
    return out;
}

Tensor4 maxpool2(const Tensor4& input, std::size_t kernel_h, std::size_t kernel_w,
                 std::size_t stride_h, std::size_t stride_w) {
    if (kernel_h > input.h || kernel_w > input.w)
        throw ValidationError("maxpool: kernel larger than input");
    const std::size_t oh = (input.h - kernel_h) / stride_h + 1;
    const std::size_t ow = (input.w - kernel_w) / stride_w + 1;
    Tensor4 out(input.n, input.c, oh, ow);
    for (std::size_t b = 0; b < input.n; ++b)
        for (std::size_t ch = 0; ch < input.c; ++ch)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (std::size_t m = 0; m < kernel_h; ++m)
                        for (std::size_t kn = 0; kn < kernel_w; ++kn)
                            best = std::max(best, input.at(b, ch, i * stride_h + m,
                                                           j * stride_w + kn));
                    out.at(b, ch, i, j) = best;
                }
    return out;
}

Tensor4 maxpool2_backward(const Tensor4& upstream, const Tensor4& input, std::size_t kernel_h,
                          std::size_t kernel_w, std::size_t stride_h, std::size_t stride_w) {
    const std::size_t oh = (input.h - kernel_h) / stride_h + 1;
    const std::size_t ow = (input.w - kernel_w) / stride_w + 1;
    if (upstream.h != oh || upstream.w != ow || upstream.n != input.n || upstream.c != input.c)
        throw ValidationError("maxpool_backward: shape mismatch");
    Tensor4 out(input.n, input.c, input.h, input.w);
    for (std::size_t b = 0; b < input.n; ++b)
        for (std::size_t ch = 0; ch < input.c; ++ch)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_r = 0, best_c = 0;
                    for (std::size_t m = 0; m < kernel_h; ++m)
                        for (std::size_t kn = 0; kn < kernel_w; ++kn) {
                            const double v = input.at(b, ch, i * stride_h + m, j * stride_w + kn);
                            if (v > best) {  // first index wins ties
                                best = v;
                                best_r = i * stride_h + m;
                                best_c = j * stride_w + kn;
                            }
                        }
                    out.at(b, ch, best_r, best_c) += upstream.at(b, ch, i, j);
                }
    return out;
}

Tensor4 maxpool(const Tensor4& input, std::size_t k, std::size_t stride) {
    return maxpool2(input, k, k, stride, stride);
}

Tensor4 maxpool_backward(const Tensor4& upstream, const Tensor4& input, std::size_t k,
                         std::size_t stride) {
    return maxpool2_backward(upstream, input, k, k, stride, stride);
}

Tensor4 gap(const Tensor4& input) {
    Tensor4 out(input.n, input.c, 1, 1);
    const double scale = 1.0 / static_cast<double>(input.h * input.w);
    for (std::size_t b = 0; b < input.n; ++b)
        for (std::size_t ch = 0; ch < input.c; ++ch) {
            double acc = 0.0;
            for (std::size_t i = 0; i < input.h; ++i)
                for (std::size_t j = 0; j < input.w; ++j) acc += input.at(b, ch, i, j);
            out.at(b, ch, 0, 0) = acc * scale;
        }
    return out;
}

Tensor4 gap_backward(const Tensor4& upstream, std::size_t h, std::size_t w) {
    Tensor4 out(upstream.n, upstream.c, h, w);
    const double scale = 1.0 / static_cast<double>(h * w);
    for (std::size_t b = 0; b < upstream.n; ++b)
        for (std::size_t ch = 0; ch < upstream.c; ++ch) {
            const double g = upstream.at(b, ch, 0, 0) * scale;
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) out.at(b, ch, i, j) = g;
        }
    return out;
}

SoftmaxResult softmax_xent(const Tensor4& logits, const std::vector<std::uint32_t>& labels) {
    if (logits.h != 1 || logits.w != 1) throw ValidationError("softmax_xent: expect (N,K,1,1)");
    if (logits.c < 2) throw ValidationError("softmax_xent: need at least 2 classes");
    if (labels.size() != logits.n) throw ValidationError("softmax_xent: label count mismatch");
    const std::size_t k = logits.c;
    for (std::uint32_t label : labels)
        if (label >= k) throw ValidationError("softmax_xent: label out of range");

    SoftmaxResult result;
    result.probabilities = Tensor4(logits.n, k, 1, 1);
    result.logit_grad = Tensor4(logits.n, k, 1, 1);
    double loss = 0.0;
    for (std::size_t b = 0; b < logits.n; ++b) {
        double zmax = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < k; ++i) zmax = std::max(zmax, logits.at(b, i, 0, 0));
        double denom = 0.0;
        for (std::size_t i = 0; i < k; ++i) denom += std::exp(logits.at(b, i, 0, 0) - zmax);
        const double log_denom = std::log(denom);
        for (std::size_t i = 0; i < k; ++i) {
            const double logp = logits.at(b, i, 0, 0) - zmax - log_denom;
            const double p = std::exp(logp);
            result.probabilities.at(b, i, 0, 0) = p;
            result.logit_grad.at(b, i, 0, 0) =
                (p - (labels[b] == i ? 1.0 : 0.0)) / static_cast<double>(logits.n);
            if (labels[b] == i) loss -= logp;
        }
    }
    result.loss = loss / static_cast<double>(logits.n);
    return result;
}

void adam_step(LayerState& state, double lr, double beta1, double beta2, double eps) {
    if (state.params.size() != state.grads.size() || state.params.size() != state.m1.size() ||
        state.params.size() != state.m2.size())
        throw ValidationError("adam_step: incongruent state arrays");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < state.params.size(); ++i) {
        const double g = state.grads[i];
        state.m1[i] = beta1 * state.m1[i] + (1.0 - beta1) * g;
        state.m2[i] = beta2 * state.m2[i] + (1.0 - beta2) * g * g;
        const double mhat = state.m1[i] / bc1;
        const double vhat = state.m2[i] / bc2;
        state.params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    state.zero_grads();
}

GradCheckReport grad_check(const std::function<double()>& loss_fn, std::vector<double>& x,
                           const std::vector<double>& analytic_grad, double h,
                           std::size_t max_coords, std::uint64_t seed) {
    if (x.size() != analytic_grad.size())
        throw ValidationError("grad_check: gradient size mismatch");
    std::vector<std::size_t> coords(x.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > max_coords) {
        std::mt19937_64 rng(seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(max_coords);
    }
    GradCheckReport report;
    report.checked = coords.size();
    for (std::size_t idx : coords) {
        const double orig = x[idx];
        x[idx] = orig + h;
        const double lp = loss_fn();
        x[idx] = orig - h;
        const double lm = loss_fn();
        x[idx] = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double g = analytic_grad[idx];
        const double rel = std::abs(fd - g) / std::max({1.0, std::abs(fd), std::abs(g)});
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = idx;
        }
    }
    return report;
}

// ---------------------------------------------------------------------

Conv2dLayer::Conv2dLayer(std::size_t in_c, const ConvSpec& s, bool with_bias, std::uint64_t seed)
    : spec(s), in_channels(in_c),
      weights(s.out_channels * in_c * s.kernel_h * s.kernel_w),
      bias(with_bias ? s.out_channels : 0) {
    he_init(weights.params, in_c * s.kernel_h * s.kernel_w, seed);
}

Tensor4 Conv2dLayer::forward(const Tensor4& x) {
    cached_input = x;
    Tensor4 w = tensor_from_flat(weights.params, spec.out_channels, in_channels, spec.kernel_h,
                                 spec.kernel_w);
    Tensor4 out = conv2d(x, w, spec);
    if (!bias.params.empty()) {
        for (std::size_t b = 0; b < out.n; ++b)
            for (std::size_t ch = 0; ch < out.c; ++ch)
                for (std::size_t i = 0; i < out.h; ++i)
                    for (std::size_t j = 0; j < out.w; ++j)
                        out.at(b, ch, i, j) += bias.params[ch];
    }
    return out;
}

Tensor4 Conv2dLayer::backward(const Tensor4& upstream) {
    Tensor4 w = tensor_from_flat(weights.params, spec.out_channels, in_channels, spec.kernel_h,
                                 spec.kernel_w);
    ConvGrads g = conv2d_backward(cached_input, w, spec, upstream);
    for (std::size_t i = 0; i < weights.grads.size(); ++i)
        weights.grads[i] += g.weight_grad.values[i];
    if (!bias.params.empty()) {
        for (std::size_t b = 0; b < upstream.n; ++b)
            for (std::size_t ch = 0; ch < upstream.c; ++ch)
                for (std::size_t i = 0; i < upstream.h; ++i)
                    for (std::size_t j = 0; j < upstream.w; ++j)
                        bias.grads[ch] += upstream.at(b, ch, i, j);
    }
    return std::move(g.input_grad);
}

Deconv2dLayer::Deconv2dLayer(std::size_t in_c, const ConvSpec& s, std::uint64_t seed)
    : spec(s), in_channels(in_c),
      weights(in_c * s.out_channels * s.kernel_h * s.kernel_w) {
    he_init(weights.params, in_c * s.kernel_h * s.kernel_w, seed);
}

Tensor4 Deconv2dLayer::forward(const Tensor4& x) {
    cached_input = x;
    Tensor4 w = tensor_from_flat(weights.params, in_channels, spec.out_channels, spec.kernel_h,
                                 spec.kernel_w);
    return deconv2d(x, w, spec);
}

Tensor4 Deconv2dLayer::backward(const Tensor4& upstream) {
    Tensor4 w = tensor_from_flat(weights.params, in_channels, spec.out_channels, spec.kernel_h,
                                 spec.kernel_w);
    ConvGrads g = deconv2d_backward(cached_input, w, spec, upstream);
    for (std::size_t i = 0; i < weights.grads.size(); ++i)
        weights.grads[i] += g.weight_grad.values[i];
    return std::move(g.input_grad);
}

BatchNormLayer::BatchNormLayer(std::size_t channels) : state(channels), params(2 * channels) {
    for (std::size_t i = 0; i < channels; ++i) params.params[i] = 1.0;  // gamma
}

void BatchNormLayer::sync_state_from_params() {
    const std::size_t c = state.gamma.size();
    for (std::size_t i = 0; i < c; ++i) {
        state.gamma[i] = params.params[i];
        state.beta[i] = params.params[c + i];
    }
}

Tensor4 BatchNormLayer::forward(const Tensor4& x, bool training) {
    sync_state_from_params();
    return batchnorm(x, state, training, training ? &cache : nullptr);
}

Tensor4 BatchNormLayer::backward(const Tensor4& upstream) {
    BatchNormGrads g = batchnorm_backward(upstream, cache, state);
    const std::size_t c = state.gamma.size();
    for (std::size_t i = 0; i < c; ++i) {
        params.grads[i] += g.gamma_grad[i];
        params.grads[c + i] += g.beta_grad[i];
    }
    return std::move(g.input_grad);
}

}  // namespace gearfuse::nn
