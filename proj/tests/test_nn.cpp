#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gearfuse/common.hpp"
#include "gearfuse/nn.hpp"

using namespace gearfuse;
using nn::ConvSpec;
using nn::Tensor4;

namespace {

Tensor4 random_tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                      std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Tensor4 t(n, c, h, w);
    for (double& v : t.values) v = g(rng);
    return t;
}

/// Direct transcription of the dilated-convolution formula; accumulation
/// order (channel, kernel row, kernel col) mirrors the production loop so
/// values must agree bit for bit.
Tensor4 conv2d_oracle(const Tensor4& x, const Tensor4& w, const ConvSpec& s) {
    const std::size_t oh = nn::conv_out_dim(x.h, s.kernel_h, s.dilation_h, s.stride, s.pad_h);
    const std::size_t ow = nn::conv_out_dim(x.w, s.kernel_w, s.dilation_w, s.stride, s.pad_w);
    Tensor4 y(x.n, s.out_channels, oh, ow);
    for (std::size_t b = 0; b < x.n; ++b)
        for (std::size_t oc = 0; oc < s.out_channels; ++oc)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double acc = 0.0;
                    for (std::size_t ic = 0; ic < x.c; ++ic)
                        for (std::size_t m = 0; m < s.kernel_h; ++m)
                            for (std::size_t kn = 0; kn < s.kernel_w; ++kn) {
                                const std::ptrdiff_t r =
                                    static_cast<std::ptrdiff_t>(i * s.stride + m * s.dilation_h) -
                                    static_cast<std::ptrdiff_t>(s.pad_h);
                                const std::ptrdiff_t c =
                                    static_cast<std::ptrdiff_t>(j * s.stride + kn * s.dilation_w) -
                                    static_cast<std::ptrdiff_t>(s.pad_w);
                                if (r < 0 || r >= static_cast<std::ptrdiff_t>(x.h) || c < 0 ||
                                    c >= static_cast<std::ptrdiff_t>(x.w))
                                    continue;
                                acc += x.at(b, ic, static_cast<std::size_t>(r),
                                            static_cast<std::size_t>(c)) *
                                       w.at(oc, ic, m, kn);
                            }
                    y.at(b, oc, i, j) = acc;
                }
    return y;
}

/// Scatter transcription of transposed convolution.
Tensor4 deconv2d_oracle(const Tensor4& x, const Tensor4& w, const ConvSpec& s) {
    Tensor4 y(x.n, s.out_channels, nn::deconv_out_dim(x.h, s.kernel_h, s.stride),
              nn::deconv_out_dim(x.w, s.kernel_w, s.stride));
    for (std::size_t b = 0; b < x.n; ++b)
        for (std::size_t oc = 0; oc < s.out_channels; ++oc)
            for (std::size_t ic = 0; ic < x.c; ++ic)
                for (std::size_t i = 0; i < x.h; ++i)
                    for (std::size_t j = 0; j < x.w; ++j)
                        for (std::size_t m = 0; m < s.kernel_h; ++m)
                            for (std::size_t kn = 0; kn < s.kernel_w; ++kn)
                                y.at(b, oc, i * s.stride + m, j * s.stride + kn) +=
                                    x.at(b, ic, i, j) * w.at(ic, oc, m, kn);
    return y;
}

double dot(const Tensor4& a, const Tensor4& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) acc += a.values[i] * b.values[i];
    return acc;
}

}  // namespace

TEST_CASE("conv output sizes follow the ceil formula") {
    CHECK(nn::conv_out_dim(64, 3, 2, 1, 0) == 60);
    CHECK(nn::conv_out_dim(64, 3, 1, 2, 0) == 32);
    CHECK(nn::conv_out_dim(128, 3, 2, 2, 1) == 64);
    CHECK(nn::conv_out_dim(8, 1, 1, 1, 0) == 8);
    CHECK_THROWS_AS(nn::conv_out_dim(4, 7, 1, 1, 0), ValidationError);
}

TEST_CASE("1x1 identity kernel reproduces the input") {
    auto x = random_tensor(2, 1, 5, 7, 1);
    Tensor4 w(1, 1, 1, 1);
    w.values[0] = 1.0;
    ConvSpec s;
    auto y = nn::conv2d(x, w, s);
    CHECK(y.values == x.values);
}

TEST_CASE("conv2d matches the naive oracle exactly over a sweep") {
    std::uint64_t seed = 100;
    for (std::size_t k : {1, 3, 5}) {
        for (std::size_t r : {1, 2, 4}) {
            for (std::size_t stride : {1, 2}) {
                for (std::size_t pad : {0, 1}) {
                    const std::size_t extent = (k - 1) * r + 1;
                    const std::size_t h = std::max<std::size_t>(extent, 9);
                    auto x = random_tensor(2, 2, h, h + 3, seed++);
                    auto w = random_tensor(3, 2, k, k, seed++);
                    ConvSpec s;
                    s.out_channels = 3;
                    s.kernel_h = s.kernel_w = k;
                    s.stride = stride;
                    s.dilation_h = s.dilation_w = r;
                    s.pad_h = s.pad_w = pad;
                    auto mine = nn::conv2d(x, w, s);
                    auto want = conv2d_oracle(x, w, s);
                    REQUIRE(mine.same_shape(want));
                    CHECK(mine.values == want.values);  // bit-exact
                }
            }
        }
    }
}

TEST_CASE("dilation one equals plain convolution") {
    auto x = random_tensor(1, 2, 10, 10, 7);
    auto w = random_tensor(2, 2, 3, 3, 8);
    ConvSpec dilated;
    dilated.out_channels = 2;
    dilated.kernel_h = dilated.kernel_w = 3;
    dilated.dilation_h = dilated.dilation_w = 1;
    auto a = nn::conv2d(x, w, dilated);
    auto b = conv2d_oracle(x, w, dilated);
    CHECK(a.values == b.values);
}

TEST_CASE("conv2d receptive field grows with dilation") {
    // impulse response support equals K + (K-1)(r-1)
    for (std::size_t r : {1, 2, 3}) {
        Tensor4 x(1, 1, 21, 21, 0.0);
        x.at(0, 0, 10, 10) = 1.0;
        Tensor4 w(1, 1, 3, 3, 1.0);
        ConvSpec s;
        s.kernel_h = s.kernel_w = 3;
        s.dilation_h = s.dilation_w = r;
        auto y = nn::conv2d(x, w, s);
        std::size_t lo = y.h, hi = 0;
        for (std::size_t i = 0; i < y.h; ++i)
            for (std::size_t j = 0; j < y.w; ++j)
                if (y.at(0, 0, i, j) != 0.0) {
                    lo = std::min(lo, i);
                    hi = std::max(hi, i);
                }
        CHECK(hi - lo + 1 == 3 + 2 * (r - 1));
    }
}

TEST_CASE("conv2d_backward gradients") {
    auto x = random_tensor(1, 2, 6, 6, 11);
    auto w = random_tensor(2, 2, 3, 3, 12);
    ConvSpec s;
    s.out_channels = 2;
    s.kernel_h = s.kernel_w = 3;

    SUBCASE("zero upstream gives zero grads") {
        auto y = nn::conv2d(x, w, s);
        Tensor4 zeros(y.n, y.c, y.h, y.w, 0.0);
        auto g = nn::conv2d_backward(x, w, s, zeros);
        for (double v : g.input_grad.values) CHECK(v == 0.0);
        for (double v : g.weight_grad.values) CHECK(v == 0.0);
    }

    SUBCASE("1x1 kernel weight grad is the input-upstream dot") {
        ConvSpec s1;
        s1.out_channels = 1;
        auto x1 = random_tensor(1, 1, 4, 4, 13);
        auto w1 = random_tensor(1, 1, 1, 1, 14);
        auto up = random_tensor(1, 1, 4, 4, 15);
        auto g = nn::conv2d_backward(x1, w1, s1, up);
        CHECK(g.weight_grad.values[0] == doctest::Approx(dot(x1, up)).epsilon(1e-12));
    }

    SUBCASE("finite differences agree") {
        auto up = random_tensor(1, 2, 4, 4, 16);
        auto g = nn::conv2d_backward(x, w, s, up);
        // loss = <up, conv(x, w)>
        auto loss = [&]() { return dot(up, nn::conv2d(x, w, s)); };
        auto rep_x = nn::grad_check(loss, x.values, g.input_grad.values, 1e-5, 60, 1);
        auto rep_w = nn::grad_check(loss, w.values, g.weight_grad.values, 1e-5, 60, 2);
        CHECK(rep_x.max_rel_error <= 1e-4);
        CHECK(rep_w.max_rel_error <= 1e-4);
    }
}

TEST_CASE("deconv sizes and the scatter oracle") {
    CHECK(nn::deconv_out_dim(32, 4, 2) == 66);
    CHECK(nn::deconv_out_dim(7, 3, 2) == 15);

    auto x = random_tensor(2, 2, 5, 6, 21);
    auto w = random_tensor(2, 3, 4, 4, 22);
    ConvSpec s;
    s.transposed = true;
    s.out_channels = 3;
    s.kernel_h = s.kernel_w = 4;
    s.stride = 2;
    auto mine = nn::deconv2d(x, w, s);
    auto want = deconv2d_oracle(x, w, s);
    REQUIRE(mine.same_shape(want));
    CHECK(mine.values == want.values);  // bit-exact

    // 1x1 identity kernel at stride 1
    auto x1 = random_tensor(1, 1, 4, 4, 23);
    Tensor4 w1(1, 1, 1, 1);
    w1.values[0] = 1.0;
    ConvSpec s1;
    s1.transposed = true;
    s1.kernel_h = s1.kernel_w = 1;
    auto y1 = nn::deconv2d(x1, w1, s1);
    CHECK(y1.values == x1.values);
}

TEST_CASE("transposed convolution is the adjoint of strided convolution") {
    std::uint64_t seed = 300;
    for (int trial = 0; trial < 8; ++trial) {
        std::mt19937_64 rng(seed + static_cast<std::uint64_t>(trial));
        const std::size_t k = 2 + rng() % 3;
        const std::size_t stride = 1 + rng() % 2;
        const std::size_t hy = 3 + rng() % 4, wy = 3 + rng() % 4;
        const std::size_t cin = 1 + rng() % 2, cout = 1 + rng() % 2;
        const std::size_t hx = (hy - 1) * stride + k;
        const std::size_t wx = (wy - 1) * stride + k;

        auto x = random_tensor(1, cin, hx, wx, seed + 50 + trial);
        auto y = random_tensor(1, cout, hy, wy, seed + 80 + trial);
        auto w = random_tensor(cout, cin, k, k, seed + 110 + trial);

        ConvSpec conv_spec;
        conv_spec.out_channels = cout;
        conv_spec.kernel_h = conv_spec.kernel_w = k;
        conv_spec.stride = stride;

        // deconv uses weights indexed (in=cout_of_conv, out=cin_of_conv)
        ConvSpec deconv_spec;
        deconv_spec.transposed = true;
        deconv_spec.out_channels = cin;
        deconv_spec.kernel_h = deconv_spec.kernel_w = k;
        deconv_spec.stride = stride;

        const double lhs = dot(y, nn::conv2d(x, w, conv_spec));
        const double rhs = dot(nn::deconv2d(y, w, deconv_spec), x);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("deconv2d_backward passes finite differences") {
    auto x = random_tensor(1, 2, 4, 4, 31);
    auto w = random_tensor(2, 2, 3, 3, 32);
    ConvSpec s;
    s.transposed = true;
    s.out_channels = 2;
    s.kernel_h = s.kernel_w = 3;
    s.stride = 2;
    auto up = random_tensor(1, 2, 9, 9, 33);
    auto g = nn::deconv2d_backward(x, w, s, up);
    auto loss = [&]() { return dot(up, nn::deconv2d(x, w, s)); };
    auto rep_x = nn::grad_check(loss, x.values, g.input_grad.values, 1e-5, 60, 3);
    auto rep_w = nn::grad_check(loss, w.values, g.weight_grad.values, 1e-5, 60, 4);
    CHECK(rep_x.max_rel_error <= 1e-4);
    CHECK(rep_w.max_rel_error <= 1e-4);
}

TEST_CASE("center_crop geometry") {
    auto x = random_tensor(1, 1, 66, 66, 41);
    auto y = nn::center_crop(x, 64, 64);
    CHECK(y.h == 64);
    CHECK(y.at(0, 0, 0, 0) == x.at(0, 0, 1, 1));

    auto same = nn::center_crop(x, 66, 66);
    CHECK(same.values == x.values);

    // odd margin removes the extra row from the high side
    auto five = random_tensor(1, 1, 5, 5, 42);
    auto four = nn::center_crop(five, 4, 4);
    CHECK(four.at(0, 0, 0, 0) == five.at(0, 0, 0, 0));
    CHECK(four.at(0, 0, 3, 3) == five.at(0, 0, 3, 3));

    CHECK_THROWS_AS(nn::center_crop(five, 6, 6), ValidationError);
}

TEST_CASE("batchnorm statistics, guards and backward") {
    SUBCASE("constant channel maps to beta") {
        Tensor4 x(4, 1, 2, 2, 5.0);
        nn::BatchNormState st(1);
        st.beta[0] = 0.25;
        auto y = nn::batchnorm(x, st, true);
        for (double v : y.values) CHECK(v == doctest::Approx(0.25));
    }
    SUBCASE("two-value batch stays put") {
        Tensor4 x(2, 1, 1, 1);
        x.values = {-1.0, 1.0};
        nn::BatchNormState st(1);
        auto y = nn::batchnorm(x, st, true);
        CHECK(y.values[0] == doctest::Approx(-1.0).epsilon(1e-4));
        CHECK(y.values[1] == doctest::Approx(1.0).epsilon(1e-4));
    }
    SUBCASE("normalized moments") {
        auto x = random_tensor(8, 3, 4, 4, 51);
        for (double& v : x.values) v *= 40.0;  // keep eps/var below the tolerance
        nn::BatchNormState st(3);
        auto y = nn::batchnorm(x, st, true);
        const double m = 8 * 4 * 4;
        for (std::size_t c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (std::size_t b = 0; b < 8; ++b)
                for (std::size_t i = 0; i < 4; ++i)
                    for (std::size_t j = 0; j < 4; ++j) mean += y.at(b, c, i, j);
            mean /= m;
            double var = 0.0;
            for (std::size_t b = 0; b < 8; ++b)
                for (std::size_t i = 0; i < 4; ++i)
                    for (std::size_t j = 0; j < 4; ++j)
                        var += (y.at(b, c, i, j) - mean) * (y.at(b, c, i, j) - mean);
            var /= m;
            CHECK(std::abs(mean) < 1e-10);
            CHECK(std::abs(var - 1.0) < 1e-6);
        }
    }
    SUBCASE("m < 2 rejected in training") {
        Tensor4 x(1, 2, 1, 1, 0.0);
        nn::BatchNormState st(2);
        CHECK_THROWS_AS(nn::batchnorm(x, st, true), ValidationError);
        CHECK_NOTHROW(nn::batchnorm(x, st, false));
    }
    SUBCASE("backward matches finite differences") {
        auto x = random_tensor(3, 2, 3, 3, 52);
        auto up = random_tensor(3, 2, 3, 3, 53);
        nn::BatchNormState st(2);
        st.gamma = {1.3, 0.8};
        st.beta = {0.1, -0.2};
        nn::BatchNormCache cache;
        nn::batchnorm(x, st, true, &cache);
        auto g = nn::batchnorm_backward(up, cache, st);
        auto loss = [&]() {
            nn::BatchNormState fresh(2);
            fresh.gamma = st.gamma;
            fresh.beta = st.beta;
            return dot(up, nn::batchnorm(x, fresh, true));
        };
        auto rep = nn::grad_check(loss, x.values, g.input_grad.values, 1e-5, 60, 5);
        CHECK(rep.max_rel_error <= 1e-4);
    }
}

TEST_CASE("relu forward and masked backward") {
    Tensor4 x(1, 1, 1, 3);
    x.values = {-1.0, 0.0, 2.0};
    auto y = nn::relu(x);
    CHECK(y.values == std::vector<double>{0.0, 0.0, 2.0});

    Tensor4 all_neg(1, 1, 2, 2, -3.0);
    for (double v : nn::relu(all_neg).values) CHECK(v == 0.0);

    auto xr = random_tensor(1, 1, 4, 4, 61);
    for (double& v : xr.values)
        if (std::abs(v) < 1e-3) v = 0.5;  // keep clear of the kink
    auto up = random_tensor(1, 1, 4, 4, 62);
    auto g = nn::relu_backward(up, xr);
    auto loss = [&]() { return dot(up, nn::relu(xr)); };
    auto rep = nn::grad_check(loss, xr.values, g.values, 1e-5, 16, 6);
    CHECK(rep.max_rel_error <= 1e-4);
}

TEST_CASE("maxpool rows, ties and gradient") {
    Tensor4 x(1, 1, 1, 4);
    x.values = {1.0, 3.0, 2.0, 0.0};
    auto y = nn::maxpool2(x, 1, 2, 1, 2);
    CHECK(y.values == std::vector<double>{3.0, 2.0});

    Tensor4 c(1, 1, 4, 4, 7.0);
    for (double v : nn::maxpool(c, 2, 2).values) CHECK(v == 7.0);

    // tie routes to the first index in scan order
    Tensor4 tie(1, 1, 2, 2, 1.0);
    Tensor4 up(1, 1, 1, 1);
    up.values = {5.0};
    auto g = nn::maxpool_backward(up, tie, 2, 2);
    CHECK(g.values == std::vector<double>{5.0, 0.0, 0.0, 0.0});

    auto xr = random_tensor(1, 2, 6, 6, 71);
    auto upr = random_tensor(1, 2, 3, 3, 72);
    auto gr = nn::maxpool_backward(upr, xr, 2, 2);
    auto loss = [&]() { return dot(upr, nn::maxpool(xr, 2, 2)); };
    auto rep = nn::grad_check(loss, xr.values, gr.values, 1e-6, 60, 7);
    CHECK(rep.max_rel_error <= 1e-4);
}

TEST_CASE("gap mean and uniform backward") {
    Tensor4 ones(2, 3, 4, 5, 1.0);
    auto y = nn::gap(ones);
    for (double v : y.values) CHECK(v == doctest::Approx(1.0));

    Tensor4 x(1, 1, 2, 2);
    x.values = {0.0, 2.0, 4.0, 6.0};
    CHECK(nn::gap(x).values[0] == doctest::Approx(3.0));

    auto xr = random_tensor(2, 2, 3, 3, 81);
    auto up = random_tensor(2, 2, 1, 1, 82);
    auto g = nn::gap_backward(up, 3, 3);
    auto loss = [&]() { return dot(up, nn::gap(xr)); };
    auto rep = nn::grad_check(loss, xr.values, g.values, 1e-5, 36, 8);
    CHECK(rep.max_rel_error <= 1e-4);
}

TEST_CASE("softmax cross entropy") {
    Tensor4 z(1, 3, 1, 1, 0.0);
    auto sm = nn::softmax_xent(z, {0});
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(sm.probabilities.values[i] == doctest::Approx(1.0 / 3.0));
    CHECK(sm.loss == doctest::Approx(std::log(3.0)));

    Tensor4 big(1, 2, 1, 1);
    big.values = {1000.0, 0.0};
    auto stable = nn::softmax_xent(big, {0});
    CHECK(stable.probabilities.values[0] == doctest::Approx(1.0));
    CHECK(stable.probabilities.values[1] == doctest::Approx(0.0));
    CHECK(std::isfinite(stable.loss));

    auto z2 = random_tensor(4, 5, 1, 1, 91);
    std::vector<std::uint32_t> labels = {0, 3, 2, 4};
    auto sm2 = nn::softmax_xent(z2, labels);
    double rowsum = 0.0;
    for (std::size_t i = 0; i < 5; ++i) rowsum += sm2.probabilities.at(1, i, 0, 0);
    CHECK(rowsum == doctest::Approx(1.0).epsilon(1e-12));
    auto loss = [&]() { return nn::softmax_xent(z2, labels).loss; };
    auto rep = nn::grad_check(loss, z2.values, sm2.logit_grad.values, 1e-5, 20, 9);
    CHECK(rep.max_rel_error <= 1e-4);

    CHECK_THROWS_AS(nn::softmax_xent(z2, {0, 1, 2, 9}), ValidationError);
}

TEST_CASE("adam zero-grad no-op, constant-grad limit, determinism") {
    nn::LayerState fresh(4);
    fresh.params = {1.0, -2.0, 3.0, 0.5};
    auto before = fresh.params;
    nn::adam_step(fresh, 0.1);
    CHECK(fresh.params == before);
    CHECK(fresh.step == 1);

    nn::LayerState st(1);
    st.params[0] = 0.0;
    double prev = st.params[0];
    double delta = 0.0;
    for (int t = 0; t < 5000; ++t) {
        st.grads[0] = 2.5;  // constant positive gradient
        nn::adam_step(st, 1e-3);
        delta = prev - st.params[0];
        prev = st.params[0];
    }
    CHECK(delta == doctest::Approx(1e-3).epsilon(0.02));  // lr * sign(g)

    nn::LayerState a(3), b(3);
    a.params = b.params = {0.3, -0.7, 0.9};
    for (int t = 0; t < 10; ++t) {
        a.grads = b.grads = {0.1, -0.2, 0.05};
        nn::adam_step(a, 1e-2);
        nn::adam_step(b, 1e-2);
    }
    CHECK(a.params == b.params);
    for (double g : a.grads) CHECK(g == 0.0);  // zeroed after the step
}

TEST_CASE("grad_check nails a linear function") {
    std::vector<double> x = {0.2, -0.4, 1.7, 3.0};
    const std::vector<double> w = {2.0, -1.0, 0.5, 4.0};
    auto loss = [&]() {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * x[i];
        return acc;
    };
    auto rep = nn::grad_check(loss, x, w, 1e-5, 10, 10);
    CHECK(rep.max_rel_error <= 1e-7);
    CHECK(rep.checked == 4);
}
