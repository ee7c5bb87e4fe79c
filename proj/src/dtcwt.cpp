#include "gearfuse/dtcwt.hpp"

#include <algorithm>
#include <cmath>

#include "gearfuse/common.hpp"

namespace gearfuse::dtcwt {

namespace {

// Kingsbury near-symmetric (13,19)-tap level-1 pair and 14-tap q-shift
// filter, scaled so each tree is approximately energy-preserving and
// refined so the perfect-reconstruction identities hold to machine
// precision (halfband product of the level-1 pair, orthonormality of the
// q-shift filter).
const std::vector<double> kH0O = {
    -0.00248592227760896, 0.0, 0.03148834884971344, -0.06629126073623884,
    -0.0682247558410458, 0.4198446513295126, 0.7855514397244301,
    0.4198446513295126, -0.0682247558410458, -0.06629126073623884,
    0.03148834884971344, 0.0, -0.00248592227760896};

const std::vector<double> kH1O = {
    -9.9880607657548234e-05, 0.0, 1.8977328390705024e-03,
    -2.6634828708679524e-03, -1.0121250001030887e-02, 3.3737484193049699e-02,
    7.8691215969423800e-02, -7.3097991653672700e-02, -4.2392127615932940e-01,
    7.9115462711703011e-01, -4.2392127615932940e-01, -7.3097991653672700e-02,
    7.8691215969423800e-02, 3.3737484193049699e-02, -1.0121250001030887e-02,
    -2.6634828708679524e-03, 1.8977328390705024e-03, 0.0,
    -9.9880607657548234e-05};

const std::vector<double> kG0O = {
    9.9880607657548234e-05, 0.0, -1.8977328390705024e-03,
    -2.6634828708679524e-03, 1.0121250001030887e-02, 3.3737484193049699e-02,
    -7.8691215969423800e-02, -7.3097991653672700e-02, 4.2392127615932940e-01,
    7.9115462711703011e-01, 4.2392127615932940e-01, -7.3097991653672700e-02,
    -7.8691215969423800e-02, 3.3737484193049699e-02, 1.0121250001030887e-02,
    -2.6634828708679524e-03, -1.8977328390705024e-03, 0.0,
    9.9880607657548234e-05};

const std::vector<double> kG1O = {
    -0.00248592227760896, 0.0, 0.03148834884971344, 0.06629126073623884,
    -0.0682247558410458, -0.4198446513295126, 0.7855514397244301,
    -0.4198446513295126, -0.0682247558410458, 0.06629126073623884,
    0.03148834884971344, 0.0, -0.00248592227760896};

const std::vector<double> kH0A = {
    0.00325314245576894, -0.00388321126335406, 0.03466035044620233,
    -0.0388728001236865, -0.11720388955436745, 0.27529538202170556,
    0.7561456436302877, 0.56881042301184, 0.01186609130629611,
    -0.10671179998605741, 0.02382538074443934, 0.01702522019851844,
    -0.00543947513023566, -0.004556895384565};

// anchor (alignment) constants: filter tap c lands on the output sample
constexpr std::size_t kAnchorH0O = 6;
constexpr std::size_t kAnchorH1O = 9;
constexpr std::size_t kAnchorG0O = 9;
constexpr std::size_t kAnchorG1O = 6;
constexpr std::size_t kAnchorQ = 7;

FilterBank build_default_bank() {
    FilterBank fb;
    fb.h0o = kH0O;
    fb.h1o = kH1O;
    fb.g0o = kG0O;
    fb.g1o = kG1O;
    fb.h0a = kH0A;
    fb.h0b.assign(kH0A.rbegin(), kH0A.rend());
    fb.h1a.resize(kH0A.size());
    for (std::size_t n = 0; n < kH0A.size(); ++n) {
        const double sign = (n % 2 == 0) ? 1.0 : -1.0;
        fb.h1a[n] = sign * kH0A[kH0A.size() - 1 - n];
    }
    fb.h1b.assign(fb.h1a.rbegin(), fb.h1a.rend());
    return fb;
}

/// Decimated circular correlation: out[k] = sum_n h[n] x[(2k+phase+n-c) mod M].
std::vector<double> analyze_level(const std::vector<double>& x, const std::vector<double>& h,
                                  std::size_t c, std::size_t phase) {
    const std::size_t m = x.size();
    std::vector<double> out(m / 2, 0.0);
    for (std::size_t k = 0; k < m / 2; ++k) {
        double acc = 0.0;
        for (std::size_t n = 0; n < h.size(); ++n) {
            const std::size_t idx = (2 * k + phase + n + 4 * m - c) % m;
            acc += h[n] * x[idx];
        }
        out[k] = acc;
    }
    return out;
}

/// Adjoint of analyze_level for two subbands (upsample + scatter).
std::vector<double> synth_level(const std::vector<double>& lo, const std::vector<double>& hi,
                                const std::vector<double>& g0, const std::vector<double>& g1,
                                std::size_t c0, std::size_t c1, std::size_t m,
                                std::size_t phase) {
    std::vector<double> x(m, 0.0);
    for (std::size_t k = 0; k < lo.size(); ++k) {
        for (std::size_t n = 0; n < g0.size(); ++n)
            x[(2 * k + phase + n + 4 * m - c0) % m] += lo[k] * g0[n];
        for (std::size_t n = 0; n < g1.size(); ++n)
            x[(2 * k + phase + n + 4 * m - c1) % m] += hi[k] * g1[n];
    }
    return x;
}

std::size_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
    // half-sample symmetric reflection: ... x1 x0 | x0 x1 ... xn-1 | xn-1 ...
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return static_cast<std::size_t>(i);
}

}  // namespace

const FilterBank& default_filter_bank() {
    static const FilterBank fb = build_default_bank();
    return fb;
}

std::size_t DtcwtCoeffs::detail_length(std::size_t level) const {
    const std::size_t div = std::size_t{1} << level;
    return (original_length + div - 1) / div;
}

void DtcwtCoeffs::detail(std::size_t level, std::vector<double>& wa,
                         std::vector<double>& wb) const {
    if (level < 1 || level > levels()) throw ValidationError("dtcwt: bad detail level");
    const std::size_t offset = pad_left >> level;
    const std::size_t len = detail_length(level);
    const auto& a = detail_a[level - 1];
    const auto& b = detail_b[level - 1];
    wa.assign(a.begin() + static_cast<std::ptrdiff_t>(offset),
              a.begin() + static_cast<std::ptrdiff_t>(offset + len));
    wb.assign(b.begin() + static_cast<std::ptrdiff_t>(offset),
              b.begin() + static_cast<std::ptrdiff_t>(offset + len));
}

void DtcwtCoeffs::approx(std::vector<double>& a, std::vector<double>& b) const {
    const std::size_t level = levels();
    const std::size_t offset = pad_left >> level;
    const std::size_t len = detail_length(level);
    a.assign(approx_a.begin() + static_cast<std::ptrdiff_t>(offset),
             approx_a.begin() + static_cast<std::ptrdiff_t>(offset + len));
    b.assign(approx_b.begin() + static_cast<std::ptrdiff_t>(offset),
             approx_b.begin() + static_cast<std::ptrdiff_t>(offset + len));
}

void DtcwtCoeffs::scale(double factor) {
    for (auto* levels_vec : {&detail_a, &detail_b})
        for (auto& level : *levels_vec)
            for (double& v : level) v *= factor;
    for (auto* a : {&approx_a, &approx_b})
        for (double& v : *a) v *= factor;
}

DtcwtCoeffs forward(const std::vector<double>& signal, std::size_t levels) {
    if (levels < 1) throw ValidationError("dtcwt: levels must be >= 1");
    if (signal.empty()) throw ValidationError("dtcwt: empty signal");
    const std::size_t n = signal.size();

    // pad to a multiple of 2^levels, keeping the deepest stage long enough
    // for the 19-tap filter to wrap without self-overlap
    const std::size_t block = std::size_t{1} << levels;
    const std::size_t min_padded = 32u << (levels - 1);
    std::size_t padded = ((n + block - 1) / block) * block;
    padded = std::max(padded, min_padded);
    if (padded > 8 * std::max<std::size_t>(n, 1))
        throw ValidationError("dtcwt: too many levels for signal length");

    const std::size_t pad_total = padded - n;
    const std::size_t pad_left = pad_total / 2;
    std::vector<double> x(padded);
    for (std::size_t i = 0; i < padded; ++i)
        x[i] = signal[reflect_index(static_cast<std::ptrdiff_t>(i) -
                                        static_cast<std::ptrdiff_t>(pad_left),
                                    static_cast<std::ptrdiff_t>(n))];

    const FilterBank& fb = default_filter_bank();
    DtcwtCoeffs out;
    out.original_length = n;
    out.padded_length = padded;
    out.pad_left = pad_left;
    out.detail_a.resize(levels);
    out.detail_b.resize(levels);

    for (int tree = 0; tree < 2; ++tree) {
        const std::size_t phase1 = static_cast<std::size_t>(tree);
        const auto& h0q = tree == 0 ? fb.h0a : fb.h0b;
        const auto& h1q = tree == 0 ? fb.h1a : fb.h1b;
        std::vector<double> lo = x;
        for (std::size_t s = 0; s < levels; ++s) {
            std::vector<double> d;
            if (s == 0) {
                d = analyze_level(lo, fb.h1o, kAnchorH1O, phase1);
                lo = analyze_level(lo, fb.h0o, kAnchorH0O, phase1);
            } else {
                d = analyze_level(lo, h1q, kAnchorQ, 0);
                lo = analyze_level(lo, h0q, kAnchorQ, 0);
            }
            (tree == 0 ? out.detail_a : out.detail_b)[s] = std::move(d);
        }
        (tree == 0 ? out.approx_a : out.approx_b) = std::move(lo);
    }
    return out;
}

MagnitudePhase magnitude_phase(const DtcwtCoeffs& coeffs) {
    MagnitudePhase mp;
    mp.magnitude.resize(coeffs.levels());
    mp.phase.resize(coeffs.levels());
    std::vector<double> wa, wb;
    for (std::size_t level = 1; level <= coeffs.levels(); ++level) {
        coeffs.detail(level, wa, wb);
        auto& mag = mp.magnitude[level - 1];
        auto& ph = mp.phase[level - 1];
        mag.resize(wa.size());
        ph.resize(wa.size());
        for (std::size_t k = 0; k < wa.size(); ++k) {
            mag[k] = std::hypot(wa[k], wb[k]);
            ph[k] = mag[k] == 0.0 ? 0.0 : std::atan2(wb[k], wa[k]);
        }
    }
    return mp;
}

std::vector<double> inverse(const DtcwtCoeffs& coeffs) {
    const std::size_t levels = coeffs.levels();
    if (levels == 0) throw ValidationError("dtcwt: no levels");
    const std::size_t padded = coeffs.padded_length;
    for (std::size_t s = 0; s < levels; ++s) {
        const std::size_t want = padded >> (s + 1);
        if (coeffs.detail_a[s].size() != want || coeffs.detail_b[s].size() != want)
            throw ValidationError("dtcwt: malformed detail length at level " +
                                  std::to_string(s + 1));
    }
    if (coeffs.approx_a.size() != padded >> levels || coeffs.approx_b.size() != padded >> levels)
        throw ValidationError("dtcwt: malformed approximation length");

    const FilterBank& fb = default_filter_bank();
    std::vector<double> sum(padded, 0.0);
    for (int tree = 0; tree < 2; ++tree) {
        const std::size_t phase1 = static_cast<std::size_t>(tree);
        const auto& h0q = tree == 0 ? fb.h0a : fb.h0b;
        const auto& h1q = tree == 0 ? fb.h1a : fb.h1b;
        std::vector<double> lo = tree == 0 ? coeffs.approx_a : coeffs.approx_b;
        for (std::size_t s = levels; s-- > 0;) {
            const auto& d = (tree == 0 ? coeffs.detail_a : coeffs.detail_b)[s];
            const std::size_t m = 2 * d.size();
            if (s == 0)
                lo = synth_level(lo, d, fb.g0o, fb.g1o, kAnchorG0O, kAnchorG1O, m, phase1);
            else
                lo = synth_level(lo, d, h0q, h1q, kAnchorQ, kAnchorQ, m, 0);
        }
        for (std::size_t i = 0; i < padded; ++i) sum[i] += 0.5 * lo[i];
    }
    return {sum.begin() + static_cast<std::ptrdiff_t>(coeffs.pad_left),
            sum.begin() + static_cast<std::ptrdiff_t>(coeffs.pad_left + coeffs.original_length)};
}

tfa::TFGrid scalogram(const DtcwtCoeffs& coeffs, std::size_t target_rows,
                      std::size_t target_cols) {
    const std::size_t levels = coeffs.levels();
    const std::size_t n = coeffs.original_length;
    tfa::TFGrid native(levels + 1, n);
    native.time_step = 1.0;
    native.freq_step = 1.0;

    std::vector<double> wa, wb;
    // row 0: approximation magnitude (lowest band)
    coeffs.approx(wa, wb);
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t k = std::min(t >> levels, wa.size() - 1);
        native.at(0, t) = std::hypot(wa[k], wb[k]);
    }
    // detail level s fills row levels+1-s so level 1 ends up on top
    for (std::size_t level = 1; level <= levels; ++level) {
        coeffs.detail(level, wa, wb);
        const std::size_t row = levels + 1 - level;
        for (std::size_t t = 0; t < n; ++t) {
            const std::size_t k = std::min(t >> level, wa.size() - 1);
            native.at(row, t) = std::hypot(wa[k], wb[k]);
        }
    }
    return tfa::resample_grid(native, target_rows, target_cols);
}

}  // namespace gearfuse::dtcwt
