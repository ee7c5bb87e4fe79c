#pragma once

#include <cstddef>
#include <vector>

#include "gearfuse/tfa.hpp"

namespace gearfuse::dtcwt {

/// Analysis/synthesis filter tables. Level 1 is a near-symmetric 13/19-tap
/// biorthogonal pair shared by both trees (tree B takes the odd sampling
/// phase); levels >= 2 use a 14-tap q-shift orthonormal filter, tree B being
/// the time-reverse of tree A.
struct FilterBank {
    std::vector<double> h0o, h1o;  // level-1 analysis low/high
    std::vector<double> g0o, g1o;  // level-1 synthesis low/high
    std::vector<double> h0a, h1a;  // q-shift analysis, tree A
    std::vector<double> h0b, h1b;  // q-shift analysis, tree B
};

const FilterBank& default_filter_bank();

/// Per-level coefficient arrays of both trees. The transform runs on a
/// symmetric-padded copy of the signal; full padded arrays are kept so the
/// inverse is exact, while detail()/approx() crop to the original extent.
struct DtcwtCoeffs {
    std::vector<std::vector<double>> detail_a;  // [level-1][k], padded extent
    std::vector<std::vector<double>> detail_b;
    std::vector<double> approx_a;
    std::vector<double> approx_b;
    std::size_t original_length = 0;
    std::size_t padded_length = 0;
    std::size_t pad_left = 0;

    std::size_t levels() const { return detail_a.size(); }
    /// ceil(original_length / 2^level) entries, level in [1, levels].
    std::size_t detail_length(std::size_t level) const;
    /// Cropped complex detail of one level: out[k] = (W_A, W_B).
    void detail(std::size_t level, std::vector<double>& wa, std::vector<double>& wb) const;
    void approx(std::vector<double>& a, std::vector<double>& b) const;

    void scale(double factor);
};

struct MagnitudePhase {
    std::vector<std::vector<double>> magnitude;  // per detail level
    std::vector<std::vector<double>> phase;      // atan2(W_B, W_A), (-pi, pi]
};

DtcwtCoeffs forward(const std::vector<double>& signal, std::size_t levels);

MagnitudePhase magnitude_phase(const DtcwtCoeffs& coeffs);

std::vector<double> inverse(const DtcwtCoeffs& coeffs);

/// Levels+1 rows (approximation magnitude at the bottom, level-1 detail on
/// top), nearest-neighbor upsampled to the original time axis, then bilinear
/// resampled to the target size.
tfa::TFGrid scalogram(const DtcwtCoeffs& coeffs, std::size_t target_rows,
                      std::size_t target_cols);

}  // namespace gearfuse::dtcwt
