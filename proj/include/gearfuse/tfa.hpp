#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace gearfuse::tfa {

enum class WindowKind { gaussian, rectangular, hanning };

struct Window {
    WindowKind kind = WindowKind::gaussian;
    std::size_t length = 0;
    double gaussian_sigma = 0.3;  // relative half-width
    std::vector<double> coeffs;
};

/// Nonnegative time-frequency magnitude image. Row 0 is the lowest
/// frequency; columns advance in time. Steps are in samples (time) and
/// cycles/sample (frequency).
struct TFGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;  // row-major
    double time_step = 1.0;
    double freq_step = 1.0;

    TFGrid() = default;
    TFGrid(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), values(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    double sum() const;
    double max_value() const;
};

inline constexpr std::size_t kScheduleSections = 16;
inline constexpr int kMinWindowLength = 16;
inline constexpr int kMaxWindowLength = 127;

/// The PSO decision variable: one Gaussian window length per signal section.
struct WindowSchedule {
    std::array<int, kScheduleSections> lengths{};
};

/// Throws ValidationError when any entry falls outside [16, 127].
void validate_schedule(const WindowSchedule& schedule);

/// Complex STFT output: frames x one-sided bins.
struct StftFrames {
    std::size_t num_frames = 0;
    std::size_t num_bins = 0;  // floor(window_len/2) + 1
    std::vector<std::complex<double>> values;  // frame-major

    std::complex<double>& at(std::size_t f, std::size_t b) { return values[f * num_bins + b]; }
    std::complex<double> at(std::size_t f, std::size_t b) const { return values[f * num_bins + b]; }
};

Window make_window(WindowKind kind, std::size_t length, double gaussian_sigma = 0.3);

/// Sliding-window one-sided DFT: floor((N - L)/hop) + 1 frames.
StftFrames stft(const std::vector<double>& signal, const Window& window, std::size_t hop);

/// Elementwise complex magnitude of STFT frames (rows = bins, cols = frames).
TFGrid spectrogram(const StftFrames& frames, std::size_t hop = 1, std::size_t window_len = 2);

/// Discrete Wigner-Ville distribution magnitude. One column per sample; the
/// bilinear kernel r_t[tau] = x[t+tau] x[t-tau] over the maximal symmetric
/// lag range is zero-padded to a power of two and DFT'd over tau. A tone at
/// f0 cycles/sample peaks at bin round(f0 / freq_step) with
/// freq_step = 1 / (2 * fft_len).
TFGrid wvd(const std::vector<double>& signal);

/// Piecewise-adaptive Gabor STFT. The signal is zero-padded to 16 equal
/// sections; each section's frames use a unit-energy Gaussian window of the
/// scheduled length (windows may read samples across section borders).
/// Section grids are bin-resampled to the max bin count and concatenated
/// along time.
TFGrid astft(const std::vector<double>& signal, const WindowSchedule& schedule, std::size_t hop);

/// Bilinear (align-corners) resampling; identity when sizes match.
TFGrid resample_grid(const TFGrid& grid, std::size_t target_rows, std::size_t target_cols);

/// Min-max scale values into [0, 1]; constant grids map to all zeros.
TFGrid minmax_scale(const TFGrid& grid);

void write_grid_csv(const TFGrid& grid, std::ostream& out);
TFGrid read_grid_csv(std::istream& in);
/// 8-bit binary PGM after min-max scaling, highest frequency row on top.
void write_grid_pgm(const TFGrid& grid, std::ostream& out);

void save_grid_csv(const TFGrid& grid, const std::string& path);
void save_grid_pgm(const TFGrid& grid, const std::string& path);

}  // namespace gearfuse::tfa
