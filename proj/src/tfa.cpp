#include "gearfuse/tfa.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "gearfuse/common.hpp"
#include "gearfuse/fft.hpp"

namespace gearfuse::tfa {

double TFGrid::sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

double TFGrid::max_value() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, v);
    return m;
}

void validate_schedule(const WindowSchedule& schedule) {
    for (int len : schedule.lengths) {
        if (len < kMinWindowLength || len > kMaxWindowLength)
            throw ValidationError("window schedule entry " + std::to_string(len) +
                                  " outside [" + std::to_string(kMinWindowLength) + ", " +
                                  std::to_string(kMaxWindowLength) + "]");
    }
}

Window make_window(WindowKind kind, std::size_t length, double gaussian_sigma) {
    if (length < 2) throw ValidationError("window length must be >= 2");
    Window w;
    w.kind = kind;
    w.length = length;
    w.gaussian_sigma = gaussian_sigma;
    w.coeffs.resize(length);
    const double center = (static_cast<double>(length) - 1.0) / 2.0;
    switch (kind) {
        case WindowKind::rectangular:
            std::fill(w.coeffs.begin(), w.coeffs.end(), 1.0);
            break;
        case WindowKind::hanning:
            for (std::size_t n = 0; n < length; ++n)
                w.coeffs[n] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                                    (static_cast<double>(length) - 1.0)));
            break;
        case WindowKind::gaussian:
            for (std::size_t n = 0; n < length; ++n) {
                const double u = (static_cast<double>(n) - center) / (gaussian_sigma * center);
                w.coeffs[n] = std::exp(-0.5 * u * u);
            }
            break;
    }
    return w;
}

StftFrames stft(const std::vector<double>& signal, const Window& window, std::size_t hop) {
    if (signal.empty()) throw ValidationError("stft: empty signal");
    if (hop == 0) throw ValidationError("stft: hop must be >= 1");
    const std::size_t n = signal.size();
    const std::size_t len = window.length;
    if (len > n) throw ValidationError("stft: window longer than signal");

    StftFrames out;
    out.num_frames = (n - len) / hop + 1;
    out.num_bins = len / 2 + 1;
    out.values.resize(out.num_frames * out.num_bins);

    std::vector<double> slice(len);
    for (std::size_t f = 0; f < out.num_frames; ++f) {
        const std::size_t start = f * hop;
        for (std::size_t i = 0; i < len; ++i) slice[i] = window.coeffs[i] * signal[start + i];
        for (std::size_t b = 0; b < out.num_bins; ++b) {
            std::complex<double> acc(0.0, 0.0);
            const double w0 = -2.0 * std::numbers::pi * static_cast<double>(b) / static_cast<double>(len);
            for (std::size_t i = 0; i < len; ++i)
                acc += slice[i] * std::complex<double>(std::cos(w0 * static_cast<double>(i)),
                                                       std::sin(w0 * static_cast<double>(i)));
            out.at(f, b) = acc;
        }
    }
    return out;
}

TFGrid spectrogram(const StftFrames& frames, std::size_t hop, std::size_t window_len) {
    if (frames.num_frames == 0 || frames.num_bins == 0)
        throw ValidationError("spectrogram: empty frames");
    TFGrid grid(frames.num_bins, frames.num_frames);
    grid.time_step = static_cast<double>(hop);
    grid.freq_step = 1.0 / static_cast<double>(window_len);
    for (std::size_t b = 0; b < frames.num_bins; ++b)
        for (std::size_t f = 0; f < frames.num_frames; ++f)
            grid.at(b, f) = std::abs(frames.at(f, b));
    return grid;
}

TFGrid wvd(const std::vector<double>& signal) {
    const std::size_t n = signal.size();
    if (n < 4) throw ValidationError("wvd: signal length must be >= 4");
    const std::size_t m = next_pow2(2 * n);
    const std::size_t bins = m / 2 + 1;

    TFGrid grid(bins, n);
    grid.time_step = 1.0;
    grid.freq_step = 1.0 / (2.0 * static_cast<double>(m));  // tau step is 2 samples of t

    parallel_for(n, [&](std::size_t t) {
        std::vector<std::complex<double>> buf(m, {0.0, 0.0});
        const std::size_t lag_max = std::min(t, n - 1 - t);
        for (std::size_t tau = 0; tau <= lag_max; ++tau) {
            const double r = signal[t + tau] * signal[t - tau];
            buf[tau] = {r, 0.0};
            if (tau > 0) buf[m - tau] = {r, 0.0};
        }
        fft_pow2(buf);
        for (std::size_t b = 0; b < bins; ++b) grid.at(b, t) = std::abs(buf[b]);
    });
    return grid;
}

TFGrid astft(const std::vector<double>& signal, const WindowSchedule& schedule, std::size_t hop) {
    if (signal.empty()) throw ValidationError("astft: empty signal");
    if (hop == 0) throw ValidationError("astft: hop must be >= 1");
    validate_schedule(schedule);

    const std::size_t n = signal.size();
    const std::size_t sec = (n + kScheduleSections - 1) / kScheduleSections;
    const std::size_t n_pad = sec * kScheduleSections;
    std::vector<double> padded(signal);
    padded.resize(n_pad, 0.0);

    struct SectionGrid {
        TFGrid grid;
        bool has_frames = false;
    };
    std::array<SectionGrid, kScheduleSections> sections;
    std::size_t max_bins = 0;

    for (std::size_t i = 0; i < kScheduleSections; ++i) {
        const std::size_t len = static_cast<std::size_t>(schedule.lengths[i]);
        max_bins = std::max(max_bins, len / 2 + 1);

        Window w = make_window(WindowKind::gaussian, len);
        double energy = 0.0;
        for (double c : w.coeffs) energy += c * c;
        const double scale = 1.0 / std::sqrt(energy);
        for (double& c : w.coeffs) c *= scale;

        // Frame starts inside this section; windows read across the border
        // but never past the padded end. The final section can come up
        // empty when its window exceeds the remaining samples.
        std::vector<std::size_t> starts;
        for (std::size_t p = i * sec; p < (i + 1) * sec; p += hop)
            if (p + len <= n_pad) starts.push_back(p);
        if (starts.empty()) continue;

        const std::size_t bins = len / 2 + 1;
        TFGrid g(bins, starts.size());
        g.time_step = static_cast<double>(hop);
        g.freq_step = 1.0 / static_cast<double>(len);
        for (std::size_t f = 0; f < starts.size(); ++f) {
            for (std::size_t b = 0; b < bins; ++b) {
                std::complex<double> acc(0.0, 0.0);
                const double w0 = -2.0 * std::numbers::pi * static_cast<double>(b) / static_cast<double>(len);
                for (std::size_t k = 0; k < len; ++k)
                    acc += w.coeffs[k] * padded[starts[f] + k] *
                           std::complex<double>(std::cos(w0 * static_cast<double>(k)),
                                                std::sin(w0 * static_cast<double>(k)));
                g.at(b, f) = std::abs(acc);
            }
        }
        sections[i] = {std::move(g), true};
    }

    // Bin unification replicates rows (nearest source bin) rather than
    // interpolating: replication scales per-section energy by the bin ratio
    // for any spectral shape, keeping the time-marginal energy comparable
    // across schedules.
    auto expand_rows = [](const TFGrid& g, std::size_t target_rows) {
        TFGrid out(target_rows, g.cols);
        out.time_step = g.time_step;
        out.freq_step = g.freq_step * static_cast<double>(g.rows - 1) /
                        static_cast<double>(target_rows - 1);
        for (std::size_t r = 0; r < target_rows; ++r) {
            const std::size_t src = static_cast<std::size_t>(
                std::lround(static_cast<double>(r) * static_cast<double>(g.rows - 1) /
                            static_cast<double>(target_rows - 1)));
            for (std::size_t c = 0; c < g.cols; ++c) out.at(r, c) = g.at(src, c);
        }
        return out;
    };
    std::size_t total_cols = 0;
    for (auto& s : sections)
        if (s.has_frames) {
            if (s.grid.rows != max_bins) s.grid = expand_rows(s.grid, max_bins);
            total_cols += s.grid.cols;
        }
    if (total_cols == 0) throw ValidationError("astft: no section produced frames");

    TFGrid out(max_bins, total_cols);
    out.time_step = static_cast<double>(hop);
    out.freq_step = 0.5 / static_cast<double>(max_bins - 1);
    std::size_t col = 0;
    for (const auto& s : sections) {
        if (!s.has_frames) continue;
        for (std::size_t c = 0; c < s.grid.cols; ++c, ++col)
            for (std::size_t r = 0; r < max_bins; ++r) out.at(r, col) = s.grid.at(r, c);
    }
    return out;
}

TFGrid resample_grid(const TFGrid& grid, std::size_t target_rows, std::size_t target_cols) {
    if (grid.rows == 0 || grid.cols == 0) throw ValidationError("resample_grid: empty grid");
    if (target_rows == 0 || target_cols == 0)
        throw ValidationError("resample_grid: target dims must be >= 1");
    if (target_rows == grid.rows && target_cols == grid.cols) return grid;

    TFGrid out(target_rows, target_cols);
    out.time_step = grid.time_step * (target_cols > 1 ? static_cast<double>(grid.cols - 1) /
                                                            static_cast<double>(target_cols - 1)
                                                      : static_cast<double>(grid.cols));
    out.freq_step = grid.freq_step * (target_rows > 1 ? static_cast<double>(grid.rows - 1) /
                                                            static_cast<double>(target_rows - 1)
                                                      : static_cast<double>(grid.rows));
    auto src_coord = [](std::size_t tgt, std::size_t tgt_n, std::size_t src_n) {
        if (tgt_n == 1) return (static_cast<double>(src_n) - 1.0) / 2.0;
        return static_cast<double>(tgt) * (static_cast<double>(src_n) - 1.0) /
               (static_cast<double>(tgt_n) - 1.0);
    };
    for (std::size_t r = 0; r < target_rows; ++r) {
        const double sr = src_coord(r, target_rows, grid.rows);
        const std::size_t r0 = static_cast<std::size_t>(sr);
        const std::size_t r1 = std::min(r0 + 1, grid.rows - 1);
        const double fr = sr - static_cast<double>(r0);
        for (std::size_t c = 0; c < target_cols; ++c) {
            const double sc = src_coord(c, target_cols, grid.cols);
            const std::size_t c0 = static_cast<std::size_t>(sc);
            const std::size_t c1 = std::min(c0 + 1, grid.cols - 1);
            const double fc = sc - static_cast<double>(c0);
            out.at(r, c) = (1.0 - fr) * ((1.0 - fc) * grid.at(r0, c0) + fc * grid.at(r0, c1)) +
                           fr * ((1.0 - fc) * grid.at(r1, c0) + fc * grid.at(r1, c1));
        }
    }
    return out;
}

TFGrid minmax_scale(const TFGrid& grid) {
    TFGrid out = grid;
    double lo = grid.values.empty() ? 0.0 : grid.values[0];
    double hi = lo;
    for (double v : grid.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    if (span <= 0.0) {
        std::fill(out.values.begin(), out.values.end(), 0.0);
        return out;
    }
    for (double& v : out.values) v = (v - lo) / span;
    return out;
}

void write_grid_csv(const TFGrid& grid, std::ostream& out) {
    out << "rows,cols,time_step,freq_step\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g\n", grid.rows, grid.cols, grid.time_step,
                  grid.freq_step);
    out << buf;
    for (std::size_t r = 0; r < grid.rows; ++r) {
        for (std::size_t c = 0; c < grid.cols; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", grid.at(r, c));
            out << buf << (c + 1 < grid.cols ? "," : "\n");
        }
    }
}

TFGrid read_grid_csv(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw IoError("grid csv: missing header");
    std::string dims;
    if (!std::getline(in, dims)) throw IoError("grid csv: missing dims row");
    TFGrid grid;
    {
        std::istringstream ss(dims);
        char comma;
        if (!(ss >> grid.rows >> comma >> grid.cols >> comma >> grid.time_step >> comma >>
              grid.freq_step))
            throw IoError("grid csv: malformed dims row");
    }
    grid.values.resize(grid.rows * grid.cols);
    std::string line;
    for (std::size_t r = 0; r < grid.rows; ++r) {
        if (!std::getline(in, line)) throw IoError("grid csv: unexpected end");
        std::istringstream ss(line);
        std::string cell;
        for (std::size_t c = 0; c < grid.cols; ++c) {
            if (!std::getline(ss, cell, ',')) throw IoError("grid csv: short row");
            grid.at(r, c) = std::stod(cell);
        }
    }
    return grid;
}

void write_grid_pgm(const TFGrid& grid, std::ostream& out) {
    TFGrid scaled = minmax_scale(grid);
    out << "P5\n" << grid.cols << " " << grid.rows << "\n255\n";
    // highest frequency on top
    for (std::size_t r = grid.rows; r-- > 0;) {
        for (std::size_t c = 0; c < grid.cols; ++c) {
            const unsigned char byte =
                static_cast<unsigned char>(std::lround(scaled.at(r, c) * 255.0));
            out.put(static_cast<char>(byte));
        }
    }
}

void save_grid_csv(const TFGrid& grid, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    write_grid_csv(grid, f);
    if (!f) throw IoError("write failed: " + path);
}

void save_grid_pgm(const TFGrid& grid, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    write_grid_pgm(grid, f);
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace gearfuse::tfa
