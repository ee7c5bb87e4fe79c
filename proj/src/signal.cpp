#include "gearfuse/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include "gearfuse/common.hpp"

namespace gearfuse::signal {

namespace {

constexpr char kMagic[4] = {'G', 'F', 'D', '1'};
constexpr std::uint32_t kVersion = 1;

double two_pi() { return 2.0 * std::numbers::pi; }

/// Mix stream ids into one seed so every (sample, channel) draws an
/// independent, reproducible noise realization.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t x = seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xC2B2AE3D27D4EB4FULL);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

void validate_spec(const SyntheticFaultSpec& spec) {
    if (!(spec.mesh_freq_hz > spec.shaft_freq_hz) || !(spec.shaft_freq_hz > 0.0))
        throw ValidationError("synthetic fault spec requires mesh_freq_hz > shaft_freq_hz > 0");
}

/// Fault event rendered without measurement noise. The carrier phase offset
/// distinguishes the H/V channels.
std::vector<double> render_clean(const SyntheticFaultSpec& spec, std::size_t n, double fs,
                                 double carrier_phase, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uphase(0.0, two_pi());
    const double mesh = spec.mesh_freq_hz / fs;   // cycles per sample
    const double shaft = spec.shaft_freq_hz / fs;
    const double phi1 = uphase(rng);
    const double phi2 = uphase(rng);
    const double phi3 = uphase(rng);
    const double rev_phase = uphase(rng);

    std::vector<double> x(n, 0.0);

    // mesh fundamental plus two harmonics, common to every class
    double am = 1.0, am2 = 0.5, am3 = 0.25;
    double crack_am = 0.0, crack_pm = 0.0;
    if (spec.class_kind == FaultKind::crack) {
        crack_am = 0.85;
        crack_pm = 1.6;
    }
    if (spec.class_kind == FaultKind::broken_tooth || spec.class_kind == FaultKind::missing_tooth) {
        am2 = 0.8;  // harmonic amplitudes jump when a tooth engages badly
        am3 = 0.55;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i);
        const double env = 1.0 + crack_am * std::cos(two_pi() * shaft * t + phi3);
        const double pm = crack_pm * std::sin(two_pi() * shaft * t + phi3);
        const double base = two_pi() * mesh * t + carrier_phase + pm;
        x[i] = env * (am * std::sin(base + phi1) + am2 * std::sin(2.0 * base + phi2) +
                      am3 * std::sin(3.0 * base + phi1 + phi2));
    }

    switch (spec.class_kind) {
        case FaultKind::healthy:
        case FaultKind::crack:
            break;
        case FaultKind::broken_tooth:
        case FaultKind::missing_tooth: {
            // once-per-revolution decaying bursts -> sidebands at mesh +- shaft
            const double amp = spec.class_kind == FaultKind::missing_tooth ? 5.0 : 2.5;
            const double shaft_period = 1.0 / shaft;
            const double decay = 0.05 * shaft_period;  // ~6 ms ring-down at desk scale
            const double f_ring = std::min(4.0 * mesh, 0.45);
            const double start = rev_phase / two_pi() * shaft_period;
            for (double t0 = start; t0 < static_cast<double>(n); t0 += shaft_period) {
                const std::size_t i0 = static_cast<std::size_t>(std::ceil(t0));
                for (std::size_t i = i0; i < n; ++i) {
                    const double dt = static_cast<double>(i) - t0;
                    const double e = std::exp(-dt / decay);
                    if (e < 1e-6) break;
                    x[i] += amp * e * std::sin(two_pi() * f_ring * dt);
                }
            }
            break;
        }
        case FaultKind::wear: {
            // band-limited noise above 3x mesh frequency
            const double f_lo = std::min(3.0 * mesh, 0.4);
            const double f_hi = 0.45;
            std::uniform_real_distribution<double> ufreq(f_lo, f_hi);
            const std::size_t kComponents = 40;
            const double amp = 1.6 / std::sqrt(static_cast<double>(kComponents) / 2.0);
            for (std::size_t j = 0; j < kComponents; ++j) {
                const double fj = ufreq(rng);
                const double pj = uphase(rng);
                for (std::size_t i = 0; i < n; ++i)
                    x[i] += amp * std::sin(two_pi() * fj * static_cast<double>(i) + pj);
            }
            break;
        }
        case FaultKind::eccentric: {
            for (std::size_t i = 0; i < n; ++i)
                x[i] += 2.5 * std::sin(two_pi() * shaft * static_cast<double>(i) + phi3);
            break;
        }
    }
    return x;
}

void add_noise(std::vector<double>& x, double snr_db, std::mt19937_64& rng) {
    double power = 0.0;
    for (double v : x) power += v * v;
    power /= static_cast<double>(x.size());
    const double noise_power = power / std::pow(10.0, snr_db / 10.0);
    std::normal_distribution<double> gauss(0.0, std::sqrt(noise_power));
    for (double& v : x) v += gauss(rng);
}

TimeSeries synthesize_channel(const SyntheticFaultSpec& spec, std::size_t n, double fs,
                              Channel channel) {
    validate_spec(spec);
    if (n == 0 || fs <= 0.0) throw ValidationError("synthesize: bad duration or sample rate");
    const double mesh_period_samples = fs / spec.mesh_freq_hz;
    if (static_cast<double>(n) < 2.0 * mesh_period_samples)
        throw ValidationError("synthesize: duration shorter than two mesh periods");

    // the fault event itself is shared between channels; noise is not
    std::mt19937_64 event_rng(mix_seed(spec.seed, 0x6576656E74ULL));
    const double carrier_phase = channel == Channel::V ? std::numbers::pi / 2.0 : 0.0;
    TimeSeries out;
    out.sample_rate_hz = fs;
    out.samples = render_clean(spec, n, fs, carrier_phase, event_rng);

    std::mt19937_64 noise_rng(
        mix_seed(spec.seed, 0x6E6F697365ULL, static_cast<std::uint64_t>(channel)));
    add_noise(out.samples, spec.snr_db, noise_rng);
    return out;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("dataset file: unexpected end");
}

void write_segment_f32(std::ostream& out, const std::vector<double>& samples) {
    for (double v : samples) {
        const float f = static_cast<float>(v);
        write_pod(out, f);
    }
}

std::vector<double> read_segment_f32(std::istream& in, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        float f;
        read_pod(in, f);
        out[i] = static_cast<double>(f);
    }
    return out;
}

}  // namespace

const char* fault_name(FaultKind kind) {
    switch (kind) {
        case FaultKind::healthy: return "healthy";
        case FaultKind::broken_tooth: return "broken_tooth";
        case FaultKind::wear: return "wear";
        case FaultKind::crack: return "crack";
        case FaultKind::missing_tooth: return "missing_tooth";
        case FaultKind::eccentric: return "eccentric";
    }
    return "unknown";
}

std::vector<std::vector<double>> segment(const TimeSeries& series, const SegmentSpec& spec) {
    if (spec.length < 2) throw ValidationError("segment: length must be >= 2");
    if (spec.hop < 1) throw ValidationError("segment: hop must be >= 1");
    if (series.samples.size() < spec.length)
        throw ValidationError("segment: series shorter than segment length");
    const std::size_t count = (series.samples.size() - spec.length) / spec.hop + 1;
    std::vector<std::vector<double>> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t start = i * spec.hop;
        out.emplace_back(series.samples.begin() + static_cast<std::ptrdiff_t>(start),
                         series.samples.begin() + static_cast<std::ptrdiff_t>(start + spec.length));
    }
    return out;
}

std::vector<double> normalize(const std::vector<double>& samples) {
    if (samples.empty()) throw ValidationError("normalize: empty input");
    const double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    var /= n;
    const double std_dev = std::sqrt(var);
    std::vector<double> out(samples.size());
    if (std_dev < 1e-300) return out;  // constant input -> zeros
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = (samples[i] - mean) / std_dev;
    return out;
}

TimeSeries synthesize(const SyntheticFaultSpec& spec, std::size_t duration_samples,
                      double sample_rate_hz) {
    return synthesize_channel(spec, duration_samples, sample_rate_hz, Channel::H);
}

ChannelPair synthesize_pair(const SyntheticFaultSpec& spec, std::size_t duration_samples,
                            double sample_rate_hz) {
    return {synthesize_channel(spec, duration_samples, sample_rate_hz, Channel::H),
            synthesize_channel(spec, duration_samples, sample_rate_hz, Channel::V)};
}

DatasetSplit build_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    if (spec.classes.empty()) throw ValidationError("build_dataset: no classes");
    if (spec.per_class_count == 0 || spec.per_class_count % 10 != 0)
        throw ValidationError("build_dataset: per_class_count must be a positive multiple of 10");

    DatasetSplit split;
    split.segment_length = spec.segment_length;
    for (FaultKind kind : spec.classes) split.class_names.emplace_back(fault_name(kind));

    const std::size_t n_train = spec.per_class_count * 6 / 10;
    const std::size_t n_val = spec.per_class_count * 2 / 10;
    split.train.resize(n_train * spec.classes.size());
    split.validation.resize(n_val * spec.classes.size());
    split.test.resize((spec.per_class_count - n_train - n_val) * spec.classes.size());

    const std::size_t total = spec.classes.size() * spec.per_class_count;
    parallel_for(total, [&](std::size_t idx) {
        const std::size_t cls = idx / spec.per_class_count;
        const std::size_t k = idx % spec.per_class_count;
        SyntheticFaultSpec fs;
        fs.class_kind = spec.classes[cls];
        fs.mesh_freq_hz = spec.mesh_freq_hz;
        fs.shaft_freq_hz = spec.shaft_freq_hz;
        fs.snr_db = spec.snr_db;
        fs.seed = mix_seed(seed, cls + 1, k + 1);
        ChannelPair pair = synthesize_pair(fs, spec.segment_length, spec.sample_rate_hz);

        PairedSample sample;
        sample.h = {normalize(pair.h.samples), static_cast<std::uint32_t>(cls), Channel::H};
        sample.v = {normalize(pair.v.samples), static_cast<std::uint32_t>(cls), Channel::V};

        // stratified 6:2:2 by position within the class
        if (k < n_train)
            split.train[cls * n_train + k] = std::move(sample);
        else if (k < n_train + n_val)
            split.validation[cls * n_val + (k - n_train)] = std::move(sample);
        else
            split.test[cls * (spec.per_class_count - n_train - n_val) + (k - n_train - n_val)] =
                std::move(sample);
    });
    return split;
}

void save_dataset(const DatasetSplit& split, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(kMagic, 4);
    write_pod(f, kVersion);
    write_pod(f, static_cast<std::uint32_t>(split.class_names.size()));
    write_pod(f, static_cast<std::uint32_t>(split.segment_length));
    write_pod(f, static_cast<std::uint32_t>(split.train.size()));
    write_pod(f, static_cast<std::uint32_t>(split.validation.size()));
    write_pod(f, static_cast<std::uint32_t>(split.test.size()));
    for (const auto& name : split.class_names) {
        write_pod(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    for (const auto* part : {&split.train, &split.validation, &split.test}) {
        for (const PairedSample& s : *part) {
            write_pod(f, s.h.label);
            write_segment_f32(f, s.h.samples);
            write_segment_f32(f, s.v.samples);
        }
    }
    if (!f) throw IoError("write failed: " + path);
}

DatasetSplit load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0) throw IoError("dataset file: bad magic");
    std::uint32_t version, class_count, seg_len, n_train, n_val, n_test;
    read_pod(f, version);
    if (version != kVersion)
        throw IoError("dataset file: unsupported version " + std::to_string(version));
    read_pod(f, class_count);
    read_pod(f, seg_len);
    read_pod(f, n_train);
    read_pod(f, n_val);
    read_pod(f, n_test);

    DatasetSplit split;
    split.segment_length = seg_len;
    for (std::uint32_t i = 0; i < class_count; ++i) {
        std::uint32_t len;
        read_pod(f, len);
        std::string name(len, '\0');
        f.read(name.data(), len);
        if (!f) throw IoError("dataset file: unexpected end");
        split.class_names.push_back(std::move(name));
    }
    auto read_part = [&](std::size_t count) {
        std::vector<PairedSample> part(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t label;
            read_pod(f, label);
            if (label >= class_count) throw IoError("dataset file: label out of range");
            part[i].h = {read_segment_f32(f, seg_len), label, Channel::H};
            part[i].v = {read_segment_f32(f, seg_len), label, Channel::V};
        }
        return part;
    };
    split.train = read_part(n_train);
    split.validation = read_part(n_val);
    split.test = read_part(n_test);
    return split;
}

void export_dataset_csv(const DatasetSplit& split, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    char buf[32];
    for (const auto* part : {&split.train, &split.validation, &split.test}) {
        for (const PairedSample& s : *part) {
            f << s.h.label;
            for (const auto* seg : {&s.h.samples, &s.v.samples}) {
                for (double v : *seg) {
                    std::snprintf(buf, sizeof buf, ",%.9g", v);
                    f << buf;
                }
            }
            f << "\n";
        }
    }
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace gearfuse::signal
