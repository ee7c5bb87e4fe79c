#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gearfuse::signal {

struct TimeSeries {
    std::vector<double> samples;
    double sample_rate_hz = 1.0;
};

struct SegmentSpec {
    std::size_t length = 0;
    std::size_t hop = 0;
};

enum class Channel : std::uint8_t { H = 0, V = 1 };

enum class FaultKind : std::uint32_t {
    healthy = 0,
    broken_tooth = 1,
    wear = 2,
    crack = 3,
    missing_tooth = 4,
    eccentric = 5,
};

const char* fault_name(FaultKind kind);

struct LabeledSegment {
    std::vector<double> samples;
    std::uint32_t label = 0;
    Channel channel = Channel::H;
};

/// One dataset sample: the same fault event seen by the horizontal and
/// vertical accelerometers (independent noise, 90-degree carrier offset).
struct PairedSample {
    LabeledSegment h;
    LabeledSegment v;
};

struct SyntheticFaultSpec {
    FaultKind class_kind = FaultKind::healthy;
    double mesh_freq_hz = 144.0;
    double shaft_freq_hz = 8.0;
    double snr_db = 15.0;
    std::uint64_t seed = 0;
};

struct DatasetSplit {
    std::vector<PairedSample> train;
    std::vector<PairedSample> validation;
    std::vector<PairedSample> test;
    std::vector<std::string> class_names;
    std::size_t segment_length = 0;

    std::size_t total() const { return train.size() + validation.size() + test.size(); }
};

std::vector<std::vector<double>> segment(const TimeSeries& series, const SegmentSpec& spec);

/// Z-score; constant inputs map to all zeros.
std::vector<double> normalize(const std::vector<double>& samples);

TimeSeries synthesize(const SyntheticFaultSpec& spec, std::size_t duration_samples,
                      double sample_rate_hz);

/// Same fault event rendered for both sensor channels.
struct ChannelPair {
    TimeSeries h;
    TimeSeries v;
};
ChannelPair synthesize_pair(const SyntheticFaultSpec& spec, std::size_t duration_samples,
                            double sample_rate_hz);

struct DatasetSpec {
    std::vector<FaultKind> classes;
    std::size_t per_class_count = 0;  // divisible by 10 (6:2:2 split)
    std::size_t segment_length = 1536;
    double sample_rate_hz = 2048.0;
    double mesh_freq_hz = 144.0;
    double shaft_freq_hz = 8.0;
    double snr_db = 15.0;
};

DatasetSplit build_dataset(const DatasetSpec& spec, std::uint64_t seed);

void save_dataset(const DatasetSplit& split, const std::string& path);
DatasetSplit load_dataset(const std::string& path);

/// One row per sample: label, H samples, V samples.
void export_dataset_csv(const DatasetSplit& split, const std::string& path);

}  // namespace gearfuse::signal
