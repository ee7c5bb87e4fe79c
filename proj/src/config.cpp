#include "gearfuse/config.hpp"

#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <vector>

#include "gearfuse/common.hpp"

namespace gearfuse::cli {

namespace {

struct Entry {
    const char* key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::size_t parse_size(const std::string& v, const char* key) {
    try {
        const long long n = std::stoll(v);
        if (n < 0) throw std::out_of_range("negative");
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ValidationError(std::string("config: bad integer for ") + key + ": " + v);
    }
}

std::uint64_t parse_u64(const std::string& v, const char* key) {
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ValidationError(std::string("config: bad integer for ") + key + ": " + v);
    }
}

double parse_double(const std::string& v, const char* key) {
    try {
        return std::stod(v);
    } catch (const std::exception&) {
        throw ValidationError(std::string("config: bad number for ") + key + ": " + v);
    }
}

bool parse_bool(const std::string& v, const char* key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError(std::string("config: bad bool for ") + key + ": " + v);
}

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

#define SIZE_ENTRY(key_str, field)                                                     \
    Entry{key_str, [](RunConfig& c, const std::string& v) { c.field = parse_size(v, key_str); }, \
          [](const RunConfig& c) { return std::to_string(c.field); }}
#define U64_ENTRY(key_str, field)                                                      \
    Entry{key_str, [](RunConfig& c, const std::string& v) { c.field = parse_u64(v, key_str); },  \
          [](const RunConfig& c) { return std::to_string(c.field); }}
#define DOUBLE_ENTRY(key_str, field)                                                   \
    Entry{key_str,                                                                     \
          [](RunConfig& c, const std::string& v) { c.field = parse_double(v, key_str); },        \
          [](const RunConfig& c) { return fmt_double(c.field); }}
#define BOOL_ENTRY(key_str, field)                                                     \
    Entry{key_str, [](RunConfig& c, const std::string& v) { c.field = parse_bool(v, key_str); }, \
          [](const RunConfig& c) { return c.field ? std::string("true") : std::string("false"); }}
#define STRING_ENTRY(key_str, field)                                  \
    Entry{key_str, [](RunConfig& c, const std::string& v) { c.field = v; }, \
          [](const RunConfig& c) { return c.field; }}

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        U64_ENTRY("seed", seed),
        SIZE_ENTRY("dataset.classes", dataset_classes),
        SIZE_ENTRY("dataset.per_class", dataset_per_class),
        SIZE_ENTRY("dataset.segment_length", dataset_segment_length),
        DOUBLE_ENTRY("dataset.sample_rate_hz", dataset_sample_rate_hz),
        DOUBLE_ENTRY("dataset.mesh_freq_hz", dataset_mesh_freq_hz),
        DOUBLE_ENTRY("dataset.shaft_freq_hz", dataset_shaft_freq_hz),
        DOUBLE_ENTRY("dataset.snr_db", dataset_snr_db),
        BOOL_ENTRY("dataset.export_csv", dataset_export_csv),
        SIZE_ENTRY("stft.hop", stft_hop),
        SIZE_ENTRY("pso.swarm_size", pso_swarm_size),
        SIZE_ENTRY("pso.max_iterations", pso_max_iterations),
        DOUBLE_ENTRY("pso.inertia", pso_inertia),
        DOUBLE_ENTRY("pso.cognitive", pso_cognitive),
        DOUBLE_ENTRY("pso.social", pso_social),
        SIZE_ENTRY("pso.repeats", pso_repeats),
        SIZE_ENTRY("pso.target_rows", pso_target_rows),
        SIZE_ENTRY("pso.target_cols", pso_target_cols),
        BOOL_ENTRY("pso.per_sample", pso_per_sample),
        SIZE_ENTRY("dtcwt.levels", dtcwt_levels),
        SIZE_ENTRY("grid.astft_size", grid_astft_size),
        SIZE_ENTRY("grid.dtcwt_size", grid_dtcwt_size),
        SIZE_ENTRY("model.branch_channels", model_branch_channels),
        SIZE_ENTRY("model.base_channels", model_base_channels),
        STRING_ENTRY("model.variant", model_variant),
        SIZE_ENTRY("train.batch_size", train_batch_size),
        SIZE_ENTRY("train.epochs", train_epochs),
        DOUBLE_ENTRY("train.learning_rate", train_learning_rate),
        STRING_ENTRY("paths.dataset", paths_dataset),
        STRING_ENTRY("paths.cache", paths_cache),
        STRING_ENTRY("paths.model", paths_model),
    };
    return table;
}

#undef SIZE_ENTRY
#undef U64_ENTRY
#undef DOUBLE_ENTRY
#undef BOOL_ENTRY
#undef STRING_ENTRY

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    for (const Entry& e : entries()) {
        if (key == e.key) {
            e.set(*this, value);
            return;
        }
    }
    throw ValidationError("config: unknown key: " + key);
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config: line " + std::to_string(line_no) +
                                  " is not key=value: " + line);
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void RunConfig::echo(std::ostream& out) const {
    for (const Entry& e : entries()) out << e.key << " = " << e.get(*this) << "\n";
}

void RunConfig::validate() const {
    if (dataset_classes != 5 && dataset_classes != 6)
        throw ValidationError("config: dataset.classes must be 5 or 6");
    if (dataset_per_class == 0 || dataset_per_class % 10 != 0)
        throw ValidationError("config: dataset.per_class must be a positive multiple of 10");
    if (dataset_segment_length < 64)
        throw ValidationError("config: dataset.segment_length too small");
    if (!(dataset_mesh_freq_hz > dataset_shaft_freq_hz) || !(dataset_shaft_freq_hz > 0.0))
        throw ValidationError("config: need mesh_freq_hz > shaft_freq_hz > 0");
    if (stft_hop == 0) throw ValidationError("config: stft.hop must be >= 1");
    if (train_batch_size == 0 || train_epochs == 0)
        throw ValidationError("config: train.batch_size and train.epochs must be >= 1");
    if (dtcwt_levels < 1 || dtcwt_levels > 8)
        throw ValidationError("config: dtcwt.levels must be in [1, 8]");
    if (grid_astft_size < 4 || grid_dtcwt_size < 8)
        throw ValidationError("config: grid sizes too small");
}

}  // namespace gearfuse::cli
