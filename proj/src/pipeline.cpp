#include "gearfuse/pipeline.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "gearfuse/common.hpp"
#include "gearfuse/dtcwt.hpp"
#include "gearfuse/pso.hpp"
#include "gearfuse/tfa.hpp"

namespace gearfuse::pipeline {

namespace {

constexpr char kCacheMagic[4] = {'G', 'F', 'C', '1'};
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("cache file: unexpected end");
}

void write_f32s(std::ostream& out, const std::vector<float>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<float> read_f32s(std::istream& in, std::size_t n) {
    std::vector<float> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw IoError("cache file: unexpected end");
    return v;
}

std::vector<float> grid_to_f32(const tfa::TFGrid& grid) {
    std::vector<float> out(grid.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(grid.values[i]);
    return out;
}

std::vector<float> to_f32(const std::vector<double>& v) {
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return out;
}

pso::SwarmConfig swarm_config_from(const cli::RunConfig& cfg) {
    pso::SwarmConfig sc;
    sc.swarm_size = cfg.pso_swarm_size;
    sc.max_iterations = cfg.pso_max_iterations;
    sc.inertia = cfg.pso_inertia;
    sc.cognitive = cfg.pso_cognitive;
    sc.social = cfg.pso_social;
    sc.repeats = cfg.pso_repeats;
    sc.seed = cfg.seed;
    sc.stft_hop = cfg.stft_hop;
    sc.target_rows = cfg.pso_target_rows;
    sc.target_cols = cfg.pso_target_cols;
    return sc;
}

void require_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output dir: " + dir);
}

signal::DatasetSplit load_dataset_checked(const std::string& path) {
    if (!std::filesystem::exists(path)) throw IoError("missing dataset file: " + path);
    return signal::load_dataset(path);
}

}  // namespace

OutPaths OutPaths::resolve(const cli::RunConfig& cfg, const std::string& out_dir) {
    OutPaths p;
    p.dir = out_dir;
    p.dataset = cfg.paths_dataset.empty() ? out_dir + "/dataset.gfd" : cfg.paths_dataset;
    p.cache = cfg.paths_cache.empty() ? out_dir + "/cache.gfc" : cfg.paths_cache;
    p.model = cfg.paths_model.empty() ? out_dir + "/model.gfnn" : cfg.paths_model;
    return p;
}

void echo_config(const cli::RunConfig& cfg, const std::string& out_dir) {
    require_dir(out_dir);
    std::ofstream f(out_dir + "/config_echo.txt", std::ios::binary);
    if (!f) throw IoError("cannot write config echo in " + out_dir);
    cfg.echo(f);
}

signal::DatasetSpec dataset_spec_from_config(const cli::RunConfig& cfg) {
    signal::DatasetSpec spec;
    spec.classes = {signal::FaultKind::healthy, signal::FaultKind::broken_tooth,
                    signal::FaultKind::wear, signal::FaultKind::crack,
                    signal::FaultKind::missing_tooth};
    if (cfg.dataset_classes == 6) spec.classes.push_back(signal::FaultKind::eccentric);
    spec.per_class_count = cfg.dataset_per_class;
    spec.segment_length = cfg.dataset_segment_length;
    spec.sample_rate_hz = cfg.dataset_sample_rate_hz;
    spec.mesh_freq_hz = cfg.dataset_mesh_freq_hz;
    spec.shaft_freq_hz = cfg.dataset_shaft_freq_hz;
    spec.snr_db = cfg.dataset_snr_db;
    return spec;
}

void cmd_synth(const cli::RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    echo_config(cfg, out_dir);
    OutPaths paths = OutPaths::resolve(cfg, out_dir);
    signal::DatasetSplit split = signal::build_dataset(dataset_spec_from_config(cfg), cfg.seed);
    signal::save_dataset(split, paths.dataset);
    if (cfg.dataset_export_csv) signal::export_dataset_csv(split, out_dir + "/dataset.csv");
}

fusion::PreparedDataset preprocess_dataset(const signal::DatasetSplit& split,
                                           const cli::RunConfig& cfg) {
    fusion::PreparedDataset data;
    data.class_names = split.class_names;
    data.astft_size = cfg.grid_astft_size;
    data.dtcwt_size = cfg.grid_dtcwt_size;
    data.raw_length = split.segment_length;

    const std::size_t class_count = split.class_names.size();
    pso::SwarmConfig sc = swarm_config_from(cfg);

    // One schedule per class, searched on that class's first training
    // segment (channel V). Per-sample search is available behind a flag.
    data.class_schedules.resize(class_count);
    std::vector<const signal::PairedSample*> representative(class_count, nullptr);
    for (const auto& s : split.train)
        if (!representative[s.h.label]) representative[s.h.label] = &s;
    for (std::size_t c = 0; c < class_count; ++c) {
        if (!representative[c])
            throw ValidationError("preprocess: class " + std::to_string(c) +
                                  " has no training samples");
        pso::SwarmConfig per_class = sc;
        per_class.seed = sc.seed + 1000 * c;
        data.class_schedules[c] = pso::repeated_mode(representative[c]->v.samples, per_class);
    }

    auto prepare_split = [&](const std::vector<signal::PairedSample>& in,
                             std::vector<fusion::SamplePair>& out) {
        out.resize(in.size());
        parallel_for(in.size(), [&](std::size_t i) {
            const signal::PairedSample& s = in[i];
            fusion::SamplePair& p = out[i];
            p.label = s.h.label;

            tfa::WindowSchedule schedule;
            if (cfg.pso_per_sample) {
                pso::SwarmConfig per_sample = sc;
                per_sample.seed = sc.seed + 7919 * (i + 1);
                schedule = pso::repeated_mode(s.v.samples, per_sample);
            } else {
                schedule = data.class_schedules[s.h.label];
            }
            tfa::TFGrid astft_grid = tfa::astft(s.v.samples, schedule, cfg.stft_hop);
            astft_grid =
                tfa::resample_grid(astft_grid, cfg.grid_astft_size, cfg.grid_astft_size);
            p.astft = grid_to_f32(tfa::minmax_scale(astft_grid));

            dtcwt::DtcwtCoeffs coeffs = dtcwt::forward(s.h.samples, cfg.dtcwt_levels);
            tfa::TFGrid scal =
                dtcwt::scalogram(coeffs, cfg.grid_dtcwt_size, cfg.grid_dtcwt_size);
            p.dtcwt = grid_to_f32(tfa::minmax_scale(scal));

            p.raw_h = to_f32(s.h.samples);
            p.raw_v = to_f32(s.v.samples);
        });
    };
    prepare_split(split.train, data.train);
    prepare_split(split.validation, data.validation);
    prepare_split(split.test, data.test);
    return data;
}

void save_cache(const fusion::PreparedDataset& data, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(kCacheMagic, 4);
    write_pod(f, kCacheVersion);
    write_pod(f, static_cast<std::uint32_t>(data.class_names.size()));
    write_pod(f, static_cast<std::uint32_t>(data.astft_size));
    write_pod(f, static_cast<std::uint32_t>(data.dtcwt_size));
    write_pod(f, static_cast<std::uint32_t>(data.raw_length));
    write_pod(f, static_cast<std::uint32_t>(data.train.size()));
    write_pod(f, static_cast<std::uint32_t>(data.validation.size()));
    write_pod(f, static_cast<std::uint32_t>(data.test.size()));
    for (const auto& name : data.class_names) {
        write_pod(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    for (const auto& schedule : data.class_schedules)
        for (int len : schedule.lengths) write_pod(f, static_cast<std::int32_t>(len));
    for (const auto* part : {&data.train, &data.validation, &data.test}) {
        for (const fusion::SamplePair& s : *part) {
            write_pod(f, s.label);
            write_f32s(f, s.astft);
            write_f32s(f, s.dtcwt);
            write_f32s(f, s.raw_h);
            write_f32s(f, s.raw_v);
        }
    }
    if (!f) throw IoError("write failed: " + path);
}

fusion::PreparedDataset load_cache(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kCacheMagic, 4) != 0) throw IoError("cache file: bad magic");
    std::uint32_t version;
    read_pod(f, version);
    if (version != kCacheVersion) throw IoError("cache file: unsupported version");

    std::uint32_t class_count, astft_size, dtcwt_size, raw_length, n_train, n_val, n_test;
    read_pod(f, class_count);
    read_pod(f, astft_size);
    read_pod(f, dtcwt_size);
    read_pod(f, raw_length);
    read_pod(f, n_train);
    read_pod(f, n_val);
    read_pod(f, n_test);

    fusion::PreparedDataset data;
    data.astft_size = astft_size;
    data.dtcwt_size = dtcwt_size;
    data.raw_length = raw_length;
    for (std::uint32_t i = 0; i < class_count; ++i) {
        std::uint32_t len;
        read_pod(f, len);
        std::string name(len, '\0');
        f.read(name.data(), len);
        if (!f) throw IoError("cache file: unexpected end");
        data.class_names.push_back(std::move(name));
    }
    data.class_schedules.resize(class_count);
    for (auto& schedule : data.class_schedules)
        for (int& len : schedule.lengths) {
            std::int32_t v;
            read_pod(f, v);
            len = v;
        }
    auto read_part = [&](std::size_t count) {
        std::vector<fusion::SamplePair> part(count);
        for (auto& s : part) {
            read_pod(f, s.label);
            if (s.label >= class_count) throw IoError("cache file: label out of range");
            s.astft = read_f32s(f, astft_size * astft_size);
            s.dtcwt = read_f32s(f, dtcwt_size * dtcwt_size);
            s.raw_h = read_f32s(f, raw_length);
            s.raw_v = read_f32s(f, raw_length);
        }
        return part;
    };
    data.train = read_part(n_train);
    data.validation = read_part(n_val);
    data.test = read_part(n_test);
    return data;
}

void cmd_preprocess(const cli::RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    echo_config(cfg, out_dir);
    OutPaths paths = OutPaths::resolve(cfg, out_dir);
    signal::DatasetSplit split = load_dataset_checked(paths.dataset);
    fusion::PreparedDataset data = preprocess_dataset(split, cfg);
    save_cache(data, paths.cache);

    std::ofstream sched(out_dir + "/schedules.csv", std::ios::binary);
    if (!sched) throw IoError("cannot write schedules.csv");
    sched << "class";
    for (std::size_t i = 0; i < tfa::kScheduleSections; ++i) sched << ",L" << i;
    sched << "\n";
    for (std::size_t c = 0; c < data.class_names.size(); ++c) {
        sched << data.class_names[c];
        for (int len : data.class_schedules[c].lengths) sched << "," << len;
        sched << "\n";
    }
}

fusion::ModelConfig model_config_from(const cli::RunConfig& cfg,
                                      const fusion::PreparedDataset& data) {
    fusion::ModelConfig mc;
    mc.class_count = data.class_count();
    mc.astft_size = data.astft_size;
    mc.dtcwt_size = data.dtcwt_size;
    mc.fusion_size = data.dtcwt_size / 2;
    mc.raw_length = data.raw_length;
    mc.branch_channels = cfg.model_branch_channels;
    mc.base_channels = cfg.model_base_channels;
    mc.variant = fusion::variant_from_name(cfg.model_variant);
    mc.seed = cfg.seed;
    return mc;
}

namespace {

fusion::TrainConfig train_config_from(const cli::RunConfig& cfg) {
    fusion::TrainConfig tc;
    tc.batch_size = cfg.train_batch_size;
    tc.epochs = cfg.train_epochs;
    tc.learning_rate = cfg.train_learning_rate;
    tc.seed = cfg.seed;
    return tc;
}

void write_summary(const std::string& path, const fusion::Metrics& metrics,
                   std::size_t parameter_count) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    char buf[96];
    std::snprintf(buf, sizeof buf, "test_accuracy %.17g\n", metrics.test_accuracy);
    f << buf;
    f << "parameters " << parameter_count << "\n";
}

void write_timing(const std::string& path, double seconds) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    char buf[64];
    std::snprintf(buf, sizeof buf, "wall_seconds %.3f\n", seconds);
    f << buf;
}

}  // namespace

void cmd_train(const cli::RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    echo_config(cfg, out_dir);
    OutPaths paths = OutPaths::resolve(cfg, out_dir);
    if (!std::filesystem::exists(paths.cache)) throw IoError("missing cache: " + paths.cache);
    fusion::PreparedDataset data = load_cache(paths.cache);
    fusion::FusionModel model(model_config_from(cfg, data));
    fusion::Metrics metrics = fusion::train(model, data, train_config_from(cfg));

    fusion::write_metrics_csv(metrics, out_dir + "/curves.csv");
    fusion::write_confusion_csv(metrics, data.class_names, out_dir + "/confusion.csv");
    model.save_checkpoint(paths.model);
    write_summary(out_dir + "/metrics.txt", metrics, model.parameter_count());
    write_timing(out_dir + "/timing.txt", metrics.wall_seconds);
}

void cmd_eval(const cli::RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    echo_config(cfg, out_dir);
    OutPaths paths = OutPaths::resolve(cfg, out_dir);
    if (!std::filesystem::exists(paths.cache)) throw IoError("missing cache: " + paths.cache);
    if (!std::filesystem::exists(paths.model)) throw IoError("missing model: " + paths.model);
    fusion::PreparedDataset data = load_cache(paths.cache);
    fusion::FusionModel model(model_config_from(cfg, data));
    model.load_checkpoint(paths.model);
    fusion::Metrics metrics = fusion::evaluate(model, data.test, data.class_count());
    fusion::write_confusion_csv(metrics, data.class_names, out_dir + "/eval_confusion.csv");
    write_summary(out_dir + "/eval_metrics.txt", metrics, model.parameter_count());
}

void cmd_ablate(const cli::RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    echo_config(cfg, out_dir);
    OutPaths paths = OutPaths::resolve(cfg, out_dir);
    if (!std::filesystem::exists(paths.cache)) throw IoError("missing cache: " + paths.cache);
    fusion::PreparedDataset data = load_cache(paths.cache);
    fusion::ModelConfig base = model_config_from(cfg, data);
    std::vector<fusion::AblationRow> rows =
        fusion::run_ablation(data, train_config_from(cfg), base);
    fusion::write_ablation_csv(rows, out_dir + "/ablation.csv");
}

void cmd_export_tf(const cli::RunConfig& cfg, const std::string& out_dir,
                   std::size_t sample_index) {
    cfg.validate();
    echo_config(cfg, out_dir);
    OutPaths paths = OutPaths::resolve(cfg, out_dir);
    if (!std::filesystem::exists(paths.cache)) throw IoError("missing cache: " + paths.cache);
    fusion::PreparedDataset data = load_cache(paths.cache);

    const std::vector<fusion::SamplePair>* parts[3] = {&data.train, &data.validation, &data.test};
    const fusion::SamplePair* sample = nullptr;
    std::size_t index = sample_index;
    for (const auto* part : parts) {
        if (index < part->size()) {
            sample = &(*part)[index];
            break;
        }
        index -= part->size();
    }
    if (!sample)
        throw ValidationError("export-tf: sample index " + std::to_string(sample_index) +
                              " out of range");

    auto to_grid = [](const std::vector<float>& v, std::size_t size) {
        tfa::TFGrid grid(size, size);
        for (std::size_t i = 0; i < v.size(); ++i) grid.values[i] = static_cast<double>(v[i]);
        return grid;
    };
    const std::string stem = out_dir + "/sample_" + std::to_string(sample_index);
    tfa::TFGrid astft_grid = to_grid(sample->astft, data.astft_size);
    tfa::TFGrid dtcwt_grid = to_grid(sample->dtcwt, data.dtcwt_size);
    tfa::save_grid_pgm(astft_grid, stem + "_astft.pgm");
    tfa::save_grid_csv(astft_grid, stem + "_astft.csv");
    tfa::save_grid_pgm(dtcwt_grid, stem + "_dtcwt.pgm");
    tfa::save_grid_csv(dtcwt_grid, stem + "_dtcwt.csv");
}

void cmd_pso_trace(const cli::RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    echo_config(cfg, out_dir);
    OutPaths paths = OutPaths::resolve(cfg, out_dir);
    signal::DatasetSplit split = load_dataset_checked(paths.dataset);
    if (split.train.empty()) throw ValidationError("pso-trace: dataset has no training samples");
    pso::PsoResult result = pso::pso_optimize(split.train.front().v.samples,
                                              swarm_config_from(cfg));
    std::ofstream f(out_dir + "/pso_trace.csv", std::ios::binary);
    if (!f) throw IoError("cannot write pso_trace.csv");
    pso::write_trace_csv(result, f);
}

}  // namespace gearfuse::pipeline
