#include "gearfuse/pso.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <random>

#include "gearfuse/common.hpp"

namespace gearfuse::pso {

namespace {

tfa::WindowSchedule round_position(const std::array<double, tfa::kScheduleSections>& position) {
    tfa::WindowSchedule schedule;
    for (std::size_t i = 0; i < position.size(); ++i)
        schedule.lengths[i] = static_cast<int>(std::lround(position[i]));
    return schedule;
}

}  // namespace

double fitness(const tfa::WindowSchedule& schedule, const std::vector<double>& signal,
               const tfa::TFGrid& aim, std::size_t hop) {
    tfa::validate_schedule(schedule);
    tfa::TFGrid mine = tfa::astft(signal, schedule, hop);

    // Align frequency axes before comparing: the one-sided WVD of a real
    // signal only reaches fs/4 (its bilinear kernel doubles frequencies),
    // while the ASTFT reaches fs/2. Crop the wider grid to the common span
    // so P(t, f) values are compared at the same physical f.
    const double span_mine = mine.freq_step * static_cast<double>(mine.rows - 1);
    const double span_aim = aim.freq_step * static_cast<double>(aim.rows - 1);
    if (span_mine > span_aim * 1.0001 && mine.rows >= 2) {
        const auto keep = static_cast<std::size_t>(std::lround(span_aim / mine.freq_step)) + 1;
        if (keep >= 2 && keep < mine.rows) {
            tfa::TFGrid cropped(keep, mine.cols);
            cropped.time_step = mine.time_step;
            cropped.freq_step = mine.freq_step;
            for (std::size_t r = 0; r < keep; ++r)
                for (std::size_t c = 0; c < mine.cols; ++c) cropped.at(r, c) = mine.at(r, c);
            mine = std::move(cropped);
        }
    }
    mine = tfa::resample_grid(mine, aim.rows, aim.cols);

    const double sum_mine = mine.sum();
    const double sum_aim = aim.sum();
    if (sum_mine <= 0.0 && sum_aim <= 0.0) return 0.0;  // both identically zero
    const double inv_mine = sum_mine > 0.0 ? 1.0 / sum_mine : 0.0;
    const double inv_aim = sum_aim > 0.0 ? 1.0 / sum_aim : 0.0;

    double l1 = 0.0;
    for (std::size_t i = 0; i < mine.values.size(); ++i)
        l1 += std::abs(mine.values[i] * inv_mine - aim.values[i] * inv_aim);
    return -l1;
}

void update_particle(Particle& p, const std::array<double, tfa::kScheduleSections>& global_best,
                     const SwarmConfig& config, double r1, double r2, std::size_t dim) {
    const double vmax = (config.bound_high - config.bound_low) / 4.0;
    double v = config.inertia * p.velocity[dim] +
               config.cognitive * r1 * (p.best_position[dim] - p.position[dim]) +
               config.social * r2 * (global_best[dim] - p.position[dim]);
    v = std::clamp(v, -vmax, vmax);
    p.velocity[dim] = v;
    p.position[dim] = std::clamp(p.position[dim] + v, config.bound_low, config.bound_high);
}

tfa::TFGrid make_aim(const std::vector<double>& signal, const SwarmConfig& config) {
    return tfa::resample_grid(tfa::wvd(signal), config.target_rows, config.target_cols);
}

PsoResult pso_optimize_with_aim(const std::vector<double>& signal, const tfa::TFGrid& aim,
                                const SwarmConfig& config) {
    if (config.swarm_size < 2) throw ValidationError("pso: swarm_size must be >= 2");
    if (!(config.inertia > 0.0 && config.inertia < 1.0))
        throw ValidationError("pso: inertia must lie in (0, 1)");
    if (config.cognitive < 0.0 || config.social < 0.0)
        throw ValidationError("pso: acceleration constants must be >= 0");

    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> upos(config.bound_low, config.bound_high);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Particle> swarm(config.swarm_size);
    for (Particle& p : swarm) {
        for (std::size_t d = 0; d < tfa::kScheduleSections; ++d) {
            p.position[d] = upos(rng);
            p.velocity[d] = 0.0;
        }
        p.best_position = p.position;
        p.best_fitness = -std::numeric_limits<double>::infinity();
    }

    std::array<double, tfa::kScheduleSections> global_best{};
    double global_best_fitness = -std::numeric_limits<double>::infinity();

    PsoResult result;
    std::size_t stagnant = 0;
    std::vector<double> values(config.swarm_size);
    for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
        if (iter > 0) {
            for (Particle& p : swarm)
                for (std::size_t d = 0; d < tfa::kScheduleSections; ++d)
                    update_particle(p, global_best, config, unit(rng), unit(rng), d);
        }
        parallel_for(config.swarm_size, [&](std::size_t i) {
            values[i] = fitness(round_position(swarm[i].position), signal, aim, config.stft_hop);
        });
        bool improved = false;
        for (std::size_t i = 0; i < config.swarm_size; ++i) {
            Particle& p = swarm[i];
            if (values[i] > p.best_fitness) {
                p.best_fitness = values[i];
                p.best_position = p.position;
            }
            if (values[i] > global_best_fitness) {
                global_best_fitness = values[i];
                global_best = p.position;
                improved = true;
            }
        }
        result.fitness_trace.push_back(global_best_fitness);
        stagnant = improved ? 0 : stagnant + 1;
        if (stagnant >= config.stagnation_limit) break;
    }

    result.best_schedule = round_position(global_best);
    result.best_fitness = global_best_fitness;
    return result;
}

PsoResult pso_optimize(const std::vector<double>& signal, const SwarmConfig& config) {
    return pso_optimize_with_aim(signal, make_aim(signal, config), config);
}

tfa::WindowSchedule schedule_mode(const std::vector<tfa::WindowSchedule>& schedules) {
    if (schedules.empty()) throw ValidationError("schedule_mode: no schedules");
    tfa::WindowSchedule mode;
    for (std::size_t d = 0; d < tfa::kScheduleSections; ++d) {
        std::map<int, std::size_t> counts;
        for (const auto& s : schedules) ++counts[s.lengths[d]];
        int best_len = schedules[0].lengths[d];
        std::size_t best_count = 0;
        for (const auto& [len, count] : counts) {
            // map iteration is ascending, so ties keep the smaller length
            if (count > best_count) {
                best_count = count;
                best_len = len;
            }
        }
        mode.lengths[d] = best_len;
    }
    return mode;
}

tfa::WindowSchedule repeated_mode(const std::vector<double>& signal, const SwarmConfig& config) {
    if (config.repeats < 1) throw ValidationError("pso: repeats must be >= 1");
    const tfa::TFGrid aim = make_aim(signal, config);

    std::vector<tfa::WindowSchedule> schedules(config.repeats);
    for (std::size_t r = 0; r < config.repeats; ++r) {
        SwarmConfig run = config;
        run.seed = config.seed + r;
        schedules[r] = pso_optimize_with_aim(signal, aim, run).best_schedule;
    }
    return schedule_mode(schedules);
}

void write_trace_csv(const PsoResult& result, std::ostream& out) {
    out << "iteration,best_fitness\n";
    char buf[64];
    for (std::size_t i = 0; i < result.fitness_trace.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, result.fitness_trace[i]);
        out << buf;
    }
    out << "schedule";
    for (int len : result.best_schedule.lengths) out << "," << len;
    out << "\n";
}

}  // namespace gearfuse::pso
