#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "gearfuse/tfa.hpp"

namespace gearfuse::pso {

struct Particle {
    std::array<double, tfa::kScheduleSections> position{};
    std::array<double, tfa::kScheduleSections> velocity{};
    std::array<double, tfa::kScheduleSections> best_position{};
    double best_fitness = 0.0;
};

struct SwarmConfig {
    std::size_t swarm_size = 30;
    std::size_t max_iterations = 20;
    double inertia = 0.729;
    double cognitive = 1.49445;
    double social = 1.49445;
    double bound_low = tfa::kMinWindowLength;
    double bound_high = tfa::kMaxWindowLength;
    std::size_t repeats = 10;
    std::uint64_t seed = 0;
    std::size_t stft_hop = 16;
    // the WVD target is resampled once to this size before the swarm loop
    std::size_t target_rows = 96;
    std::size_t target_cols = 96;
    std::size_t stagnation_limit = 5;
};

struct PsoResult {
    tfa::WindowSchedule best_schedule{};
    double best_fitness = 0.0;
    std::vector<double> fitness_trace;  // per-iteration global best, nondecreasing
};

/// Negative L1 distance between the unit-sum-normalized ASTFT of the signal
/// under `schedule` (resampled to aim's dimensions) and the unit-sum
/// normalized aim. Always <= 0; 0 only when the normalized grids coincide.
double fitness(const tfa::WindowSchedule& schedule, const std::vector<double>& signal,
               const tfa::TFGrid& aim, std::size_t hop);

/// One velocity/position update of the swarm dynamics.
void update_particle(Particle& p, const std::array<double, tfa::kScheduleSections>& global_best,
                     const SwarmConfig& config, double r1, double r2, std::size_t dim);

PsoResult pso_optimize(const std::vector<double>& signal, const SwarmConfig& config);

/// Target grid the optimizer chases: WVD magnitude resampled to the
/// configured comparison size.
tfa::TFGrid make_aim(const std::vector<double>& signal, const SwarmConfig& config);

/// pso_optimize with a precomputed aim (shared across repeats).
PsoResult pso_optimize_with_aim(const std::vector<double>& signal, const tfa::TFGrid& aim,
                                const SwarmConfig& config);

/// Elementwise mode of schedules; ties resolve to the smaller length.
tfa::WindowSchedule schedule_mode(const std::vector<tfa::WindowSchedule>& schedules);

/// Runs the optimizer `repeats` times with seeds seed..seed+repeats-1 and
/// takes the per-section mode of the best schedules (ties -> smaller length).
tfa::WindowSchedule repeated_mode(const std::vector<double>& signal, const SwarmConfig& config);

/// CSV: header, then one "iteration,best_fitness" row per iteration, then
/// the final schedule as 16 comma-separated integers.
void write_trace_csv(const PsoResult& result, std::ostream& out);

}  // namespace gearfuse::pso
