#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "gearfuse/common.hpp"
#include "gearfuse/pso.hpp"

using namespace gearfuse;

namespace {

std::vector<double> tone(std::size_t n, double f) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i));
    return x;
}

pso::SwarmConfig fast_config(std::uint64_t seed) {
    pso::SwarmConfig c;
    c.seed = seed;
    c.target_rows = 64;
    c.target_cols = 64;
    return c;
}

tfa::WindowSchedule uniform_schedule(int len) {
    tfa::WindowSchedule s;
    s.lengths.fill(len);
    return s;
}

/// Brute-force oracle: fitness of every uniform schedule L in [16, 127].
std::pair<double, double> exhaustive_uniform_bounds(const std::vector<double>& signal,
                                                    const tfa::TFGrid& aim, std::size_t hop) {
    double best = -1e300, worst = 1e300;
    for (int len = tfa::kMinWindowLength; len <= tfa::kMaxWindowLength; ++len) {
        const double f = pso::fitness(uniform_schedule(len), signal, aim, hop);
        best = std::max(best, f);
        worst = std::min(worst, f);
    }
    return {best, worst};
}

}  // namespace

TEST_CASE("fitness is zero against itself and negative otherwise") {
    auto x = tone(512, 0.13);
    const auto schedule = uniform_schedule(32);
    tfa::TFGrid self = tfa::resample_grid(tfa::astft(x, schedule, 16), 48, 48);
    CHECK(pso::fitness(schedule, x, self, 16) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(pso::fitness(uniform_schedule(100), x, self, 16) < 0.0);

    tfa::WindowSchedule bad = schedule;
    bad.lengths[3] = 400;
    CHECK_THROWS_AS(pso::fitness(bad, x, self, 16), ValidationError);
}

TEST_CASE("uniform-schedule sweep separates good and bad windows") {
    auto x = tone(512, 0.22);
    auto config = fast_config(1);
    tfa::TFGrid aim = pso::make_aim(x, config);
    auto [best, worst] = exhaustive_uniform_bounds(x, aim, config.stft_hop);
    CHECK(best > worst);
    CHECK(best <= 0.0);
}

TEST_CASE("update_particle decays geometrically when accelerations vanish") {
    pso::SwarmConfig config = fast_config(0);
    config.cognitive = 0.0;
    config.social = 0.0;
    config.inertia = 0.5;
    pso::Particle p;
    p.position.fill(60.0);
    p.best_position.fill(60.0);
    p.velocity.fill(8.0);
    std::array<double, tfa::kScheduleSections> global_best;
    global_best.fill(90.0);
    for (int step = 1; step <= 4; ++step) {
        for (std::size_t d = 0; d < tfa::kScheduleSections; ++d)
            pso::update_particle(p, global_best, config, 0.77, 0.13, d);
        CHECK(p.velocity[0] == doctest::Approx(8.0 * std::pow(0.5, step)));
    }
    // with zero velocity the position freezes
    p.velocity.fill(0.0);
    const double pos = p.position[0];
    for (std::size_t d = 0; d < tfa::kScheduleSections; ++d)
        pso::update_particle(p, global_best, config, 0.5, 0.5, d);
    CHECK(p.position[0] == pos);
}

TEST_CASE("update_particle clamps velocity and position bounds") {
    pso::SwarmConfig config = fast_config(0);
    pso::Particle p;
    p.position.fill(120.0);
    p.best_position.fill(127.0);
    p.velocity.fill(100.0);  // above the clamp
    std::array<double, tfa::kScheduleSections> global_best;
    global_best.fill(127.0);
    for (std::size_t d = 0; d < tfa::kScheduleSections; ++d)
        pso::update_particle(p, global_best, config, 1.0, 1.0, d);
    const double vmax = (config.bound_high - config.bound_low) / 4.0;
    for (double v : p.velocity) CHECK(std::abs(v) <= vmax + 1e-12);
    for (double pos : p.position) {
        CHECK(pos >= config.bound_low);
        CHECK(pos <= config.bound_high);
    }
}

TEST_CASE("pso runs are deterministic and monotone") {
    auto x = tone(512, 0.18);
    pso::SwarmConfig config = fast_config(5);
    config.swarm_size = 12;
    config.max_iterations = 8;

    auto r1 = pso::pso_optimize(x, config);
    auto r2 = pso::pso_optimize(x, config);
    CHECK(r1.best_fitness == r2.best_fitness);
    CHECK(r1.best_schedule.lengths == r2.best_schedule.lengths);
    CHECK(r1.fitness_trace == r2.fitness_trace);

    for (std::size_t i = 1; i < r1.fitness_trace.size(); ++i)
        CHECK(r1.fitness_trace[i] >= r1.fitness_trace[i - 1]);
    for (int len : r1.best_schedule.lengths) {
        CHECK(len >= tfa::kMinWindowLength);
        CHECK(len <= tfa::kMaxWindowLength);
    }
}

TEST_CASE("zero acceleration freezes the global best after the first sweep") {
    auto x = tone(512, 0.1);
    pso::SwarmConfig config = fast_config(3);
    config.swarm_size = 8;
    config.max_iterations = 6;
    config.stagnation_limit = 100;  // do not stop early
    config.cognitive = 0.0;
    config.social = 0.0;
    auto result = pso::pso_optimize(x, config);
    for (double f : result.fitness_trace) CHECK(f == result.fitness_trace.front());
}

TEST_CASE("pso reaches the exhaustive uniform optimum on a tone") {
    auto x = tone(512, 0.2);
    pso::SwarmConfig config = fast_config(11);
    tfa::TFGrid aim = pso::make_aim(x, config);
    auto [opt, worst] = exhaustive_uniform_bounds(x, aim, config.stft_hop);

    auto result = pso::pso_optimize_with_aim(x, aim, config);
    CHECK(result.best_fitness >= opt - 0.02 * std::abs(opt));
    CHECK(result.best_fitness > worst);
}

TEST_CASE("schedule_mode picks the most frequent length, ties break low") {
    tfa::WindowSchedule a = uniform_schedule(16);
    tfa::WindowSchedule b = uniform_schedule(16);
    tfa::WindowSchedule c = uniform_schedule(17);
    CHECK(pso::schedule_mode({a, b, c}).lengths[0] == 16);
    CHECK(pso::schedule_mode({a, c}).lengths[0] == 16);      // tie -> smaller
    tfa::WindowSchedule d = uniform_schedule(90);
    CHECK(pso::schedule_mode({c, d, d}).lengths[5] == 90);
    CHECK(pso::schedule_mode({c}).lengths[5] == 17);
}

TEST_CASE("repeated_mode with one repeat equals a single run") {
    auto x = tone(512, 0.15);
    pso::SwarmConfig config = fast_config(21);
    config.swarm_size = 8;
    config.max_iterations = 5;
    config.repeats = 1;
    auto mode = pso::repeated_mode(x, config);
    auto single = pso::pso_optimize(x, config);
    CHECK(mode.lengths == single.best_schedule.lengths);
}

TEST_CASE("trace csv lists iterations then the schedule") {
    pso::PsoResult result;
    result.fitness_trace = {-0.5, -0.4, -0.4};
    result.best_schedule = uniform_schedule(33);
    result.best_fitness = -0.4;
    std::ostringstream out;
    pso::write_trace_csv(result, out);
    const std::string text = out.str();
    CHECK(text.find("iteration,best_fitness\n") == 0);
    CHECK(text.find("0,-0.5") != std::string::npos);
    CHECK(text.find("schedule,33,33") != std::string::npos);
}
