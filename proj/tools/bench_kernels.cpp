#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "mudamp/mu.hpp"
#include "mudamp/plant_family.hpp"
#include "mudamp/synthesis.hpp"
#include "mudamp/uncertainty.hpp"

using namespace mudamp;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct Timing {
    double serial = 0.0, parallel = 0.0;
};

template <typename Fn>
Timing time_both(int reps, Fn&& fn) {
    Timing t;
    for (int r = 0; r < reps; ++r) {
        double t0 = now_s();
        fn(ExecMode::Serial);
        t.serial += now_s() - t0;
        t0 = now_s();
        fn(ExecMode::Parallel);
        t.parallel += now_s() - t0;
    }
    t.serial /= reps;
    t.parallel /= reps;
    return t;
}

void report(const char* name, const Timing& t) {
    std::printf("%-22s serial %8.3f s   parallel %8.3f s   speedup %.2fx\n", name, t.serial,
                t.parallel, t.serial / t.parallel);
}

}  // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 1;

    const FamilyConfig fc;
    const auto members = nanopositioner_family(fc);
    const FrequencyGrid grid = FrequencyGrid::log_spaced_with_clusters(
        1.0, 5000.0, 400, fc.f0_hz, 30, 0.10);
    const auto measured = synthesize_frf(members, grid, 0.0, 1);
    const auto stats = extract_mode_stats(members);
    const UncertainPlant plant = assemble_uncertain_plant(
        stats, actuator_tf(fc), fc.delay_s, Variant::M31, grid, measured);

    std::printf("grid %zu points, %zu structured channels, reps %d\n", grid.size(),
                plant.active_channels().size(), reps);

    report("envelope (256 draws)", time_both(reps, [&](ExecMode exec) {
               envelope(plant, grid, 256, true, 1, exec);
           }));

    // A mid-band controller, gain backed off until the nominal loop is
    // stable; the bench only needs a fixed, representative mu workload.
    BandpassParams bp;
    bp.order = 2;
    bp.zeta_c = 0.3;
    bp.omega_c = plant.modes.at(0).stats.nominal_mode().pole_freq;
    bp.omega_d = 0.1 * bp.omega_c;
    bp.gain = 0.3 * std::pow(2.0 * bp.zeta_c * bp.omega_c, bp.order);
    const RationalTF nominal = plant.nominal_tf();
    while (!is_stable(feedback(rationalize_delay(nominal, 2), bandpass_tf(bp))).stable)
        bp.gain *= 0.5;
    const RationalTF controller = bandpass_tf(bp);
    const RationalTF weight = build_sensitivity_weight(default_weight_spec(plant));
    const FrequencyGrid mu_grid = FrequencyGrid::log_spaced_with_clusters(
        1.0, 5000.0, 96, fc.f0_hz, 10, 0.10);

    report("mu profile (136 pts)", time_both(reps, [&](ExecMode exec) {
               RobustPerformanceOptions opts;
               opts.exec = exec;
               opts.with_lower = false;
               opts.mu.dg_max_iters = 60;
               opts.mu.bisect_max_iters = 30;
               robust_performance_profile(plant, controller, weight, mu_grid, opts);
           }));
    return 0;
}
