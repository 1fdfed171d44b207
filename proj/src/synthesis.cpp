#include "mudamp/synthesis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mudamp/common.hpp"

namespace mudamp {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

RationalTF bandpass_tf(const BandpassParams& p) {
    if (p.gain <= 0.0) throw Error("bandpass: gain must be positive");
    if (p.zeta_c <= 0.0 || p.zeta_c >= 1.0) throw Error("bandpass: zeta_c must lie in (0,1)");
    if (p.omega_c <= 0.0) throw Error("bandpass: omega_c must be positive");
    if (p.order < 1) throw Error("bandpass: order must be at least 1");
    if (p.omega_d <= 0.0) throw Error("bandpass: omega_d must be positive");

    const RationalTF stage({0.0, 1.0},
                           {p.omega_c * p.omega_c, 2.0 * p.zeta_c * p.omega_c, 1.0});
    RationalTF c = stage;
    for (int i = 1; i < p.order; ++i) c = series(c, stage);
    c = series(c, RationalTF({-p.omega_d, 1.0}, {p.omega_d, 1.0}));
    c.num = poly_scale(c.num, p.gain);
    return c;
}

RationalTF build_sensitivity_weight(const SensitivityWeightSpec& spec) {
    if (spec.corner_omega <= 0.0) throw Error("weight: corner must be positive");
    if (spec.rolloff_db_per_decade <= 0.0) throw Error("weight: rolloff must be positive");
    for (int i = 0; i < 2; ++i) {
        if (spec.notch_depths_db[i] < 0.0) throw Error("weight: notch depth must be nonnegative");
        if (spec.notch_depths_db[i] > 0.0) {
            if (spec.notch_freqs[i] <= 0.0) throw Error("weight: notch frequency must be positive");
            if (spec.notch_widths[i] <= 0.0) throw Error("weight: notch width must be positive");
        }
    }
    if (spec.notch_depths_db[0] > 0.0 && spec.notch_depths_db[1] > 0.0 &&
        !(spec.notch_freqs[0] < spec.notch_freqs[1]))
        throw Error("weight: notch frequencies must be increasing");

    const int k = std::max(1, static_cast<int>(std::lround(spec.rolloff_db_per_decade / 20.0)));
    RationalTF w = RationalTF::constant(std::pow(10.0, -spec.low_freq_cap_db / 20.0));
    const RationalTF corner({1.0, 1.0 / spec.corner_omega}, {1.0});
    for (int i = 0; i < k; ++i) w = series(w, corner);
    for (int i = 0; i < 2; ++i) {
        if (spec.notch_depths_db[i] == 0.0) continue;
        const double wn = spec.notch_freqs[i];
        const double zp = spec.notch_widths[i];
        const double zz = zp * std::pow(10.0, -spec.notch_depths_db[i] / 20.0);
        w = series(w, RationalTF({wn * wn, 2.0 * zz * wn, 1.0}, {wn * wn, 2.0 * zp * wn, 1.0}));
    }
    return w;
}

SensitivityWeightSpec default_weight_spec(const UncertainPlant& plant) {
    const double dc = std::abs(freq_point(plant.nominal_tf(), 0.0));
    if (dc <= 0.0) throw Error("weight: plant has a DC zero");
    SensitivityWeightSpec spec;
    spec.low_freq_cap_db = 20.0 * std::log10(dc) + 12.0;
    spec.rolloff_db_per_decade = 40.0;
    spec.corner_omega = kTwoPi * 1000.0;
    const std::size_t j = plant.modes.size();
    if (j >= 2) {
        spec.notch_freqs = {plant.modes[j - 2].stats.nominal_mode().pole_freq,
                            plant.modes[j - 1].stats.nominal_mode().pole_freq};
        spec.notch_depths_db = {15.0, 15.0};
        spec.notch_widths = {0.25, 0.25};
    }
    return spec;
}

Eigen::Matrix2cd generalized_plant(Complex plant_response, Complex weight_response) {
    Eigen::Matrix2cd p;
    p << weight_response * plant_response, -weight_response * plant_response,
        plant_response, -plant_response;
    return p;
}

ParamBounds default_param_bounds(const UncertainPlant& plant, int order) {
    if (plant.modes.empty()) throw Error("bounds: plant has no modes");
    if (order < 1) throw Error("bounds: order must be at least 1");
    const UncertainCoefficient& d2 = plant.modes.front().stats.d2;
    if (d2.mean <= 0.0) throw Error("bounds: first mode has an invalid d2");
    const double rr = std::clamp(d2.radius, 0.0, 0.99);
    const double w_lo = 1.0 / std::sqrt(d2.mean * (1.0 + rr));
    const double w_hi = 1.0 / std::sqrt(d2.mean * (1.0 - rr));

    ParamBounds b;
    b.omega_c = {0.9 * w_lo, 1.1 * w_hi};
    b.omega_d = {0.1 * w_lo, 10.0 * w_hi};
    b.zeta_c = {0.05, 0.7};
    b.initial.order = order;
    b.initial.zeta_c = 0.3;
    b.initial.omega_c = w_lo;
    b.initial.omega_d = std::sqrt(b.omega_d[0] * b.omega_d[1]);
    const double scale = std::pow(2.0 * b.initial.zeta_c * b.initial.omega_c, order);
    b.gain = {1e-3 * scale, 1e3 * scale};
    b.initial.gain = 0.3 * scale;
    return b;
}

FrequencyGrid default_objective_grid(const UncertainPlant& plant) {
    // Per-mode clusters span the parameter spread plus the low flank where a
    // band-limited controller dumps its waterbed cost.
    FrequencyGrid grid = FrequencyGrid::log_spaced(1.0, 5000.0, 28);
    for (const auto& mode : plant.modes) {
        const auto& d2 = mode.stats.d2;
        const double rr = std::clamp(d2.radius, 0.0, 0.99);
        const double wlo = 1.0 / std::sqrt(d2.mean * (1.0 + rr));
        const double whi = 1.0 / std::sqrt(d2.mean * (1.0 - rr));
        const FrequencyGrid cl =
            FrequencyGrid::log_spaced(0.72 * wlo / kTwoPi, 1.18 * whi / kTwoPi, 12);
        grid.points.insert(grid.points.end(), cl.points.begin(), cl.points.end());
    }
    std::sort(grid.points.begin(), grid.points.end());
    return grid;
}

SynthResult synthesize(const UncertainPlant& plant, const RationalTF& weight,
                       const ParamBounds& bounds, int order, std::uint64_t seed,
                       const SynthOptions& options) {
    if (order < 1) throw Error("synthesize: order must be at least 1");
    const auto check_range = [](const std::array<double, 2>& r, double value, const char* name) {
        if (!(r[0] < r[1]) || r[0] <= 0.0)
            throw Error(std::string("synthesize: invalid bounds for ") + name);
        if (value < r[0] || value > r[1])
            throw Error(std::string("synthesize: initial ") + name + " outside bounds");
    };
    check_range(bounds.gain, bounds.initial.gain, "gain");
    check_range(bounds.zeta_c, bounds.initial.zeta_c, "zeta_c");
    check_range(bounds.omega_c, bounds.initial.omega_c, "omega_c");
    check_range(bounds.omega_d, bounds.initial.omega_d, "omega_d");
    if (bounds.zeta_c[1] >= 1.0) throw Error("synthesize: zeta_c bound must stay below 1");

    const FrequencyGrid obj_grid =
        options.objective_grid.size() ? options.objective_grid : default_objective_grid(plant);
    const FrequencyGrid fin_grid =
        options.final_grid.size() ? options.final_grid : mu_default_grid(plant);
    const RationalTF nominal = rationalize_delay(plant.nominal_tf(), 2);

    const auto params_of = [&](const Eigen::VectorXd& x) {
        BandpassParams p;
        p.gain = std::pow(10.0, x[0]);
        p.zeta_c = x[1];
        p.omega_c = std::pow(10.0, x[2]);
        p.order = order;
        p.omega_d = std::pow(10.0, x[3]);
        return p;
    };

    RobustPerformanceOptions rp;
    rp.mu = options.mu;
    rp.with_lower = false;
    rp.check_stability = false;
    rp.exec = options.exec;

    const auto objective = [&](const Eigen::VectorXd& x) {
        const RationalTF c = bandpass_tf(params_of(x));
        const StabilityReport rep = is_stable(feedback(nominal, c));
        if (!rep.stable) {
            double worst = 0.0;
            for (const Complex& pole : rep.poles) worst = std::max(worst, pole.real());
            return 10.0 + worst;
        }
        return robust_performance_profile(plant, c, weight, obj_grid, rp).peak_upper;
    };

    Eigen::VectorXd lo(4), hi(4), x0(4);
    lo << std::log10(bounds.gain[0]), bounds.zeta_c[0], std::log10(bounds.omega_c[0]),
        std::log10(bounds.omega_d[0]);
    hi << std::log10(bounds.gain[1]), bounds.zeta_c[1], std::log10(bounds.omega_c[1]),
        std::log10(bounds.omega_d[1]);
    x0 << std::log10(bounds.initial.gain), bounds.initial.zeta_c,
        std::log10(bounds.initial.omega_c), std::log10(bounds.initial.omega_d);

    NmOptions nm = options.nm;
    nm.seed = seed;

    const auto t0 = std::chrono::steady_clock::now();
    const NmResult r = nelder_mead_bounded(objective, lo, hi, x0, nm);
    const auto t1 = std::chrono::steady_clock::now();
    if (r.f >= 10.0) throw Error("synthesize: no stabilizing candidate found in any restart");

    SynthResult out;
    out.params = params_of(r.x);
    out.objective = r.f;
    out.evaluations = r.evaluations;
    out.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    out.restart_best = r.restart_best;

    const RationalTF c = bandpass_tf(out.params);
    if (!is_stable(feedback(nominal, c)).stable)
        throw Error("synthesize: best candidate is not nominally stabilizing");

    RobustPerformanceOptions fin;
    fin.mu = options.final_mu;
    fin.with_lower = options.final_with_lower;
    fin.check_stability = false;
    fin.exec = options.exec;
    out.profile = robust_performance_profile(plant, c, weight, fin_grid, fin);
    return out;
}

}  // namespace mudamp
