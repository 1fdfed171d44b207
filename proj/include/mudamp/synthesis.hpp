#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mudamp/lti.hpp"
#include "mudamp/mu.hpp"
#include "mudamp/nelder_mead.hpp"
#include "mudamp/uncertainty.hpp"

namespace mudamp {

// Bandpass controller with an all-pass tail:
// C(s) = M * (s / (s^2 + 2 zeta_c omega_c s + omega_c^2))^n * (s - omega_d)/(s + omega_d).
struct BandpassParams {
    double gain = 1.0;     // M
    double zeta_c = 0.3;   // in (0, 1)
    double omega_c = 1.0;  // rad/s
    int order = 2;         // n, fixed per run (not optimized)
    double omega_d = 1.0;  // rad/s
};

RationalTF bandpass_tf(const BandpassParams& p);

// Process-sensitivity template 1/W: flat cap below the corner, rolling off
// past it, with two notch relaxations near the upper modes. A zero depth
// switches that notch off.
struct SensitivityWeightSpec {
    double low_freq_cap_db = 6.0;               // |1/W| at DC
    double rolloff_db_per_decade = 40.0;        // template rolloff past the corner
    double corner_omega = 6283.185307179586;    // rad/s
    std::array<double, 2> notch_freqs{0.0, 0.0};    // rad/s, increasing
    std::array<double, 2> notch_depths_db{0.0, 0.0};
    std::array<double, 2> notch_widths{0.25, 0.25};  // notch pole-pair damping
};

// Stable, minimum-phase W. |1/W| equals the cap at DC exactly and each notch
// relaxes |W| by exactly its depth at its center frequency.
RationalTF build_sensitivity_weight(const SensitivityWeightSpec& spec);

// Cap = nominal plant DC gain + 12 dB, notches at the nominal pole
// frequencies of the two highest modes, 15 dB deep.
SensitivityWeightSpec default_weight_spec(const UncertainPlant& plant);

// Eq. of the weighted disturbance-rejection test at one frequency:
// [[W*G, -W*G], [G, -G]]; closing u = C*x recovers z/d = W*G/(1 + G*C).
Eigen::Matrix2cd generalized_plant(Complex plant_response, Complex weight_response);

struct ParamBounds {
    std::array<double, 2> gain{1e2, 1e8};  // searched in log10
    std::array<double, 2> zeta_c{0.05, 0.7};
    std::array<double, 2> omega_c{1.0, 10.0};  // rad/s
    std::array<double, 2> omega_d{1.0, 10.0};  // rad/s
    BandpassParams initial;
};

// omega_c spans the first-mode variation +-10% and starts at its low end;
// the initial gain gives |C| = 0.3 at the bandgap.
ParamBounds default_param_bounds(const UncertainPlant& plant, int order = 2);

struct SynthOptions {
    NmOptions nm;                 // seed/restarts filled by synthesize
    MuOptions mu;                 // objective-time settings (reduced effort)
    FrequencyGrid objective_grid; // empty -> default_objective_grid(plant)
    FrequencyGrid final_grid;     // empty -> mu_default_grid(plant)
    MuOptions final_mu;           // full-effort settings for the final profile
    bool final_with_lower = true;
    ExecMode exec = ExecMode::Parallel;

    SynthOptions() {
        nm.restarts = 3;
        nm.max_evals = 70;
        mu.dg_max_iters = 25;
        mu.bisect_max_iters = 16;
        mu.bisect_rel_tol = 3e-3;
    }
};

struct SynthResult {
    BandpassParams params;
    MuProfile profile;        // on the final grid
    double objective = 0.0;   // best peak mu upper bound on the objective grid
    int evaluations = 0;
    double wall_seconds = 0.0;
    std::vector<double> restart_best;
};

// Condensed grid for objective evaluations: coarse log sweep plus per-mode
// clusters covering each mode's parameter spread and its lower flank.
FrequencyGrid default_objective_grid(const UncertainPlant& plant);

// Minimizes the peak robust-performance mu upper bound over
// (log10 M, zeta_c, log10 omega_c, log10 omega_d) with n fixed, by bounded
// simplex search with seeded restarts. Nominally destabilizing candidates get
// objective 10 + max(0, max real pole part). Throws if no restart finds a
// stabilizing candidate.
SynthResult synthesize(const UncertainPlant& plant, const RationalTF& weight,
                       const ParamBounds& bounds, int order, std::uint64_t seed,
                       const SynthOptions& options = {});

}  // namespace mudamp
