#pragma once

#include <vector>

#include "mudamp/lti.hpp"

namespace mudamp {

// |G/(1+GC)| per grid point; plant delay is evaluated exactly. Throws when a
// closed-loop pole lands on a grid point.
std::vector<double> process_sensitivity(const RationalTF& plant, const RationalTF& controller,
                                        const FrequencyGrid& grid);

// |GC/(1+GC)| per grid point (complementary-sensitivity reading of the noise
// path).
std::vector<double> noise_sensitivity(const RationalTF& plant, const RationalTF& controller,
                                      const FrequencyGrid& grid);

struct MarginCrossing {
    double omega = 0.0;             // rad/s
    double phase_margin_deg = 0.0;  // in (-180, 180]
};

// `stable` is the closed-loop pole test of 1 + L (delay rationalized), not a
// margin heuristic; an empty crossing list flags that |L| never crosses 0 dB.
struct MarginReport {
    std::vector<MarginCrossing> crossings;  // increasing frequency
    bool stable = false;
};

// All 0 dB crossings of |L|: sign changes of the log-magnitude between
// adjacent grid points, refined by interpolation in log-omega plus bisection;
// tangential touches without a sign change are ignored.
MarginReport phase_margins(const RationalTF& loop, const FrequencyGrid& grid);

// Peak of open_mag within +-search_band of mode_freq minus the closed peak in
// the same band, in dB. Profiles are linear magnitudes parallel to the grid.
double gain_reduction_at_mode(const FrequencyGrid& grid, const std::vector<double>& open_mag,
                              const std::vector<double>& closed_mag, double mode_freq,
                              double search_band = 0.15);

}  // namespace mudamp
