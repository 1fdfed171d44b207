#pragma once

#include <optional>
#include <vector>

#include "mudamp/common.hpp"

namespace mudamp {

// Polynomial helpers. Coefficients are stored ascending in s:
// p(s) = c[0] + c[1] s + c[2] s^2 + ...
std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b);
std::vector<double> poly_add(const std::vector<double>& a, const std::vector<double>& b);
std::vector<double> poly_scale(const std::vector<double>& a, double k);
std::vector<double> poly_trim(const std::vector<double>& a);
Complex poly_eval(const std::vector<double>& c, Complex s);
// Roots via balanced companion-matrix eigenvalues (frequency-scaled for
// conditioning). Degree 0 yields an empty set.
std::vector<Complex> poly_roots(const std::vector<double>& c);

// Proper or improper rational transfer function with an optional pure output
// delay (seconds). Series composition multiplies numerators/denominators
// without pole-zero cancellation; exactness is preferred over minimality.
struct RationalTF {
    std::vector<double> num{1.0};
    std::vector<double> den{1.0};
    double delay = 0.0;

    RationalTF() = default;
    RationalTF(std::vector<double> n, std::vector<double> d, double delay_s = 0.0);
    static RationalTF constant(double k);

    int num_degree() const { return static_cast<int>(num.size()) - 1; }
    int den_degree() const { return static_cast<int>(den.size()) - 1; }
};

// One resonant mode: complex pole pair, with an optional anti-resonant zero
// pair below it. Frequencies in rad/s, dampings dimensionless in (0, 1).
struct ModePair {
    std::optional<double> zero_freq;
    double zero_damping = 0.0;
    double pole_freq = 0.0;
    double pole_damping = 0.0;
};

// Strictly increasing positive frequencies in rad/s.
struct FrequencyGrid {
    std::vector<double> points;

    FrequencyGrid() = default;
    explicit FrequencyGrid(std::vector<double> pts);
    std::size_t size() const { return points.size(); }

    static FrequencyGrid log_spaced(double f_lo_hz, double f_hi_hz, int n);
    // Log-spaced base grid plus per-center clusters of extra points spanning
    // [1-span_rel, 1+span_rel] x center. Duplicates are merged.
    static FrequencyGrid log_spaced_with_clusters(double f_lo_hz, double f_hi_hz, int n,
                                                  const std::vector<double>& centers_hz,
                                                  int per_center, double span_rel);
};

// (n2 s^2 + n1 s + 1) / (d2 s^2 + d1 s + 1) with unit DC gain; a mode without
// a zero pair has numerator 1.
RationalTF tf_from_mode_pair(const ModePair& mode);

RationalTF series(const RationalTF& a, const RationalTF& b);

// Closed loop G/(1+GC). The controller must be delay-free; a plant delay is
// carried through unchanged, so rationalize it first (pade_delay) before any
// pole analysis of the result.
RationalTF feedback(const RationalTF& plant, const RationalTF& controller);

// Frequency response at s = j*omega including the exact exp(-j*omega*delay)
// factor. Throws if the denominator vanishes at a requested point.
Complex freq_point(const RationalTF& tf, double omega);
std::vector<Complex> freq_response(const RationalTF& tf, const FrequencyGrid& grid);

// [m/m] Pade rational approximation of exp(-s*tau), order in {1,2,3}.
RationalTF pade_delay(double tau, int order);
// Folds tf.delay into the rational part via pade_delay; no-op for delay 0.
RationalTF rationalize_delay(const RationalTF& tf, int order = 2);

struct StabilityReport {
    bool stable = false;
    std::vector<Complex> poles;
    double margin_used = 0.0;  // the epsilon applied to the real-part test
};

// Denominator roots strictly left of -eps, eps = 1e-8 * max(1, max |root|).
// Requires a delay-free tf (rationalize first).
StabilityReport is_stable(const RationalTF& tf);

}  // namespace mudamp
