#include "mudamp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mudamp/common.hpp"

namespace mudamp {

namespace {
constexpr double kPi = 3.14159265358979323846264338328;

std::vector<double> closed_profile(const RationalTF& plant, const RationalTF& controller,
                                   const FrequencyGrid& grid, bool noise_path) {
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Complex g = freq_point(plant, grid.points[i]);
        const Complex c = freq_point(controller, grid.points[i]);
        const Complex den = 1.0 + g * c;
        if (std::abs(den) == 0.0)
            throw Error("sensitivity: closed-loop pole on the grid at omega=" +
                        std::to_string(grid.points[i]));
        out[i] = std::abs((noise_path ? g * c : g) / den);
    }
    return out;
}
}  // namespace

std::vector<double> process_sensitivity(const RationalTF& plant, const RationalTF& controller,
                                        const FrequencyGrid& grid) {
    return closed_profile(plant, controller, grid, false);
}

std::vector<double> noise_sensitivity(const RationalTF& plant, const RationalTF& controller,
                                      const FrequencyGrid& grid) {
    return closed_profile(plant, controller, grid, true);
}

MarginReport phase_margins(const RationalTF& loop, const FrequencyGrid& grid) {
    if (grid.size() < 2) throw Error("phase_margins: need at least two grid points");
    MarginReport report;
    report.stable =
        is_stable(feedback(rationalize_delay(loop, 2), RationalTF::constant(1.0))).stable;

    const auto resp = freq_response(loop, grid);
    std::vector<double> lm(resp.size());
    for (std::size_t i = 0; i < resp.size(); ++i) lm[i] = std::log10(std::abs(resp[i]));

    const auto log_mag = [&](double w) { return std::log10(std::abs(freq_point(loop, w))); };
    const auto push = [&](double w) {
        const double deg = std::arg(freq_point(loop, w)) * 180.0 / kPi;
        double margin = 180.0 + deg;
        if (margin > 180.0) margin -= 360.0;
        report.crossings.push_back({w, margin});
    };

    for (std::size_t i = 0; i + 1 < lm.size(); ++i) {
        if (lm[i] == 0.0) {
            // exact grid hit counts only when the neighbours straddle 0 dB
            if (i > 0 && lm[i - 1] * lm[i + 1] < 0.0) push(grid.points[i]);
            continue;
        }
        if (lm[i] * lm[i + 1] >= 0.0) continue;
        double wl = grid.points[i], wh = grid.points[i + 1];
        const bool rising = lm[i + 1] > 0.0;
        // first cut: interpolate the log-magnitude linearly in log-omega
        {
            const double t = lm[i] / (lm[i] - lm[i + 1]);
            const double wm = std::exp(std::log(wl) + t * (std::log(wh) - std::log(wl)));
            const double v = log_mag(wm);
            if ((v > 0.0) == rising)
                wh = wm;
            else
                wl = wm;
        }
        for (int it = 0; it < 80 && (wh - wl) > 1e-9 * wl; ++it) {
            const double wm = std::sqrt(wl * wh);
            const double v = log_mag(wm);
            if (v == 0.0) {
                wl = wm;
                wh = wm;
                break;
            }
            if ((v > 0.0) == rising)
                wh = wm;
            else
                wl = wm;
        }
        push(std::sqrt(wl * wh));
    }
    return report;
}

double gain_reduction_at_mode(const FrequencyGrid& grid, const std::vector<double>& open_mag,
                              const std::vector<double>& closed_mag, double mode_freq,
                              double search_band) {
    if (open_mag.size() != grid.size() || closed_mag.size() != grid.size())
        throw Error("gain_reduction: profiles must match the grid");
    if (mode_freq <= 0.0 || search_band <= 0.0) throw Error("gain_reduction: invalid band");
    double open_peak = 0.0, closed_peak = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double w = grid.points[i];
        if (w < mode_freq * (1.0 - search_band) || w > mode_freq * (1.0 + search_band)) continue;
        open_peak = any ? std::max(open_peak, open_mag[i]) : open_mag[i];
        closed_peak = any ? std::max(closed_peak, closed_mag[i]) : closed_mag[i];
        any = true;
    }
    if (!any) throw Error("gain_reduction: search band lies outside the grid");
    if (open_peak <= 0.0 || closed_peak <= 0.0)
        throw Error("gain_reduction: profiles must be positive in the band");
    return 20.0 * std::log10(open_peak / closed_peak);
}

}  // namespace mudamp
