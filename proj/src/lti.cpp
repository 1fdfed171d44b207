#include "mudamp/lti.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mudamp {

std::vector<double> poly_trim(const std::vector<double>& a) {
    std::size_t n = a.size();
    while (n > 1 && a[n - 1] == 0.0) --n;
    return std::vector<double>(a.begin(), a.begin() + n);
}

std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) return {};
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

std::vector<double> poly_add(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(std::max(a.size(), b.size()), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
    return out;
}

std::vector<double> poly_scale(const std::vector<double>& a, double k) {
    std::vector<double> out = a;
    for (double& c : out) c *= k;
    return out;
}

Complex poly_eval(const std::vector<double>& c, Complex s) {
    Complex acc(0.0, 0.0);
    for (std::size_t i = c.size(); i-- > 0;) acc = acc * s + c[i];
    return acc;
}

namespace {

// Parlett-Reinsch style balancing with power-of-two scale factors.
void balance_in_place(Eigen::MatrixXd& a) {
    const int n = static_cast<int>(a.rows());
    for (int pass = 0; pass < 50; ++pass) {
        bool converged = true;
        for (int i = 0; i < n; ++i) {
            double r = 0.0, c = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(a(j, i));
                r += std::abs(a(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            const double s = c + r;
            double f = 1.0;
            while (c < r / 2.0) {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while (c >= r * 2.0) {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if (f != 1.0 && c + r < 0.95 * s) {
                converged = false;
                a.col(i) *= f;
                a.row(i) /= f;
            }
        }
        if (converged) break;
    }
}

}  // namespace

std::vector<Complex> poly_roots(const std::vector<double>& coeffs) {
    std::vector<double> c = poly_trim(coeffs);
    if (c.size() <= 1) return {};
    const int n = static_cast<int>(c.size()) - 1;
    const double lead = c[n];
    if (lead == 0.0) throw Error("poly_roots: zero polynomial");

    // Frequency scaling keeps companion entries near unit magnitude even for
    // resonances several decades above 1 rad/s.
    double alpha = 0.0;
    for (int k = 0; k < n; ++k) {
        double m = std::pow(std::abs(c[k] / lead), 1.0 / double(n - k));
        alpha = std::max(alpha, m);
    }
    if (alpha == 0.0) return std::vector<Complex>(n, Complex(0.0, 0.0));

    std::vector<double> b(n + 1);
    double scale = 1.0;
    for (int k = 0; k <= n; ++k) {
        b[k] = c[k] / lead * scale;  // coefficient of p^k for s = alpha*p
        scale *= alpha;
    }
    const double bn = b[n];
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
    for (int i = 0; i < n; ++i) comp(i, n - 1) = -b[i] / bn;
    balance_in_place(comp);

    Eigen::EigenSolver<Eigen::MatrixXd> solver(comp, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) throw Error("poly_roots: eigenvalue iteration failed");
    std::vector<Complex> roots(n);
    for (int i = 0; i < n; ++i) roots[i] = solver.eigenvalues()[i] * alpha;
    return roots;
}

RationalTF::RationalTF(std::vector<double> n, std::vector<double> d, double delay_s) {
    num = poly_trim(n);
    den = poly_trim(d);
    if (num.empty()) num = {0.0};
    if (den.empty() || den.back() == 0.0)
        throw Error("RationalTF: denominator must have a nonzero leading coefficient");
    if (delay_s < 0.0) throw Error("RationalTF: delay must be nonnegative");
    delay = delay_s;
}

RationalTF RationalTF::constant(double k) { return RationalTF({k}, {1.0}); }

FrequencyGrid::FrequencyGrid(std::vector<double> pts) : points(std::move(pts)) {
    if (points.empty()) throw Error("FrequencyGrid: empty grid");
    double prev = 0.0;
    for (double w : points) {
        if (!(w > 0.0)) throw Error("FrequencyGrid: frequencies must be positive");
        if (!(w > prev)) throw Error("FrequencyGrid: frequencies must be strictly increasing");
        prev = w;
    }
}

FrequencyGrid FrequencyGrid::log_spaced(double f_lo_hz, double f_hi_hz, int n) {
    if (!(f_lo_hz > 0.0) || !(f_hi_hz > f_lo_hz) || n < 2)
        throw Error("FrequencyGrid::log_spaced: need 0 < f_lo < f_hi and n >= 2");
    std::vector<double> pts(n);
    const double l0 = std::log10(f_lo_hz), l1 = std::log10(f_hi_hz);
    for (int i = 0; i < n; ++i) {
        double f = std::pow(10.0, l0 + (l1 - l0) * double(i) / double(n - 1));
        pts[i] = 2.0 * std::numbers::pi * f;
    }
    pts.front() = 2.0 * std::numbers::pi * f_lo_hz;
    pts.back() = 2.0 * std::numbers::pi * f_hi_hz;
    return FrequencyGrid(pts);
}

FrequencyGrid FrequencyGrid::log_spaced_with_clusters(double f_lo_hz, double f_hi_hz, int n,
                                                      const std::vector<double>& centers_hz,
                                                      int per_center, double span_rel) {
    FrequencyGrid base = log_spaced(f_lo_hz, f_hi_hz, n);
    std::vector<double> pts = base.points;
    for (double c : centers_hz) {
        if (!(c > 0.0)) throw Error("FrequencyGrid: cluster center must be positive");
        const double lo = std::log10(c * (1.0 - span_rel));
        const double hi = std::log10(c * (1.0 + span_rel));
        for (int i = 0; i < per_center; ++i) {
            double f = std::pow(10.0, lo + (hi - lo) * double(i) / double(std::max(1, per_center - 1)));
            if (f > f_lo_hz && f < f_hi_hz) pts.push_back(2.0 * std::numbers::pi * f);
        }
    }
    std::sort(pts.begin(), pts.end());
    std::vector<double> merged;
    for (double w : pts)
        if (merged.empty() || w > merged.back() * (1.0 + 1e-12)) merged.push_back(w);
    return FrequencyGrid(merged);
}

RationalTF tf_from_mode_pair(const ModePair& mode) {
    auto check = [](double freq, double damping, const char* what) {
        if (!(freq > 0.0)) throw Error(std::string("tf_from_mode_pair: ") + what + " frequency must be positive");
        if (!(damping > 0.0 && damping < 1.0))
            throw Error(std::string("tf_from_mode_pair: ") + what + " damping must lie in (0,1)");
    };
    check(mode.pole_freq, mode.pole_damping, "pole");
    std::vector<double> num{1.0};
    if (mode.zero_freq) {
        check(*mode.zero_freq, mode.zero_damping, "zero");
        const double z = *mode.zero_freq;
        num = {1.0, 2.0 * mode.zero_damping / z, 1.0 / (z * z)};
    }
    const double p = mode.pole_freq;
    std::vector<double> den{1.0, 2.0 * mode.pole_damping / p, 1.0 / (p * p)};
    return RationalTF(std::move(num), std::move(den));
}

RationalTF series(const RationalTF& a, const RationalTF& b) {
    return RationalTF(poly_mul(a.num, b.num), poly_mul(a.den, b.den), a.delay + b.delay);
}

RationalTF feedback(const RationalTF& plant, const RationalTF& controller) {
    if (controller.delay != 0.0)
        throw Error("feedback: controller delay unsupported; rationalize the plant delay instead");
    std::vector<double> num = poly_mul(plant.num, controller.den);
    std::vector<double> den =
        poly_add(poly_mul(plant.den, controller.den), poly_mul(plant.num, controller.num));
    den = poly_trim(den);
    if (den.size() == 1 && den[0] == 0.0) throw Error("feedback: closed-loop denominator vanished");
    return RationalTF(std::move(num), std::move(den), plant.delay);
}

Complex freq_point(const RationalTF& tf, double omega) {
    const Complex s(0.0, omega);
    const Complex d = poly_eval(tf.den, s);
    if (std::abs(d) < 1e-300)
        throw Error("freq_point: pole on the evaluation grid at omega = " + std::to_string(omega));
    Complex v = poly_eval(tf.num, s) / d;
    if (tf.delay != 0.0) v *= std::polar(1.0, -omega * tf.delay);
    return v;
}

std::vector<Complex> freq_response(const RationalTF& tf, const FrequencyGrid& grid) {
    std::vector<Complex> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = freq_point(tf, grid.points[i]);
    return out;
}

RationalTF pade_delay(double tau, int order) {
    if (tau < 0.0) throw Error("pade_delay: tau must be nonnegative");
    if (order < 1 || order > 3) throw Error("pade_delay: order must be 1, 2, or 3");
    if (tau == 0.0) return RationalTF::constant(1.0);
    std::vector<double> den;
    switch (order) {
        case 1: den = {1.0, tau / 2.0}; break;
        case 2: den = {1.0, tau / 2.0, tau * tau / 12.0}; break;
        default: den = {1.0, tau / 2.0, tau * tau / 10.0, tau * tau * tau / 120.0}; break;
    }
    std::vector<double> num = den;
    for (std::size_t k = 1; k < num.size(); k += 2) num[k] = -num[k];
    return RationalTF(std::move(num), std::move(den));
}

RationalTF rationalize_delay(const RationalTF& tf, int order) {
    if (tf.delay == 0.0) return tf;
    RationalTF core(tf.num, tf.den);
    return series(core, pade_delay(tf.delay, order));
}

StabilityReport is_stable(const RationalTF& tf) {
    if (tf.delay != 0.0)
        throw Error("is_stable: rationalize the delay before pole analysis");
    StabilityReport rep;
    rep.poles = poly_roots(tf.den);
    double max_mag = 0.0;
    for (const auto& p : rep.poles) max_mag = std::max(max_mag, std::abs(p));
    rep.margin_used = 1e-8 * std::max(1.0, max_mag);
    rep.stable = true;
    for (const auto& p : rep.poles)
        if (!(p.real() < -rep.margin_used)) rep.stable = false;
    return rep;
}

}  // namespace mudamp
