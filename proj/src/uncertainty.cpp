#include "mudamp/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "mudamp/nelder_mead.hpp"

namespace mudamp {

namespace {

const char* channel_names[4] = {"d1", "d2", "n1", "n2"};

void check_coefficient(const UncertainCoefficient& c, const char* what) {
    if (!(c.mean > 0.0)) throw Error(std::string("uncertainty: ") + what + " mean must be positive");
    if (!(c.radius >= 0.0) || c.radius >= 1.0)
        throw Error(std::string("uncertainty: ") + what + " relative radius must lie in [0, 1)");
}

void validate_stats(const ModePairStats& s) {
    check_coefficient(s.d1, "d1");
    check_coefficient(s.d2, "d2");
    if (s.n1.has_value() != s.n2.has_value())
        throw Error("uncertainty: a mode numerator needs both n1 and n2 statistics");
    if (s.n1) {
        check_coefficient(*s.n1, "n1");
        check_coefficient(*s.n2, "n2");
    }
}

void check_delta(double d, const char* what) {
    if (!(std::abs(d) <= 1.0))
        throw Error(std::string("uncertainty: ") + what + " delta outside [-1, 1]");
}

double perturbed(const UncertainCoefficient& c, double delta) {
    return c.mean * (1.0 + c.radius * delta);
}

// Active-channel mask of one mode for a variant (before the presence filter).
std::array<bool, 4> variant_mask(Variant v, int mode) {
    std::array<bool, 4> m{};
    if (v == Variant::M11 && mode == 0) {
        m[int(Channel::D1)] = m[int(Channel::D2)] = true;
    } else if (v == Variant::M31) {
        if (mode == 0) m[int(Channel::D1)] = m[int(Channel::D2)] = true;
        if (mode == 2 || mode == 3) m.fill(true);
    }
    return m;
}

int variant_min_modes(Variant v) {
    switch (v) {
        case Variant::M01: return 1;
        case Variant::M11: return 1;
        case Variant::M31: return 4;
    }
    return 1;
}

RationalTF perturbed_chain_tf(const UncertainPlant& plant,
                              const std::vector<ModeDeltas>& per_mode) {
    RationalTF chain = plant.actuator;
    for (std::size_t j = 0; j < plant.modes.size(); ++j)
        chain = series(chain, perturbed_mode_tf(plant.modes[j].stats, per_mode[j]));
    return chain;
}

std::vector<ModeDeltas> scatter_deltas(const UncertainPlant& plant,
                                       const std::vector<ChannelRef>& channels,
                                       const std::vector<double>& flat) {
    std::vector<ModeDeltas> per_mode(plant.modes.size(), ModeDeltas{});
    for (std::size_t i = 0; i < channels.size(); ++i)
        per_mode[channels[i].mode][int(channels[i].channel)] = flat[i];
    return per_mode;
}

}  // namespace

RationalTF ModePairStats::nominal_tf() const {
    validate_stats(*this);
    std::vector<double> num = {1.0};
    if (n1) num = {1.0, n1->mean, n2->mean};
    return RationalTF(std::move(num), {1.0, d1.mean, d2.mean});
}

ModePair ModePairStats::nominal_mode() const {
    validate_stats(*this);
    ModePair m;
    m.pole_freq = 1.0 / std::sqrt(d2.mean);
    m.pole_damping = 0.5 * d1.mean * m.pole_freq;
    if (n1) {
        m.zero_freq = 1.0 / std::sqrt(n2->mean);
        m.zero_damping = 0.5 * n1->mean * *m.zero_freq;
    }
    return m;
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::M01: return "m01";
        case Variant::M11: return "m11";
        case Variant::M31: return "m31";
    }
    throw Error("variant_name: unknown variant");
}

Variant variant_from_name(const std::string& name) {
    std::string s;
    for (char c : name) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (s == "m01") return Variant::M01;
    if (s == "m11") return Variant::M11;
    if (s == "m31") return Variant::M31;
    throw Error("unknown uncertainty variant '" + name + "' (expected m01, m11 or m31)");
}

std::string ChannelRef::label() const {
    return "m" + std::to_string(mode + 1) + "." + channel_names[int(channel)];
}

std::vector<ChannelRef> UncertainPlant::active_channels() const {
    std::vector<ChannelRef> out;
    for (std::size_t j = 0; j < modes.size(); ++j)
        for (int c = 0; c < 4; ++c)
            if (modes[j].active[c]) out.push_back({int(j), Channel(c)});
    return out;
}

RationalTF UncertainPlant::nominal_tf() const {
    RationalTF g = actuator;
    for (const auto& b : modes) g = series(g, b.stats.nominal_tf());
    g.delay += delay_s;
    return g;
}

UncertainCoefficient relative_radii(const std::vector<double>& samples) {
    if (samples.empty()) throw Error("relative_radii: empty sample set");
    double lo = samples[0], hi = samples[0], sum = 0.0;
    for (double v : samples) {
        if (!(v > 0.0)) throw Error("relative_radii: coefficient samples must be positive");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
    }
    UncertainCoefficient c;
    c.mean = sum / double(samples.size());
    c.radius = (hi - lo) / (2.0 * c.mean);
    if (c.radius >= 1.0)
        throw Error("relative_radii: spread exceeds twice the mean; perturbed coefficients "
                    "would change sign");
    return c;
}

StructuredWeightSet structured_weights(const ModePairStats& stats) {
    validate_stats(stats);
    StructuredWeightSet ws;
    const std::vector<double> dbar = {1.0, stats.d1.mean, stats.d2.mean};
    if (stats.d1.radius > 0.0) {
        ws.present[int(Channel::D1)] = true;
        ws.weight[int(Channel::D1)] =
            RationalTF({0.0, -stats.d1.mean * stats.d1.radius}, dbar);
    }
    if (stats.d2.radius > 0.0) {
        ws.present[int(Channel::D2)] = true;
        ws.weight[int(Channel::D2)] =
            RationalTF({0.0, 0.0, -stats.d2.mean * stats.d2.radius}, dbar);
    }
    if (stats.n1) {
        const std::vector<double> nbar = {1.0, stats.n1->mean, stats.n2->mean};
        if (stats.n1->radius > 0.0) {
            ws.present[int(Channel::N1)] = true;
            ws.weight[int(Channel::N1)] =
                RationalTF({0.0, stats.n1->mean * stats.n1->radius}, nbar);
        }
        if (stats.n2->radius > 0.0) {
            ws.present[int(Channel::N2)] = true;
            ws.weight[int(Channel::N2)] =
                RationalTF({0.0, 0.0, stats.n2->mean * stats.n2->radius}, nbar);
        }
    }
    return ws;
}

RationalTF perturbed_mode_tf(const ModePairStats& stats, const ModeDeltas& delta) {
    validate_stats(stats);
    check_delta(delta[int(Channel::D1)], "d1");
    check_delta(delta[int(Channel::D2)], "d2");
    std::vector<double> num = {1.0};
    if (stats.n1) {
        check_delta(delta[int(Channel::N1)], "n1");
        check_delta(delta[int(Channel::N2)], "n2");
        num = {1.0, perturbed(*stats.n1, delta[int(Channel::N1)]),
               perturbed(*stats.n2, delta[int(Channel::N2)])};
    }
    return RationalTF(std::move(num),
                      {1.0, perturbed(stats.d1, delta[int(Channel::D1)]),
                       perturbed(stats.d2, delta[int(Channel::D2)])});
}

RationalTF lft_mode_tf(const ModePairStats& stats, const StructuredWeightSet& weights,
                       const ModeDeltas& delta) {
    validate_stats(stats);
    for (int c = 0; c < 4; ++c)
        if (weights.present[c]) check_delta(delta[c], channel_names[c]);

    // Denominator factor (1 - sum delta_d w_d)^{-1}; the D weights share Dbar.
    const std::vector<double> dbar = {1.0, stats.d1.mean, stats.d2.mean};
    std::vector<double> inv_num = dbar;
    for (Channel c : {Channel::D1, Channel::D2}) {
        if (!weights.present[int(c)]) continue;
        inv_num = poly_add(inv_num,
                           poly_scale(weights.weight[int(c)].num, -delta[int(c)]));
    }
    const RationalTF inverse(dbar, poly_trim(inv_num));

    // Numerator factor 1 + sum delta_n w_n over the shared Nbar.
    RationalTF mult = RationalTF::constant(1.0);
    if (stats.n1) {
        const std::vector<double> nbar = {1.0, stats.n1->mean, stats.n2->mean};
        std::vector<double> mult_num = nbar;
        for (Channel c : {Channel::N1, Channel::N2}) {
            if (!weights.present[int(c)]) continue;
            mult_num = poly_add(mult_num,
                                poly_scale(weights.weight[int(c)].num, delta[int(c)]));
        }
        mult = RationalTF(poly_trim(mult_num), nbar);
    }
    return series(series(stats.nominal_tf(), inverse), mult);
}

std::vector<double> relative_error(const std::vector<Complex>& measured,
                                   const std::vector<Complex>& model) {
    if (measured.size() != model.size())
        throw Error("relative_error: measured and model lengths differ");
    std::vector<double> out(measured.size());
    for (std::size_t k = 0; k < measured.size(); ++k) {
        const double ref = std::abs(model[k]);
        if (ref < 1e-300)
            throw Error("relative_error: model response vanished at index " + std::to_string(k));
        out[k] = std::abs(measured[k] - model[k]) / ref;
    }
    return out;
}

std::vector<double> envelope_over_set(const std::vector<std::vector<double>>& errors) {
    if (errors.empty()) throw Error("envelope_over_set: no members");
    std::vector<double> out = errors[0];
    for (const auto& e : errors) {
        if (e.size() != out.size())
            throw Error("envelope_over_set: member lengths differ");
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::max(out[k], e[k]);
    }
    return out;
}

UnstructuredWeight fit_unstructured_weight(const FrequencyGrid& grid,
                                           const std::vector<double>& envelope, int order,
                                           double margin) {
    if (envelope.size() != grid.size())
        throw Error("fit_unstructured_weight: envelope length does not match the grid");
    if (order != 0 && order != 2 && order != 4 && order != 6)
        throw Error("fit_unstructured_weight: order must be 0, 2, 4 or 6");
    if (!(margin >= 0.0)) throw Error("fit_unstructured_weight: margin must be >= 0");
    for (double e : envelope)
        if (!std::isfinite(e) || e < 0.0)
            throw Error("fit_unstructured_weight: envelope values must be finite and >= 0");

    UnstructuredWeight out;
    const std::size_t n = grid.size();
    const auto& w = grid.points;
    std::vector<double> logt(n);
    for (std::size_t k = 0; k < n; ++k) logt[k] = std::log10(std::max(envelope[k], out.floor));

    if (order == 0) {
        double mean = 0.0;
        for (double v : logt) mean += v;
        mean /= double(n);
        out.weight = RationalTF::constant(std::pow(10.0, mean));
        double rss = 0.0;
        for (double v : logt) rss += (v - mean) * (v - mean);
        out.rms_log10 = std::sqrt(rss / double(n));
    } else {
        // k * product of biquad sections, each DC-normalized so the gain
        // parameter stays interpretable; all corners and dampings in log10.
        const int m = order / 2;
        const int dim = 1 + 4 * m;
        Eigen::VectorXd lo(dim), hi(dim), x0(dim);
        const double lmin = *std::min_element(logt.begin(), logt.end());
        const double lmax = *std::max_element(logt.begin(), logt.end());
        double lmean = 0.0;
        for (double v : logt) lmean += v;
        lmean /= double(n);
        const double lwlo = std::log10(w.front()) - 0.5;
        const double lwhi = std::log10(w.back()) + 0.5;
        lo[0] = lmin - 3.0;
        hi[0] = lmax + 3.0;
        x0[0] = lmean;
        for (int i = 0; i < m; ++i) {
            const int b = 1 + 4 * i;
            const double frac = (i + 0.5) / double(m);
            const double lwc = std::log10(w.front()) +
                               frac * (std::log10(w.back()) - std::log10(w.front()));
            lo[b + 0] = lwlo; hi[b + 0] = lwhi; x0[b + 0] = lwc;
            lo[b + 1] = std::log10(0.05); hi[b + 1] = std::log10(2.5); x0[b + 1] = std::log10(0.7);
            lo[b + 2] = lwlo; hi[b + 2] = lwhi; x0[b + 2] = lwc;
            lo[b + 3] = std::log10(0.05); hi[b + 3] = std::log10(2.5); x0[b + 3] = std::log10(0.2);
        }

        const auto log_mag2 = [](double x, double z) {
            const double a = 1.0 - x * x, bq = 2.0 * z * x;
            return std::max(a * a + bq * bq, 1e-300);
        };
        const auto objective = [&](const Eigen::VectorXd& th) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                double lv = th[0];
                for (int i = 0; i < m; ++i) {
                    const int b = 1 + 4 * i;
                    const double xz = w[k] / std::pow(10.0, th[b + 0]);
                    const double xp = w[k] / std::pow(10.0, th[b + 2]);
                    lv += 0.5 * std::log10(log_mag2(xz, std::pow(10.0, th[b + 1])) /
                                           log_mag2(xp, std::pow(10.0, th[b + 3])));
                }
                const double d = lv - logt[k];
                acc += d * d;
            }
            return acc / double(n);
        };

        NmOptions opt;
        opt.max_evals = 1500 * m;
        opt.restarts = 4;
        opt.seed = 1234;
        opt.init_step_rel = 0.15;
        const NmResult res = nelder_mead_bounded(objective, lo, hi, x0, opt);

        if (!std::isfinite(res.f)) {
            double peak = 0.0;
            for (std::size_t k = 0; k < n; ++k) peak = std::max(peak, std::max(envelope[k], out.floor));
            out.weight = RationalTF::constant(peak * (1.0 + margin));
            out.fallback = true;
            double rss = 0.0;
            const double lp = std::log10(peak * (1.0 + margin));
            for (double v : logt) rss += (v - lp) * (v - lp);
            out.rms_log10 = std::sqrt(rss / double(n));
        } else {
            std::vector<double> num = {std::pow(10.0, res.x[0])};
            std::vector<double> den = {1.0};
            for (int i = 0; i < m; ++i) {
                const int b = 1 + 4 * i;
                const double wz = std::pow(10.0, res.x[b + 0]);
                const double zz = std::pow(10.0, res.x[b + 1]);
                const double wp = std::pow(10.0, res.x[b + 2]);
                const double zp = std::pow(10.0, res.x[b + 3]);
                num = poly_mul(num, {1.0, 2.0 * zz / wz, 1.0 / (wz * wz)});
                den = poly_mul(den, {1.0, 2.0 * zp / wp, 1.0 / (wp * wp)});
            }
            out.weight = RationalTF(std::move(num), std::move(den));
            out.rms_log10 = std::sqrt(res.f);
        }
    }

    // Coverage scaling: |W| >= envelope * (1 + margin) everywhere is a hard
    // postcondition; the floor only shapes the fit target.
    double c = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double mag = std::abs(freq_point(out.weight, w[k]));
        if (envelope[k] > 0.0) c = std::max(c, envelope[k] * (1.0 + margin) / mag);
    }
    if (c > 1.0) c *= 1.0 + 1e-12;
    out.scale = c;
    if (c != 1.0) out.weight.num = poly_scale(out.weight.num, c);
    for (int pass = 0; pass < 50; ++pass) {
        bool covered = true;
        for (std::size_t k = 0; k < n && covered; ++k)
            covered = std::abs(freq_point(out.weight, w[k])) >= envelope[k];
        if (covered) break;
        out.weight.num = poly_scale(out.weight.num, 1.0 + 1e-9);
        out.scale *= 1.0 + 1e-9;
    }
    return out;
}

UncertainPlant assemble_uncertain_plant(const std::vector<ModePairStats>& stats,
                                        const RationalTF& actuator, double delay_s, Variant variant,
                                        const FrequencyGrid& grid,
                                        const std::vector<std::vector<Complex>>& measured,
                                        const AssembleOptions& options) {
    if (stats.empty()) throw Error("assemble_uncertain_plant: no mode statistics");
    if (int(stats.size()) < variant_min_modes(variant))
        throw Error("assemble_uncertain_plant: variant " + variant_name(variant) +
                    " references mode " + std::to_string(variant_min_modes(variant)) +
                    " but only " + std::to_string(stats.size()) + " modes were supplied");
    if (!(delay_s >= 0.0)) throw Error("assemble_uncertain_plant: delay must be >= 0");
    if (options.residual_samples < 1)
        throw Error("assemble_uncertain_plant: residual_samples must be >= 1");
    if (measured.empty()) throw Error("assemble_uncertain_plant: no measured responses");
    for (const auto& row : measured)
        if (row.size() != grid.size())
            throw Error("assemble_uncertain_plant: measured response length does not match "
                        "the grid");

    UncertainPlant plant;
    plant.actuator = actuator;
    plant.delay_s = delay_s;
    plant.variant = variant;
    for (std::size_t j = 0; j < stats.size(); ++j) {
        ModeBlock block;
        block.stats = stats[j];
        block.weights = structured_weights(stats[j]);
        const auto mask = variant_mask(variant, int(j));
        for (int c = 0; c < 4; ++c) block.active[c] = mask[c] && block.weights.present[c];
        plant.modes.push_back(std::move(block));
    }

    // Residual of each member against the closest sampled structured
    // response; the unstructured weight must cover the worst member.
    const auto channels = plant.active_channels();
    const std::size_t kch = channels.size();
    std::vector<std::vector<double>> deltas;
    deltas.emplace_back(kch, 0.0);
    for (std::size_t i = 0; i < kch; ++i) {
        for (double sgn : {1.0, -1.0}) {
            std::vector<double> d(kch, 0.0);
            d[i] = sgn;
            deltas.push_back(std::move(d));
        }
    }
    if (kch > 0 && kch <= 12 && (std::size_t(1) << kch) <= std::size_t(options.residual_samples)) {
        for (std::size_t bits = 0; bits < (std::size_t(1) << kch); ++bits) {
            std::vector<double> d(kch);
            for (std::size_t i = 0; i < kch; ++i) d[i] = (bits >> i) & 1 ? 1.0 : -1.0;
            deltas.push_back(std::move(d));
        }
    }
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    while (kch > 0 && deltas.size() < std::size_t(options.residual_samples)) {
        std::vector<double> d(kch);
        for (auto& v : d) v = unit(rng);
        deltas.push_back(std::move(d));
    }

    std::vector<std::vector<Complex>> sampled;
    sampled.reserve(deltas.size());
    for (const auto& d : deltas) {
        RationalTF chain = perturbed_chain_tf(plant, scatter_deltas(plant, channels, d));
        chain.delay += delay_s;
        sampled.push_back(freq_response(chain, grid));
    }

    std::vector<std::vector<double>> member_err;
    member_err.reserve(measured.size());
    for (const auto& meas : measured) {
        std::vector<double> best(grid.size(), std::numeric_limits<double>::infinity());
        for (const auto& resp : sampled) {
            const auto e = relative_error(meas, resp);
            for (std::size_t k = 0; k < e.size(); ++k) best[k] = std::min(best[k], e[k]);
        }
        member_err.push_back(std::move(best));
    }
    const auto env = envelope_over_set(member_err);
    plant.unstructured = fit_unstructured_weight(grid, env, options.fit_order, options.fit_margin);
    return plant;
}

std::vector<Complex> sample_uncertain(const UncertainPlant& plant, const DeltaSample& delta,
                                      const FrequencyGrid& grid) {
    const auto channels = plant.active_channels();
    if (delta.structured.size() != channels.size())
        throw Error("sample_uncertain: expected " + std::to_string(channels.size()) +
                    " structured deltas, got " + std::to_string(delta.structured.size()));
    for (double d : delta.structured) check_delta(d, "structured");
    if (!(std::abs(delta.unstructured) <= 1.0))
        throw Error("sample_uncertain: unstructured delta outside the unit disk");

    const std::size_t n = grid.size();
    std::vector<Complex> out(n, Complex(1.0, 0.0));

    // Per-mode factor g_j * (1 + sum delta_n w_n) / (1 - sum delta_d w_d),
    // evaluated through the weight responses.
    for (std::size_t j = 0; j < plant.modes.size(); ++j) {
        const auto& block = plant.modes[j];
        const auto g = freq_response(block.stats.nominal_tf(), grid);
        std::vector<Complex> mult(n, Complex(1.0, 0.0)), invp(n, Complex(1.0, 0.0));
        for (std::size_t i = 0; i < channels.size(); ++i) {
            if (channels[i].mode != int(j)) continue;
            const int c = int(channels[i].channel);
            const auto wr = freq_response(block.weights.weight[c], grid);
            const bool denom = c == int(Channel::D1) || c == int(Channel::D2);
            for (std::size_t k = 0; k < n; ++k) {
                if (denom)
                    invp[k] -= delta.structured[i] * wr[k];
                else
                    mult[k] += delta.structured[i] * wr[k];
            }
        }
        for (std::size_t k = 0; k < n; ++k) {
            if (std::abs(invp[k]) < 1e-12)
                throw Error("sample_uncertain: singular denominator factor at " +
                            std::to_string(grid.points[k]) + " rad/s");
            out[k] *= g[k] * mult[k] / invp[k];
        }
    }

    RationalTF act = plant.actuator;
    act.delay += plant.delay_s;
    const auto a = freq_response(act, grid);
    std::vector<Complex> wu;
    if (plant.unstructured) wu = freq_response(plant.unstructured->weight, grid);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] *= a[k];
        if (plant.unstructured) out[k] *= 1.0 + wu[k] * delta.unstructured;
    }
    return out;
}

EnvelopeBand envelope(const UncertainPlant& plant, const FrequencyGrid& grid, int n_random,
                      bool include_vertices, std::uint64_t seed, ExecMode exec) {
    if (n_random < 0) throw Error("envelope: n_random must be >= 0");
    const auto channels = plant.active_channels();
    const std::size_t kch = channels.size();

    std::vector<std::vector<double>> deltas;
    deltas.emplace_back(kch, 0.0);
    if (include_vertices && kch > 0) {
        const std::size_t count = std::size_t(1) << std::min<std::size_t>(kch, 12);
        for (std::size_t bits = 0; bits < count; ++bits) {
            std::vector<double> d(kch);
            for (std::size_t i = 0; i < kch; ++i) d[i] = (bits >> i) & 1 ? 1.0 : -1.0;
            deltas.push_back(std::move(d));
        }
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int r = 0; r < n_random && kch > 0; ++r) {
        std::vector<double> d(kch);
        for (auto& v : d) v = unit(rng);
        deltas.push_back(std::move(d));
    }

    std::vector<RationalTF> tfs;
    tfs.reserve(deltas.size());
    for (const auto& d : deltas)
        tfs.push_back(perturbed_chain_tf(plant, scatter_deltas(plant, channels, d)));

    std::vector<Complex> wu;
    if (plant.unstructured) wu = freq_response(plant.unstructured->weight, grid);

    EnvelopeBand band;
    band.min_db.assign(grid.size(), 0.0);
    band.max_db.assign(grid.size(), 0.0);
    parallel_for(grid.size(), exec, [&](std::size_t k) {
        const double omega = grid.points[k];
        double vmin = std::numeric_limits<double>::infinity(), vmax = 0.0;
        for (const auto& tf : tfs) {
            const double v = std::abs(freq_point(tf, omega));
            if (plant.unstructured) {
                // |1 + Wu delta| over the closed disk |delta| <= 1 spans
                // exactly [max(0, 1 - |Wu|), 1 + |Wu|]; for |Wu| > 1 the disk
                // contains the origin, so the band bottoms out at zero.
                const double a = std::abs(wu[k]);
                vmin = std::min(vmin, v * std::max(0.0, 1.0 - a));
                vmax = std::max(vmax, v * (1.0 + a));
            } else {
                vmin = std::min(vmin, v);
                vmax = std::max(vmax, v);
            }
        }
        band.min_db[k] = 20.0 * std::log10(std::max(vmin, 1e-12));
        band.max_db[k] = 20.0 * std::log10(std::max(vmax, 1e-12));
    });
    return band;
}

}  // namespace mudamp
