#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "mudamp/lti.hpp"
#include "mudamp/uncertainty.hpp"

using namespace mudamp;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

ModePairStats stats_mode(double fz_hz, double zz, double fp_hz, double zp,
                         double rn1 = 0.0, double rn2 = 0.0, double rd1 = 0.0,
                         double rd2 = 0.0) {
    ModePairStats s;
    const double wp = kTwoPi * fp_hz;
    s.d2 = {1.0 / (wp * wp), rd2};
    s.d1 = {2.0 * zp / wp, rd1};
    if (fz_hz > 0.0) {
        const double wz = kTwoPi * fz_hz;
        s.n2 = UncertainCoefficient{1.0 / (wz * wz), rn2};
        s.n1 = UncertainCoefficient{2.0 * zz / wz, rn1};
    }
    return s;
}

// Direct-substitution chain response: the oracle route for sample_uncertain.
std::vector<Complex> direct_chain(const std::vector<ModePairStats>& stats,
                                  const std::vector<ModeDeltas>& deltas,
                                  const RationalTF& actuator, double delay_s,
                                  const FrequencyGrid& grid) {
    RationalTF chain = actuator;
    for (std::size_t j = 0; j < stats.size(); ++j)
        chain = series(chain, perturbed_mode_tf(stats[j], deltas[j]));
    chain.delay += delay_s;
    return freq_response(chain, grid);
}

}  // namespace

TEST_CASE("relative_radii mean and half-spread") {
    const auto c = relative_radii({0.8e-6, 1.0e-6, 1.2e-6});
    CHECK(c.mean == doctest::Approx(1.0e-6).epsilon(1e-12));
    CHECK(c.radius == doctest::Approx(0.2).epsilon(1e-12));

    // Endpoint pair d2 = 1/w^2 at 179 Hz and 156 Hz. The relative radius
    // reduces to (179^2 - 156^2) / (179^2 + 156^2) = 7705 / 56377.
    const double w0 = kTwoPi * 179.0, w1 = kTwoPi * 156.0;
    const auto d2 = relative_radii({1.0 / (w0 * w0), 1.0 / (w1 * w1)});
    CHECK(d2.radius == doctest::Approx(7705.0 / 56377.0).epsilon(1e-12));

    const auto fixed = relative_radii({3.5, 3.5, 3.5});
    CHECK(fixed.mean == doctest::Approx(3.5));
    CHECK(fixed.radius == 0.0);

    CHECK_THROWS_AS((void)relative_radii({}), Error);
    CHECK_THROWS_AS((void)relative_radii({1.0, -2.0}), Error);
    CHECK_THROWS_AS((void)relative_radii({1.0, 0.0}), Error);
    // Spread exceeding twice the mean would allow sign flips downstream.
    CHECK_THROWS_AS((void)relative_radii({1.0, 1.0, 1000.0}), Error);
}

TEST_CASE("structured weights hit the relative radius at frequency extremes") {
    ModePairStats s;
    s.d2 = {3.2e-6, 0.1};
    s.d1 = {1.0e-4, 0.25};
    const auto ws = structured_weights(s);
    CHECK(ws.present[int(Channel::D1)]);
    CHECK(ws.present[int(Channel::D2)]);
    CHECK_FALSE(ws.present[int(Channel::N1)]);
    CHECK_FALSE(ws.present[int(Channel::N2)]);

    // s^2 channel saturates at its radius as w -> inf, vanishes at DC.
    const double hi = std::abs(freq_point(ws.weight[int(Channel::D2)], 1e9));
    CHECK(hi == doctest::Approx(0.1).epsilon(1e-4));
    CHECK(std::abs(freq_point(ws.weight[int(Channel::D2)], 0.0)) == 0.0);

    // s channel grows linearly from DC: |w_D1(jw)| ~ d1 * r * w.
    const double lo = std::abs(freq_point(ws.weight[int(Channel::D1)], 1e-3));
    CHECK(lo == doctest::Approx(1.0e-4 * 0.25 * 1e-3).epsilon(1e-3));
    CHECK(std::abs(freq_point(ws.weight[int(Channel::D1)], 0.0)) == 0.0);

    // D-channel weights carry a negative sign (inverse-multiplicative form):
    // at low frequency w_D1(jw) ~ -d1 r jw.
    const Complex v = freq_point(ws.weight[int(Channel::D1)], 1e-3);
    CHECK(v.imag() < 0.0);

    // Radius-zero channels are dropped.
    ModePairStats z = s;
    z.d1.radius = 0.0;
    CHECK_FALSE(structured_weights(z).present[int(Channel::D1)]);

    // A numerator needs both coefficient statistics.
    ModePairStats bad = s;
    bad.n1 = UncertainCoefficient{1e-3, 0.1};
    CHECK_THROWS_AS((void)structured_weights(bad), Error);
}

TEST_CASE("perturbed_mode_tf scales coefficients inside the box") {
    const auto s = stats_mode(256.0, 0.03, 264.0, 0.03, 0.04, 0.06, 0.10, 0.14);
    const ModeDeltas d = {0.5, -1.0, 0.25, 1.0};  // D1, D2, N1, N2
    const auto tf = perturbed_mode_tf(s, d);
    REQUIRE(tf.den.size() == 3);
    REQUIRE(tf.num.size() == 3);
    CHECK(tf.den[0] == 1.0);
    CHECK(tf.den[1] == doctest::Approx(s.d1.mean * (1.0 + 0.10 * 0.5)).epsilon(1e-15));
    CHECK(tf.den[2] == doctest::Approx(s.d2.mean * (1.0 - 0.14)).epsilon(1e-15));
    CHECK(tf.num[0] == 1.0);
    CHECK(tf.num[1] == doctest::Approx(s.n1->mean * (1.0 + 0.04 * 0.25)).epsilon(1e-15));
    CHECK(tf.num[2] == doctest::Approx(s.n2->mean * (1.0 + 0.06)).epsilon(1e-15));

    // delta = -1 on d2 raises the pole frequency by 1/sqrt(1 - r).
    auto s1 = stats_mode(0.0, 0.0, 179.0, 0.02, 0, 0, 0, 0.3166);
    const auto hi = perturbed_mode_tf(s1, {0.0, -1.0, 0.0, 0.0});
    const double ratio = std::sqrt(s1.d2.mean / hi.den[2]);
    CHECK(ratio == doctest::Approx(1.0 / std::sqrt(1.0 - 0.3166)).epsilon(1e-12));

    // Numerator-free mode keeps num = {1} whatever the N deltas say.
    const auto flat = perturbed_mode_tf(s1, {0.0, 0.0, 1.0, -1.0});
    REQUIRE(flat.num.size() == 1);
    CHECK(flat.num[0] == 1.0);

    CHECK_THROWS_AS((void)perturbed_mode_tf(s, {1.5, 0.0, 0.0, 0.0}), Error);
    CHECK_THROWS_AS((void)perturbed_mode_tf(s, {0.0, 0.0, 0.0, -1.01}), Error);
}

TEST_CASE("lft route equals direct substitution") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const auto grid = FrequencyGrid::log_spaced(1.0, 5000.0, 40);

    for (int trial = 0; trial < 100; ++trial) {
        const double fp = 50.0 * std::pow(20.0, u01(rng));
        const double fz = fp * (0.5 + 1.5 * u01(rng));
        const double zp = 0.005 + 0.095 * u01(rng);
        const double zz = 0.005 + 0.095 * u01(rng);
        const bool with_zero = trial % 4 != 0;
        const auto s = stats_mode(with_zero ? fz : 0.0, zz, fp, zp, 0.4 * u01(rng),
                                  0.4 * u01(rng), 0.4 * u01(rng), 0.4 * u01(rng));
        const auto ws = structured_weights(s);
        const ModeDeltas d = {unit(rng), unit(rng), unit(rng), unit(rng)};

        const auto direct = freq_response(perturbed_mode_tf(s, d), grid);
        const auto lft = freq_response(lft_mode_tf(s, ws, d), grid);
        for (std::size_t k = 0; k < grid.points.size(); ++k) {
            CHECK(std::abs(lft[k] - direct[k]) <= 1e-9 * std::abs(direct[k]));
        }
    }
}

TEST_CASE("relative_error and envelope_over_set") {
    const std::vector<Complex> meas = {{1.0, 1.0}, {3.0, 0.0}};
    const std::vector<Complex> model = {{1.0, 0.0}, {2.0, 0.0}};
    const auto e = relative_error(meas, model);
    REQUIRE(e.size() == 2);
    CHECK(e[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e[1] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS((void)relative_error(meas, {model[0]}), Error);
    CHECK_THROWS_AS((void)relative_error(meas, {model[0], Complex{0.0, 0.0}}), Error);

    const auto env = envelope_over_set({{1.0, 2.0}, {3.0, 0.5}});
    CHECK(env == std::vector<double>{3.0, 2.0});
    CHECK_THROWS_AS((void)envelope_over_set({}), Error);
    CHECK_THROWS_AS((void)envelope_over_set({{1.0}, {1.0, 2.0}}), Error);
}

TEST_CASE("fit_unstructured_weight constant and floor cases") {
    const auto grid = FrequencyGrid::log_spaced(1.0, 1000.0, 60);

    const std::vector<double> half(grid.points.size(), 0.5);
    const auto w = fit_unstructured_weight(grid, half, 0, 0.05);
    CHECK_FALSE(w.fallback);
    CHECK(w.floor == doctest::Approx(1e-4));
    // Constant fit lands on 0.5 exactly; the 5% margin scales it to 0.525.
    CHECK(w.scale == doctest::Approx(1.05).epsilon(1e-9));
    for (double f : {1.0, 30.0, 1000.0}) {
        CHECK(std::abs(freq_point(w.weight, kTwoPi * f)) ==
              doctest::Approx(0.525).epsilon(1e-9));
    }

    // An all-zero envelope falls back to the floor magnitude, unscaled.
    const std::vector<double> zero(grid.points.size(), 0.0);
    const auto wz = fit_unstructured_weight(grid, zero, 0, 0.05);
    CHECK(wz.scale == doctest::Approx(1.0));
    CHECK(std::abs(freq_point(wz.weight, kTwoPi * 10.0)) ==
          doctest::Approx(1e-4).epsilon(1e-9));

    CHECK_THROWS_AS((void)fit_unstructured_weight(grid, half, 3, 0.05), Error);
    CHECK_THROWS_AS((void)fit_unstructured_weight(grid, {0.5, 0.5}, 0, 0.05), Error);
    CHECK_THROWS_AS((void)fit_unstructured_weight(grid, half, 0, -0.1), Error);
}

TEST_CASE("fit_unstructured_weight covers a peaked envelope with a stable shape") {
    const auto grid = FrequencyGrid::log_spaced(10.0, 2000.0, 80);
    std::vector<double> env(grid.points.size(), 0.05);
    // Smooth bump around 200 Hz peaking at 1.0.
    for (std::size_t k = 0; k < grid.points.size(); ++k) {
        const double x = std::log10(grid.points[k] / (kTwoPi * 200.0));
        env[k] = std::max(0.05, std::exp(-8.0 * x * x));
    }

    for (int order : {2, 4}) {
        const auto w = fit_unstructured_weight(grid, env, order, 0.05);
        CHECK_FALSE(w.fallback);
        for (std::size_t k = 0; k < grid.points.size(); ++k) {
            const double mag = std::abs(freq_point(w.weight, grid.points[k]));
            CHECK(mag >= env[k]);  // hard coverage postcondition
        }
        for (const Complex& p : poly_roots(w.weight.den)) CHECK(p.real() < 0.0);
        for (const Complex& z : poly_roots(w.weight.num)) CHECK(z.real() < 0.0);
        // The fit should not grossly overbound the flat shelf far away.
        const double shelf = std::abs(freq_point(w.weight, grid.points.front()));
        CHECK(shelf <= 1.0);
    }
}

TEST_CASE("assemble_uncertain_plant selects variant channels") {
    const std::vector<ModePairStats> family = {
        stats_mode(0.0, 0.0, 179.0, 0.02, 0, 0, 0.10, 0.14),
        stats_mode(256.0, 0.03, 264.0, 0.03, 0.03, 0.05, 0.04, 0.06),
        stats_mode(330.0, 0.015, 350.0, 0.015, 0.04, 0.07, 0.05, 0.07),
        stats_mode(860.0, 0.015, 905.0, 0.015, 0.05, 0.08, 0.06, 0.08),
    };
    const auto act = tf_from_mode_pair({{}, 0.0, kTwoPi * 2000.0, 0.7});
    const auto grid = FrequencyGrid::log_spaced(5.0, 2000.0, 50);

    RationalTF mean_chain = act;
    for (const auto& s : family) mean_chain = series(mean_chain, s.nominal_tf());
    mean_chain.delay += 90e-6;
    const auto nominal = freq_response(mean_chain, grid);
    const std::vector<std::vector<Complex>> measured = {nominal};

    const auto m01 = assemble_uncertain_plant(family, act, 90e-6, Variant::M01, grid, measured);
    CHECK(m01.active_channels().empty());
    REQUIRE(m01.unstructured.has_value());

    const auto m11 = assemble_uncertain_plant(family, act, 90e-6, Variant::M11, grid, measured);
    const auto ch11 = m11.active_channels();
    REQUIRE(ch11.size() == 2);
    CHECK(ch11[0].mode == 0);
    CHECK(ch11[0].channel == Channel::D1);
    CHECK(ch11[0].label() == "m1.d1");
    CHECK(ch11[1].channel == Channel::D2);

    const auto m31 = assemble_uncertain_plant(family, act, 90e-6, Variant::M31, grid, measured);
    const auto ch31 = m31.active_channels();
    REQUIRE(ch31.size() == 10);
    CHECK(ch31[0].label() == "m1.d1");
    CHECK(ch31[1].label() == "m1.d2");
    CHECK(ch31[2].label() == "m3.d1");
    CHECK(ch31[3].label() == "m3.d2");
    CHECK(ch31[4].label() == "m3.n1");
    CHECK(ch31[5].label() == "m3.n2");
    CHECK(ch31[6].label() == "m4.d1");
    CHECK(ch31[9].label() == "m4.n2");

    // Nominal chain matches the mean-coefficient product.
    const auto got = freq_response(m31.nominal_tf(), grid);
    for (std::size_t k = 0; k < grid.points.size(); ++k)
        CHECK(std::abs(got[k] - nominal[k]) <= 1e-12 * std::abs(nominal[k]));

    // Radius-zero channels drop out of the variant mask.
    auto degraded = family;
    degraded[2].n1->radius = 0.0;
    degraded[2].n2->radius = 0.0;
    const auto m31d =
        assemble_uncertain_plant(degraded, act, 90e-6, Variant::M31, grid, measured);
    CHECK(m31d.active_channels().size() == 8);

    // M31 needs four modes.
    const std::vector<ModePairStats> three(family.begin(), family.begin() + 3);
    CHECK_THROWS_AS((void)assemble_uncertain_plant(three, act, 90e-6, Variant::M31, grid,
                                                   measured),
                    Error);
    // Measured rows must match the grid.
    CHECK_THROWS_AS((void)assemble_uncertain_plant(family, act, 90e-6, Variant::M01, grid,
                                                   {{nominal[0]}}),
                    Error);
}

TEST_CASE("unstructured weight covers the residual of off-nominal members") {
    const std::vector<ModePairStats> family = {
        stats_mode(0.0, 0.0, 179.0, 0.02, 0, 0, 0.10, 0.14),
        stats_mode(256.0, 0.03, 264.0, 0.03, 0.03, 0.05, 0.04, 0.06),
    };
    const auto act = tf_from_mode_pair({{}, 0.0, kTwoPi * 2000.0, 0.7});
    const auto grid = FrequencyGrid::log_spaced(5.0, 2000.0, 60);

    std::vector<std::vector<Complex>> measured;
    std::vector<std::vector<double>> member_err;
    const std::vector<ModeDeltas> zero(2, ModeDeltas{});
    const auto nominal = direct_chain(family, zero, act, 90e-6, grid);
    for (double d : {-0.8, 0.0, 0.8}) {
        std::vector<ModeDeltas> dl(2, ModeDeltas{});
        dl[0][int(Channel::D2)] = d;
        dl[0][int(Channel::D1)] = 0.5 * d;
        measured.push_back(direct_chain(family, dl, act, 90e-6, grid));
        member_err.push_back(relative_error(measured.back(), nominal));
    }

    // M01 measures everything against the nominal alone, so its weight must
    // dominate the hand-computed relative errors.
    const auto m01 = assemble_uncertain_plant(family, act, 90e-6, Variant::M01, grid, measured);
    REQUIRE(m01.unstructured.has_value());
    const auto env = envelope_over_set(member_err);
    for (std::size_t k = 0; k < grid.points.size(); ++k) {
        const double mag = std::abs(freq_point(m01.unstructured->weight, grid.points[k]));
        CHECK(mag + 1e-12 >= env[k]);
    }
}

TEST_CASE("sample_uncertain equals the direct perturbed chain") {
    const std::vector<ModePairStats> family = {
        stats_mode(0.0, 0.0, 179.0, 0.02, 0, 0, 0.10, 0.14),
        stats_mode(256.0, 0.03, 264.0, 0.03, 0.03, 0.05, 0.04, 0.06),
        stats_mode(330.0, 0.015, 350.0, 0.015, 0.04, 0.07, 0.05, 0.07),
        stats_mode(860.0, 0.015, 905.0, 0.015, 0.05, 0.08, 0.06, 0.08),
    };
    const auto act = tf_from_mode_pair({{}, 0.0, kTwoPi * 2000.0, 0.7});
    const auto grid = FrequencyGrid::log_spaced(5.0, 2000.0, 25);
    const std::vector<std::vector<Complex>> measured = {
        direct_chain(family, std::vector<ModeDeltas>(4), act, 90e-6, grid)};

    const auto plant =
        assemble_uncertain_plant(family, act, 90e-6, Variant::M31, grid, measured);
    const auto channels = plant.active_channels();
    REQUIRE(channels.size() == 10);
    const auto wu = freq_response(plant.unstructured->weight, grid);

    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        DeltaSample ds;
        std::vector<ModeDeltas> per_mode(4, ModeDeltas{});
        for (const auto& ch : channels) {
            const double v = unit(rng);
            ds.structured.push_back(v);
            per_mode[ch.mode][int(ch.channel)] = v;
        }
        const double phase = 3.14159 * unit(rng);
        const double mod = 0.5 + 0.5 * std::abs(unit(rng));
        ds.unstructured = Complex(mod * std::cos(phase), mod * std::sin(phase));

        const auto got = sample_uncertain(plant, ds, grid);
        const auto base = direct_chain(family, per_mode, act, 90e-6, grid);
        for (std::size_t k = 0; k < grid.points.size(); ++k) {
            const Complex want = base[k] * (1.0 + wu[k] * ds.unstructured);
            CHECK(std::abs(got[k] - want) <= 1e-9 * std::abs(want));
        }
    }

    DeltaSample bad;
    bad.structured.assign(9, 0.0);
    CHECK_THROWS_AS((void)sample_uncertain(plant, bad, grid), Error);
    bad.structured.assign(10, 0.0);
    bad.structured[3] = 1.2;
    CHECK_THROWS_AS((void)sample_uncertain(plant, bad, grid), Error);
    bad.structured[3] = 0.0;
    bad.unstructured = Complex(1.2, 0.0);
    CHECK_THROWS_AS((void)sample_uncertain(plant, bad, grid), Error);
}

TEST_CASE("envelope band properties") {
    const std::vector<ModePairStats> family = {
        stats_mode(0.0, 0.0, 179.0, 0.02, 0, 0, 0.10, 0.14),
        stats_mode(256.0, 0.03, 264.0, 0.03, 0.03, 0.05, 0.04, 0.06),
    };
    const auto act = tf_from_mode_pair({{}, 0.0, kTwoPi * 2000.0, 0.7});
    const auto grid = FrequencyGrid::log_spaced(5.0, 2000.0, 50);
    const std::vector<std::vector<Complex>> measured = {
        direct_chain(family, std::vector<ModeDeltas>(2), act, 90e-6, grid)};

    const auto plant =
        assemble_uncertain_plant(family, act, 90e-6, Variant::M11, grid, measured);
    const auto band = envelope(plant, grid, 32, true, 11, ExecMode::Serial);
    REQUIRE(band.min_db.size() == grid.points.size());
    REQUIRE(band.max_db.size() == grid.points.size());

    // Nominal response lies inside the band.
    const auto nominal = freq_response(plant.nominal_tf(), grid);
    for (std::size_t k = 0; k < grid.points.size(); ++k) {
        const double ndb = 20.0 * std::log10(std::abs(nominal[k]));
        CHECK(band.min_db[k] <= ndb + 1e-9);
        CHECK(band.max_db[k] >= ndb - 1e-9);
    }

    // Every vertex response (zero unstructured part) lies inside the band.
    const auto channels = plant.active_channels();
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        DeltaSample ds;
        for (std::size_t i = 0; i < channels.size(); ++i)
            ds.structured.push_back(rng() % 2 ? 1.0 : -1.0);
        const auto r = sample_uncertain(plant, ds, grid);
        for (std::size_t k = 0; k < grid.points.size(); ++k) {
            const double rdb = 20.0 * std::log10(std::abs(r[k]));
            CHECK(band.min_db[k] <= rdb + 1e-9);
            CHECK(band.max_db[k] >= rdb - 1e-9);
        }
    }

    // Deterministic, and identical between serial and parallel execution.
    const auto again = envelope(plant, grid, 32, true, 11, ExecMode::Serial);
    const auto par = envelope(plant, grid, 32, true, 11, ExecMode::Parallel);
    CHECK(band.min_db == again.min_db);
    CHECK(band.max_db == again.max_db);
    CHECK(band.min_db == par.min_db);
    CHECK(band.max_db == par.max_db);

    // With all radii zeroed and the envelope at the floor, the band collapses
    // to the unstructured disk width: (1 + f) / (1 - f) in linear magnitude.
    std::vector<ModePairStats> fixed = family;
    for (auto& s : fixed) {
        s.d1.radius = s.d2.radius = 0.0;
        if (s.n1) s.n1->radius = 0.0;
        if (s.n2) s.n2->radius = 0.0;
    }
    const std::vector<std::vector<Complex>> nom_only = {
        direct_chain(fixed, std::vector<ModeDeltas>(2), act, 90e-6, grid)};
    const auto tight =
        assemble_uncertain_plant(fixed, act, 90e-6, Variant::M11, grid, nom_only);
    CHECK(tight.active_channels().empty());
    const auto tight_band = envelope(tight, grid, 8, true, 11, ExecMode::Serial);
    const double width_cap = 20.0 * std::log10((1.0 + 1.1e-4) / (1.0 - 1.1e-4));
    for (std::size_t k = 0; k < grid.points.size(); ++k) {
        const double width = tight_band.max_db[k] - tight_band.min_db[k];
        CHECK(width >= 0.0);
        CHECK(width <= width_cap);
    }
}

TEST_CASE("variant names round-trip") {
    CHECK(variant_name(Variant::M01) == "m01");
    CHECK(variant_name(Variant::M11) == "m11");
    CHECK(variant_name(Variant::M31) == "m31");
    CHECK(variant_from_name("m01") == Variant::M01);
    CHECK(variant_from_name("M31") == Variant::M31);
    CHECK_THROWS_AS((void)variant_from_name("m21"), Error);
}
