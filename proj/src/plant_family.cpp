#include "mudamp/plant_family.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mudamp/io.hpp"

namespace mudamp {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kDegPerRad = 57.295779513082320876798154814105;
}  // namespace

double payload_mode_freq(double f0_hz, double f100_hz, double heavy_g, double payload_g) {
    if (!(f100_hz > 0.0) || !(f0_hz > f100_hz))
        throw Error("payload_mode_freq: needs f0 > f100 > 0");
    if (!(heavy_g > 0.0)) throw Error("payload_mode_freq: heavy payload must be positive");
    if (!(payload_g >= 0.0)) throw Error("payload_mode_freq: payload must be >= 0");
    const double ratio2 = (f0_hz / f100_hz) * (f0_hz / f100_hz);
    const double m_eff = heavy_g / (ratio2 - 1.0);
    return f0_hz / std::sqrt(1.0 + payload_g / m_eff);
}

RationalTF actuator_tf(const FamilyConfig& config) {
    ModePair act;
    act.pole_freq = kTwoPi * config.actuator_freq_hz;
    act.pole_damping = config.actuator_damping;
    return tf_from_mode_pair(act);
}

std::vector<PlantSample> nanopositioner_family(const FamilyConfig& config) {
    const std::size_t n_modes = config.f0_hz.size();
    if (n_modes == 0) throw Error("nanopositioner_family: no modes configured");
    if (config.f100_hz.size() != n_modes || config.pole_damping.size() != n_modes)
        throw Error("nanopositioner_family: f0, f100 and damping lists must have equal length");
    if (config.payloads_g.empty()) throw Error("nanopositioner_family: no payloads");
    if (!(config.near_cancel_ratio > 0.0 && config.near_cancel_ratio < 1.0) ||
        !(config.interlace_ratio > 0.0 && config.interlace_ratio < 1.0))
        throw Error("nanopositioner_family: placement ratios must lie in (0, 1)");
    if (!(config.delay_s >= 0.0)) throw Error("nanopositioner_family: delay must be >= 0");

    const RationalTF act = actuator_tf(config);
    std::vector<PlantSample> members;
    members.reserve(config.payloads_g.size());
    for (double payload : config.payloads_g) {
        PlantSample sample;
        sample.payload_g = payload;
        std::vector<double> poles_hz(n_modes);
        for (std::size_t j = 0; j < n_modes; ++j)
            poles_hz[j] = payload_mode_freq(config.f0_hz[j], config.f100_hz[j],
                                            config.heavy_payload_g, payload);
        for (std::size_t j = 1; j < n_modes; ++j)
            if (!(poles_hz[j] > poles_hz[j - 1]))
                throw Error("nanopositioner_family: mode frequencies must increase with the "
                            "mode index");

        RationalTF chain = act;
        for (std::size_t j = 0; j < n_modes; ++j) {
            ModePair mode;
            mode.pole_freq = kTwoPi * poles_hz[j];
            mode.pole_damping = config.pole_damping[j];
            if (j == 1) {
                mode.zero_freq = config.near_cancel_ratio * mode.pole_freq;
                mode.zero_damping = mode.pole_damping;
            } else if (j >= 2) {
                mode.zero_freq =
                    config.interlace_ratio * kTwoPi * std::sqrt(poles_hz[j - 1] * poles_hz[j]);
                mode.zero_damping = mode.pole_damping;
            }
            if (mode.zero_freq) {
                if (!(*mode.zero_freq < mode.pole_freq) ||
                    (j >= 1 && !(*mode.zero_freq > kTwoPi * poles_hz[j - 1])))
                    throw Error("nanopositioner_family: anti-resonance of mode " +
                                std::to_string(j + 1) + " does not interlace");
            }
            sample.modes.push_back(mode);
            chain = series(chain, tf_from_mode_pair(mode));
        }
        chain.delay += config.delay_s;
        sample.tf = std::move(chain);
        members.push_back(std::move(sample));
    }
    return members;
}

std::vector<ModePairStats> extract_mode_stats(const std::vector<PlantSample>& members) {
    if (members.empty()) throw Error("extract_mode_stats: no members");
    const std::size_t n_modes = members.front().modes.size();
    for (const auto& m : members) {
        if (m.modes.size() != n_modes)
            throw Error("extract_mode_stats: members disagree on the mode count");
        for (std::size_t j = 0; j < n_modes; ++j)
            if (m.modes[j].zero_freq.has_value() !=
                members.front().modes[j].zero_freq.has_value())
                throw Error("extract_mode_stats: members disagree on anti-resonance presence");
    }

    std::vector<ModePairStats> stats(n_modes);
    for (std::size_t j = 0; j < n_modes; ++j) {
        std::vector<double> d2, d1, n2, n1;
        for (const auto& m : members) {
            const auto& mode = m.modes[j];
            d2.push_back(1.0 / (mode.pole_freq * mode.pole_freq));
            d1.push_back(2.0 * mode.pole_damping / mode.pole_freq);
            if (mode.zero_freq) {
                n2.push_back(1.0 / (*mode.zero_freq * *mode.zero_freq));
                n1.push_back(2.0 * mode.zero_damping / *mode.zero_freq);
            }
        }
        stats[j].d2 = relative_radii(d2);
        stats[j].d1 = relative_radii(d1);
        if (!n2.empty()) {
            stats[j].n2 = relative_radii(n2);
            stats[j].n1 = relative_radii(n1);
        }
    }
    return stats;
}

std::vector<std::vector<Complex>> synthesize_frf(const std::vector<PlantSample>& members,
                                                 const FrequencyGrid& grid, double noise_std_db,
                                                 std::uint64_t seed) {
    if (!(noise_std_db >= 0.0)) throw Error("synthesize_frf: noise level must be >= 0");
    std::vector<std::vector<Complex>> out;
    out.reserve(members.size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (const auto& member : members) {
        auto resp = freq_response(member.tf, grid);
        if (noise_std_db > 0.0) {
            for (auto& r : resp) {
                const double gm = noise_std_db * gauss(rng);
                const double gp = noise_std_db * gauss(rng) / kDegPerRad;
                r *= std::pow(10.0, gm / 20.0) * Complex(std::cos(gp), std::sin(gp));
            }
        }
        out.push_back(std::move(resp));
    }
    return out;
}

void write_frf(const std::string& path, const FrequencyGrid& grid,
               const std::vector<Complex>& response, FrfFormat format,
               const std::vector<std::string>& comments) {
    if (response.size() != grid.size())
        throw Error("write_frf: response length does not match the grid");
    std::vector<std::vector<double>> rows;
    rows.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double hz = grid.points[k] / kTwoPi;
        if (format == FrfFormat::ReIm) {
            rows.push_back({hz, response[k].real(), response[k].imag()});
        } else {
            const double mag = std::max(std::abs(response[k]), 1e-300);
            rows.push_back({hz, 20.0 * std::log10(mag), std::arg(response[k]) * kDegPerRad});
        }
    }
    const std::vector<std::string> header =
        format == FrfFormat::ReIm ? std::vector<std::string>{"freq_hz", "re", "im"}
                                  : std::vector<std::string>{"freq_hz", "mag_db", "phase_deg"};
    write_csv(path, comments, header, rows);
}

FrfData ingest_frf(const std::string& path) {
    const CsvTable table = read_csv(path);
    const std::vector<std::string> re_im = {"freq_hz", "re", "im"};
    const std::vector<std::string> db_deg = {"freq_hz", "mag_db", "phase_deg"};
    FrfFormat format;
    if (table.header == re_im) {
        format = FrfFormat::ReIm;
    } else if (table.header == db_deg) {
        format = FrfFormat::DbDeg;
    } else {
        throw Error("ingest_frf: " + path + " header is neither freq_hz,re,im nor "
                    "freq_hz,mag_db,phase_deg");
    }

    FrfData data;
    std::vector<double> points;
    points.reserve(table.rows.size());
    data.response.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        points.push_back(kTwoPi * row[0]);
        if (format == FrfFormat::ReIm) {
            data.response.emplace_back(row[1], row[2]);
        } else {
            const double mag = std::pow(10.0, row[1] / 20.0);
            const double ph = row[2] / kDegPerRad;
            data.response.emplace_back(mag * std::cos(ph), mag * std::sin(ph));
        }
    }
    data.grid = FrequencyGrid(std::move(points));
    if (data.grid.size() == 0) throw Error("ingest_frf: " + path + " holds no rows");
    return data;
}

}  // namespace mudamp
