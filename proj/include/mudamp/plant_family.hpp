#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mudamp/lti.hpp"
#include "mudamp/uncertainty.hpp"

namespace mudamp {

// Payload-swept flexure stage: four bending modes whose resonances sag with
// added mass by f(m) = f0 / sqrt(1 + m / m_eff), each mode's m_eff calibrated
// so the heaviest payload lands exactly on its measured endpoint.
struct FamilyConfig {
    std::vector<double> f0_hz = {179.0, 264.0, 350.0, 905.0};    // no payload
    std::vector<double> f100_hz = {156.0, 256.0, 326.0, 840.0};  // heaviest payload
    std::vector<double> pole_damping = {0.02, 0.03, 0.015, 0.015};
    double heavy_payload_g = 100.0;
    std::vector<double> payloads_g = {0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};

    // Anti-resonance placement: the first mode has none, the second sits just
    // below its own pole (near cancellation), higher ones below the geometric
    // mean of the neighbouring poles. Zero damping copies the mode's pole
    // damping.
    double near_cancel_ratio = 0.97;
    double interlace_ratio = 0.93;

    double actuator_freq_hz = 2000.0;  // second-order low-pass
    double actuator_damping = 0.7;
    double delay_s = 90e-6;
};

struct PlantSample {
    double payload_g = 0.0;
    std::vector<ModePair> modes;  // ascending pole frequency
    RationalTF tf;                // mode chain x actuator, delay attached
};

double payload_mode_freq(double f0_hz, double f100_hz, double heavy_g, double payload_g);

RationalTF actuator_tf(const FamilyConfig& config);

std::vector<PlantSample> nanopositioner_family(const FamilyConfig& config = {});

// Coefficient statistics per mode across the member set, in the
// (n2 s^2 + n1 s + 1)/(d2 s^2 + d1 s + 1) parameterization.
std::vector<ModePairStats> extract_mode_stats(const std::vector<PlantSample>& members);

// Member responses on a grid. noise_std_db > 0 adds a per-point disturbance:
// magnitude times 10^(g/20) and phase rotated by g degrees, g ~ N(0, std).
std::vector<std::vector<Complex>> synthesize_frf(const std::vector<PlantSample>& members,
                                                 const FrequencyGrid& grid,
                                                 double noise_std_db = 0.0,
                                                 std::uint64_t seed = 0);

enum class FrfFormat { ReIm, DbDeg };

struct FrfData {
    FrequencyGrid grid;
    std::vector<Complex> response;
};

// CSV with header freq_hz,re,im or freq_hz,mag_db,phase_deg; the format is
// recognized from the header on ingest.
void write_frf(const std::string& path, const FrequencyGrid& grid,
               const std::vector<Complex>& response, FrfFormat format,
               const std::vector<std::string>& comments = {});
FrfData ingest_frf(const std::string& path);

}  // namespace mudamp
