#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mudamp/lti.hpp"

namespace mudamp {

// Coefficient box: values span mean * (1 +- radius), radius relative in [0, 1).
struct UncertainCoefficient {
    double mean = 0.0;
    double radius = 0.0;
};

// Statistics of one mode's transfer-function coefficients across the family:
// (n2 s^2 + n1 s + 1) / (d2 s^2 + d1 s + 1). A mode without an anti-resonance
// carries no numerator entries.
struct ModePairStats {
    std::optional<UncertainCoefficient> n2, n1;
    UncertainCoefficient d2, d1;

    RationalTF nominal_tf() const;  // mean coefficients
    ModePair nominal_mode() const;
};

// Real perturbation channels of one mode. D-channels perturb the denominator
// through an inverse-multiplicative factor, N-channels the numerator through
// a multiplicative factor. Enumeration order everywhere: D1, D2, N1, N2.
enum class Channel : int { D1 = 0, D2 = 1, N1 = 2, N2 = 3 };

using ModeDeltas = std::array<double, 4>;  // indexed by Channel

// Scalar weights w_c(s) seen by each unit-interval delta:
//   numerator factor    1 + delta_n1 w_N1 + delta_n2 w_N2
//   denominator factor (1 - delta_d1 w_D1 - delta_d2 w_D2)^{-1}
// with w_D1 = -d1 r_d1 s / Dbar, w_D2 = -d2 r_d2 s^2 / Dbar,
//      w_N1 =  n1 r_n1 s / Nbar, w_N2 =  n2 r_n2 s^2 / Nbar,
// Dbar/Nbar the mean-coefficient denominator/numerator polynomials.
struct StructuredWeightSet {
    std::array<bool, 4> present{};
    std::array<RationalTF, 4> weight{};
};

struct UnstructuredWeight {
    RationalTF weight;
    double floor = 1e-4;
    bool fallback = false;    // fit diverged, piecewise-constant overbound used
    double scale = 1.0;       // coverage scaling applied after the fit
    double rms_log10 = 0.0;   // fit residual before scaling
};

enum class Variant { M01, M11, M31 };
std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ChannelRef {
    int mode = 0;  // zero-based
    Channel channel = Channel::D1;
    std::string label() const;
};

struct ModeBlock {
    ModePairStats stats;
    StructuredWeightSet weights;
    std::array<bool, 4> active{};  // variant mask AND present
};

struct UncertainPlant {
    std::vector<ModeBlock> modes;
    RationalTF actuator;
    double delay_s = 0.0;
    std::optional<UnstructuredWeight> unstructured;
    Variant variant = Variant::M01;

    std::vector<ChannelRef> active_channels() const;
    // Mean-coefficient chain including the actuator; the delay rides in
    // RationalTF::delay.
    RationalTF nominal_tf() const;
};

// One admissible perturbation: real values in [-1,1] per active channel (in
// active_channels() order) plus a complex unstructured delta with |.| <= 1.
struct DeltaSample {
    std::vector<double> structured;
    Complex unstructured{0.0, 0.0};
};

struct EnvelopeBand {
    std::vector<double> min_db, max_db;  // parallel to the grid
};

// mean = arithmetic mean, radius = (max - min) / (2 * mean).
UncertainCoefficient relative_radii(const std::vector<double>& samples);

StructuredWeightSet structured_weights(const ModePairStats& stats);

// Direct substitution: coefficient c -> mean * (1 + radius * delta).
RationalTF perturbed_mode_tf(const ModePairStats& stats, const ModeDeltas& delta);

// The same mode evaluated through the weight algebra. Agrees with
// perturbed_mode_tf pointwise; kept as an independent route.
RationalTF lft_mode_tf(const ModePairStats& stats, const StructuredWeightSet& weights,
                       const ModeDeltas& delta);

// |measured - model| / |model| per grid point.
std::vector<double> relative_error(const std::vector<Complex>& measured,
                                   const std::vector<Complex>& model);

// Pointwise maximum across members.
std::vector<double> envelope_over_set(const std::vector<std::vector<double>>& errors);

// Fits a stable minimum-phase magnitude shape of the given order (0, 2, 4, or
// 6) to max(envelope, floor) by least squares on log magnitude, then scales up
// so |W| >= envelope * (1 + margin) at every grid point. Coverage is a hard
// postcondition; fit closeness is best effort.
UnstructuredWeight fit_unstructured_weight(const FrequencyGrid& grid,
                                           const std::vector<double>& envelope, int order = 4,
                                           double margin = 0.05);

struct AssembleOptions {
    int residual_samples = 256;  // structured responses used for the residual
    std::uint64_t seed = 1;
    int fit_order = 4;
    double fit_margin = 0.05;
};

// Builds the variant's uncertain model: structured weights on the variant's
// channels, and an unstructured weight fitted to the worst-case residual of
// the measured set against sampled structured responses (against the nominal
// alone when no channel is active).
UncertainPlant assemble_uncertain_plant(const std::vector<ModePairStats>& stats,
                                        const RationalTF& actuator, double delay_s, Variant variant,
                                        const FrequencyGrid& grid,
                                        const std::vector<std::vector<Complex>>& measured,
                                        const AssembleOptions& options = {});

// Chain response for one admissible perturbation, evaluated through the
// weight algebra (multiplicative and inverse-multiplicative factors).
std::vector<Complex> sample_uncertain(const UncertainPlant& plant, const DeltaSample& delta,
                                      const FrequencyGrid& grid);

// Min/max magnitude band over vertex and random structured samples, with the
// unstructured disk contributing its exact magnitude band
// [max(0, 1 - |Wu|), 1 + |Wu|] per sample. Deterministic for a fixed seed.
EnvelopeBand envelope(const UncertainPlant& plant, const FrequencyGrid& grid, int n_random,
                      bool include_vertices, std::uint64_t seed,
                      ExecMode exec = ExecMode::Parallel);

}  // namespace mudamp
