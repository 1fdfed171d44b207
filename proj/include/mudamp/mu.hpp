#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mudamp/uncertainty.hpp"

namespace mudamp {

// Scalar uncertainty block. The toolkit only ever builds 1x1 blocks: real
// parameter channels, the complex unstructured disk, and the complex
// performance block.
struct BlockSpec {
    int size = 1;
    bool real = false;
};

struct MuOptions {
    int dg_max_iters = 120;       // gradient steps per scaling search
    double bisect_rel_tol = 1e-4;
    int bisect_max_iters = 60;
    int lower_samples = 128;      // random admissible draws for the lower bound
    int lower_polish_rounds = 40;
    int lower_polish_starts = 2;
    std::uint64_t seed = 1;
};

// Upper bound for an all-complex structure: min over diagonal D > 0 of
// sigma_max(D M D^-1), Osborne-balanced start plus gradient descent on log d.
double mu_upper_complex(const Eigen::MatrixXcd& M, const std::vector<BlockSpec>& blocks,
                        const MuOptions& options = {});

// Mixed real/complex upper bound: bisection on beta over the D,G feasibility
// test M*DM/beta^2 + j(GM - M*G) - D <= 0. Never exceeds the complexified
// bound; delegates to it when no real blocks are present.
double mu_upper_mixed(const Eigen::MatrixXcd& M, const std::vector<BlockSpec>& blocks,
                      const MuOptions& options = {});

// Lower bound from sampled admissible perturbations with coordinate-ascent
// polish; only eigenvalues that are real to machine precision are accepted,
// so the value can undershoot but never exceeds mu.
double mu_lower_sampling(const Eigen::MatrixXcd& M, const std::vector<BlockSpec>& blocks,
                         const MuOptions& options = {});

struct Interconnection {
    Eigen::MatrixXcd M;
    std::vector<BlockSpec> blocks;
};

// Uncertainty blocks in active_channels() order, then the unstructured disk
// (when present), then the 1x1 complex performance block.
std::vector<BlockSpec> perf_block_structure(const UncertainPlant& plant);

// Interconnection matrix at one frequency for the robust process-sensitivity
// test: exogenous disturbance enters at the plant input, the performance
// output is the weighted plant output, and the loop closes through e = d - Cx.
Interconnection interconnection_at(const UncertainPlant& plant, const RationalTF& controller,
                                   const RationalTF& perf_weight, double omega);

// 600 log-spaced points over 1 Hz..5 kHz plus 40 per mode within +-10% of
// each nominal resonance.
FrequencyGrid mu_default_grid(const UncertainPlant& plant);

struct MuProfile {
    FrequencyGrid grid;
    std::vector<double> upper, lower;
    double peak_upper = 0.0;
    double peak_lower = 0.0;
    std::size_t argmax = 0;  // of the upper bound
};

struct RobustPerformanceOptions {
    MuOptions mu;
    bool with_lower = true;
    bool check_stability = true;
    ExecMode exec = ExecMode::Parallel;
};

// mu profile over the grid. Requires a nominally stabilizing controller; the
// precheck rationalizes the plant delay before the pole test.
MuProfile robust_performance_profile(const UncertainPlant& plant, const RationalTF& controller,
                                     const RationalTF& perf_weight, const FrequencyGrid& grid,
                                     const RobustPerformanceOptions& options = {});

}  // namespace mudamp
