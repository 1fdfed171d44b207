#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace mudamp {

struct NmOptions {
    int max_evals = 400;       // per restart
    int restarts = 1;          // restart 0 starts at x0, later ones at seeded draws
    std::uint64_t seed = 0;
    double xtol_rel = 1e-7;
    double ftol_rel = 1e-10;
    double init_step_rel = 0.15;  // initial simplex spread, relative to box width
};

struct NmResult {
    Eigen::VectorXd x;
    double f = 0.0;
    int evaluations = 0;
    std::vector<double> restart_best;  // best objective found by each restart
};

// Nelder-Mead simplex search constrained to [lo, hi] by clipping candidate
// vertices into the box. Deterministic for a fixed seed. The returned best is
// the minimum over all restarts.
NmResult nelder_mead_bounded(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                             const Eigen::VectorXd& x0, const NmOptions& options = {});

}  // namespace mudamp
