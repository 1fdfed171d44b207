#include "mudamp/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mudamp/common.hpp"

namespace mudamp {

namespace {

Eigen::VectorXd clip(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    return x.cwiseMax(lo).cwiseMin(hi);
}

struct Vertex {
    Eigen::VectorXd x;
    double f;
};

void run_simplex(const std::function<double(const Eigen::VectorXd&)>& objective,
                 const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                 const Eigen::VectorXd& start, double step_rel, int max_evals,
                 double xtol, double ftol, Vertex& best, int& evals) {
    const int n = static_cast<int>(start.size());
    std::vector<Vertex> simplex;
    simplex.reserve(n + 1);
    auto eval = [&](const Eigen::VectorXd& x) {
        ++evals;
        double f = objective(x);
        if (std::isnan(f)) f = std::numeric_limits<double>::infinity();
        if (f < best.f) best = {x, f};
        return f;
    };

    simplex.push_back({start, eval(start)});
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd x = start;
        double step = step_rel * (hi[i] - lo[i]);
        x[i] = (x[i] + step <= hi[i]) ? x[i] + step : x[i] - step;
        x = clip(x, lo, hi);
        simplex.push_back({x, eval(x)});
    }

    int used = n + 1;
    while (used < max_evals) {
        std::sort(simplex.begin(), simplex.end(),
                  [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
        const Vertex& b0 = simplex.front();
        const Vertex& worst = simplex.back();

        double fspread = std::abs(worst.f - b0.f);
        double xspread = 0.0;
        for (int i = 1; i <= n; ++i) xspread = std::max(xspread, (simplex[i].x - b0.x).cwiseAbs().maxCoeff());
        double xscale = std::max(1.0, b0.x.cwiseAbs().maxCoeff());
        if (fspread <= ftol * std::max(1.0, std::abs(b0.f)) && xspread <= xtol * xscale) break;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) centroid += simplex[i].x;
        centroid /= double(n);

        auto try_point = [&](double coef) {
            Eigen::VectorXd x = clip(centroid + coef * (centroid - worst.x), lo, hi);
            return Vertex{x, eval(x)};
        };

        Vertex reflected = try_point(1.0);
        ++used;
        if (reflected.f < b0.f) {
            Vertex expanded = try_point(2.0);
            ++used;
            simplex.back() = (expanded.f < reflected.f) ? expanded : reflected;
        } else if (reflected.f < simplex[n - 1].f) {
            simplex.back() = reflected;
        } else {
            Vertex contracted = try_point(reflected.f < worst.f ? 0.5 : -0.5);
            ++used;
            if (contracted.f < std::min(reflected.f, worst.f)) {
                simplex.back() = contracted;
            } else {
                // Shrink toward the best vertex.
                for (int i = 1; i <= n; ++i) {
                    simplex[i].x = clip(b0.x + 0.5 * (simplex[i].x - b0.x), lo, hi);
                    simplex[i].f = eval(simplex[i].x);
                }
                used += n;
            }
        }
    }
}

}  // namespace

NmResult nelder_mead_bounded(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                             const Eigen::VectorXd& x0, const NmOptions& options) {
    const int n = static_cast<int>(x0.size());
    if (lo.size() != n || hi.size() != n) throw Error("nelder_mead_bounded: bound dimension mismatch");
    for (int i = 0; i < n; ++i)
        if (!(lo[i] < hi[i])) throw Error("nelder_mead_bounded: need lo < hi in every dimension");
    if (options.restarts < 1) throw Error("nelder_mead_bounded: need at least one restart");

    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    NmResult result;
    result.evaluations = 0;
    Vertex best{clip(x0, lo, hi), std::numeric_limits<double>::infinity()};

    for (int r = 0; r < options.restarts; ++r) {
        Eigen::VectorXd start(n);
        if (r == 0) {
            start = clip(x0, lo, hi);
        } else {
            for (int i = 0; i < n; ++i) start[i] = lo[i] + (hi[i] - lo[i]) * unit(rng);
        }
        Vertex run_best{start, std::numeric_limits<double>::infinity()};
        run_simplex(objective, lo, hi, start, options.init_step_rel, options.max_evals,
                    options.xtol_rel, options.ftol_rel, run_best, result.evaluations);
        result.restart_best.push_back(run_best.f);
        if (run_best.f < best.f) best = run_best;
    }

    result.x = best.x;
    result.f = best.f;
    return result;
}

}  // namespace mudamp
