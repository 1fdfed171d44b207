#include "mudamp/mu.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace mudamp {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_blocks(const MatrixXcd& M, const std::vector<BlockSpec>& blocks) {
    if (M.rows() != M.cols()) throw Error("mu: matrix must be square");
    if (blocks.empty()) throw Error("mu: empty block structure");
    if (int(blocks.size()) != M.rows())
        throw Error("mu: block count does not match the matrix dimension");
    for (const auto& b : blocks)
        if (b.size != 1) throw Error("mu: only scalar blocks are supported");
}

struct TopSvd {
    double sigma = 0.0;
    VectorXcd u, v;
};

TopSvd top_svd(const MatrixXcd& A) {
    Eigen::JacobiSVD<MatrixXcd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    TopSvd t;
    t.sigma = svd.singularValues()(0);
    t.u = svd.matrixU().col(0);
    t.v = svd.matrixV().col(0);
    return t;
}

// min over diagonal scalings of sigma_max(D M D^-1); optimal log-scales out.
double complex_bound_impl(const MatrixXcd& M, const MuOptions& opts, VectorXd* theta_out) {
    const int n = int(M.rows());
    if (n == 1) {
        if (theta_out) theta_out->setZero(1);
        return std::abs(M(0, 0));
    }
    if (M.cwiseAbs().maxCoeff() <= 1e-300) {
        if (theta_out) theta_out->setZero(n);
        return 0.0;
    }

    VectorXd theta = VectorXd::Zero(n);
    // Osborne balancing pass equalizes off-diagonal row/column mass.
    for (int pass = 0; pass < 10; ++pass) {
        for (int i = 0; i < n; ++i) {
            double r = 0.0, c = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                r += std::abs(M(i, j)) * std::exp(theta[i] - theta[j]);
                c += std::abs(M(j, i)) * std::exp(theta[j] - theta[i]);
            }
            if (r > 1e-300 && c > 1e-300) theta[i] += 0.5 * std::log(c / r);
        }
        const double shift = theta[n - 1];
        for (int i = 0; i < n; ++i) theta[i] -= shift;
    }

    const auto scaled = [&](const VectorXd& th) {
        MatrixXcd A = M;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) A(i, j) *= std::exp(th[i] - th[j]);
        return A;
    };

    TopSvd cur = top_svd(scaled(theta));
    double best = cur.sigma;
    VectorXd best_theta = theta;
    double step = 0.3;
    for (int it = 0; it < opts.dg_max_iters; ++it) {
        VectorXd grad(n);
        for (int i = 0; i < n; ++i)
            grad[i] = cur.sigma * (std::norm(cur.u[i]) - std::norm(cur.v[i]));
        const double gn = grad.norm();
        if (gn <= 1e-14 * std::max(1.0, cur.sigma)) break;
        bool moved = false;
        while (step >= 1e-13) {
            const VectorXd cand = theta - (step / gn) * grad;
            const TopSvd t = top_svd(scaled(cand));
            if (t.sigma < cur.sigma * (1.0 - 1e-13)) {
                theta = cand;
                cur = t;
                if (t.sigma < best) {
                    best = t.sigma;
                    best_theta = theta;
                }
                step = std::min(step * 1.4, 2.0);
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    if (theta_out) *theta_out = best_theta;
    return best;
}

// Feasibility probe for the mixed bound at one beta: beta is an upper bound
// when some D > 0 (d_n pinned to 1) and real diagonal G supported on the real
// blocks make H = Mh*D Mh + j(G Mh - Mh* G) - D <= 0, with Mh = M/beta (beta
// absorbed into G keeps the iterates invariant under (M, beta) -> (cM, c*beta)).
// f(d, g) = lambda_max(H) is convex and nonsmooth, so this runs projected
// Polyak subgradient steps, which do not require monotone decrease and reach
// {f <= 0} whenever it has an interior. Acceptance demands strict negativity
// relative to ||H||, which congruence makes equivalent to the D-normalized
// residual test, so no coordinate of d can fake feasibility by collapsing.
bool dg_feasible(const MatrixXcd& Mh, const std::vector<BlockSpec>& blocks, VectorXd& d,
                 VectorXd& g, int max_iters) {
    const int n = int(Mh.rows());
    const MatrixXcd Madj = Mh.adjoint();
    for (int it = 0; it < max_iters; ++it) {
        MatrixXcd H = Madj * d.asDiagonal() * Mh;
        const MatrixXcd GM = g.asDiagonal() * Mh;
        H += Complex(0.0, 1.0) * (GM - GM.adjoint());
        H.diagonal() -= d.cast<Complex>();
        const double hnorm = H.norm();
        Eigen::SelfAdjointEigenSolver<MatrixXcd> es(H);
        const double lam = es.eigenvalues()(n - 1);
        if (lam <= -1e-13 * (1.0 + hnorm)) return true;
        const VectorXcd v = es.eigenvectors().col(n - 1);
        const VectorXcd w = Mh * v;
        VectorXd sd(n), sg(n);
        for (int i = 0; i < n; ++i) {
            sd[i] = std::norm(w[i]) - std::norm(v[i]);
            sg[i] = blocks[i].real ? -2.0 * std::imag(std::conj(v[i]) * w[i]) : 0.0;
        }
        sd[n - 1] = 0.0;  // normalization pin
        const double sn = sd.squaredNorm() + sg.squaredNorm();
        if (sn < 1e-30) return false;
        const double level = -1e-10 * (1.0 + hnorm);
        const double step = (lam - level) / sn;
        for (int i = 0; i < n; ++i) {
            d[i] = std::clamp(d[i] - step * sd[i], 1e-10, 1e10);
            g[i] = std::clamp(g[i] - step * sg[i], -1e10, 1e10);
        }
        d[n - 1] = 1.0;
    }
    return false;
}

}  // namespace

double mu_upper_complex(const MatrixXcd& M, const std::vector<BlockSpec>& blocks,
                        const MuOptions& options) {
    check_blocks(M, blocks);
    return complex_bound_impl(M, options, nullptr);
}

double mu_upper_mixed(const MatrixXcd& M, const std::vector<BlockSpec>& blocks,
                      const MuOptions& options) {
    check_blocks(M, blocks);
    const int n = int(M.rows());
    if (n == 1) {
        const Complex m = M(0, 0);
        if (!blocks[0].real) return std::abs(m);
        return std::abs(m.imag()) <= 1e-12 * std::max(1.0, std::abs(m)) ? std::abs(m) : 0.0;
    }
    bool any_real = false;
    for (const auto& b : blocks) any_real = any_real || b.real;

    VectorXd theta_sigma;
    const double cpx = complex_bound_impl(M, options, &theta_sigma);
    if (!any_real || cpx <= 1e-12) return cpx;

    // Warm start from the complexified certificate's scales; on a failed
    // probe retry from the cold starts before declaring the beta infeasible.
    VectorXd d_cold(n);
    for (int i = 0; i < n; ++i)
        d_cold[i] = std::clamp(std::exp(2.0 * (theta_sigma[i] - theta_sigma[n - 1])), 1e-10, 1e10);
    VectorXd d_warm = d_cold;
    VectorXd g_warm = VectorXd::Zero(n);

    double lo = 0.0, hi = cpx;
    for (int it = 0; it < options.bisect_max_iters; ++it) {
        if (hi - lo <= options.bisect_rel_tol * hi) break;
        const double beta = 0.5 * (lo + hi);
        const MatrixXcd Mh = M / beta;
        bool feasible = false;
        VectorXd d, g;
        for (int start = 0; start < 3 && !feasible; ++start) {
            d = start == 0 ? d_warm : start == 1 ? d_cold : VectorXd::Ones(n);
            g = start == 0 ? g_warm : VectorXd::Zero(n);
            feasible = dg_feasible(Mh, blocks, d, g, options.dg_max_iters);
        }
        if (feasible) {
            hi = beta;
            d_warm = d;
            g_warm = g;
        } else {
            lo = beta;
        }
    }
    return hi;
}

double mu_lower_sampling(const MatrixXcd& M, const std::vector<BlockSpec>& blocks,
                         const MuOptions& options) {
    check_blocks(M, blocks);
    const int n = int(M.rows());
    if (n == 1) {
        const Complex m = M(0, 0);
        if (!blocks[0].real) return std::abs(m);
        return std::abs(m.imag()) <= 1e-12 * std::max(1.0, std::abs(m)) ? std::abs(m) : 0.0;
    }

    double certified = 0.0;
    const double ctol = 1e-9;

    // Parameters: delta_i in [-1,1] on real blocks, a phase on complex ones.
    const auto values = [&](const VectorXd& p) {
        VectorXcd v(n);
        for (int i = 0; i < n; ++i)
            v[i] = blocks[i].real ? Complex(p[i], 0.0)
                                  : Complex(std::cos(p[i]), std::sin(p[i]));
        return v;
    };
    const auto clamp_params = [&](VectorXd& p) {
        for (int i = 0; i < n; ++i)
            if (blocks[i].real) p[i] = std::clamp(p[i], -1.0, 1.0);
    };

    const auto score_eval = [&](const VectorXd& p) {
        const MatrixXcd A = M * values(p).asDiagonal();
        Eigen::ComplexEigenSolver<MatrixXcd> es(A, false);
        double f = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            const Complex lam = es.eigenvalues()(i);
            f = std::max(f, std::abs(lam.real()) - std::abs(lam.imag()));
            if (std::abs(lam.imag()) <= ctol * std::max(1.0, std::abs(lam)))
                certified = std::max(certified, std::abs(lam.real()));
        }
        return f;
    };

    // Tracked eigenvalue (best |Re|-|Im| score) with its parameter gradient
    // from the left/right eigenvector pair.
    struct EigPoint {
        Complex lam;
        VectorXcd grad;
        bool ok = false;
        bool real_certified = false;
    };
    // `ref` selects the branch by continuity (nearest eigenvalue); without it
    // the best-scoring branch is picked.
    const auto eig_point = [&](const VectorXd& p, const Complex* ref) {
        EigPoint e;
        const VectorXcd vals = values(p);
        const MatrixXcd A = M * vals.asDiagonal();
        Eigen::ComplexEigenSolver<MatrixXcd> es(A, true);
        if (es.info() != Eigen::Success) return e;
        int r = 0;
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            const Complex lam = es.eigenvalues()(i);
            const double key = ref ? std::abs(lam - *ref)
                                   : -(std::abs(lam.real()) - std::abs(lam.imag()));
            if (key < best) {
                best = key;
                r = i;
            }
        }
        e.lam = es.eigenvalues()(r);
        if (std::abs(e.lam.imag()) <= ctol * std::max(1.0, std::abs(e.lam))) {
            e.real_certified = true;
            certified = std::max(certified, std::abs(e.lam.real()));
        }
        const MatrixXcd X = es.eigenvectors();
        const Eigen::PartialPivLU<MatrixXcd> lu(X);
        if (lu.determinant() == Complex(0.0, 0.0)) return e;
        const Eigen::RowVectorXcd y = MatrixXcd(lu.inverse()).row(r);
        const Eigen::RowVectorXcd u = y * M;
        e.grad.resize(n);
        for (int i = 0; i < n; ++i) {
            const Complex base = u(i) * X(i, r);
            e.grad[i] = blocks[i].real ? base : base * Complex(0.0, 1.0) * vals[i];
        }
        e.ok = true;
        return e;
    };

    // Damped Newton on Im(lambda) = 0, following one analytic branch by
    // nearest-eigenvalue tracking. Returns the on-manifold point.
    const auto newton_to_real = [&](VectorXd& p, EigPoint& e, int max_its) {
        for (int it = 0; it < max_its; ++it) {
            if (!e.ok) return false;
            if (e.real_certified) return true;
            VectorXd g(n);
            for (int i = 0; i < n; ++i) g[i] = e.grad[i].imag();
            // Active-set projection: drop coordinates pinned at a box face
            // whose step would point outward, so the Newton step stays exact
            // (and quadratic) along the face. The step sign for coordinate i
            // is sign(-Im(lam) * g_i), unaffected by the norm rescaling.
            for (int i = 0; i < n; ++i) {
                if (!blocks[i].real) continue;
                const double s = -e.lam.imag() * g[i];
                if ((p[i] >= 1.0 - 1e-12 && s > 0.0) || (p[i] <= -1.0 + 1e-12 && s < 0.0))
                    g[i] = 0.0;
            }
            const double g2 = g.squaredNorm();
            if (g2 < 1e-24) return false;
            bool improved = false;
            for (double damp = 1.0; damp >= 1.0 / 128.0; damp *= 0.5) {
                VectorXd q = p - (damp * e.lam.imag() / g2) * g;
                clamp_params(q);
                const EigPoint e2 = eig_point(q, &e.lam);
                if (!e2.ok) continue;
                if (std::abs(e2.lam.imag()) < 0.9 * std::abs(e.lam.imag()) ||
                    e2.real_certified) {
                    p = q;
                    e = e2;
                    improved = true;
                    break;
                }
            }
            if (!improved) return false;
        }
        return e.ok && e.real_certified;
    };

    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);

    std::vector<VectorXd> draws;
    {
        VectorXd ones(n), alt(n);
        for (int i = 0; i < n; ++i) {
            ones[i] = blocks[i].real ? 1.0 : 0.0;  // phase 0 on complex blocks
            alt[i] = blocks[i].real ? -1.0 : kTwoPi / 2.0;
        }
        draws.push_back(ones);
        draws.push_back(alt);
    }
    std::vector<int> real_idx;
    for (int i = 0; i < n; ++i)
        if (blocks[i].real) real_idx.push_back(i);
    std::uniform_int_distribution<std::size_t> pick(
        0, real_idx.empty() ? 0 : real_idx.size() - 1);
    for (int s = 0; s < options.lower_samples; ++s) {
        VectorXd p(n);
        for (int i = 0; i < n; ++i) {
            if (blocks[i].real)
                p[i] = s % 3 == 0 ? (unit(rng) >= 0.0 ? 1.0 : -1.0) : unit(rng);
            else
                p[i] = angle(rng);
        }
        // Real certificates concentrate on box faces, so pin one coordinate.
        if (s % 3 == 2 && !real_idx.empty())
            p[real_idx[pick(rng)]] = unit(rng) >= 0.0 ? 1.0 : -1.0;
        draws.push_back(std::move(p));
    }

    std::vector<std::pair<double, VectorXd>> scored;
    scored.reserve(draws.size());
    for (const auto& p : draws) scored.emplace_back(score_eval(p), p);
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    // Polish until `lower_polish_starts` distinct starts land on a useful
    // point of the manifold. Rademacher draws repeat vertices, so exact
    // duplicates are skipped, and Newton runs that fall into a degenerate
    // rank-drop root (a real eigenvalue at zero) do not consume the budget.
    const int wanted = std::min<int>(options.lower_polish_starts, int(scored.size()));
    const int budget = 8 * wanted;
    const double vfloor = 1e-6 * std::max(1.0, std::abs(scored.front().first));
    std::vector<VectorXd> tried;

    // Newton + ridge walk from one start. Every eigenvalue branch at the
    // start is a separate Newton target; the best-scoring branch is not
    // always the one with a certificate. Returns the branch-polish count.
    const auto polish_start = [&](const VectorXd& start) {
        int successes = 0;
        std::vector<Complex> refs;
        {
            Eigen::ComplexEigenSolver<MatrixXcd> es(
                MatrixXcd(M * values(start).asDiagonal()), false);
            if (es.info() != Eigen::Success) return successes;
            for (int i = 0; i < n; ++i) {
                const Complex lam = es.eigenvalues()(i);
                bool seen = false;
                for (const Complex& r : refs)
                    if (std::abs(lam - r) < 1e-9 * (1.0 + std::abs(lam))) {
                        seen = true;
                        break;
                    }
                if (!seen) refs.push_back(lam);
            }
            std::sort(refs.begin(), refs.end(), [](Complex x, Complex y) {
                return std::abs(x.real()) - std::abs(x.imag()) >
                       std::abs(y.real()) - std::abs(y.imag());
            });
        }
        for (const Complex& ref : refs) {
            VectorXd p = start;
            EigPoint e = eig_point(p, &ref);
            if (!newton_to_real(p, e, 25)) continue;
            if (std::abs(e.lam.real()) < vfloor) continue;
            ++successes;
            // Ridge walk: ascend |Re lambda| inside the real-eigenvalue
            // manifold, re-projecting with Newton after each step.
            double step = 0.25;
            for (int round = 0; round < options.lower_polish_rounds; ++round) {
                if (!e.ok) break;
                const double sgn = e.lam.real() >= 0.0 ? 1.0 : -1.0;
                VectorXd a(n), b(n);
                for (int i = 0; i < n; ++i) {
                    a[i] = sgn * e.grad[i].real();
                    b[i] = e.grad[i].imag();
                }
                const double bb = b.squaredNorm();
                VectorXd d = bb > 1e-24 ? VectorXd(a - (a.dot(b) / bb) * b) : a;
                for (int i = 0; i < n; ++i) {
                    if (!blocks[i].real) continue;
                    if ((p[i] >= 1.0 - 1e-12 && d[i] > 0.0) ||
                        (p[i] <= -1.0 + 1e-12 && d[i] < 0.0))
                        d[i] = 0.0;
                }
                const double dn = d.norm();
                if (dn <= 1e-12 * (1.0 + a.norm())) break;
                bool accepted = false;
                while (step > 1e-10) {
                    VectorXd q = p + (step / dn) * d;
                    clamp_params(q);
                    EigPoint e2 = eig_point(q, &e.lam);
                    if (newton_to_real(q, e2, 10) &&
                        std::abs(e2.lam.real()) >
                            std::abs(e.lam.real()) * (1.0 + 1e-12)) {
                        p = q;
                        e = e2;
                        step = std::min(step * 1.3, 0.5);
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if (!accepted) break;
            }
        }
        return successes;
    };

    // The all-extreme vertices are where real-mu maximizers concentrate, so
    // they are always polished, off-budget; score-ranked random starts can
    // otherwise bury them and stop the search on a weak certificate.
    for (std::size_t s = 0; s < 2 && s < draws.size(); ++s) {
        tried.push_back(draws[s]);
        polish_start(draws[s]);
    }

    int polished = 0;
    for (std::size_t s = 0;
         s < scored.size() && polished < wanted && int(tried.size()) < budget + 2; ++s) {
        bool dup = false;
        for (const auto& t : tried)
            if ((t - scored[s].second).cwiseAbs().maxCoeff() < 1e-6) {
                dup = true;
                break;
            }
        if (dup) continue;
        tried.push_back(scored[s].second);
        polished += polish_start(scored[s].second);
    }
    return certified;
}

std::vector<BlockSpec> perf_block_structure(const UncertainPlant& plant) {
    std::vector<BlockSpec> blocks(plant.active_channels().size(), BlockSpec{1, true});
    if (plant.unstructured) blocks.push_back({1, false});
    blocks.push_back({1, false});  // performance
    return blocks;
}

Interconnection interconnection_at(const UncertainPlant& plant, const RationalTF& controller,
                                   const RationalTF& perf_weight, double omega) {
    if (plant.modes.empty()) throw Error("interconnection_at: plant has no modes");
    const auto channels = plant.active_channels();
    const int J = int(plant.modes.size());
    const int k = int(channels.size());
    const int nu = k + (plant.unstructured ? 1 : 0) + 1;

    // Signal slots: [e, a_1, y_1, ..., a_J, y_J, x]; a_j is the mode output
    // before its multiplicative stage, y_j after it, x the plant output.
    const int dim = 2 * J + 2;
    const auto a_idx = [](int j) { return 1 + 2 * j; };
    const auto y_idx = [](int j) { return 2 + 2 * j; };
    const int x_idx = dim - 1;

    const Complex C = freq_point(controller, omega);
    const Complex GA = freq_point(plant.actuator, omega);
    const Complex GD = std::exp(Complex(0.0, -omega * plant.delay_s));
    const Complex W = freq_point(perf_weight, omega);

    MatrixXcd A = MatrixXcd::Identity(dim, dim);
    A(0, x_idx) = C;  // e + C x = d
    for (int j = 0; j < J; ++j) {
        const Complex gj = freq_point(plant.modes[j].stats.nominal_tf(), omega);
        A(a_idx(j), j == 0 ? 0 : y_idx(j - 1)) = -gj;
        A(y_idx(j), a_idx(j)) = -1.0;
    }
    A(x_idx, y_idx(J - 1)) = -GA * GD;

    MatrixXcd B = MatrixXcd::Zero(dim, nu);
    MatrixXcd Z = MatrixXcd::Zero(nu, dim);
    for (int c = 0; c < k; ++c) {
        const auto& ch = channels[c];
        const bool denom = ch.channel == Channel::D1 || ch.channel == Channel::D2;
        B(denom ? a_idx(ch.mode) : y_idx(ch.mode), c) = 1.0;
        Z(c, a_idx(ch.mode)) =
            freq_point(plant.modes[ch.mode].weights.weight[int(ch.channel)], omega);
    }
    if (plant.unstructured) {
        B(x_idx, k) = 1.0;
        Z(k, y_idx(J - 1)) = freq_point(plant.unstructured->weight, omega) * GA * GD;
    }
    B(0, nu - 1) = 1.0;
    Z(nu - 1, x_idx) = W;

    Interconnection ic;
    ic.M = Z * A.partialPivLu().solve(B);
    ic.blocks = perf_block_structure(plant);
    return ic;
}

FrequencyGrid mu_default_grid(const UncertainPlant& plant) {
    std::vector<double> centers_hz;
    for (const auto& block : plant.modes)
        centers_hz.push_back(block.stats.nominal_mode().pole_freq / kTwoPi);
    return FrequencyGrid::log_spaced_with_clusters(1.0, 5000.0, 600, centers_hz, 40, 0.10);
}

MuProfile robust_performance_profile(const UncertainPlant& plant, const RationalTF& controller,
                                     const RationalTF& perf_weight, const FrequencyGrid& grid,
                                     const RobustPerformanceOptions& options) {
    if (options.check_stability) {
        const RationalTF nominal = rationalize_delay(plant.nominal_tf(), 2);
        if (!is_stable(feedback(nominal, controller)).stable)
            throw Error("robust_performance_profile: nominal closed loop is unstable");
    }

    MuProfile prof;
    prof.grid = grid;
    prof.upper.assign(grid.size(), 0.0);
    prof.lower.assign(grid.size(), 0.0);
    parallel_for(grid.size(), options.exec, [&](std::size_t idx) {
        const auto ic = interconnection_at(plant, controller, perf_weight, grid.points[idx]);
        MuOptions mo = options.mu;
        mo.seed = options.mu.seed ^ (0x9E3779B97F4A7C15ull * (idx + 1));
        prof.upper[idx] = mu_upper_mixed(ic.M, ic.blocks, mo);
        if (options.with_lower) prof.lower[idx] = mu_lower_sampling(ic.M, ic.blocks, mo);
    });

    for (std::size_t kk = 0; kk < grid.size(); ++kk) {
        if (prof.upper[kk] > prof.peak_upper) {
            prof.peak_upper = prof.upper[kk];
            prof.argmax = kk;
        }
        prof.peak_lower = std::max(prof.peak_lower, prof.lower[kk]);
    }
    return prof;
}

}  // namespace mudamp
