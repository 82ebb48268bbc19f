#pragma once

// Bound-constrained minimization with two-sided nonlinear constraints
// lo_i <= g_i(x) <= hi_i.
//
// Outer loop: augmented Lagrangian (quadratic exterior penalty plus
// multiplier shifts) with a geometrically increasing penalty weight.
// Inner loop: projected BFGS on finite-difference gradients.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rfiqkd {

using Vec = Eigen::VectorXd;

struct ConstrainedProblem {
    std::function<double(const Vec&)> objective;
    /// All constraint values at once; may be empty when there are none.
    std::function<Vec(const Vec&)> constraints;
    Vec lo;  // constraint intervals
    Vec hi;
    Vec lower;  // parameter bounds
    Vec upper;
    std::vector<Vec> initial_points;

    Eigen::Index dim() const { return lower.size(); }
    Eigen::Index n_constraints() const { return constraints ? lo.size() : 0; }

    void validate() const {
        if (!objective) throw std::invalid_argument("ConstrainedProblem: missing objective");
        if (upper.size() != lower.size()) throw std::invalid_argument("ConstrainedProblem: bound sizes differ");
        if ((upper.array() < lower.array()).any()) throw std::invalid_argument("ConstrainedProblem: lower > upper");
        if (constraints) {
            if (lo.size() != hi.size()) throw std::invalid_argument("ConstrainedProblem: interval sizes differ");
            if ((hi.array() < lo.array()).any()) throw std::invalid_argument("ConstrainedProblem: lo > hi");
        }
        if (initial_points.empty()) throw std::invalid_argument("ConstrainedProblem: no initial point");
        for (const auto& p : initial_points) {
            if (p.size() != lower.size()) throw std::invalid_argument("ConstrainedProblem: initial point has wrong size");
        }
    }
};

struct MinimizerConfig {
    double feasibility_tol = 1e-6;  // interval constraints, constraint units
    double equality_tol = 1e-8;     // zero-width intervals
    double fd_step = 1e-6;          // relative finite-difference step
    double gradient_tol = 1e-9;
    int max_inner_iterations = 400;
    int max_outer_iterations = 40;
    double penalty_init = 10.0;
    double penalty_growth = 10.0;
    double penalty_max = 1e12;
    unsigned threads = 1;
};

enum class MinimizationStatus { Converged, Infeasible, IterationLimit };

inline std::string to_string(MinimizationStatus s) {
    switch (s) {
        case MinimizationStatus::Converged:
            return "converged";
        case MinimizationStatus::Infeasible:
            return "infeasible";
        case MinimizationStatus::IterationLimit:
            return "iteration_limit";
    }
    return "unknown";
}

struct MinimizationResult {
    double value = std::numeric_limits<double>::infinity();
    Vec x;
    double max_violation = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    bool feasible = false;
    MinimizationStatus status = MinimizationStatus::Infeasible;
    int start_index = -1;
};

namespace detail {

inline Vec project_box(const Vec& x, const Vec& lower, const Vec& upper) {
    return x.cwiseMax(lower).cwiseMin(upper);
}

/// Largest amount by which g leaves [lo, hi], with each constraint measured
/// against its own tolerance (equality vs. interval).
inline double scaled_violation(const Vec& g, const Vec& lo, const Vec& hi, const MinimizerConfig& cfg,
                               double* raw = nullptr) {
    double worst = 0.0, worst_raw = 0.0;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        const double v = std::max({lo(i) - g(i), g(i) - hi(i), 0.0});
        const double tol = lo(i) == hi(i) ? cfg.equality_tol : cfg.feasibility_tol;
        worst = std::max(worst, v / tol);
        worst_raw = std::max(worst_raw, v);
    }
    if (raw) *raw = worst_raw;
    return worst;
}

inline bool lex_less(const Vec& a, const Vec& b) {
    for (Eigen::Index i = 0; i < std::min(a.size(), b.size()); ++i) {
        if (a(i) < b(i)) return true;
        if (a(i) > b(i)) return false;
    }
    return a.size() < b.size();
}

/// Finite-difference gradient that never evaluates outside the box.
template <typename F>
Vec fd_gradient(F&& f, const Vec& x, double fx, const Vec& lower, const Vec& upper, double rel_step) {
    const Eigen::Index n = x.size();
    Vec g(n);
    Vec xp = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (lower(i) == upper(i)) {
            g(i) = 0.0;
            continue;
        }
        const double h = rel_step * std::max(1.0, std::abs(x(i)));
        const bool up = x(i) + h <= upper(i);
        const bool down = x(i) - h >= lower(i);
        if (up && down) {
            xp(i) = x(i) + h;
            const double fp = f(xp);
            xp(i) = x(i) - h;
            const double fm = f(xp);
            g(i) = (fp - fm) / (2.0 * h);
        } else if (up) {
            xp(i) = x(i) + h;
            g(i) = (f(xp) - fx) / h;
        } else {
            xp(i) = x(i) - h;
            g(i) = (fx - f(xp)) / h;
        }
        xp(i) = x(i);
    }
    return g;
}

struct InnerResult {
    Vec x;
    double fx;
    int iterations;
    bool converged;
};

/// Projected BFGS. Variables at a bound whose gradient pushes outward are
/// frozen for the step.
template <typename F>
InnerResult projected_bfgs(F&& f, Vec x, const Vec& lower, const Vec& upper, const MinimizerConfig& cfg) {
    const Eigen::Index n = x.size();
    x = project_box(x, lower, upper);
    double fx = f(x);
    Vec g = fd_gradient(f, x, fx, lower, upper, cfg.fd_step);
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    bool fresh = true;
    int stall = 0;
    int it = 0;
    bool converged = false;

    auto at_lower = [&](Eigen::Index i) { return x(i) <= lower(i); };
    auto at_upper = [&](Eigen::Index i) { return x(i) >= upper(i); };

    for (; it < cfg.max_inner_iterations; ++it) {
        std::vector<bool> frozen(n);
        double pg_norm = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            frozen[i] = lower(i) == upper(i) || (at_lower(i) && g(i) > 0.0) || (at_upper(i) && g(i) < 0.0);
            if (!frozen[i]) pg_norm = std::max(pg_norm, std::abs(g(i)));
        }
        if (pg_norm <= cfg.gradient_tol * (1.0 + std::abs(fx))) {
            converged = true;
            break;
        }

        Vec gf = g;
        for (Eigen::Index i = 0; i < n; ++i)
            if (frozen[i]) gf(i) = 0.0;
        Vec d = -(H * gf);
        for (Eigen::Index i = 0; i < n; ++i)
            if (frozen[i]) d(i) = 0.0;
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            H.setIdentity();
            fresh = true;
            d = -gf;
            slope = g.dot(d);
        }

        double alpha = fresh ? std::min(1.0, 1.0 / std::max(d.lpNorm<Eigen::Infinity>(), 1e-300)) : 1.0;
        Vec xn;
        double fn = fx;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            xn = project_box(x + alpha * d, lower, upper);
            fn = f(xn);
            if (fn <= fx + 1e-4 * g.dot(xn - x) && std::isfinite(fn)) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted || (xn - x).lpNorm<Eigen::Infinity>() == 0.0) {
            if (!fresh) {
                H.setIdentity();
                fresh = true;
                continue;
            }
            converged = true;  // no descent available at gradient accuracy
            break;
        }

        const Vec gn = fd_gradient(f, xn, fn, lower, upper, cfg.fd_step);
        const Vec s = xn - x;
        const Vec y = gn - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (fresh) H *= sy / y.squaredNorm();
            const double rho = 1.0 / sy;
            const Vec Hy = H * y;
            H += (rho * rho * y.dot(Hy) + rho) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
            fresh = false;
        }
        stall = (std::abs(fx - fn) <= 1e-15 * (1.0 + std::abs(fx))) ? stall + 1 : 0;
        x = xn;
        fx = fn;
        g = gn;
        if (stall >= 5) {
            converged = true;
            break;
        }
    }
    return {x, fx, it, converged};
}

/// One augmented-Lagrangian run from a single start.
inline MinimizationResult solve_from(const ConstrainedProblem& p, const Vec& x0, const MinimizerConfig& cfg) {
    MinimizationResult res;
    const Eigen::Index m = p.n_constraints();
    Vec x = project_box(x0, p.lower, p.upper);

    if (m == 0) {
        auto inner = projected_bfgs(p.objective, x, p.lower, p.upper, cfg);
        res.x = inner.x;
        res.value = p.objective(inner.x);
        res.iterations = inner.iterations;
        res.max_violation = 0.0;
        res.feasible = true;
        res.converged = inner.converged;
        res.status = inner.converged ? MinimizationStatus::Converged : MinimizationStatus::IterationLimit;
        return res;
    }

    Vec mult = Vec::Zero(m);
    double rho = cfg.penalty_init;
    double prev_violation = std::numeric_limits<double>::infinity();
    bool inner_ok = false;

    auto shifted_excess = [&](const Vec& g) {
        Vec t = g + mult / rho;
        return Vec(t - t.cwiseMax(p.lo).cwiseMin(p.hi));
    };

    for (int outer = 0; outer < cfg.max_outer_iterations; ++outer) {
        auto lagrangian = [&](const Vec& v) {
            const double fv = p.objective(v);
            const Vec d = shifted_excess(p.constraints(v));
            return fv + 0.5 * rho * d.squaredNorm();
        };
        auto inner = projected_bfgs(lagrangian, x, p.lower, p.upper, cfg);
        x = inner.x;
        res.iterations += inner.iterations;
        inner_ok = inner.converged;

        const Vec g = p.constraints(x);
        const double viol = scaled_violation(g, p.lo, p.hi, cfg);
        mult = rho * shifted_excess(g);
        if (viol <= 1.0 && inner_ok) break;
        if (viol > 0.25 * prev_violation) rho = std::min(rho * cfg.penalty_growth, cfg.penalty_max);
        prev_violation = viol;
    }

    double raw = 0.0;
    const double viol = scaled_violation(p.constraints(x), p.lo, p.hi, cfg, &raw);
    res.x = x;
    res.value = p.objective(x);
    res.max_violation = raw;
    res.feasible = viol <= 1.0;
    res.converged = res.feasible && inner_ok;
    res.status = !res.feasible ? MinimizationStatus::Infeasible
                 : inner_ok    ? MinimizationStatus::Converged
                               : MinimizationStatus::IterationLimit;
    return res;
}

/// Feasible beats infeasible; then lower value; ties by parameter vector.
inline bool better(const MinimizationResult& a, const MinimizationResult& b) {
    if (a.feasible != b.feasible) return a.feasible;
    if (!a.feasible) {
        if (a.max_violation != b.max_violation) return a.max_violation < b.max_violation;
    } else if (a.value != b.value) {
        return a.value < b.value;
    }
    return lex_less(a.x, b.x);
}

}  // namespace detail

/// Anchors first (clipped into the box), then uniform draws within bounds.
inline std::vector<Vec> multistart_points(const Vec& lower, const Vec& upper, int n, std::uint64_t seed,
                                          const std::vector<Vec>& anchors = {}) {
    if (n < 1) throw std::invalid_argument("multistart_points: n must be >= 1");
    if (!lower.allFinite() || !upper.allFinite()) {
        throw std::invalid_argument("multistart_points: bounds must be finite");
    }
    std::vector<Vec> pts;
    for (const auto& a : anchors) {
        if (static_cast<int>(pts.size()) == n) break;
        if (a.size() != lower.size()) throw std::invalid_argument("multistart_points: anchor has wrong size");
        pts.push_back(detail::project_box(a, lower, upper));
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    while (static_cast<int>(pts.size()) < n) {
        Vec v(lower.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = lower(i) + u(rng) * (upper(i) - lower(i));
        pts.push_back(std::move(v));
    }
    return pts;
}

/// Runs every initial point and keeps the best feasible result. Status is
/// Infeasible when no start reaches feasibility; the least-violating point is
/// returned in that case.
inline MinimizationResult minimize(const ConstrainedProblem& p, const MinimizerConfig& cfg = {}) {
    p.validate();
    const std::size_t n = p.initial_points.size();
    std::vector<MinimizationResult> runs(n);
    const unsigned workers = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) runs[i] = detail::solve_from(p, p.initial_points[i], cfg);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < n; i += workers) runs[i] = detail::solve_from(p, p.initial_points[i], cfg);
            });
        }
        for (auto& t : pool) t.join();
    }
    MinimizationResult best = runs.front();
    best.start_index = 0;
    int total_iterations = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total_iterations += runs[i].iterations;
        if (i > 0 && detail::better(runs[i], best)) {
            best = runs[i];
            best.start_index = static_cast<int>(i);
        }
    }
    best.iterations = total_iterations;
    return best;
}

}  // namespace rfiqkd
