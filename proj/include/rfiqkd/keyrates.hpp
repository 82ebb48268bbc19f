#pragma once

// Secret key fractions: analytic BB84, analytic RFI from (Q, C), and the
// uncalibrated-device rate obtained by minimizing the usable entropy over
// every channel and device parameter compatible with the observed counts.

#include "rfiqkd/core_math.hpp"
#include "rfiqkd/device_model.hpp"
#include "rfiqkd/estimation.hpp"
#include "rfiqkd/optimizer.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>
#include <tuple>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfiqkd {

/// 1 + sum_{s,t} z_s x_t log2(z_s x_t) with x = (1 +- c_xx)/2, z = (1 +- c_zz)/2,
/// clamped to [0, 1]. Equal to 1 - h(x+) - h(z+).
inline double bb84_rate(double c_xx, double c_zz) {
    if (!(std::abs(c_xx) <= 1.0) || !(std::abs(c_zz) <= 1.0)) {
        throw std::domain_error("bb84_rate: correlators must lie in [-1, 1]");
    }
    const double x[2] = {(1.0 + c_xx) / 2.0, (1.0 - c_xx) / 2.0};
    const double z[2] = {(1.0 + c_zz) / 2.0, (1.0 - c_zz) / 2.0};
    double r = 1.0;
    for (double zs : z)
        for (double xt : x) r += detail::xlog2x(zs * xt);
    return std::clamp(r, 0.0, 1.0);
}

enum class CorrelatorPair { XX, XY, YX, YY };

inline std::string to_string(CorrelatorPair p) {
    switch (p) {
        case CorrelatorPair::XX:
            return "XX";
        case CorrelatorPair::XY:
            return "XY";
        case CorrelatorPair::YX:
            return "YX";
        case CorrelatorPair::YY:
            return "YY";
    }
    return "?";
}

/// BB84 with the chosen equatorial correlator as the phase-error monitor. The
/// sign of that correlator is a known bit flip, so its magnitude is used.
inline double bb84_rate_any_pair(const Eigen::Matrix3d& C, CorrelatorPair pair) {
    const int a = (pair == CorrelatorPair::YX || pair == CorrelatorPair::YY) ? 1 : 0;
    const int b = (pair == CorrelatorPair::XY || pair == CorrelatorPair::YY) ? 1 : 0;
    return bb84_rate(std::min(std::abs(C(a, b)), 1.0), std::clamp(C(2, 2), -1.0, 1.0));
}

/// C_XX^2 + C_XY^2 + C_YX^2 + C_YY^2, invariant under rotations about z.
inline double quantity_C(const Eigen::Matrix3d& C) {
    return C.topLeftCorner<2, 2>().squaredNorm();
}

enum class RateStatus { Ok, OutOfDomain, Infeasible, IterationLimit };

inline std::string to_string(RateStatus s) {
    switch (s) {
        case RateStatus::Ok:
            return "ok";
        case RateStatus::OutOfDomain:
            return "out_of_domain";
        case RateStatus::Infeasible:
            return "infeasible";
        case RateStatus::IterationLimit:
            return "iteration_limit";
    }
    return "unknown";
}

struct RfiRate {
    double rate = 0.0;
    RateStatus status = RateStatus::Ok;
};

/// Largest QBER for which the closed-form RFI expression holds.
inline constexpr double kRfiMaxQber = 0.159;

inline RfiRate rfi_rate(double Q, double C, double ec_efficiency = 1.0) {
    if (!(Q >= 0.0 && Q <= 1.0)) throw std::domain_error("rfi_rate: Q outside [0, 1]");
    if (!(C >= 0.0 && C <= 2.0 + 1e-9)) throw std::domain_error("rfi_rate: C outside [0, 2]");
    if (Q > kRfiMaxQber) return {0.0, RateStatus::OutOfDomain};
    const double half_c = std::min(C, 2.0) / 2.0;
    const double u = std::min(std::sqrt(half_c) / (1.0 - Q), 1.0);
    double r = 1.0 - ec_efficiency * binary_entropy(Q) - (1.0 - Q) * binary_entropy((1.0 + u) / 2.0);
    if (Q > 0.0) {
        const double rest = std::max(0.0, half_c - (1.0 - Q) * (1.0 - Q) * u * u);
        const double v = std::min(std::sqrt(rest) / Q, 1.0);
        r -= Q * binary_entropy((1.0 + v) / 2.0);
    }
    return {std::clamp(r, 0.0, 1.0), RateStatus::Ok};
}

// ---------------------------------------------------------------------------
// Uncalibrated-device rate

struct AnalysisConfig {
    double sigma = 3.0;           // standard deviations of slack per constraint
    double ec_efficiency = 1.0;   // multiplies h(QBER)
    int n_starts = 16;
    std::uint64_t seed = 1;
    bool use_correlators = true;
    bool use_marginals = true;
    MinimizerConfig minimizer{};
    /// Extra starting points tried before the anchors, e.g. the minimizer of
    /// a narrower problem on the same counts.
    std::vector<Vec> warm_starts;

    void validate() const {
        if (!(sigma >= 0.0)) throw std::domain_error("AnalysisConfig: sigma must be >= 0");
        if (!(ec_efficiency >= 1.0)) throw std::domain_error("AnalysisConfig: ec_efficiency must be >= 1");
        if (n_starts < 1) throw std::domain_error("AnalysisConfig: n_starts must be >= 1");
    }
};

struct KeyrateResult {
    double rate = 0.0;
    double s_min = 0.0;
    double qber_bound = 0.0;
    double sigma = 0.0;
    Vec minimizer;
    ChannelState channel{};
    DeviceParams device{};
    RateStatus status = RateStatus::Ok;
    double max_violation = 0.0;
    int iterations = 0;
};

/// Layout of the optimizer vector: 32 device entries, then lambda1 and a
/// shape parameter t in [-1, 1] with lambda2 = t (1 + lambda1) / 2, which keeps
/// every point inside the physical channel region.
inline constexpr int kUrfiDim = kPackedDeviceSize + 2;

inline ChannelState channel_from_vector(const Vec& x) {
    const double l1 = std::clamp(x(kPackedDeviceSize), -1.0, 1.0);
    const double t = std::clamp(x(kPackedDeviceSize + 1), -1.0, 1.0);
    return {l1, t * (1.0 + l1) / 2.0};
}

namespace detail {

/// Model-side constraint values: the estimation formulas applied to the
/// model's click distribution as pseudo-counts.
inline Eigen::Matrix<double, ConstraintSet::kSize, 1> model_constraint_values(const Vec& x) {
    const Matrix6d p = click_distribution(unpack(x), channel_from_vector(x));
    return constraints(p).values();
}

inline Vec ideal_anchor(double lambda1, double t, double bob_rotation) {
    DeviceParams d = ideal_params();
    const double c = std::cos(bob_rotation), s = std::sin(bob_rotation);
    d.meas_dirs[slot(Basis::X, Sign::Plus)] = {c, s, 0};
    d.meas_dirs[slot(Basis::X, Sign::Minus)] = {-c, -s, 0};
    d.meas_dirs[slot(Basis::Y, Sign::Plus)] = {-s, c, 0};
    d.meas_dirs[slot(Basis::Y, Sign::Minus)] = {s, -c, 0};
    Vec x(kUrfiDim);
    x.head(kPackedDeviceSize) = pack(d);
    x(kPackedDeviceSize) = lambda1;
    x(kPackedDeviceSize + 1) = t;
    return x;
}

}  // namespace detail

/// Bounds of the optimizer vector. Angles are wrapped, efficiencies live in
/// [0.1, 10]; the Z+ source and Z+ detector efficiencies are pinned to 1
/// because p = q / sum(q) cannot see an overall scale on either side.
inline std::pair<Vec, Vec> urfi_bounds() {
    Vec lo(kUrfiDim), hi(kUrfiDim);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (int i = 0; i < kPrepEffOffset; ++i) {
        lo(i) = -two_pi;
        hi(i) = two_pi;
    }
    for (int i = kPrepEffOffset; i < kPackedDeviceSize; ++i) {
        lo(i) = 0.1;
        hi(i) = 10.0;
    }
    lo(kPrepEffOffset + slot(Basis::Z, Sign::Plus)) = hi(kPrepEffOffset + slot(Basis::Z, Sign::Plus)) = 1.0;
    lo(kMeasEffOffset + slot(Basis::Z, Sign::Plus)) = hi(kMeasEffOffset + slot(Basis::Z, Sign::Plus)) = 1.0;
    lo(kPackedDeviceSize) = -1.0;
    hi(kPackedDeviceSize) = 1.0;
    lo(kPackedDeviceSize + 1) = -1.0;
    hi(kPackedDeviceSize + 1) = 1.0;
    return {lo, hi};
}

/// Worst-case QBER allowed by the data: (1 - C_ZZ + sigma dC_ZZ) / 2.
inline double qber_bound(const ConstraintSet& cs, double sigma) {
    return std::clamp((1.0 - cs.C(2, 2) + sigma * cs.dC(2, 2)) / 2.0, 0.0, 1.0);
}

/// Builds the constrained problem whose minimum is S_min.
inline ConstrainedProblem urfi_problem(const ConstraintSet& cs, const AnalysisConfig& cfg) {
    cfg.validate();
    const auto values = cs.values();
    const auto sds = cs.std_devs();
    const auto active = cs.active();
    std::vector<int> used;
    for (int i = 0; i < ConstraintSet::kSize; ++i) {
        const bool is_corr = i < 9;
        if (!active[i]) continue;
        if (is_corr && !cfg.use_correlators) continue;
        if (!is_corr && !cfg.use_marginals) continue;
        used.push_back(i);
    }

    ConstrainedProblem p;
    std::tie(p.lower, p.upper) = urfi_bounds();
    p.objective = [](const Vec& x) { return usable_entropy(channel_from_vector(x)); };
    if (!used.empty()) {
        p.lo.resize(static_cast<Eigen::Index>(used.size()));
        p.hi.resize(static_cast<Eigen::Index>(used.size()));
        for (std::size_t k = 0; k < used.size(); ++k) {
            const double slack = cfg.sigma * sds(used[k]);
            p.lo(k) = values(used[k]) - slack;
            p.hi(k) = values(used[k]) + slack;
        }
        p.constraints = [used](const Vec& x) {
            const auto all = detail::model_constraint_values(x);
            Vec g(static_cast<Eigen::Index>(used.size()));
            for (std::size_t k = 0; k < used.size(); ++k) g(k) = all(used[k]);
            return g;
        };
    }

    // Anchors: ideal devices with a moment-matched channel, in the lab frame
    // and in the frame that best explains the equatorial correlator block.
    const double l1 = std::clamp(cs.C(2, 2), -1.0, 1.0);
    const double amp = std::sqrt(quantity_C(cs.C) / 2.0);
    const double t = std::clamp(2.0 * amp / (1.0 + l1 + 1e-12), 0.0, 1.0);
    const double phi = std::atan2(cs.C(1, 0) - cs.C(0, 1), cs.C(0, 0) + cs.C(1, 1));
    std::vector<Vec> anchors = cfg.warm_starts;
    for (const Vec& a : {detail::ideal_anchor(l1, t, phi), detail::ideal_anchor(l1, t, 0.0),
                         detail::ideal_anchor(l1, -t, phi + std::numbers::pi)}) {
        anchors.push_back(a);
    }
    p.initial_points = multistart_points(p.lower, p.upper, cfg.n_starts, cfg.seed, anchors);
    return p;
}

inline KeyrateResult urfi_rate(const ConstraintSet& cs, const AnalysisConfig& cfg) {
    const ConstrainedProblem p = urfi_problem(cs, cfg);
    const MinimizationResult m = minimize(p, cfg.minimizer);

    KeyrateResult r;
    r.sigma = cfg.sigma;
    r.minimizer = m.x;
    r.channel = channel_from_vector(m.x);
    r.device = unpack(m.x);
    r.s_min = m.value;
    r.max_violation = m.max_violation;
    r.iterations = m.iterations;
    r.qber_bound = qber_bound(cs, cfg.sigma);
    switch (m.status) {
        case MinimizationStatus::Converged:
            r.status = RateStatus::Ok;
            break;
        case MinimizationStatus::IterationLimit:
            r.status = RateStatus::IterationLimit;
            break;
        case MinimizationStatus::Infeasible:
            r.status = RateStatus::Infeasible;
            break;
    }
    if (r.status == RateStatus::Infeasible) {
        r.rate = 0.0;
    } else {
        r.rate = std::clamp(r.s_min - cfg.ec_efficiency * binary_entropy(r.qber_bound), 0.0, 1.0);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json keyrate_to_json(const KeyrateResult& r) {
    return {{"rate", r.rate},
            {"s_min", r.s_min},
            {"qber_bound", r.qber_bound},
            {"status", to_string(r.status)},
            {"sigma", r.sigma},
            {"minimizer", std::vector<double>(r.minimizer.data(), r.minimizer.data() + r.minimizer.size())},
            {"lambda1", r.channel.lambda1},
            {"lambda2", r.channel.canonical().lambda2},
            {"device", r.device},
            {"max_violation", r.max_violation},
            {"iterations", r.iterations}};
}

}  // namespace rfiqkd
