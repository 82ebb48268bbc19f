#pragma once

// Qubit and two-qubit linear algebra for the security analysis: binary and
// von Neumann entropies, the two-parameter channel state, and the dephasing
// super-operators that reduce a general two-qubit state to that form.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

namespace rfiqkd {

using cplx = std::complex<double>;
using TwoQubitDensity = Eigen::Matrix4cd;

/// Point in (or on) the Poincaré sphere. A norm below one is a partially
/// polarized state.
struct BlochVector {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    double dot(const BlochVector& o) const { return x * o.x + y * o.y + z * o.z; }
    BlochVector operator*(double s) const { return {x * s, y * s, z * s}; }
    BlochVector operator-() const { return {-x, -y, -z}; }
    BlochVector operator+(const BlochVector& o) const { return {x + o.x, y + o.y, z + o.z}; }
    BlochVector operator-(const BlochVector& o) const { return {x - o.x, y - o.y, z - o.z}; }
    bool operator==(const BlochVector&) const = default;

    bool valid(double tol = 1e-12) const { return norm() <= 1.0 + tol; }
};

/// The reduced channel: <ZZ> = lambda1, coherence between |00> and |11>
/// equal to lambda2 / 2.
struct ChannelState {
    double lambda1 = 1.0;
    double lambda2 = 1.0;

    bool valid(double tol = 1e-12) const {
        return std::abs(lambda1) <= 1.0 + tol && 2.0 * std::abs(lambda2) <= 1.0 + lambda1 + tol;
    }
    ChannelState canonical() const { return {lambda1, std::abs(lambda2)}; }
};

namespace detail {

inline double xlog2x(double x) { return x > 0.0 ? x * std::log2(x) : 0.0; }

inline void require_valid(const ChannelState& c) {
    if (!c.valid()) {
        throw std::domain_error("ChannelState violates |l1| <= 1, 2|l2| <= 1 + l1");
    }
}

}  // namespace detail

/// Shannon entropy of a Bernoulli(x) variable, in bits.
inline double binary_entropy(double x) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw std::domain_error("binary_entropy: argument outside [0, 1]");
    }
    return -detail::xlog2x(x) - detail::xlog2x(1.0 - x);
}

/// von Neumann entropy in bits. Eigenvalues below 1e-12 are treated as zero.
inline double von_neumann_entropy(const TwoQubitDensity& rho) {
    Eigen::SelfAdjointEigenSolver<TwoQubitDensity> es(rho, Eigen::EigenvaluesOnly);
    double s = 0.0;
    for (double ev : es.eigenvalues()) {
        if (ev >= 1e-12) s -= ev * std::log2(ev);
    }
    return s;
}

inline bool is_density_matrix(const TwoQubitDensity& rho, double tol = 1e-12) {
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > tol) return false;
    if (std::abs(rho.trace() - cplx(1.0, 0.0)) > tol) return false;
    Eigen::SelfAdjointEigenSolver<TwoQubitDensity> es(rho, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -tol;
}

inline TwoQubitDensity simplified_density(const ChannelState& c) {
    detail::require_valid(c);
    TwoQubitDensity rho = TwoQubitDensity::Zero();
    rho(0, 0) = rho(3, 3) = (1.0 + c.lambda1) / 4.0;
    rho(1, 1) = rho(2, 2) = (1.0 - c.lambda1) / 4.0;
    rho(0, 3) = rho(3, 0) = c.lambda2 / 2.0;
    return rho;
}

/// Closed-form spectrum of simplified_density, ordered (eta1, eta2, eta3, eta4).
inline std::array<double, 4> simplified_eigenvalues(const ChannelState& c) {
    detail::require_valid(c);
    const double e12 = (1.0 - c.lambda1) / 4.0;
    return {e12, e12, (1.0 + c.lambda1 - 2.0 * c.lambda2) / 4.0,
            (1.0 + c.lambda1 + 2.0 * c.lambda2) / 4.0};
}

/// Eve's residual uncertainty about Alice's key bit for the reduced channel,
/// S(rho || P rho) = S(P rho) - S(rho) = 1 + h(2 eta1) + sum_i eta_i log2 eta_i.
///
/// The "+ h" sign matters: with "- h" the maximally mixed state would get -2.
inline double usable_entropy(const ChannelState& c) {
    const auto eta = simplified_eigenvalues(c.canonical());
    double s = 1.0 + binary_entropy(std::clamp(2.0 * eta[0], 0.0, 1.0));
    for (double e : eta) s += detail::xlog2x(std::max(e, 0.0));
    return std::clamp(s, 0.0, 1.0);
}

/// Tr rho (log2 rho - log2 sigma). Returns +inf when rho has weight outside
/// the support of sigma (beyond 1e-9).
inline double relative_entropy(const TwoQubitDensity& rho, const TwoQubitDensity& sigma) {
    constexpr double zero_eig = 1e-12;
    Eigen::SelfAdjointEigenSolver<TwoQubitDensity> es(sigma);
    double cross = 0.0;
    for (int j = 0; j < 4; ++j) {
        const auto v = es.eigenvectors().col(j);
        const double weight = (v.adjoint() * rho * v)(0, 0).real();
        const double ev = es.eigenvalues()(j);
        if (ev < zero_eig) {
            if (weight > 1e-9) return std::numeric_limits<double>::infinity();
            continue;
        }
        cross += weight * std::log2(ev);
    }
    return std::max(0.0, -von_neumann_entropy(rho) - cross);
}

/// P rho = P0 rho P0 + P1 rho P1 with P0/1 projecting qubit A onto its z
/// eigenstates. Basis order |00>, |01>, |10>, |11> (qubit A is the high bit).
inline TwoQubitDensity key_basis_dephase(const TwoQubitDensity& rho) {
    TwoQubitDensity out = rho;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            if ((i >> 1) != (j >> 1)) out(i, j) = 0.0;
        }
    }
    return out;
}

/// Dephasing in the eigenbasis of sigma_z^A - sigma_z^B. That operator is
/// diagonal with eigenvalues (0, 2, -2, 0), so only the |00>,|11> coherence
/// survives besides the diagonal.
inline TwoQubitDensity dephase_z_difference(const TwoQubitDensity& rho) {
    constexpr std::array<int, 4> eig{0, 2, -2, 0};
    TwoQubitDensity out = rho;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            if (eig[i] != eig[j]) out(i, j) = 0.0;
        }
    }
    return out;
}

/// Dephasing in the eigenbasis of sigma_x^A sigma_x^B: (rho + XX rho XX) / 2.
inline TwoQubitDensity dephase_xx(const TwoQubitDensity& rho) {
    TwoQubitDensity flipped;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) flipped(i, j) = rho(3 - i, 3 - j);
    }
    return 0.5 * (rho + flipped);
}

/// L2 L1 rho: the full reduction to the two-parameter form.
inline TwoQubitDensity reduce_to_simplified(const TwoQubitDensity& rho) {
    return dephase_xx(dephase_z_difference(rho));
}

/// Reduces rho and reads off (lambda1, lambda2). The usable entropy of the
/// result never exceeds S(rho || P rho).
inline ChannelState project_to_channel_state(const TwoQubitDensity& rho) {
    const TwoQubitDensity r = reduce_to_simplified(rho);
    ChannelState c{2.0 * (r(0, 0).real() + r(3, 3).real()) - 1.0, 2.0 * r(0, 3).real()};
    c.lambda1 = std::clamp(c.lambda1, -1.0, 1.0);
    const double cap = (1.0 + c.lambda1) / 2.0;
    c.lambda2 = std::clamp(c.lambda2, -cap, cap);
    return c;
}

}  // namespace rfiqkd
