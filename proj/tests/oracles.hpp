#pragma once

// Independent reference computations used to check the library. Nothing in
// here calls into the library's own numerics.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

namespace oracle {

using Mat4 = Eigen::Matrix4cd;

/// Tr rho log2 rho via a generic self-adjoint eigensolver.
inline double neg_entropy(const Mat4& rho) {
    Eigen::SelfAdjointEigenSolver<Mat4> es(rho);
    double s = 0.0;
    for (double ev : es.eigenvalues()) {
        if (ev > 1e-14) s += ev * std::log2(ev);
    }
    return s;
}

/// S(rho || sigma) from two full eigendecompositions.
inline double relative_entropy(const Mat4& rho, const Mat4& sigma) {
    Eigen::SelfAdjointEigenSolver<Mat4> es(sigma);
    Mat4 log_sigma = Mat4::Zero();
    for (int k = 0; k < 4; ++k) {
        const double ev = es.eigenvalues()(k);
        if (ev > 1e-14) log_sigma += std::log2(ev) * es.eigenvectors().col(k) * es.eigenvectors().col(k).adjoint();
    }
    return neg_entropy(rho) - (rho * log_sigma).trace().real();
}

/// Dephasing by the projectors onto |0><0| and |1><1| of the first qubit,
/// written out as P0 rho P0 + P1 rho P1.
inline Mat4 dephase_first_qubit(const Mat4& rho) {
    Mat4 p0 = Mat4::Zero(), p1 = Mat4::Zero();
    p0(0, 0) = p0(1, 1) = 1.0;
    p1(2, 2) = p1(3, 3) = 1.0;
    return p0 * rho * p0 + p1 * rho * p1;
}

/// Random full-rank density matrix from a Ginibre matrix.
template <typename Rng>
Mat4 random_density(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Mat4 g;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) g(i, j) = {n(rng), n(rng)};
    Mat4 r = g * g.adjoint();
    return r / r.trace().real();
}

/// Textbook Jones matrix for a linear retarder of retardance `waves` with fast
/// axis at `angle_deg`, built as R(-a) diag(1, e^{i d}) R(a) and stripped of
/// its global phase (irrelevant for Stokes parameters).
inline Eigen::Matrix2cd retarder(double waves, double angle_deg) {
    const double a = angle_deg * std::numbers::pi / 180.0;
    const double d = 2.0 * std::numbers::pi * waves;
    Eigen::Matrix2cd rot, rot_back, core;
    rot << std::cos(a), std::sin(a), -std::sin(a), std::cos(a);
    rot_back = rot.transpose();
    core << 1.0, 0.0, 0.0, std::polar(1.0, d);
    return rot_back * core * rot;
}

/// Stokes vector (S1, S2, S3)/S0 with S1 = H - V, S2 = D - A, S3 = R - L,
/// circular handedness defined so that a quarter-wave plate at 45 degrees
/// takes H to S3 = +1.
inline std::array<double, 3> stokes(const Eigen::Vector2cd& e) {
    const double s0 = e.squaredNorm();
    const std::complex<double> h = e(0), v = e(1);
    const double s1 = std::norm(h) - std::norm(v);
    const double s2 = 2.0 * (std::conj(h) * v).real();
    const double s3 = -2.0 * (std::conj(h) * v).imag();
    return {s1 / s0, s2 / s0, s3 / s0};
}

/// Closed form of the BB84 bound on a grid, independent of the library:
/// 1 - h((1+cx)/2) - h((1+cz)/2).
inline double bb84_closed_form(double cx, double cz) {
    auto h = [](double p) {
        double s = 0.0;
        if (p > 0.0) s -= p * std::log2(p);
        if (p < 1.0) s -= (1.0 - p) * std::log2(1.0 - p);
        return s;
    };
    return std::max(0.0, 1.0 - h((1.0 + cx) / 2.0) - h((1.0 + cz) / 2.0));
}

}  // namespace oracle
