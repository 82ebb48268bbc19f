#pragma once

// Parametrized model of imperfect preparation and measurement devices.
//
// Each of Alice's six sources and Bob's six detectors is a direction on the
// Poincaré sphere plus an efficiency. Combined with the reduced channel this
// gives the click weights q = t1 t2 / 4 (1 + n . Lambda . r) with
// Lambda = diag(lambda2, lambda2, lambda1).

#include "rfiqkd/core_math.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfiqkd {

enum class Basis { X = 0, Y = 1, Z = 2 };
enum class Sign { Plus = 0, Minus = 1 };

/// Row/column index 0..5 in the order X+, X-, Y+, Y-, Z+, Z-.
constexpr int slot(Basis b, Sign s) { return 2 * static_cast<int>(b) + static_cast<int>(s); }
constexpr Basis slot_basis(int i) { return static_cast<Basis>(i / 2); }
constexpr Sign slot_sign(int i) { return static_cast<Sign>(i % 2); }

inline const std::array<std::string, 6>& slot_labels() {
    static const std::array<std::string, 6> labels{"X+", "X-", "Y+", "Y-", "Z+", "Z-"};
    return labels;
}

using Matrix6d = Eigen::Matrix<double, 6, 6, Eigen::RowMajor>;

struct DeviceParams {
    std::array<BlochVector, 6> prep_dirs{};
    std::array<BlochVector, 6> meas_dirs{};
    std::array<double, 6> prep_eff{1, 1, 1, 1, 1, 1};
    std::array<double, 6> meas_eff{1, 1, 1, 1, 1, 1};

    void validate() const {
        for (int i = 0; i < 6; ++i) {
            if (!prep_dirs[i].valid(1e-9) || !meas_dirs[i].valid(1e-9)) {
                throw std::domain_error("DeviceParams: direction with norm > 1");
            }
            if (!(prep_eff[i] > 0.0) || !(meas_eff[i] > 0.0)) {
                throw std::domain_error("DeviceParams: efficiencies must be positive");
            }
        }
    }
};

/// Six orthonormal directions at +-X, +-Y, +-Z on both sides, unit efficiencies.
inline DeviceParams ideal_params() {
    DeviceParams p;
    const std::array<BlochVector, 6> axes{BlochVector{1, 0, 0},  BlochVector{-1, 0, 0},
                                          BlochVector{0, 1, 0},  BlochVector{0, -1, 0},
                                          BlochVector{0, 0, 1},  BlochVector{0, 0, -1}};
    p.prep_dirs = axes;
    p.meas_dirs = axes;
    return p;
}

inline double click_probability_q(const DeviceParams& p, const ChannelState& c, int prep, int det) {
    const BlochVector& n = p.prep_dirs[prep];
    const BlochVector& r = p.meas_dirs[det];
    const double corr = c.lambda2 * (n.x * r.x + n.y * r.y) + c.lambda1 * n.z * r.z;
    return p.prep_eff[prep] * p.meas_eff[det] / 4.0 * (1.0 + corr);
}

inline double click_probability_q(const DeviceParams& p, const ChannelState& c, Basis a, Sign u,
                                  Basis b, Sign v) {
    return click_probability_q(p, c, slot(a, u), slot(b, v));
}

/// Unnormalized click weights q for all 36 (preparation, detector) pairs.
inline Matrix6d click_weights(const DeviceParams& p, const ChannelState& c) {
    Matrix6d q;
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) q(i, j) = click_probability_q(p, c, i, j);
    }
    return q;
}

/// p = q / sum(q).
inline Matrix6d click_distribution(const DeviceParams& p, const ChannelState& c) {
    Matrix6d q = click_weights(p, c);
    const double total = q.sum();
    if (!(total > 0.0)) throw std::domain_error("click_distribution: all click weights vanish");
    return q / total;
}

// ---------------------------------------------------------------------------
// Optics

/// Waveplates and beam splitter of one terminal. Retardances in waves,
/// angles in degrees, extinction in dB (infinity for a perfect PBS).
struct OpticsSpec {
    double hwp_retardance = 0.5;
    double qwp_retardance = 0.25;
    double pbs_extinction = std::numeric_limits<double>::infinity();
    double hwp_angle = 22.5;
    double qwp_angle = 45.0;

    void validate() const {
        if (!(hwp_retardance > 0.0 && hwp_retardance < 1.0) ||
            !(qwp_retardance > 0.0 && qwp_retardance < 1.0)) {
            throw std::domain_error("OpticsSpec: retardance must lie in (0, 1)");
        }
        if (!(pbs_extinction > 0.0)) throw std::domain_error("OpticsSpec: extinction must be > 0");
    }

    /// Leaked-to-transmitted intensity ratio.
    double leak_ratio() const {
        return std::isinf(pbs_extinction) ? 0.0 : std::pow(10.0, -pbs_extinction / 10.0);
    }
};

/// Bob's receiver mirrors Alice's emitter; his quarter-wave plate sits at the
/// opposite angle so that an ideal Z+ detector accepts Alice's ideal Z+ state.
inline OpticsSpec ideal_receiver_optics() {
    OpticsSpec s;
    s.qwp_angle = -45.0;
    return s;
}

/// Bench emitter: measured retardances and a 13 dB polarizer.
inline OpticsSpec lab_emitter_optics() {
    OpticsSpec s;
    s.hwp_retardance = 0.535;
    s.qwp_retardance = 0.265;
    s.pbs_extinction = 13.0;
    return s;
}

inline OpticsSpec lab_receiver_optics() {
    OpticsSpec s = ideal_receiver_optics();
    s.hwp_retardance = 0.535;
    s.qwp_retardance = 0.265;
    return s;
}

namespace optics {

using Jones = Eigen::Matrix2cd;
using JonesVector = Eigen::Vector2cd;

/// Linear retarder with fast axis at `angle_deg` and retardance in waves.
inline Jones waveplate(double retardance, double angle_deg) {
    const double th = angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    Eigen::Matrix2d rot;
    rot << c, s, -s, c;
    const double g = 2.0 * std::numbers::pi * retardance;
    Jones phase = Jones::Zero();
    phase(0, 0) = std::polar(1.0, -g / 2.0);
    phase(1, 1) = std::polar(1.0, g / 2.0);
    return rot.transpose().cast<cplx>() * phase * rot.cast<cplx>();
}

/// Stokes direction (S1, S2, S3) of a normalized Jones vector. H -> +x,
/// diagonal -> +y, and S3 = 2 Im(a conj(b)).
inline BlochVector stokes(const JonesVector& e) {
    const cplx a = e(0), b = e(1);
    const double norm = std::norm(a) + std::norm(b);
    return {(std::norm(a) - std::norm(b)) / norm, 2.0 * (std::conj(a) * b).real() / norm,
            2.0 * (a * std::conj(b)).imag() / norm};
}

inline Jones arm_element(const OpticsSpec& spec, Basis arm) {
    switch (arm) {
        case Basis::X:
            return Jones::Identity();
        case Basis::Y:
            return waveplate(spec.hwp_retardance, spec.hwp_angle);
        case Basis::Z:
            return waveplate(spec.qwp_retardance, spec.qwp_angle);
    }
    return Jones::Identity();
}

inline JonesVector pbs_output(Sign sign) {
    return sign == Sign::Plus ? JonesVector(1.0, 0.0) : JonesVector(0.0, 1.0);
}

inline double polarizer_degree(const OpticsSpec& spec) {
    const double eps = spec.leak_ratio();
    return (1.0 - eps) / (1.0 + eps);
}

}  // namespace optics

/// State emitted by Alice's (arm, sign) source: H or V from the polarizer,
/// shortened by the finite extinction, then sent through the arm's waveplate.
inline BlochVector bloch_from_optics(const OpticsSpec& spec, Basis arm, Sign sign) {
    spec.validate();
    const optics::JonesVector out = optics::arm_element(spec, arm) * optics::pbs_output(sign);
    return optics::stokes(out) * optics::polarizer_degree(spec);
}

/// Direction accepted by Bob's (arm, sign) detector. Light traverses the
/// waveplate before the PBS, so the accepted state is J^dagger applied to H/V.
inline BlochVector measurement_bloch_from_optics(const OpticsSpec& spec, Basis arm, Sign sign) {
    spec.validate();
    const optics::JonesVector acc = optics::arm_element(spec, arm).adjoint() * optics::pbs_output(sign);
    return optics::stokes(acc) * optics::polarizer_degree(spec);
}

/// Ground-truth device built from both terminals' optics, unit efficiencies.
inline DeviceParams device_from_optics(const OpticsSpec& emitter, const OpticsSpec& receiver) {
    DeviceParams p;
    for (int i = 0; i < 6; ++i) {
        p.prep_dirs[i] = bloch_from_optics(emitter, slot_basis(i), slot_sign(i));
        p.meas_dirs[i] = measurement_bloch_from_optics(receiver, slot_basis(i), slot_sign(i));
    }
    return p;
}

// ---------------------------------------------------------------------------
// Packing for the optimizer. Z preparations are pinned to +-z and are not
// part of the vector; every other direction is (polar, azimuth).

inline constexpr int kPackedDeviceSize = 32;
inline constexpr int kPackedPrepAngles = 8;    // X+, X-, Y+, Y-
inline constexpr int kPackedMeasAngles = 12;   // all six detectors
inline constexpr int kPrepEffOffset = kPackedPrepAngles + kPackedMeasAngles;
inline constexpr int kMeasEffOffset = kPrepEffOffset + 6;

namespace detail {

inline BlochVector from_angles(double polar, double azimuth) {
    const double s = std::sin(polar);
    return {s * std::cos(azimuth), s * std::sin(azimuth), std::cos(polar)};
}

inline std::pair<double, double> to_angles(const BlochVector& v) {
    const double n = v.norm();
    if (n == 0.0) return {0.0, 0.0};
    return {std::acos(std::clamp(v.z / n, -1.0, 1.0)), std::atan2(v.y, v.x)};
}

}  // namespace detail

inline Eigen::VectorXd pack(const DeviceParams& p) {
    Eigen::VectorXd v(kPackedDeviceSize);
    for (int i = 0; i < 4; ++i) {
        const auto [pol, az] = detail::to_angles(p.prep_dirs[i]);
        v(2 * i) = pol;
        v(2 * i + 1) = az;
    }
    for (int j = 0; j < 6; ++j) {
        const auto [pol, az] = detail::to_angles(p.meas_dirs[j]);
        v(kPackedPrepAngles + 2 * j) = pol;
        v(kPackedPrepAngles + 2 * j + 1) = az;
    }
    for (int i = 0; i < 6; ++i) {
        v(kPrepEffOffset + i) = p.prep_eff[i];
        v(kMeasEffOffset + i) = p.meas_eff[i];
    }
    return v;
}

/// Inverse of pack. Accepts any vector whose first 32 entries hold the device
/// parameters; directions come back as unit vectors.
inline DeviceParams unpack(const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (v.size() < kPackedDeviceSize) throw std::invalid_argument("unpack: vector too short");
    DeviceParams p;
    for (int i = 0; i < 4; ++i) p.prep_dirs[i] = detail::from_angles(v(2 * i), v(2 * i + 1));
    p.prep_dirs[4] = {0, 0, 1};
    p.prep_dirs[5] = {0, 0, -1};
    for (int j = 0; j < 6; ++j) {
        p.meas_dirs[j] = detail::from_angles(v(kPackedPrepAngles + 2 * j),
                                             v(kPackedPrepAngles + 2 * j + 1));
    }
    for (int i = 0; i < 6; ++i) {
        p.prep_eff[i] = v(kPrepEffOffset + i);
        p.meas_eff[i] = v(kMeasEffOffset + i);
    }
    return p;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const BlochVector& v) { j = {v.x, v.y, v.z}; }

inline void from_json(const nlohmann::json& j, BlochVector& v) {
    if (!j.is_array() || j.size() != 3) throw std::invalid_argument("direction must be [x, y, z]");
    v = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline void to_json(nlohmann::json& j, const DeviceParams& p) {
    j = nlohmann::json{{"prep_dirs", p.prep_dirs},
                       {"meas_dirs", p.meas_dirs},
                       {"prep_eff", p.prep_eff},
                       {"meas_eff", p.meas_eff}};
}

inline void from_json(const nlohmann::json& j, DeviceParams& p) {
    DeviceParams out;
    out.prep_dirs = j.at("prep_dirs").get<std::array<BlochVector, 6>>();
    out.meas_dirs = j.at("meas_dirs").get<std::array<BlochVector, 6>>();
    if (j.contains("prep_eff")) out.prep_eff = j.at("prep_eff").get<std::array<double, 6>>();
    if (j.contains("meas_eff")) out.meas_eff = j.at("meas_eff").get<std::array<double, 6>>();
    out.validate();
    p = out;
}

inline void to_json(nlohmann::json& j, const OpticsSpec& s) {
    j = nlohmann::json{{"hwp_retardance", s.hwp_retardance},
                       {"qwp_retardance", s.qwp_retardance},
                       {"hwp_angle", s.hwp_angle},
                       {"qwp_angle", s.qwp_angle}};
    if (std::isinf(s.pbs_extinction)) {
        j["pbs_extinction"] = nullptr;
    } else {
        j["pbs_extinction"] = s.pbs_extinction;
    }
}

inline void from_json(const nlohmann::json& j, OpticsSpec& s) {
    OpticsSpec out;
    out.hwp_retardance = j.value("hwp_retardance", out.hwp_retardance);
    out.qwp_retardance = j.value("qwp_retardance", out.qwp_retardance);
    out.hwp_angle = j.value("hwp_angle", out.hwp_angle);
    out.qwp_angle = j.value("qwp_angle", out.qwp_angle);
    if (j.contains("pbs_extinction") && !j.at("pbs_extinction").is_null()) {
        out.pbs_extinction = j.at("pbs_extinction").get<double>();
    }
    out.validate();
    s = out;
}

}  // namespace rfiqkd
