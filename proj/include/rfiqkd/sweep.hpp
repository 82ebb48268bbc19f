#pragma once

// Waveplate-angle sweep: simulate counts at each angle of a half-wave plate
// inserted in the channel and evaluate every key rate on them.

#include "rfiqkd/estimation.hpp"
#include "rfiqkd/keyrates.hpp"
#include "rfiqkd/simulator.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <exception>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace rfiqkd {

struct SweepConfig {
    int n_angles = 24;
    double depolarization = 0.0;
    bool pulse_level = false;
    bool compute_urfi = true;
    AnalysisConfig analysis{};  // sigma here is the width for r_urfi_sigma
    unsigned threads = 1;

    void validate() const {
        if (n_angles < 2) throw std::domain_error("SweepConfig: n_angles must be >= 2");
        if (!(depolarization >= 0.0 && depolarization <= 1.0)) {
            throw std::domain_error("SweepConfig: depolarization must lie in [0, 1]");
        }
        if (threads < 1) throw std::domain_error("SweepConfig: threads must be >= 1");
        analysis.validate();
    }
};

struct SweepRow {
    double theta_deg = 0.0;
    double r_bb84_xx = 0.0, r_bb84_xy = 0.0, r_bb84_yx = 0.0, r_bb84_yy = 0.0;
    double r_rfi = 0.0, r_urfi = 0.0, r_urfi_sigma = 0.0;
    double qber = 0.0;
    double C = 0.0;
    std::string status = "ok";
    Matrix6d normalized = Matrix6d::Zero();
    std::int64_t n0 = 0;
};

inline const std::vector<std::string>& sweep_csv_columns() {
    static const std::vector<std::string> cols{"theta_deg", "r_bb84_xx", "r_bb84_xy",    "r_bb84_yx",
                                               "r_bb84_yy", "r_rfi",     "r_urfi",       "r_urfi_sigma",
                                               "qber",      "C",         "status"};
    return cols;
}

namespace detail {

inline void note_status(std::string& status, const std::string& what, RateStatus s) {
    if (s == RateStatus::Ok) return;
    const std::string item = what + ":" + to_string(s);
    status = status == "ok" ? item : status + ";" + item;
}

}  // namespace detail

/// One angle of the sweep. Bob's Z labels are swapped back because the plate
/// inverts circular handedness. Errors are reported through `status`.
inline SweepRow sweep_row(const DeviceParams& dev_true, const SourceConfig& src, const DetectorConfig& det,
                          const SweepConfig& cfg, int k) {
    SweepRow row;
    row.theta_deg = hwp_angle_deg(k, cfg.n_angles);
    try {
        ChannelConfig ch = hwp_sweep_angles(cfg.n_angles)[static_cast<std::size_t>(k)];
        ch.depolarization = cfg.depolarization;
        SourceConfig s = src;
        s.seed = detail::splitmix64(src.seed + static_cast<std::uint64_t>(k));
        const CountMatrix raw =
            cfg.pulse_level ? simulate_counts(dev_true, s, ch, det).counts : sample_counts(dev_true, s, ch, det);
        const CountMatrix counts = ch.z_flip ? relabel_bob_z(raw) : raw;
        row.n0 = counts.total();
        if (row.n0 > 0) row.normalized = counts.as_real() / static_cast<double>(row.n0);

        const ConstraintSet cs = constraints(counts);
        row.r_bb84_xx = bb84_rate_any_pair(cs.C, CorrelatorPair::XX);
        row.r_bb84_xy = bb84_rate_any_pair(cs.C, CorrelatorPair::XY);
        row.r_bb84_yx = bb84_rate_any_pair(cs.C, CorrelatorPair::YX);
        row.r_bb84_yy = bb84_rate_any_pair(cs.C, CorrelatorPair::YY);
        row.qber = std::clamp((1.0 - cs.C(2, 2)) / 2.0, 0.0, 1.0);
        row.C = quantity_C(cs.C);
        const RfiRate rfi = rfi_rate(row.qber, std::min(row.C, 2.0), cfg.analysis.ec_efficiency);
        row.r_rfi = rfi.rate;
        detail::note_status(row.status, "rfi", rfi.status);

        if (cfg.compute_urfi) {
            AnalysisConfig a = cfg.analysis;
            a.minimizer.threads = 1;
            a.sigma = 0.0;
            const KeyrateResult u0 = urfi_rate(cs, a);
            row.r_urfi = u0.rate;
            detail::note_status(row.status, "urfi", u0.status);
            a.sigma = cfg.analysis.sigma;
            // the sigma = 0 region is contained in the wider one
            if (u0.status != RateStatus::Infeasible) a.warm_starts.push_back(u0.minimizer);
            const KeyrateResult us = urfi_rate(cs, a);
            row.r_urfi_sigma = us.rate;
            detail::note_status(row.status, "urfi_sigma", us.status);
        }
    } catch (const std::exception& e) {
        row.status = std::string("error:") + e.what();
    }
    return row;
}

/// All angles, evaluated on `cfg.threads` workers; rows come back in angle
/// order.
inline std::vector<SweepRow> run_sweep(const DeviceParams& dev_true, const SourceConfig& src,
                                       const DetectorConfig& det, const SweepConfig& cfg) {
    cfg.validate();
    src.validate();
    det.validate();
    std::vector<SweepRow> rows(static_cast<std::size_t>(cfg.n_angles));
    std::atomic<int> next{0};
    auto work = [&] {
        for (int k = next++; k < cfg.n_angles; k = next++) {
            rows[static_cast<std::size_t>(k)] = sweep_row(dev_true, src, det, cfg, k);
        }
    };
    const unsigned workers = std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.n_angles));
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return rows;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    const auto& cols = sweep_csv_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n' << std::setprecision(10);
    for (const auto& r : rows) {
        out << r.theta_deg << ',' << r.r_bb84_xx << ',' << r.r_bb84_xy << ',' << r.r_bb84_yx << ','
            << r.r_bb84_yy << ',' << r.r_rfi << ',' << r.r_urfi << ',' << r.r_urfi_sigma << ',' << r.qber << ','
            << r.C << ',' << r.status << '\n';
    }
    return out.str();
}

/// Normalized 6x6 matrices, one per angle.
inline nlohmann::json sweep_matrices_to_json(const std::vector<SweepRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json m = nlohmann::json::array();
        for (int i = 0; i < 6; ++i) {
            std::vector<double> line(6);
            for (int j = 0; j < 6; ++j) line[static_cast<std::size_t>(j)] = r.normalized(i, j);
            m.push_back(line);
        }
        out.push_back({{"theta_deg", r.theta_deg},
                       {"N0", r.n0},
                       {"prep_order", slot_labels()},
                       {"det_order", slot_labels()},
                       {"normalized", m}});
    }
    return out;
}

}  // namespace rfiqkd
