#pragma once

// Monte Carlo model of the bench experiment: a faint-pulse source with six
// preparations, a rotating half-wave plate between the terminals, lossy
// detectors with dark counts and dead time, and the coincidence discard.
//
// Two modes: pulse-level event generation (time-ordered detections, used for
// dead-time realism) and a fast multinomial mode that draws the count matrix
// directly from the exact per-cell rates.

#include "rfiqkd/device_model.hpp"
#include "rfiqkd/estimation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfiqkd {

struct SourceConfig {
    double pulse_rate = 250e6;  // Hz
    double mu = 0.05;           // mean photons per pulse
    std::int64_t n_pulses = 250'000'000;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(pulse_rate > 0.0)) throw std::domain_error("SourceConfig: pulse_rate must be > 0");
        if (!(mu > 0.0)) throw std::domain_error("SourceConfig: mu must be > 0");
        if (n_pulses < 1) throw std::domain_error("SourceConfig: n_pulses must be >= 1");
    }
    double duration_s() const { return static_cast<double>(n_pulses) / pulse_rate; }
};

struct ChannelConfig {
    double rotation = 0.0;  // radians about the Poincaré z axis
    double depolarization = 0.0;
    bool z_flip = false;

    void validate() const {
        if (!(depolarization >= 0.0 && depolarization <= 1.0)) {
            throw std::domain_error("ChannelConfig: depolarization must lie in [0, 1]");
        }
        if (!std::isfinite(rotation)) throw std::domain_error("ChannelConfig: rotation must be finite");
    }
};

struct DetectorConfig {
    double efficiency = 0.45;
    double coupling = 0.8;
    double filter_transmission = 0.7;
    /// Remaining receiver losses (beam splitters, fibre coupling of the six
    /// outputs). 0.635 brings the bench total to 0.16 = 2 MHz / 12.5 MHz.
    double optics_transmission = 0.635;
    double dark_rate = 400.0;     // counts/s per detector
    double dead_time = 50.0;      // ns
    double discard_window = 60.0; // ns

    void validate() const {
        auto unit = [](double v) { return v > 0.0 && v <= 1.0; };
        if (!unit(efficiency) || !unit(coupling) || !unit(filter_transmission) || !unit(optics_transmission)) {
            throw std::domain_error("DetectorConfig: transmissions and efficiency must lie in (0, 1]");
        }
        if (!(dark_rate >= 0.0) || !(dead_time >= 0.0) || !(discard_window >= 0.0)) {
            throw std::domain_error("DetectorConfig: rates and times must be >= 0");
        }
    }
    double transmission() const { return efficiency * coupling * filter_transmission * optics_transmission; }
};

/// Rotate (x, y) by the channel angle, optionally invert z, then shrink by
/// (1 - depolarization).
inline BlochVector apply_channel(const BlochVector& n, const ChannelConfig& ch) {
    const double c = std::cos(ch.rotation), s = std::sin(ch.rotation);
    BlochVector out{c * n.x - s * n.y, s * n.x + c * n.y, ch.z_flip ? -n.z : n.z};
    return out * (1.0 - ch.depolarization);
}

/// Half-wave plate on a rotating mount at n angles uniform in [0, 180) deg.
/// The equatorial rotation is four times the mechanical angle and the
/// circular handedness is inverted.
inline std::vector<ChannelConfig> hwp_sweep_angles(int n) {
    if (n < 2) throw std::invalid_argument("hwp_sweep_angles: n must be >= 2");
    std::vector<ChannelConfig> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const double theta = std::numbers::pi * k / n;
        out.push_back({4.0 * theta, 0.0, true});
    }
    return out;
}

inline double hwp_angle_deg(int k, int n) { return 180.0 * k / n; }

/// Per-photon detector distribution for each preparation: row i gives the
/// probability that a photon from source i reaches detector j, with Bob's
/// passive basis choice folded in.
inline Matrix6d photon_detector_distribution(const DeviceParams& dev, const ChannelConfig& ch) {
    Matrix6d w;
    for (int i = 0; i < 6; ++i) {
        const BlochVector n = apply_channel(dev.prep_dirs[i], ch);
        for (int j = 0; j < 6; ++j) w(i, j) = dev.meas_eff[j] * std::max(0.0, 1.0 + n.dot(dev.meas_dirs[j]));
        const double s = w.row(i).sum();
        if (!(s > 0.0)) throw std::domain_error("photon_detector_distribution: source reaches no detector");
        w.row(i) /= s;
    }
    return w;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Which source fires in a given pulse slot: a fixed pseudo-random pattern,
/// shared by signal and dark-count bookkeeping.
inline int pattern_slot(std::uint64_t seed, std::int64_t pulse) {
    return static_cast<int>(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(pulse))) % 6);
}

/// k ~ Poisson(m) conditioned on k >= 1, by inversion.
template <typename Rng>
int poisson_at_least_one(double m, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double target = u(rng) * -std::expm1(-m);
    double pk = std::exp(-m) * m;
    int k = 1;
    while (target > pk && k < 1000) {
        target -= pk;
        ++k;
        pk *= m / k;
    }
    return k;
}

template <typename Rng>
int draw_index(const Matrix6d& dist, int row, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double x = u(rng);
    for (int j = 0; j < 5; ++j) {
        x -= dist(row, j);
        if (x < 0.0) return j;
    }
    return 5;
}

}  // namespace detail

/// Drops every count that falls within `discard_window` of any earlier count
/// in the input, on any detector. Input must be time-ordered.
inline std::vector<DetectionEvent> deadtime_filter(const std::vector<DetectionEvent>& events,
                                                   const DetectorConfig& det) {
    std::vector<DetectionEvent> kept;
    kept.reserve(events.size());
    double last = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (i > 0 && events[i].time_ns < events[i - 1].time_ns) {
            throw std::invalid_argument("deadtime_filter: events are not time-ordered");
        }
        if (events[i].time_ns - last >= det.discard_window) kept.push_back(events[i]);
        last = events[i].time_ns;
    }
    return kept;
}

struct SimulationOutput {
    std::vector<DetectionEvent> events;
    CountMatrix counts;
};

/// Pulse-level simulation. Pulses with at least one detected photon are
/// reached by geometric skipping; each detected photon picks a detector from
/// photon_detector_distribution. Dark counts are Poisson processes per
/// detector labeled with the source active in their pulse slot. A detector
/// that fired ignores light for `dead_time`; the coincidence discard is then
/// applied across all detectors.
inline SimulationOutput simulate_counts(const DeviceParams& dev_true, const SourceConfig& src,
                                        const ChannelConfig& ch, const DetectorConfig& det) {
    src.validate();
    ch.validate();
    det.validate();
    const Matrix6d dist = photon_detector_distribution(dev_true, ch);
    const double slot_ns = 1e9 / src.pulse_rate;
    const double m_det = src.mu * det.transmission();
    const double p_click = -std::expm1(-m_det);

    std::mt19937_64 rng(src.seed);
    std::vector<DetectionEvent> raw;

    // signal
    std::geometric_distribution<std::int64_t> gap(p_click);
    std::vector<int> fired;
    for (std::int64_t pulse = gap(rng); pulse < src.n_pulses; pulse += 1 + gap(rng)) {
        const int prep = detail::pattern_slot(src.seed, pulse);
        const int photons = detail::poisson_at_least_one(m_det, rng);
        fired.clear();
        for (int k = 0; k < photons; ++k) {
            const int j = detail::draw_index(dist, prep, rng);
            if (std::find(fired.begin(), fired.end(), j) == fired.end()) fired.push_back(j);
        }
        std::shuffle(fired.begin(), fired.end(), rng);
        for (int j : fired) raw.push_back({pulse * slot_ns, prep, j, false});
    }

    // dark counts
    if (det.dark_rate > 0.0) {
        const double horizon_ns = src.duration_s() * 1e9;
        std::exponential_distribution<double> wait(det.dark_rate * 1e-9);
        for (int j = 0; j < 6; ++j) {
            for (double t = wait(rng); t < horizon_ns; t += wait(rng)) {
                const auto pulse = static_cast<std::int64_t>(t / slot_ns);
                raw.push_back({t, detail::pattern_slot(src.seed, pulse), j, true});
            }
        }
    }
    std::stable_sort(raw.begin(), raw.end(),
                     [](const DetectionEvent& a, const DetectionEvent& b) { return a.time_ns < b.time_ns; });

    // per-detector dead time
    std::array<double, 6> busy_until;
    busy_until.fill(-std::numeric_limits<double>::infinity());
    std::vector<DetectionEvent> recorded;
    recorded.reserve(raw.size());
    for (const auto& e : raw) {
        if (e.time_ns < busy_until[e.det]) continue;
        busy_until[e.det] = e.time_ns + det.dead_time;
        recorded.push_back(e);
    }

    SimulationOutput out;
    out.events = deadtime_filter(recorded, det);
    out.counts = accumulate(out.events);
    return out;
}

/// Expected counts per (source, detector) cell for the whole run, dark counts
/// included and dead time ignored.
inline Matrix6d expected_counts(const DeviceParams& dev_true, const SourceConfig& src,
                                const ChannelConfig& ch, const DetectorConfig& det) {
    src.validate();
    ch.validate();
    det.validate();
    const Matrix6d dist = photon_detector_distribution(dev_true, ch);
    const double pulses_per_source = static_cast<double>(src.n_pulses) / 6.0;
    const double p_click = -std::expm1(-src.mu * det.transmission());
    const double p_dark = det.dark_rate / src.pulse_rate;
    return pulses_per_source * (p_click * dist.array() + p_dark).matrix();
}

/// Draws N ~ Poisson(sum of means) and splits it multinomially over the cells
/// by sequential conditional binomials.
inline CountMatrix sample_multinomial(const Matrix6d& means, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double total_mean = means.sum();
    std::poisson_distribution<std::int64_t> total_draw(total_mean);
    std::int64_t remaining = total_mean > 0.0 ? total_draw(rng) : 0;
    double mass_left = total_mean;
    CountArray a = CountArray::Zero();
    for (int k = 0; k < 36 && remaining > 0; ++k) {
        const double pk = means(k / 6, k % 6);
        if (k == 35 || mass_left <= 0.0) {
            a(k / 6, k % 6) = remaining;
            break;
        }
        const double q = std::clamp(pk / mass_left, 0.0, 1.0);
        std::binomial_distribution<std::int64_t> b(remaining, q);
        const std::int64_t x = b(rng);
        a(k / 6, k % 6) = x;
        remaining -= x;
        mass_left -= pk;
    }
    return CountMatrix(a);
}

/// Fast mode: the count matrix drawn straight from the exact cell rates.
inline CountMatrix sample_counts(const DeviceParams& dev_true, const SourceConfig& src, const ChannelConfig& ch,
                                 const DetectorConfig& det) {
    return sample_multinomial(expected_counts(dev_true, src, ch, det), src.seed);
}

/// Undo the channel's handedness flip by swapping Bob's Z+ and Z- labels.
inline std::vector<DetectionEvent> relabel_bob_z(std::vector<DetectionEvent> events) {
    const int zp = slot(Basis::Z, Sign::Plus), zm = slot(Basis::Z, Sign::Minus);
    for (auto& e : events) {
        if (e.det == zp) {
            e.det = zm;
        } else if (e.det == zm) {
            e.det = zp;
        }
    }
    return events;
}

// ---------------------------------------------------------------------------
// Event log CSV: time_ns, prep_basis, prep_sign, det_basis, det_sign, is_dark

inline std::string events_to_csv(const std::vector<DetectionEvent>& events) {
    static constexpr const char* bases = "XYZ";
    std::ostringstream os;
    os.precision(17);
    os << "time_ns,prep_basis,prep_sign,det_basis,det_sign,is_dark\n";
    for (const auto& e : events) {
        os << e.time_ns << ',' << bases[e.prep / 2] << ',' << (e.prep % 2 ? '-' : '+') << ','
           << bases[e.det / 2] << ',' << (e.det % 2 ? '-' : '+') << ',' << (e.is_dark ? 1 : 0) << '\n';
    }
    return os.str();
}

inline std::vector<DetectionEvent> events_from_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("event CSV: missing header");
    std::vector<DetectionEvent> out;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string f[6];
        for (auto& cell : f) {
            if (!std::getline(ss, cell, ',')) throw std::invalid_argument("event CSV: short row");
        }
        DetectionEvent e;
        e.time_ns = std::stod(f[0]);
        e.prep = parse_slot_label(f[1] + f[2]);
        e.det = parse_slot_label(f[3] + f[4]);
        e.is_dark = f[5].rfind('1', 0) == 0;
        out.push_back(e);
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const SourceConfig& s) {
    j = {{"pulse_rate", s.pulse_rate}, {"mu", s.mu}, {"n_pulses", s.n_pulses}, {"seed", s.seed}};
}
inline void from_json(const nlohmann::json& j, SourceConfig& s) {
    SourceConfig o;
    o.pulse_rate = j.value("pulse_rate", o.pulse_rate);
    o.mu = j.value("mu", o.mu);
    o.n_pulses = j.value("n_pulses", o.n_pulses);
    o.seed = j.value("seed", o.seed);
    o.validate();
    s = o;
}
inline void to_json(nlohmann::json& j, const ChannelConfig& c) {
    j = {{"rotation", c.rotation}, {"depolarization", c.depolarization}, {"z_flip", c.z_flip}};
}
inline void from_json(const nlohmann::json& j, ChannelConfig& c) {
    ChannelConfig o;
    o.rotation = j.value("rotation", o.rotation);
    o.depolarization = j.value("depolarization", o.depolarization);
    o.z_flip = j.value("z_flip", o.z_flip);
    o.validate();
    c = o;
}
inline void to_json(nlohmann::json& j, const DetectorConfig& d) {
    j = {{"efficiency", d.efficiency},
         {"coupling", d.coupling},
         {"filter_transmission", d.filter_transmission},
         {"optics_transmission", d.optics_transmission},
         {"dark_rate", d.dark_rate},
         {"dead_time", d.dead_time},
         {"discard_window", d.discard_window}};
}
inline void from_json(const nlohmann::json& j, DetectorConfig& d) {
    DetectorConfig o;
    o.efficiency = j.value("efficiency", o.efficiency);
    o.coupling = j.value("coupling", o.coupling);
    o.filter_transmission = j.value("filter_transmission", o.filter_transmission);
    o.optics_transmission = j.value("optics_transmission", o.optics_transmission);
    o.dark_rate = j.value("dark_rate", o.dark_rate);
    o.dead_time = j.value("dead_time", o.dead_time);
    o.discard_window = j.value("discard_window", o.discard_window);
    o.validate();
    d = o;
}

}  // namespace rfiqkd
