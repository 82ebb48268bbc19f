#include "rfiqkd/keyrates.hpp"
#include "rfiqkd/simulator.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

using namespace rfiqkd;

namespace {

constexpr double kPi = std::numbers::pi;

DetectorConfig noiseless() {
    DetectorConfig d;
    d.dark_rate = 0.0;
    return d;
}

double quantity_c_sd(const ConstraintSet& cs) {
    double v = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) v += std::pow(2.0 * cs.C(a, b) * cs.dC(a, b), 2);
    return std::sqrt(v);
}

}  // namespace

TEST(ApplyChannel, Examples) {
    const BlochVector a = apply_channel({1, 0, 0}, {kPi / 2, 0.0, false});
    EXPECT_NEAR(a.x, 0.0, 1e-15);
    EXPECT_NEAR(a.y, 1.0, 1e-15);
    for (double r : {0.3, 1.0, 4.0}) {
        const BlochVector z = apply_channel({0, 0, 1}, {r, 0.0, false});
        EXPECT_EQ(z.z, 1.0);
        EXPECT_EQ(z.x, 0.0);
    }
    const BlochVector d = apply_channel({0.3, 0.4, 0.5}, {1.0, 1.0, false});
    EXPECT_EQ(d.norm(), 0.0);
    EXPECT_EQ(apply_channel({0, 0, 1}, {0.0, 0.0, true}).z, -1.0);
    EXPECT_NEAR(apply_channel({0, 0, 1}, {0.0, 0.2, false}).z, 0.8, 1e-15);
}

TEST(HwpSweep, Angles) {
    const auto s = hwp_sweep_angles(8);
    ASSERT_EQ(s.size(), 8u);
    EXPECT_EQ(s[0].rotation, 0.0);
    EXPECT_TRUE(s[0].z_flip);
    EXPECT_NEAR(s[1].rotation, kPi / 2, 1e-15);
    EXPECT_DOUBLE_EQ(hwp_angle_deg(1, 8), 22.5);
    EXPECT_THROW(hwp_sweep_angles(1), std::invalid_argument);
}

TEST(HwpSweep, IdealCorrelatorsFollowFourTheta) {
    SourceConfig src;
    src.n_pulses = 1'000'000;
    const auto sweep = hwp_sweep_angles(24);
    for (int k = 0; k < 24; ++k) {
        const Matrix6d m = expected_counts(ideal_params(), src, sweep[k], noiseless());
        const ConstraintSet cs = constraints(m);
        const double th = hwp_angle_deg(k, 24) * kPi / 180.0;
        EXPECT_NEAR(cs.C(0, 0), std::cos(4 * th), 1e-12);
        EXPECT_NEAR(cs.C(0, 1), std::sin(4 * th), 1e-12);
        EXPECT_NEAR(cs.C(1, 0), -std::sin(4 * th), 1e-12);
        EXPECT_NEAR(cs.C(2, 2), -1.0, 1e-12);
    }
}

TEST(DeadtimeFilter, Examples) {
    const DetectorConfig d;
    const std::vector<DetectionEvent> one{{5.0, 0, 0, false}};
    EXPECT_EQ(deadtime_filter(one, d), one);
    const std::vector<DetectionEvent> close{{0.0, 0, 0, false}, {30.0, 1, 3, false}};
    EXPECT_EQ(deadtime_filter(close, d).size(), 1u);
    const std::vector<DetectionEvent> apart{{0.0, 0, 0, false}, {70.0, 1, 3, false}};
    EXPECT_EQ(deadtime_filter(apart, d).size(), 2u);
    const std::vector<DetectionEvent> unordered{{70.0, 0, 0, false}, {0.0, 1, 3, false}};
    EXPECT_THROW(deadtime_filter(unordered, d), std::invalid_argument);
}

TEST(DeadtimeFilter, Idempotent) {
    std::mt19937_64 rng(3);
    std::exponential_distribution<double> gap(1.0 / 40.0);
    std::vector<DetectionEvent> ev;
    double t = 0.0;
    for (int i = 0; i < 5000; ++i) ev.push_back({t += gap(rng), i % 6, (i / 6) % 6, false});
    const auto once = deadtime_filter(ev, DetectorConfig{});
    EXPECT_LT(once.size(), ev.size());
    EXPECT_EQ(deadtime_filter(once, DetectorConfig{}), once);
    for (std::size_t i = 1; i < once.size(); ++i) EXPECT_GE(once[i].time_ns - once[i - 1].time_ns, 60.0);
}

TEST(SimulateCounts, NoLightNoDarkIsEmpty) {
    SourceConfig src;
    src.mu = 1e-12;
    src.n_pulses = 1'000'000;
    const auto out = simulate_counts(ideal_params(), src, {}, noiseless());
    EXPECT_EQ(out.counts.total(), 0);
    EXPECT_TRUE(out.events.empty());
}

TEST(SimulateCounts, DeterministicPerSeed) {
    SourceConfig src;
    src.n_pulses = 2'000'000;
    src.seed = 77;
    const auto a = simulate_counts(ideal_params(), src, {0.4, 0.01, false}, DetectorConfig{});
    const auto b = simulate_counts(ideal_params(), src, {0.4, 0.01, false}, DetectorConfig{});
    EXPECT_EQ(a.events, b.events);
    EXPECT_EQ(a.counts, b.counts);
    src.seed = 78;
    EXPECT_FALSE(simulate_counts(ideal_params(), src, {0.4, 0.01, false}, DetectorConfig{}).counts == a.counts);
}

TEST(SimulateCounts, EventsAreOrderedAndAccumulate) {
    SourceConfig src;
    src.n_pulses = 2'000'000;
    const auto out = simulate_counts(ideal_params(), src, {}, DetectorConfig{});
    for (std::size_t i = 1; i < out.events.size(); ++i) EXPECT_GE(out.events[i].time_ns - out.events[i - 1].time_ns, 60.0);
    EXPECT_EQ(accumulate(out.events), out.counts);
}

TEST(SimulateCounts, CountVolume) {
    SourceConfig src;
    src.n_pulses = 10'000'000;
    const DetectorConfig det;
    const auto out = simulate_counts(ideal_params(), src, {}, det);
    const double expected = src.n_pulses * src.mu * det.transmission();
    EXPECT_NEAR(static_cast<double>(out.counts.total()), expected, 0.2 * expected);
    // the coincidence discard removes a fraction exp(-rate * window) at these rates
    const double rate_per_ns = expected / (src.duration_s() * 1e9);
    const double kept = expected * std::exp(-rate_per_ns * det.discard_window);
    EXPECT_NEAR(static_cast<double>(out.counts.total()), kept, 0.03 * kept);
}

TEST(SimulateCounts, CzzMatchesDarkCountDilution) {
    SourceConfig src;
    src.n_pulses = 50'000'000;
    DetectorConfig det;
    det.dark_rate = 2e5;  // exaggerated so that the dilution is visible
    const auto out = simulate_counts(ideal_params(), src, {}, det);
    const ConstraintSet cs = constraints(out.counts);
    const double expected = constraints(expected_counts(ideal_params(), src, {}, det)).C(2, 2);
    EXPECT_LT(expected, 0.99);
    EXPECT_NEAR(cs.C(2, 2), expected, 3 * cs.dC(2, 2));
}

TEST(SimulateCounts, IdealPatternLikeMeasuredMatrix) {
    SourceConfig src;
    src.n_pulses = 20'000'000;
    const auto out = simulate_counts(ideal_params(), src, {}, DetectorConfig{});
    const ConstraintSet cs = constraints(out.counts);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            if (a == b) {
                EXPECT_GT(cs.C(a, b), 0.98);
            } else {
                EXPECT_LT(std::abs(cs.C(a, b)), 5 * cs.dC(a, b) + 0.01);
            }
        }
}

TEST(SampleCounts, MatchesExpectedMeans) {
    SourceConfig src;
    src.n_pulses = 100'000'000;
    const ChannelConfig ch{1.1, 0.02, true};
    const Matrix6d mean = expected_counts(ideal_params(), src, ch, DetectorConfig{});
    const CountMatrix m = sample_counts(ideal_params(), src, ch, DetectorConfig{});
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) EXPECT_NEAR(static_cast<double>(m(i, j)), mean(i, j), 5 * std::sqrt(mean(i, j)) + 1);
    EXPECT_EQ(sample_counts(ideal_params(), src, ch, DetectorConfig{}), m);
}

TEST(SampleCounts, SweepInvariants) {
    SourceConfig src;
    src.n_pulses = 100'000'000;
    const auto sweep = hwp_sweep_angles(12);
    double c0 = -1, czz0 = -1;
    for (std::size_t k = 0; k < sweep.size(); ++k) {
        src.seed = 100 + k;
        const CountMatrix m = relabel_bob_z(sample_counts(ideal_params(), src, sweep[k], DetectorConfig{}));
        const ConstraintSet cs = constraints(m);
        const double c = quantity_C(cs.C);
        if (k == 0) {
            c0 = c;
            czz0 = cs.C(2, 2);
            continue;
        }
        EXPECT_NEAR(c, c0, 4 * quantity_c_sd(cs) * std::sqrt(2.0) + 1e-12);
        EXPECT_NEAR(cs.C(2, 2), czz0, 4 * cs.dC(2, 2) * std::sqrt(2.0));
        EXPECT_GT(cs.C(2, 2), 0.95);
    }
}

TEST(SampleCounts, DeviationShrinksAsRootOfPulses) {
    SourceConfig src;
    const ChannelConfig ch{0.7, 0.05, false};
    double ratio_sum = 0.0;
    for (int t = 0; t < 20; ++t) {
        src.seed = 500 + t;
        src.n_pulses = 20'000'000;
        const double d1 = constraints(sample_counts(ideal_params(), src, ch, DetectorConfig{})).dC(0, 0);
        src.n_pulses = 40'000'000;
        const double d2 = constraints(sample_counts(ideal_params(), src, ch, DetectorConfig{})).dC(0, 0);
        ratio_sum += d2 / d1;
    }
    EXPECT_NEAR(ratio_sum / 20, 1.0 / std::sqrt(2.0), 0.1 / std::sqrt(2.0));
}

TEST(RelabelEvents, SwapsBobZ) {
    const std::vector<DetectionEvent> ev{{0, 4, 4, false}, {1, 4, 5, false}, {2, 0, 0, false}};
    const auto r = relabel_bob_z(ev);
    EXPECT_EQ(r[0].det, 5);
    EXPECT_EQ(r[1].det, 4);
    EXPECT_EQ(r[2].det, 0);
    EXPECT_EQ(accumulate(r), relabel_bob_z(accumulate(ev)));
}

TEST(EventCsv, RoundTrip) {
    SourceConfig src;
    src.n_pulses = 1'000'000;
    const auto out = simulate_counts(ideal_params(), src, {}, DetectorConfig{});
    const std::string csv = events_to_csv(out.events);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "time_ns,prep_basis,prep_sign,det_basis,det_sign,is_dark");
    std::istringstream in(csv);
    EXPECT_EQ(events_from_csv(in), out.events);
}

TEST(ConfigJson, RoundTripAndValidation) {
    SourceConfig s;
    s.mu = 0.1;
    s.seed = 9;
    EXPECT_EQ(nlohmann::json(s).get<SourceConfig>().seed, 9u);
    DetectorConfig d;
    d.dark_rate = 10;
    EXPECT_EQ(nlohmann::json(d).get<DetectorConfig>().dark_rate, 10.0);
    ChannelConfig c{1.0, 0.1, true};
    EXPECT_TRUE(nlohmann::json(c).get<ChannelConfig>().z_flip);
    EXPECT_THROW(nlohmann::json({{"n_pulses", 0}}).get<SourceConfig>(), std::domain_error);
    EXPECT_THROW(nlohmann::json({{"depolarization", 2}}).get<ChannelConfig>(), std::domain_error);
    EXPECT_THROW(nlohmann::json({{"efficiency", 0}}).get<DetectorConfig>(), std::domain_error);
}
