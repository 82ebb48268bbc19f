#include "rfiqkd/postprocess.hpp"
#include "rfiqkd/simulator.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace rfiqkd;

namespace {

Bits random_bits(std::size_t n, std::mt19937_64& rng) {
    Bits b(n);
    for (auto& v : b) v = static_cast<std::uint8_t>(rng() & 1);
    return b;
}

Bits xor_bits(const Bits& a, const Bits& b) {
    Bits c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] ^ b[i];
    return c;
}

/// Dense reference: T(i, j) = s[i - j + n - 1].
Bits toeplitz_reference(const Bits& x, std::size_t m, const Bits& s) {
    const std::size_t n = x.size();
    Bits out(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
        int acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc ^= s[i + n - 1 - j] & x[j];
        out[i] = static_cast<std::uint8_t>(acc);
    }
    return out;
}

}  // namespace

TEST(Qber, Examples) {
    const Bits a{0, 1, 1, 0, 1};
    EXPECT_EQ(qber({a, a}), 0.0);
    Bits b = a;
    for (auto& v : b) v ^= 1;
    EXPECT_EQ(qber({a, b}), 1.0);
    Bits x(1000, 0), y(1000, 0);
    for (int i = 0; i < 25; ++i) y[i * 40] = 1;
    EXPECT_DOUBLE_EQ(qber({x, y}), 0.025);
    EXPECT_THROW(qber({}), std::domain_error);
    EXPECT_THROW(qber({Bits{1}, Bits{}}), std::invalid_argument);
}

TEST(Qber, AgreesWithCorrelatorOnSimulatedEvents) {
    SourceConfig src;
    src.n_pulses = 30'000'000;
    const auto out = simulate_counts(ideal_params(), src, {0.0, 0.05, false}, DetectorConfig{});
    const CountSplit split = split_counts(out.events, 0.5, 4);
    const double q = qber(split.key);
    const double from_c = (1.0 - constraints(out.counts).C(2, 2)) / 2.0;
    const double sd = std::sqrt(from_c * (1 - from_c) / static_cast<double>(split.key.size()));
    EXPECT_NEAR(q, from_c, 3 * sd);
    EXPECT_GT(q, 0.01);
}

TEST(Toeplitz, Examples) {
    std::mt19937_64 rng(1);
    const Bits x = random_bits(100, rng);
    EXPECT_TRUE(toeplitz_amplify(x, 0, 5).empty());
    // first column e1 and first row e1^T: s[n-1] = 1, every other seed bit 0
    Bits s(2 * x.size() - 1, 0);
    s[x.size() - 1] = 1;
    EXPECT_EQ(toeplitz_hash(x, x.size(), s), x);
    EXPECT_EQ(toeplitz_amplify(x, 40, 9), toeplitz_amplify(x, 40, 9));
    EXPECT_NE(toeplitz_amplify(x, 40, 9), toeplitz_amplify(x, 40, 10));
    EXPECT_THROW(toeplitz_amplify(x, 101, 1), std::domain_error);
    EXPECT_THROW(toeplitz_hash(x, 10, Bits(5)), std::invalid_argument);
}

TEST(Toeplitz, MatchesDenseDefinition) {
    std::mt19937_64 rng(2);
    for (std::size_t n : {1u, 7u, 63u, 64u, 65u, 200u, 513u}) {
        for (std::size_t m : {std::size_t{1}, n / 2 + 1, n}) {
            const Bits x = random_bits(n, rng);
            const Bits s = random_bits(n + m - 1, rng);
            EXPECT_EQ(toeplitz_hash(x, m, s), toeplitz_reference(x, m, s)) << n << " " << m;
        }
    }
}

TEST(Toeplitz, Linear) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        const Bits x = random_bits(300, rng), y = random_bits(300, rng);
        const std::uint64_t seed = rng();
        EXPECT_EQ(toeplitz_amplify(xor_bits(x, y), 120, seed),
                  xor_bits(toeplitz_amplify(x, 120, seed), toeplitz_amplify(y, 120, seed)));
    }
}

TEST(Toeplitz, CollisionRate) {
    std::mt19937_64 rng(4);
    const int trials = 100000;
    int collisions = 0;
    for (int t = 0; t < trials; ++t) {
        const Bits x = random_bits(32, rng);
        Bits y = random_bits(32, rng);
        if (y == x) y[0] ^= 1;
        const Bits s = random_bits(47, rng);
        collisions += toeplitz_hash(x, 16, s) == toeplitz_hash(y, 16, s);
    }
    const double p = std::ldexp(1.0, -16);
    EXPECT_NEAR(static_cast<double>(collisions) / trials, p, 5 * std::sqrt(p * (1 - p) / trials));
}

TEST(Pns, BenchNumbers) {
    const PnsEstimate e = pns_reduction(PnsConfig{});
    EXPECT_NEAR(e.multi_photon_rate, 0.3e6, 0.015e6);
    EXPECT_NEAR(e.multi_photon_clicks, 60e3, 3e3);
    EXPECT_NEAR(e.tagged_bits, 6000, 300);
    EXPECT_NEAR(e.fraction_reduction, 0.03, 0.005);
}

TEST(Pns, Limits) {
    PnsConfig c;
    c.mu = 0.0;
    EXPECT_EQ(pns_reduction(c).fraction_reduction, 0.0);
    c = PnsConfig{};
    c.eta_inaccessible = 1.0;
    const PnsEstimate e = pns_reduction(c);
    EXPECT_DOUBLE_EQ(e.multi_photon_clicks, e.multi_photon_rate);
    c.key_fraction = 0.0;
    EXPECT_THROW(pns_reduction(c), std::domain_error);
}

TEST(Pns, PoissonTailApproximation) {
    for (double mu = 0.005; mu <= 0.07; mu += 0.005) {
        PnsConfig c;
        c.mu = mu;
        const double approx = c.pulse_rate * mu * mu / 2;
        EXPECT_NEAR(pns_reduction(c).multi_photon_rate / approx, 1.0, 0.05);
    }
}

TEST(Throughput, Examples) {
    EXPECT_EQ(throughput(200000, 0.25, 0.0), 50000);
    EXPECT_EQ(throughput(200000, 0.25, 0.03), 44000);
    EXPECT_EQ(throughput(123456, 0.0, 0.02), 0);
    EXPECT_EQ(throughput(123456, 0.01, 0.02), 0);
    EXPECT_THROW(throughput(1, 1.5, 0), std::domain_error);
}

TEST(KeyJson, RoundTrip) {
    std::mt19937_64 rng(5);
    for (std::size_t n : {0u, 1u, 5u, 8u, 77u}) {
        const Bits b = random_bits(n, rng);
        const nlohmann::json j = bits_to_json(b);
        EXPECT_EQ(j.at("length"), n);
        EXPECT_EQ(bits_from_json(j), b);
    }
    EXPECT_EQ(bits_to_hex(Bits{1, 0, 1, 0, 1}), "a8");
    EXPECT_EQ(bits_from_hex("A8", 5), (Bits{1, 0, 1, 0, 1}));
    EXPECT_THROW(bits_from_hex("zz", 8), std::invalid_argument);
    EXPECT_THROW(bits_from_hex("a", 8), std::invalid_argument);
    const RawKey k{random_bits(30, rng), random_bits(30, rng)};
    const RawKey back = raw_key_from_json(raw_key_to_json(k));
    EXPECT_EQ(back.alice_bits, k.alice_bits);
    EXPECT_EQ(back.bob_bits, k.bob_bits);
}
