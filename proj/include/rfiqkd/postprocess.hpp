#pragma once

// Classical post-processing: QBER of the sifted key, Toeplitz-matrix privacy
// amplification, the photon-number-splitting deduction for a faint-pulse
// source without decoys, and the final secure-bit arithmetic.

#include "rfiqkd/estimation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rfiqkd {

using Bits = std::vector<std::uint8_t>;

inline double qber(const RawKey& k) {
    if (k.alice_bits.size() != k.bob_bits.size()) throw std::invalid_argument("qber: key halves differ in length");
    if (k.alice_bits.empty()) throw std::domain_error("qber: empty key");
    std::size_t errors = 0;
    for (std::size_t i = 0; i < k.size(); ++i) errors += (k.alice_bits[i] != 0) != (k.bob_bits[i] != 0);
    return static_cast<double>(errors) / static_cast<double>(k.size());
}

namespace detail {

class PackedBits {
public:
    explicit PackedBits(const Bits& bits) : n_(bits.size()), words_((bits.size() + 63) / 64 + 1, 0) {
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (bits[i]) words_[i / 64] |= std::uint64_t{1} << (i % 64);
        }
    }

    /// 64 bits starting at bit `pos` (bits past the end read as 0).
    std::uint64_t window(std::size_t pos) const {
        const std::size_t w = pos / 64, off = pos % 64;
        const std::uint64_t lo = w < words_.size() ? words_[w] : 0;
        if (off == 0) return lo;
        const std::uint64_t hi = w + 1 < words_.size() ? words_[w + 1] : 0;
        return (lo >> off) | (hi << (64 - off));
    }

    std::uint64_t word(std::size_t w) const { return words_[w]; }
    std::size_t size() const { return n_; }

private:
    std::size_t n_;
    std::vector<std::uint64_t> words_;
};

}  // namespace detail

/// out = T x over GF(2), T the m x n Toeplitz matrix T(i, j) = s[i - j + n - 1]
/// generated by the n + m - 1 bits of `seed_bits`.
inline Bits toeplitz_hash(const Bits& x, std::size_t m, const Bits& seed_bits) {
    const std::size_t n = x.size();
    if (m > n) throw std::domain_error("toeplitz_hash: output longer than input");
    if (m == 0) return {};
    if (seed_bits.size() != n + m - 1) throw std::invalid_argument("toeplitz_hash: need n + m - 1 seed bits");
    // Row i of T is the reversed seed read from position m - 1 - i onwards.
    const Bits reversed(seed_bits.rbegin(), seed_bits.rend());
    const detail::PackedBits s(reversed);
    const detail::PackedBits v(x);
    const std::size_t words = (n + 63) / 64;
    const std::uint64_t tail = n % 64 == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << (n % 64)) - 1;
    Bits out(m);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t start = m - 1 - i;
        std::uint64_t acc = 0;
        for (std::size_t w = 0; w < words; ++w) {
            std::uint64_t prod = s.window(start + 64 * w) & v.word(w);
            if (w + 1 == words) prod &= tail;
            acc ^= prod;
        }
        out[i] = static_cast<std::uint8_t>(std::popcount(acc) & 1);
    }
    return out;
}

/// Seed bits drawn from a caller-seeded PRNG; deterministic per seed.
inline Bits toeplitz_seed_bits(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Bits bits(count);
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < count; ++i) {
        if (i % 64 == 0) word = rng();
        bits[i] = static_cast<std::uint8_t>((word >> (i % 64)) & 1);
    }
    return bits;
}

inline Bits toeplitz_amplify(const Bits& bits, std::size_t out_len, std::uint64_t seed) {
    if (out_len > bits.size()) throw std::domain_error("toeplitz_amplify: output longer than input");
    if (out_len == 0) return {};
    return toeplitz_hash(bits, out_len, toeplitz_seed_bits(bits.size() + out_len - 1, seed));
}

// ---------------------------------------------------------------------------
// Photon-number splitting

struct PnsConfig {
    double pulse_rate = 250e6;
    double mu = 0.05;
    double eta_accessible = 0.8;
    double eta_inaccessible = 0.2;
    double key_fraction = 0.1;
    double raw_key_bits = 2e5;

    void validate() const {
        if (!(pulse_rate > 0.0)) throw std::domain_error("PnsConfig: pulse_rate must be > 0");
        if (!(mu >= 0.0)) throw std::domain_error("PnsConfig: mu must be >= 0");
        auto unit = [](double v) { return v > 0.0 && v <= 1.0; };
        if (!unit(eta_accessible) || !unit(eta_inaccessible) || !unit(key_fraction)) {
            throw std::domain_error("PnsConfig: efficiencies and key fraction must lie in (0, 1]");
        }
        if (!(raw_key_bits > 0.0)) throw std::domain_error("PnsConfig: raw_key_bits must be > 0");
    }
};

struct PnsEstimate {
    double multi_photon_rate = 0.0;  // pulses/s with two or more photons
    double multi_photon_clicks = 0.0;  // detector clicks/s from those pulses
    double tagged_bits = 0.0;          // key bits per second Eve may know
    double fraction_reduction = 0.0;
};

/// Eve keeps one photon of every multi-photon pulse and forwards the rest
/// over a lossless channel, so those pulses still see only the receiver's
/// inaccessible losses.
inline PnsEstimate pns_reduction(const PnsConfig& cfg) {
    cfg.validate();
    PnsEstimate e;
    const double p_multi = -std::expm1(-cfg.mu) - cfg.mu * std::exp(-cfg.mu);
    e.multi_photon_rate = cfg.pulse_rate * p_multi;
    e.multi_photon_clicks = e.multi_photon_rate * cfg.eta_inaccessible;
    e.tagged_bits = e.multi_photon_clicks * cfg.key_fraction;
    e.fraction_reduction = e.tagged_bits / cfg.raw_key_bits;
    return e;
}

/// floor(raw_bits * max(0, rate - pns_reduction)).
inline std::int64_t throughput(std::int64_t raw_bits, double rate, double pns_red) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw std::domain_error("throughput: rate outside [0, 1]");
    if (raw_bits < 0) throw std::domain_error("throughput: negative raw bit count");
    const double net = std::max(0.0, rate - pns_red);
    return static_cast<std::int64_t>(std::floor(static_cast<double>(raw_bits) * net + 1e-9));
}

// ---------------------------------------------------------------------------
// Hex envelopes: bits packed MSB-first, explicit length.

inline std::string bits_to_hex(const Bits& bits) {
    static constexpr const char* digits = "0123456789abcdef";
    std::vector<int> nibbles((bits.size() + 3) / 4, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i]) nibbles[i / 4] |= 8 >> (i % 4);
    }
    std::string hex;
    hex.reserve(nibbles.size());
    for (int v : nibbles) hex.push_back(digits[v]);
    return hex;
}

inline Bits bits_from_hex(const std::string& hex, std::size_t length) {
    if (hex.size() != (length + 3) / 4) throw std::invalid_argument("hex key length does not match bit count");
    Bits bits(length);
    for (std::size_t i = 0; i < length; ++i) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(hex[i / 4])));
        const auto v = std::string_view("0123456789abcdef").find(c);
        if (v == std::string_view::npos) throw std::invalid_argument("invalid hex digit");
        bits[i] = static_cast<std::uint8_t>((v >> (3 - i % 4)) & 1);
    }
    return bits;
}

inline nlohmann::json bits_to_json(const Bits& bits) { return {{"length", bits.size()}, {"hex", bits_to_hex(bits)}}; }

inline Bits bits_from_json(const nlohmann::json& j) {
    return bits_from_hex(j.at("hex").get<std::string>(), j.at("length").get<std::size_t>());
}

inline nlohmann::json raw_key_to_json(const RawKey& k) {
    return {{"length", k.size()}, {"alice", bits_to_hex(k.alice_bits)}, {"bob", bits_to_hex(k.bob_bits)}};
}

inline RawKey raw_key_from_json(const nlohmann::json& j) {
    const auto n = j.at("length").get<std::size_t>();
    return {bits_from_hex(j.at("alice").get<std::string>(), n), bits_from_hex(j.at("bob").get<std::string>(), n)};
}

}  // namespace rfiqkd
