#pragma once

// Detector-count bookkeeping: the 6x6 count matrix, the 21 constraint values
// derived from it with their binomial standard deviations, and the split of
// key-basis coincidences into raw key and parameter-estimation data.

#include "rfiqkd/device_model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <istream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfiqkd {

using CountArray = Eigen::Matrix<std::int64_t, 6, 6, Eigen::RowMajor>;

/// Counts indexed by (preparation slot, detector slot), slots ordered
/// X+, X-, Y+, Y-, Z+, Z-.
class CountMatrix {
public:
    CountMatrix() : m_(CountArray::Zero()) {}
    explicit CountMatrix(const CountArray& m) : m_(m) {
        if ((m_.array() < 0).any()) throw std::domain_error("CountMatrix: negative count");
    }

    std::int64_t operator()(int prep, int det) const { return m_(prep, det); }
    std::int64_t& at(int prep, int det) {
        if (prep < 0 || prep > 5 || det < 0 || det > 5) throw std::out_of_range("CountMatrix::at");
        return m_(prep, det);
    }
    std::int64_t total() const { return m_.sum(); }
    const CountArray& array() const { return m_; }
    Matrix6d as_real() const { return m_.cast<double>(); }

    bool operator==(const CountMatrix& o) const { return m_ == o.m_; }

private:
    CountArray m_;
};

/// The 21 constraints: 9 correlators C[A][B], 6 preparation marginals P and
/// 6 detection marginals D, each with its standard deviation. A correlator
/// whose 2x2 block is empty is flagged inactive.
struct ConstraintSet {
    Eigen::Matrix3d C = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d dC = Eigen::Matrix3d::Zero();
    std::array<bool, 9> c_active{true, true, true, true, true, true, true, true, true};
    std::array<double, 6> P{};
    std::array<double, 6> dP{};
    std::array<double, 6> D{};
    std::array<double, 6> dD{};
    double n0 = 0.0;

    static constexpr int kSize = 21;

    /// Flattened as C (row-major), P, D.
    Eigen::Matrix<double, kSize, 1> values() const {
        Eigen::Matrix<double, kSize, 1> v;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) v(3 * a + b) = C(a, b);
        for (int i = 0; i < 6; ++i) {
            v(9 + i) = P[i];
            v(15 + i) = D[i];
        }
        return v;
    }

    Eigen::Matrix<double, kSize, 1> std_devs() const {
        Eigen::Matrix<double, kSize, 1> v;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) v(3 * a + b) = dC(a, b);
        for (int i = 0; i < 6; ++i) {
            v(9 + i) = dP[i];
            v(15 + i) = dD[i];
        }
        return v;
    }

    std::array<bool, kSize> active() const {
        std::array<bool, kSize> a{};
        a.fill(true);
        std::copy(c_active.begin(), c_active.end(), a.begin());
        return a;
    }

    double correlator(Basis a, Basis b) const { return C(static_cast<int>(a), static_cast<int>(b)); }
    double correlator_sd(Basis a, Basis b) const {
        return dC(static_cast<int>(a), static_cast<int>(b));
    }
};

namespace detail {

struct Block {
    double same = 0.0;  // m++ + m--
    double diff = 0.0;  // m+- + m-+
    double total() const { return same + diff; }
};

template <typename Derived>
Block block(const Eigen::MatrixBase<Derived>& m, Basis a, Basis b) {
    const int pa = slot(a, Sign::Plus), ma = slot(a, Sign::Minus);
    const int pb = slot(b, Sign::Plus), mb = slot(b, Sign::Minus);
    return {static_cast<double>(m(pa, pb)) + static_cast<double>(m(ma, mb)),
            static_cast<double>(m(pa, mb)) + static_cast<double>(m(ma, pb))};
}

}  // namespace detail

/// (m++ + m-- - m+- - m-+) / (m++ + m-- + m+- + m-+). Works on integer counts
/// and on real-valued pseudo-counts alike.
template <typename Derived>
double correlator(const Eigen::MatrixBase<Derived>& m, Basis a, Basis b) {
    const auto blk = detail::block(m, a, b);
    if (!(blk.total() > 0.0)) throw std::domain_error("correlator: empty count block");
    return (blk.same - blk.diff) / blk.total();
}

inline double correlator(const CountMatrix& m, Basis a, Basis b) { return correlator(m.as_real(), a, b); }

/// sqrt(4 (m++ + m--)(m+- + m-+) / (sum)^3): binomial within the block only.
template <typename Derived>
double correlator_sd(const Eigen::MatrixBase<Derived>& m, Basis a, Basis b) {
    const auto blk = detail::block(m, a, b);
    if (!(blk.total() > 0.0)) throw std::domain_error("correlator_sd: empty count block");
    return std::sqrt(4.0 * blk.same * blk.diff / (blk.total() * blk.total() * blk.total()));
}

template <typename Derived>
ConstraintSet constraints(const Eigen::MatrixBase<Derived>& m) {
    ConstraintSet cs;
    const Matrix6d r = m.template cast<double>();
    cs.n0 = r.sum();
    if (!(cs.n0 > 0.0)) throw std::domain_error("constraints: no counts");
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            const auto blk = detail::block(r, static_cast<Basis>(a), static_cast<Basis>(b));
            if (blk.total() > 0.0) {
                cs.C(a, b) = (blk.same - blk.diff) / blk.total();
                cs.dC(a, b) = std::sqrt(4.0 * blk.same * blk.diff /
                                        (blk.total() * blk.total() * blk.total()));
            } else {
                cs.c_active[3 * a + b] = false;
            }
        }
    }
    const double n3 = cs.n0 * cs.n0 * cs.n0;
    for (int i = 0; i < 6; ++i) {
        const double row = r.row(i).sum();
        const double col = r.col(i).sum();
        cs.P[i] = row / cs.n0;
        cs.D[i] = col / cs.n0;
        cs.dP[i] = std::sqrt((cs.n0 - row) * row / n3);
        cs.dD[i] = std::sqrt((cs.n0 - col) * col / n3);
    }
    return cs;
}

inline ConstraintSet constraints(const CountMatrix& m) { return constraints(m.as_real()); }

// ---------------------------------------------------------------------------
// Detection events and the raw-key split

struct DetectionEvent {
    double time_ns = 0.0;
    int prep = 0;  // slot of the active source
    int det = 0;   // slot of the detector that fired
    bool is_dark = false;

    bool operator==(const DetectionEvent&) const = default;
};

struct RawKey {
    std::vector<std::uint8_t> alice_bits;
    std::vector<std::uint8_t> bob_bits;

    std::size_t size() const { return alice_bits.size(); }
};

inline bool is_key_coincidence(int prep, int det) {
    return slot_basis(prep) == Basis::Z && slot_basis(det) == Basis::Z;
}

inline CountMatrix accumulate(const std::vector<DetectionEvent>& events) {
    CountMatrix m;
    for (const auto& e : events) ++m.at(e.prep, e.det);
    return m;
}

struct CountSplit {
    RawKey key;
    CountMatrix estimation;
};

/// Sends each Z->Z event to the raw key with probability `fraction`; all
/// other events go to the parameter-estimation matrix. Key bit 0 is the
/// "+" outcome.
inline CountSplit split_counts(const std::vector<DetectionEvent>& events, double fraction,
                               std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw std::domain_error("split_counts: fraction must lie in (0, 1)");
    }
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution to_key(fraction);
    CountSplit out;
    for (const auto& e : events) {
        if (is_key_coincidence(e.prep, e.det) && to_key(rng)) {
            out.key.alice_bits.push_back(slot_sign(e.prep) == Sign::Minus);
            out.key.bob_bits.push_back(slot_sign(e.det) == Sign::Minus);
        } else {
            ++out.estimation.at(e.prep, e.det);
        }
    }
    return out;
}

/// Same split for aggregated counts: each Z->Z cell is thinned binomially and
/// the key pairs are emitted in a seeded random order.
inline CountSplit split_count_matrix(const CountMatrix& m, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw std::domain_error("split_count_matrix: fraction must lie in (0, 1)");
    }
    std::mt19937_64 rng(seed);
    CountSplit out;
    CountArray rest = m.array();
    std::vector<std::pair<std::uint8_t, std::uint8_t>> pairs;
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
            if (!is_key_coincidence(i, j) || rest(i, j) == 0) continue;
            std::binomial_distribution<std::int64_t> thin(rest(i, j), fraction);
            const std::int64_t k = thin(rng);
            rest(i, j) -= k;
            const std::uint8_t a = slot_sign(i) == Sign::Minus;
            const std::uint8_t b = slot_sign(j) == Sign::Minus;
            pairs.insert(pairs.end(), static_cast<std::size_t>(k), {a, b});
        }
    }
    std::shuffle(pairs.begin(), pairs.end(), rng);
    out.key.alice_bits.reserve(pairs.size());
    out.key.bob_bits.reserve(pairs.size());
    for (auto [a, b] : pairs) {
        out.key.alice_bits.push_back(a);
        out.key.bob_bits.push_back(b);
    }
    out.estimation = CountMatrix(rest);
    return out;
}

/// Swaps Bob's Z+ and Z- columns: the fixed classical relabeling that undoes
/// a handedness flip in the channel.
inline CountMatrix relabel_bob_z(const CountMatrix& m) {
    CountArray a = m.array();
    a.col(slot(Basis::Z, Sign::Plus)).swap(a.col(slot(Basis::Z, Sign::Minus)));
    return CountMatrix(a);
}

// ---------------------------------------------------------------------------
// File formats

inline int parse_slot_label(const std::string& label) {
    const auto& labels = slot_labels();
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) throw std::invalid_argument("unknown slot label '" + label + "'");
    return static_cast<int>(it - labels.begin());
}

inline nlohmann::json count_matrix_to_json(const CountMatrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < 6; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < 6; ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return {{"counts", rows}, {"prep_order", slot_labels()}, {"det_order", slot_labels()}};
}

/// Accepts any permutation of the slot labels in prep_order/det_order.
inline CountMatrix count_matrix_from_json(const nlohmann::json& j) {
    const auto& rows = j.at("counts");
    if (!rows.is_array() || rows.size() != 6) throw std::invalid_argument("counts must be 6x6");
    std::array<int, 6> prep{0, 1, 2, 3, 4, 5}, det{0, 1, 2, 3, 4, 5};
    auto read_order = [&](const char* key, std::array<int, 6>& order) {
        if (!j.contains(key)) return;
        const auto labels = j.at(key).get<std::vector<std::string>>();
        if (labels.size() != 6) throw std::invalid_argument(std::string(key) + " must list 6 labels");
        std::array<bool, 6> seen{};
        for (int i = 0; i < 6; ++i) {
            order[i] = parse_slot_label(labels[i]);
            if (seen[order[i]]) throw std::invalid_argument(std::string(key) + " repeats a label");
            seen[order[i]] = true;
        }
    };
    read_order("prep_order", prep);
    read_order("det_order", det);
    CountArray a = CountArray::Zero();
    for (int i = 0; i < 6; ++i) {
        if (!rows[i].is_array() || rows[i].size() != 6) throw std::invalid_argument("counts must be 6x6");
        for (int k = 0; k < 6; ++k) {
            if (!rows[i][k].is_number_integer()) throw std::invalid_argument("counts must be integers");
            a(prep[i], det[k]) = rows[i][k].get<std::int64_t>();
        }
    }
    return CountMatrix(a);
}

inline std::string count_matrix_to_csv(const CountMatrix& m) {
    std::ostringstream os;
    const auto& labels = slot_labels();
    for (int j = 0; j < 6; ++j) os << labels[j] << (j < 5 ? "," : "\n");
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) os << m(i, j) << (j < 5 ? "," : "\n");
    }
    return os.str();
}

/// Header row with detector labels, then six rows in X+ .. Z- preparation order.
inline CountMatrix count_matrix_from_csv(std::istream& in) {
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cell.erase(0, cell.find_first_not_of(" \t\r"));
            cell.erase(cell.find_last_not_of(" \t\r") + 1);
            cells.push_back(cell);
        }
        return cells;
    };
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("CSV: missing header");
    const auto header = split(line);
    if (header.size() != 6) throw std::invalid_argument("CSV: header must have 6 detector labels");
    std::array<int, 6> det{};
    for (int k = 0; k < 6; ++k) det[k] = parse_slot_label(header[k]);
    CountArray a = CountArray::Zero();
    int row = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (row >= 6) throw std::invalid_argument("CSV: more than 6 data rows");
        const auto cells = split(line);
        if (cells.size() != 6) throw std::invalid_argument("CSV: each row needs 6 counts");
        for (int k = 0; k < 6; ++k) {
            std::size_t used = 0;
            const long long v = std::stoll(cells[k], &used);
            if (used != cells[k].size()) throw std::invalid_argument("CSV: non-integer count");
            a(row, det[k]) = v;
        }
        ++row;
    }
    if (row != 6) throw std::invalid_argument("CSV: expected 6 data rows");
    return CountMatrix(a);
}

inline nlohmann::json constraints_to_json(const ConstraintSet& cs) {
    nlohmann::json c = nlohmann::json::array(), dc = nlohmann::json::array();
    for (int a = 0; a < 3; ++a) {
        c.push_back({cs.C(a, 0), cs.C(a, 1), cs.C(a, 2)});
        dc.push_back({cs.dC(a, 0), cs.dC(a, 1), cs.dC(a, 2)});
    }
    return {{"C", c},   {"dC", dc},  {"C_active", cs.c_active}, {"P", cs.P},
            {"dP", cs.dP}, {"D", cs.D}, {"dD", cs.dD},            {"N0", cs.n0}};
}

}  // namespace rfiqkd
