#pragma once

// The four-eigenvalue BB84 problem: minimize 1 + sum eta log2 eta subject to
// C_XX = 1 - 2 eta2 - 2 eta4, C_ZZ = 1 - 2 eta3 - 2 eta4, sum eta = 1.

#include "rfiqkd/optimizer.hpp"

#include <cmath>

namespace testing_support {

inline rfiqkd::ConstrainedProblem bb84_problem(double cxx, double czz, double slack = 0.0) {
    using rfiqkd::Vec;
    rfiqkd::ConstrainedProblem p;
    p.lower = Vec::Zero(4);
    p.upper = Vec::Ones(4);
    p.objective = [](const Vec& e) {
        double s = 1.0;
        for (int i = 0; i < 4; ++i)
            if (e(i) > 0.0) s += e(i) * std::log2(e(i));
        return s;
    };
    p.constraints = [](const Vec& e) {
        Vec g(3);
        g << 1.0 - 2.0 * e(1) - 2.0 * e(3), 1.0 - 2.0 * e(2) - 2.0 * e(3), e.sum();
        return g;
    };
    p.lo = Vec(3);
    p.hi = Vec(3);
    p.lo << cxx - slack, czz - slack, 1.0;
    p.hi << cxx + slack, czz + slack, 1.0;
    p.initial_points = {Vec::Constant(4, 0.25)};
    return p;
}

}  // namespace testing_support
