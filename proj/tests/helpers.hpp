#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "laplex/common.hpp"

namespace testutil {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline std::vector<double> random_vec(std::mt19937_64& g, std::size_t n, double lo = -1.0,
                                      double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(g);
    return v;
}

inline std::vector<double> random_anchors(std::mt19937_64& g, std::size_t n, double span = 10.0) {
    return random_vec(g, n, -span, span);
}

template <typename Real>
double rel_err_l2(const std::vector<Real>& got, const std::vector<Real>& want) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < want.size(); ++i) {
        const double d = double(got[i]) - double(want[i]);
        num += d * d;
        den += double(want[i]) * double(want[i]);
    }
    return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

template <typename Real>
double rel_err_fro(const laplex::Matrix<Real>& got, const laplex::Matrix<Real>& want) {
    return rel_err_l2(got.data, want.data);
}

}  // namespace testutil
