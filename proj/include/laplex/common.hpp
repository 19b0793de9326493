#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <vector>

#include "laplex/errors.hpp"

namespace laplex {

/// Minimal dense row-major matrix used for oracle outputs, Gram results and
/// small reference computations. Not a linear-algebra type; just storage.
template <typename T>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;  // row-major, rows*cols

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

    T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

template <typename Real>
inline bool all_finite(const std::vector<Real>& v) {
    for (Real x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

template <typename Real>
inline void require_finite(const std::vector<Real>& v, const char* what) {
    if (!all_finite(v)) throw NonFinite(std::string(what) + ": non-finite entry");
}

// Instrumentation counters, used by tests that pin the reduction structure
// (phased matvec = 2 plain matvecs, phased Gram = 3 plain Grams, capacitance
// = I(I+1)/2 Grams). Cheap enough to keep always on.
namespace stats {

inline std::atomic<std::uint64_t>& matvec_calls() {
    static std::atomic<std::uint64_t> c{0};
    return c;
}

inline std::atomic<std::uint64_t>& weighted_gram_calls() {
    static std::atomic<std::uint64_t> c{0};
    return c;
}

inline void reset() {
    matvec_calls() = 0;
    weighted_gram_calls() = 0;
}

}  // namespace stats

}  // namespace laplex
