#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <vector>

#include "laplex/common.hpp"
#include "laplex/errors.hpp"

namespace laplex {
namespace oracle {

/// Entry cap for dense references, overridable via LAPLEX_ORACLE_CAP.
inline std::uint64_t size_cap() {
    if (const char* s = std::getenv("LAPLEX_ORACLE_CAP")) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(s, &end, 10);
        if (end && *end == '\0' && v > 0) return v;
    }
    return std::uint64_t(1) << 24;
}

inline void check_cap(std::size_t n, std::size_t k, const char* what) {
    if (std::uint64_t(n) * std::uint64_t(k) > size_cap())
        throw SizeCapExceeded(std::string(what) + ": n*k exceeds oracle size cap");
}

template <typename Real>
Real kernel_entry(Real a, Real b, Real t) {
    return std::exp(-std::abs(a - b) / t);
}

/// Explicit n x k kernel matrix, optionally phased.
template <typename Real>
Matrix<Real> dense_kernel(const std::vector<Real>& a, const std::vector<Real>& b, Real t,
                          const std::vector<Real>& phi = {}, const std::vector<Real>& psi = {}) {
    if (a.empty() || b.empty()) throw EmptyInput("dense_kernel: empty anchors");
    require_finite(a, "dense_kernel a");
    require_finite(b, "dense_kernel b");
    if (!(t > Real(0)) || !std::isfinite(double(t)))
        throw NonFinite("dense_kernel: temperature must be positive finite");
    check_cap(a.size(), b.size(), "dense_kernel");
    const bool phased = !phi.empty() || !psi.empty();
    if (phased && (phi.size() != a.size() || psi.size() != b.size()))
        throw DimensionMismatch("dense_kernel: phase lengths");

    Matrix<Real> m(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) {
            Real e = kernel_entry(a[i], b[j], t);
            if (phased) e *= std::cos(phi[i] - psi[j]);
            m(i, j) = e;
        }
    return m;
}

/// Reference matvec, streamed row by row (no n x k storage). Each kernel
/// entry is computed once and reused across the batch columns of X (k x B,
/// row-major); result is n x B.
template <typename Real>
Matrix<Real> dense_batch_matvec(const std::vector<Real>& a, const std::vector<Real>& b, Real t,
                                const std::vector<Real>& phi, const std::vector<Real>& psi,
                                const Matrix<Real>& X) {
    if (a.empty() || b.empty()) throw EmptyInput("dense_matvec: empty anchors");
    require_finite(a, "dense_matvec a");
    require_finite(b, "dense_matvec b");
    check_cap(a.size(), b.size(), "dense_matvec");
    if (X.rows != b.size()) throw DimensionMismatch("dense_matvec: X rows");
    const bool phased = !phi.empty() || !psi.empty();
    if (phased && (phi.size() != a.size() || psi.size() != b.size()))
        throw DimensionMismatch("dense_matvec: phase lengths");

    Matrix<Real> Y(a.size(), X.cols, Real(0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) {
            Real e = kernel_entry(a[i], b[j], t);
            if (phased) e *= std::cos(phi[i] - psi[j]);
            for (std::size_t c = 0; c < X.cols; ++c) Y(i, c) += e * X(j, c);
        }
    return Y;
}

template <typename Real>
std::vector<Real> dense_matvec(const std::vector<Real>& a, const std::vector<Real>& b, Real t,
                               const std::vector<Real>& x, const std::vector<Real>& phi = {},
                               const std::vector<Real>& psi = {}) {
    Matrix<Real> X(x.size(), 1);
    X.data = x;
    return dense_batch_matvec(a, b, t, phi, psi, X).data;
}

/// Reference weighted Gram A diag(D) A^T, built column by column.
template <typename Real>
Matrix<Real> dense_gram(const std::vector<Real>& a, const std::vector<Real>& b, Real t,
                        const std::vector<Real>& D, const std::vector<Real>& phi = {},
                        const std::vector<Real>& psi = {}) {
    if (a.empty() || b.empty()) throw EmptyInput("dense_gram: empty anchors");
    require_finite(a, "dense_gram a");
    require_finite(b, "dense_gram b");
    if (D.size() != b.size()) throw DimensionMismatch("dense_gram: D length");
    check_cap(a.size(), b.size(), "dense_gram");
    const bool phased = !phi.empty() || !psi.empty();
    if (phased && (phi.size() != a.size() || psi.size() != b.size()))
        throw DimensionMismatch("dense_gram: phase lengths");

    Matrix<Real> G(a.size(), a.size(), Real(0));
    std::vector<Real> col(a.size());
    for (std::size_t tcol = 0; tcol < b.size(); ++tcol) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            Real e = kernel_entry(a[i], b[tcol], t);
            if (phased) e *= std::cos(phi[i] - psi[tcol]);
            col[i] = e;
        }
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < a.size(); ++j) G(i, j) += D[tcol] * col[i] * col[j];
    }
    return G;
}

/// Central differences, one evaluation pair per coordinate.
template <typename Real>
std::vector<Real> finite_diff(const std::function<Real(const std::vector<Real>&)>& f,
                              std::vector<Real> v, Real h = Real(1e-6)) {
    if (!(h > Real(0))) throw NonFinite("finite_diff: step must be positive");
    std::vector<Real> g(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Real saved = v[i];
        v[i] = saved + h;
        const Real fp = f(v);
        v[i] = saved - h;
        const Real fm = f(v);
        v[i] = saved;
        if (!std::isfinite(double(fp)) || !std::isfinite(double(fm)))
            throw NonFinite("finite_diff: non-finite function value");
        g[i] = (fp - fm) / (Real(2) * h);
    }
    return g;
}

}  // namespace oracle
}  // namespace laplex
