#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "laplex/common.hpp"
#include "laplex/errors.hpp"
#include "laplex/operator.hpp"

namespace laplex {

/// Signed hashed routing of n_in inputs into m_out buckets, each bucket tagged
/// with a distinct real label used as its anchor level.
struct HashRouting {
    std::vector<std::size_t> hash;  // length n_in, values in [0, m_out)
    std::vector<int> signs;         // length n_in, each +1 or -1
    std::vector<double> labels;     // length m_out, pairwise distinct

    std::size_t n_in() const { return hash.size(); }
    std::size_t m_out() const { return labels.size(); }

    double min_gap() const {
        double g = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < labels.size(); ++i)
            for (std::size_t j = i + 1; j < labels.size(); ++j)
                g = std::min(g, std::abs(labels[i] - labels[j]));
        return g;
    }

    void validate() const {
        if (hash.empty() || labels.empty()) throw EmptyInput("HashRouting: empty");
        if (signs.size() != hash.size()) throw DimensionMismatch("HashRouting: signs length");
        for (std::size_t h : hash)
            if (h >= labels.size()) throw DimensionMismatch("HashRouting: hash out of range");
        for (int s : signs)
            if (s != 1 && s != -1) throw NonFinite("HashRouting: signs must be +/-1");
        require_finite(labels, "HashRouting labels");
        if (min_gap() <= 0) throw NonFinite("HashRouting: labels not pairwise distinct");
    }
};

/// M_{ij} = 1 iff a_i == b_j, bit-exact.
template <typename Real>
Matrix<int> matching_matrix(const std::vector<Real>& a, const std::vector<Real>& b) {
    require_finite(a, "matching_matrix a");
    require_finite(b, "matching_matrix b");
    Matrix<int> m(a.size(), b.size(), 0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            if (a[i] == b[j]) m(i, j) = 1;
    return m;
}

/// y_i = sum over j with h(j) = i of s_j x_j.
template <typename Real>
std::vector<Real> countsketch_apply(const HashRouting& routing, const std::vector<Real>& x) {
    routing.validate();
    if (x.size() != routing.n_in()) throw DimensionMismatch("countsketch_apply: x length");
    std::vector<Real> y(routing.m_out(), Real(0));
    for (std::size_t j = 0; j < x.size(); ++j)
        y[routing.hash[j]] += Real(routing.signs[j]) * x[j];
    return y;
}

/// CountSketch through the kernel operator: rows anchored at the bucket
/// labels, column j anchored at its bucket's label, sign folded into the
/// input. Converges to countsketch_apply as t shrinks; exact to underflow for
/// t <= min_gap/40 in double.
template <typename Real>
std::vector<Real> countsketch_via_laplex(const HashRouting& routing, const std::vector<Real>& x,
                                         Real t) {
    routing.validate();
    if (x.size() != routing.n_in()) throw DimensionMismatch("countsketch_via_laplex: x length");
    std::vector<Real> a(routing.labels.begin(), routing.labels.end());
    std::vector<Real> b(routing.n_in());
    std::vector<Real> sx(routing.n_in());
    for (std::size_t j = 0; j < routing.n_in(); ++j) {
        b[j] = Real(routing.labels[routing.hash[j]]);
        sx[j] = Real(routing.signs[j]) * x[j];
    }
    LaplexOperator<Real> op(a, b, t);
    return op.matvec(sx);
}

/// Rectangular-universality construction: an arbitrary m x n matrix W
/// realized as a weighted kernel map on m*n replicated columns with integer
/// labels c_i = i.
template <typename Real>
struct UniversalEmbedding {
    std::vector<Real> row_anchors;  // length m, c_i = i
    std::vector<Real> col_anchors;  // length m*n, entry (i,j) -> c_i
    std::vector<Real> weights;      // length m*n, entry (i,j) -> W_ij
    std::size_t m = 0;
    std::size_t n = 0;

    // Replication map R x, entry (i,j) -> x_j.
    std::vector<Real> replicate(const std::vector<Real>& x) const {
        if (x.size() != n) throw DimensionMismatch("UniversalEmbedding: x length");
        std::vector<Real> r(m * n);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) r[i * n + j] = x[j];
        return r;
    }

    // matvec(LAPLEX_t(a, b), weights (.) R x); converges to W x as t -> 0.
    std::vector<Real> apply(const std::vector<Real>& x, Real t) const {
        std::vector<Real> rx = replicate(x);
        for (std::size_t p = 0; p < rx.size(); ++p) rx[p] *= weights[p];
        LaplexOperator<Real> op(row_anchors, col_anchors, t);
        return op.matvec(rx);
    }
};

template <typename Real>
UniversalEmbedding<Real> universal_embed(const Matrix<Real>& W) {
    require_finite(W.data, "universal_embed W");
    if (W.rows == 0 || W.cols == 0) throw EmptyInput("universal_embed: empty W");
    UniversalEmbedding<Real> e;
    e.m = W.rows;
    e.n = W.cols;
    e.row_anchors.resize(e.m);
    for (std::size_t i = 0; i < e.m; ++i) e.row_anchors[i] = Real(i);
    e.col_anchors.resize(e.m * e.n);
    e.weights = W.data;
    for (std::size_t i = 0; i < e.m; ++i)
        for (std::size_t j = 0; j < e.n; ++j) e.col_anchors[i * e.n + j] = Real(i);
    return e;
}

}  // namespace laplex
