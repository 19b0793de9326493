#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "laplex/common.hpp"
#include "laplex/errors.hpp"
#include "laplex/operator.hpp"
#include "laplex/scan.hpp"

namespace laplex {

/// Reverse-mode cotangents for L = g^T . matvec(op, x). Phase cotangents are
/// filled only by the phased VJP.
template <typename Real>
struct MatvecCotangents {
    std::vector<Real> x_bar;
    std::vector<Real> a_bar;
    std::vector<Real> b_bar;
    std::vector<Real> phi_bar;  // empty for the unphased VJP
    std::vector<Real> psi_bar;
};

namespace detail {

// Row-side split sums over the column anchors, in user row order:
//   right[i] = sum_{b_j >= a_i} x_j exp((a_i - b_j)/t)
//   left[i]  = sum_{b_j <  a_i} x_j exp((b_j - a_i)/t)
//   tie[i]   = sum_{b_j == a_i} x_j
// computed with the cached branch-A aggregates of the operator.
template <typename Real>
void row_split_sums(const LaplexOperator<Real>& op, const std::vector<Real>& x,
                    std::vector<Real>& right, std::vector<Real>& left, std::vector<Real>& tie) {
    const auto& rows = op.sorted_rows();
    const auto& cols = op.sorted_cols();
    const auto& A = rows.values;
    const auto& B = cols.values;
    const std::size_t nn = rows.size(), kk = cols.size();

    std::vector<Real> u_hat(nn, Real(0)), v_hat(nn, Real(0)), tie_s(nn, Real(0));
    for (std::size_t js = 0; js < kk; ++js) {
        const Real xj = x[cols.perm[js]];
        const std::size_t r = op.col_buckets()[js];
        if (r >= 1) {
            u_hat[r - 1] += xj * std::exp(A[r - 1] - B[js]);
            if (A[r - 1] == B[js]) {
                // With duplicated row anchors every row at this value ties.
                std::size_t i = r;
                while (i-- > 0 && A[i] == B[js]) tie_s[i] += xj;
            }
        }
        if (r <= nn - 1) v_hat[r] += xj * std::exp(B[js] - A[r]);
    }
    std::vector<Real> s = suffix_decay_scan(rows, u_hat);
    std::vector<Real> p = prefix_decay_scan(rows, v_hat);
    right.assign(nn, Real(0));
    left.assign(nn, Real(0));
    tie.assign(nn, Real(0));
    for (std::size_t is = 0; is < nn; ++is) {
        right[rows.perm[is]] = s[is];
        left[rows.perm[is]] = p[is];
        tie[rows.perm[is]] = tie_s[is];
    }
}

// Column-side split sums over the row anchors, in user column order:
//   below[j] = sum_{a_i <= b_j} g_i exp((a_i - b_j)/t)
//   above[j] = sum_{a_i >  b_j} g_i exp((b_j - a_i)/t)
//   tie[j]   = sum_{a_i == b_j} g_i
template <typename Real>
void col_split_sums(const LaplexOperator<Real>& op, const std::vector<Real>& g,
                    std::vector<Real>& below, std::vector<Real>& above, std::vector<Real>& tie) {
    const auto& rows = op.sorted_rows();
    const auto& cols = op.sorted_cols();
    const auto& A = rows.values;
    const auto& B = cols.values;
    const std::size_t nn = rows.size(), kk = cols.size();

    std::vector<Real> gs(nn);
    for (std::size_t is = 0; is < nn; ++is) gs[is] = g[rows.perm[is]];
    std::vector<Real> u = prefix_decay_scan(rows, gs);
    std::vector<Real> v = suffix_decay_scan(rows, gs);

    below.assign(kk, Real(0));
    above.assign(kk, Real(0));
    tie.assign(kk, Real(0));
    for (std::size_t js = 0; js < kk; ++js) {
        const std::size_t r = op.col_buckets()[js];
        Real q = Real(0), p = Real(0), tj = Real(0);
        if (r >= 1) q = std::exp(A[r - 1] - B[js]) * u[r - 1];
        if (r <= nn - 1) p = std::exp(B[js] - A[r]) * v[r];
        if (r >= 1 && A[r - 1] == B[js]) {
            std::size_t i = r;
            while (i-- > 0 && A[i] == B[js]) tj += gs[i];
        }
        const std::size_t uj = cols.perm[js];
        below[uj] = q;
        above[uj] = p;
        tie[uj] = tj;
    }
}

}  // namespace detail

/// Exact gradients of L = g^T . matvec(op, x). At exact ties a_i == b_j the
/// subgradient 0 is used (sign(0) := 0), so tied pairs contribute nothing to
/// the anchor cotangents.
template <typename Real>
MatvecCotangents<Real> matvec_vjp(const LaplexOperator<Real>& op, const std::vector<Real>& x,
                                  const std::vector<Real>& g) {
    if (op.has_phases()) throw PhasePresent("matvec_vjp: use phased_matvec_vjp");
    if (x.size() != op.k()) throw DimensionMismatch("matvec_vjp: x length");
    if (g.size() != op.n()) throw DimensionMismatch("matvec_vjp: g length");
    require_finite(x, "matvec_vjp x");
    require_finite(g, "matvec_vjp g");

    MatvecCotangents<Real> out;
    out.x_bar = op.matvec_transpose(g);

    const Real inv_t = Real(1) / op.temperature();
    std::vector<Real> right, left, tie_x;
    detail::row_split_sums(op, x, right, left, tie_x);
    out.a_bar.resize(op.n());
    for (std::size_t i = 0; i < op.n(); ++i)
        out.a_bar[i] = g[i] * inv_t * ((right[i] - tie_x[i]) - left[i]);

    std::vector<Real> below, above, tie_g;
    detail::col_split_sums(op, g, below, above, tie_g);
    out.b_bar.resize(op.k());
    for (std::size_t j = 0; j < op.k(); ++j)
        out.b_bar[j] = x[j] * inv_t * (above[j] - (below[j] - tie_g[j]));
    return out;
}

/// Gradients of L = g^T . phased_matvec(op, x) through the two-matvec
/// angle-sum decomposition; includes phase cotangents.
template <typename Real>
MatvecCotangents<Real> phased_matvec_vjp(const LaplexOperator<Real>& op,
                                         const std::vector<Real>& x, const std::vector<Real>& g) {
    if (!op.has_phases()) throw PhaseAbsent("phased_matvec_vjp: operator has no phases");
    if (x.size() != op.k()) throw DimensionMismatch("phased_matvec_vjp: x length");
    if (g.size() != op.n()) throw DimensionMismatch("phased_matvec_vjp: g length");
    require_finite(x, "phased_matvec_vjp x");
    require_finite(g, "phased_matvec_vjp g");

    const std::size_t nn = op.n(), kk = op.k();
    const auto& phi = op.row_phases();
    const auto& psi = op.col_phases();
    LaplexOperator<Real> plain(op.row_anchors(), op.col_anchors(), op.temperature());

    std::vector<Real> xc(kk), xs(kk), gc(nn), gs(nn);
    for (std::size_t j = 0; j < kk; ++j) {
        xc[j] = std::cos(psi[j]) * x[j];
        xs[j] = std::sin(psi[j]) * x[j];
    }
    for (std::size_t i = 0; i < nn; ++i) {
        gc[i] = std::cos(phi[i]) * g[i];
        gs[i] = std::sin(phi[i]) * g[i];
    }

    std::vector<Real> p = plain.matvec(xc);
    std::vector<Real> q = plain.matvec(xs);
    MatvecCotangents<Real> vc = matvec_vjp(plain, xc, gc);
    MatvecCotangents<Real> vs = matvec_vjp(plain, xs, gs);

    MatvecCotangents<Real> out;
    out.x_bar.resize(kk);
    out.psi_bar.resize(kk);
    for (std::size_t j = 0; j < kk; ++j) {
        out.x_bar[j] = std::cos(psi[j]) * vc.x_bar[j] + std::sin(psi[j]) * vs.x_bar[j];
        out.psi_bar[j] =
            x[j] * (-std::sin(psi[j]) * vc.x_bar[j] + std::cos(psi[j]) * vs.x_bar[j]);
    }
    out.phi_bar.resize(nn);
    for (std::size_t i = 0; i < nn; ++i)
        out.phi_bar[i] = g[i] * (-std::sin(phi[i]) * p[i] + std::cos(phi[i]) * q[i]);
    out.a_bar.resize(nn);
    for (std::size_t i = 0; i < nn; ++i) out.a_bar[i] = vc.a_bar[i] + vs.a_bar[i];
    out.b_bar.resize(kk);
    for (std::size_t j = 0; j < kk; ++j) out.b_bar[j] = vc.b_bar[j] + vs.b_bar[j];
    return out;
}

/// Gradient of <G_bar, weighted_gram(op, D)> with respect to D. Linear in
/// G_bar and independent of D. Rows of G_bar are pushed through the operator
/// transpose; the final contraction evaluates kernel entries on the fly, so
/// the implicit matrix is never stored.
template <typename Real>
std::vector<Real> gram_vjp_weights(const LaplexOperator<Real>& op, const std::vector<Real>& D,
                                   const Matrix<Real>& G_bar) {
    if (op.has_phases()) throw PhasePresent("gram_vjp_weights: phased operator not supported");
    if (D.size() != op.k()) throw DimensionMismatch("gram_vjp_weights: D length");
    if (G_bar.rows != op.n() || G_bar.cols != op.n())
        throw DimensionMismatch("gram_vjp_weights: G_bar shape");
    require_finite(G_bar.data, "gram_vjp_weights G_bar");
    Real max_abs = Real(0), max_asym = Real(0);
    for (std::size_t i = 0; i < G_bar.rows; ++i)
        for (std::size_t j = 0; j < i; ++j) {
            max_abs = std::max(max_abs, std::abs(G_bar(i, j)));
            max_asym = std::max(max_asym, std::abs(G_bar(i, j) - G_bar(j, i)));
        }
    if (max_asym > Real(1e-9) * std::max(Real(1), max_abs))
        throw AsymmetricCotangent("gram_vjp_weights: G_bar is not symmetric");

    const std::size_t nn = op.n(), kk = op.k();
    const Real inv_t = Real(1) / op.temperature();
    std::vector<Real> D_bar(kk, Real(0));
    std::vector<Real> row(nn);
    for (std::size_t i = 0; i < nn; ++i) {
        std::copy(G_bar.data.begin() + i * nn, G_bar.data.begin() + (i + 1) * nn, row.begin());
        std::vector<Real> y = op.matvec_transpose(row);  // (G_bar A) row i
        const Real ai = op.row_anchors()[i];
        for (std::size_t t = 0; t < kk; ++t)
            D_bar[t] += std::exp(-std::abs(ai - op.col_anchors()[t]) * inv_t) * y[t];
    }
    return D_bar;
}

}  // namespace laplex
