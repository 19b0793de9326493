#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "laplex/common.hpp"
#include "laplex/errors.hpp"
#include "laplex/scan.hpp"

namespace laplex {

/// Explicit symmetric n x n Gram matrix M = A diag(D) A^T. Only i >= j is
/// computed; the upper half is mirrored, so M is symmetric bit-exactly.
template <typename Real>
struct GramResult {
    Matrix<Real> matrix;
};

namespace detail {

/// Cache-blocked scatter plan for dst[dest[j]] = src[j] with sequential
/// sources. Destinations are staged into at most 256 contiguous regions so
/// that both passes touch memory either sequentially or within one
/// cache-resident region; pays off once the vectors outgrow the cache.
struct ScatterPlan {
    unsigned shift = 0;
    std::vector<std::uint8_t> bucket;         // region id per source index
    std::vector<std::uint32_t> grouped_dest;  // destinations, region-grouped
    std::vector<std::uint32_t> starts;        // region boundaries, size nb+1

    bool empty() const { return bucket.empty(); }
    std::size_t regions() const { return starts.empty() ? 0 : starts.size() - 1; }

    static ScatterPlan build(const std::vector<std::size_t>& dest) {
        ScatterPlan p;
        const std::size_t n = dest.size();
        p.shift = 15;
        while (((n - 1) >> p.shift) >= 256) ++p.shift;
        const std::size_t nb = ((n - 1) >> p.shift) + 1;
        p.bucket.resize(n);
        p.starts.assign(nb + 1, 0);
        for (std::size_t j = 0; j < n; ++j) {
            const std::uint8_t b = std::uint8_t(dest[j] >> p.shift);
            p.bucket[j] = b;
            ++p.starts[b + 1];
        }
        for (std::size_t b = 0; b < nb; ++b) p.starts[b + 1] += p.starts[b];
        p.grouped_dest.resize(n);
        std::array<std::uint32_t, 256> cur{};
        std::copy(p.starts.begin(), p.starts.end() - 1, cur.begin());
        for (std::size_t j = 0; j < n; ++j)
            p.grouped_dest[cur[p.bucket[j]]++] = std::uint32_t(dest[j]);
        return p;
    }
};

}  // namespace detail

enum class Dispatch {
    Auto,    // branch A iff n <= k
    ForceA,  // scan along the row axis
    ForceB,  // scan along the column axis
};

/// Implicit n x k kernel matrix A_ij = exp(-|a_i - b_j| / t) * cos(phi_i - psi_j)
/// (cosine factor 1 when phases are absent). Anchors are sorted once in the
/// constructor; temperature is folded by pre-scaling the anchors by 1/t, and
/// all results are returned in the caller's original anchor order.
template <typename Real>
class LaplexOperator {
  public:
    LaplexOperator(std::vector<Real> row_anchors, std::vector<Real> col_anchors,
                   Real temperature = Real(1))
        : LaplexOperator(std::move(row_anchors), std::move(col_anchors), temperature, {}, {}) {}

    LaplexOperator(std::vector<Real> row_anchors, std::vector<Real> col_anchors,
                   Real temperature, std::vector<Real> row_phases, std::vector<Real> col_phases)
        : raw_rows_(std::move(row_anchors)),
          raw_cols_(std::move(col_anchors)),
          temperature_(temperature),
          row_phases_(std::move(row_phases)),
          col_phases_(std::move(col_phases)) {
        if (raw_rows_.empty() || raw_cols_.empty())
            throw EmptyInput("LaplexOperator: empty anchor set");
        require_finite(raw_rows_, "LaplexOperator row anchors");
        require_finite(raw_cols_, "LaplexOperator col anchors");
        if (!(temperature_ > Real(0)) || !std::isfinite(temperature_))
            throw NonFinite("LaplexOperator: temperature must be positive and finite");
        if (row_phases_.empty() != col_phases_.empty())
            throw DimensionMismatch("LaplexOperator: phases must be given for both sides");
        if (!row_phases_.empty()) {
            if (row_phases_.size() != raw_rows_.size() || col_phases_.size() != raw_cols_.size())
                throw DimensionMismatch("LaplexOperator: phase lengths");
            require_finite(row_phases_, "LaplexOperator row phases");
            require_finite(col_phases_, "LaplexOperator col phases");
        }

        std::vector<Real> sr(raw_rows_.size()), sc(raw_cols_.size());
        for (std::size_t i = 0; i < sr.size(); ++i) sr[i] = raw_rows_[i] / temperature_;
        for (std::size_t j = 0; j < sc.size(); ++j) sc[j] = raw_cols_[j] / temperature_;
        rows_ = sort_anchors(sr);
        cols_ = sort_anchors(sc);

        // Bucket indices are anchor-only and reused across every product.
        // r_of_col_[j] = #{i : a_i <= b_j} over sorted, scaled anchors.
        r_of_col_.resize(cols_.size());
        for (std::size_t j = 0; j < cols_.size(); ++j)
            r_of_col_[j] = static_cast<std::size_t>(
                std::upper_bound(rows_.values.begin(), rows_.values.end(), cols_.values[j]) -
                rows_.values.begin());
        j_of_row_.resize(rows_.size());
        for (std::size_t i = 0; i < rows_.size(); ++i)
            j_of_row_[i] = static_cast<std::size_t>(
                std::upper_bound(cols_.values.begin(), cols_.values.end(), rows_.values[i]) -
                cols_.values.begin());

        // bucket_starts_[v] = first sorted column index with r_of_col >= v;
        // the scan branch walks these buckets instead of re-reading r per
        // column.
        bucket_starts_.assign(rows_.size() + 2, 0);
        for (std::size_t j = 0; j < cols_.size(); ++j) ++bucket_starts_[r_of_col_[j] + 1];
        for (std::size_t v = 1; v < bucket_starts_.size(); ++v)
            bucket_starts_[v] += bucket_starts_[v - 1];

        if (cols_.size() >= kBlockThreshold) {
            std::vector<std::size_t> inv(cols_.size());
            for (std::size_t js = 0; js < cols_.size(); ++js) inv[cols_.perm[js]] = js;
            col_plan_ = detail::ScatterPlan::build(inv);
        }
        if (rows_.size() >= kBlockThreshold)
            row_plan_ = detail::ScatterPlan::build(rows_.perm);
    }

    std::size_t n() const { return raw_rows_.size(); }
    std::size_t k() const { return raw_cols_.size(); }
    Real temperature() const { return temperature_; }
    bool has_phases() const { return !row_phases_.empty(); }

    const std::vector<Real>& row_anchors() const { return raw_rows_; }
    const std::vector<Real>& col_anchors() const { return raw_cols_; }
    const std::vector<Real>& row_phases() const { return row_phases_; }
    const std::vector<Real>& col_phases() const { return col_phases_; }

    /// Sorted, temperature-scaled anchors (internal geometry, exposed for
    /// gradient routines that share the bucket structure).
    const SortedAnchors<Real>& sorted_rows() const { return rows_; }
    const SortedAnchors<Real>& sorted_cols() const { return cols_; }
    const std::vector<std::size_t>& col_buckets() const { return r_of_col_; }
    const std::vector<std::size_t>& row_buckets() const { return j_of_row_; }

    /// Role-swapped operator: LAPLEX(b, a) with swapped phases.
    LaplexOperator transposed() const {
        return LaplexOperator(raw_cols_, raw_rows_, temperature_, col_phases_, row_phases_);
    }

    /// y_i = sum_j exp(-|a_i - b_j| / t) x_j, exact for arbitrary anchors.
    std::vector<Real> matvec(const std::vector<Real>& x, Dispatch dispatch = Dispatch::Auto) const {
        if (has_phases()) throw PhasePresent("matvec: operator has phases, use phased_matvec");
        return matvec_unphased(x, dispatch);
    }

    std::vector<Real> matvec_transpose(const std::vector<Real>& g,
                                       Dispatch dispatch = Dispatch::Auto) const {
        if (has_phases())
            throw PhasePresent("matvec_transpose: operator has phases, use phased path");
        return transposed().matvec_unphased(g, dispatch);
    }

    /// Rows of X are independent right-hand sides; sorting and bucket indices
    /// are shared (they were computed once in the constructor).
    Matrix<Real> batch_matvec(const Matrix<Real>& X, Dispatch dispatch = Dispatch::Auto) const {
        if (has_phases()) throw PhasePresent("batch_matvec: operator has phases");
        if (X.cols != k()) throw DimensionMismatch("batch_matvec: X columns");
        require_finite(X.data, "batch_matvec X");
        Matrix<Real> Y(X.rows, n());
        std::vector<Real> x(k());
        for (std::size_t r = 0; r < X.rows; ++r) {
            std::copy(X.data.begin() + r * X.cols, X.data.begin() + (r + 1) * X.cols, x.begin());
            std::vector<Real> y = matvec_unphased(x, dispatch);
            std::copy(y.begin(), y.end(), Y.data.begin() + r * Y.cols);
        }
        return Y;
    }

    /// M = A diag(D) A^T, exact, in O(n^2 + k log n). D may be signed.
    GramResult<Real> weighted_gram(const std::vector<Real>& D) const {
        if (has_phases()) throw PhasePresent("weighted_gram: operator has phases");
        return weighted_gram_unphased(D);
    }

    /// Angle-sum reduction: exactly two plain matvecs.
    std::vector<Real> phased_matvec(const std::vector<Real>& x,
                                    Dispatch dispatch = Dispatch::Auto) const {
        if (!has_phases()) throw PhaseAbsent("phased_matvec: operator has no phases");
        if (x.size() != k()) throw DimensionMismatch("phased_matvec: x length");
        require_finite(x, "phased_matvec x");
        std::vector<Real> xc(k()), xs(k());
        for (std::size_t j = 0; j < k(); ++j) {
            xc[j] = std::cos(col_phases_[j]) * x[j];
            xs[j] = std::sin(col_phases_[j]) * x[j];
        }
        std::vector<Real> p = matvec_unphased(xc, dispatch);
        std::vector<Real> q = matvec_unphased(xs, dispatch);
        std::vector<Real> y(n());
        for (std::size_t i = 0; i < n(); ++i)
            y[i] = std::cos(row_phases_[i]) * p[i] + std::sin(row_phases_[i]) * q[i];
        return y;
    }

    /// Three-real-Gram reduction: exactly three plain weighted Grams with
    /// weights cos^2 psi . D, cos psi sin psi . D, sin^2 psi . D.
    GramResult<Real> phased_gram(const std::vector<Real>& D) const {
        if (!has_phases()) throw PhaseAbsent("phased_gram: operator has no phases");
        if (D.size() != k()) throw DimensionMismatch("phased_gram: D length");
        require_finite(D, "phased_gram D");
        std::vector<Real> dcc(k()), dcs(k()), dss(k());
        for (std::size_t j = 0; j < k(); ++j) {
            const Real c = std::cos(col_phases_[j]);
            const Real s = std::sin(col_phases_[j]);
            dcc[j] = c * c * D[j];
            dcs[j] = c * s * D[j];
            dss[j] = s * s * D[j];
        }
        GramResult<Real> Gcc = weighted_gram_unphased(dcc);
        GramResult<Real> Gcs = weighted_gram_unphased(dcs);
        GramResult<Real> Gss = weighted_gram_unphased(dss);
        GramResult<Real> out;
        out.matrix = Matrix<Real>(n(), n());
        for (std::size_t i = 0; i < n(); ++i) {
            const Real ci = std::cos(row_phases_[i]);
            const Real si = std::sin(row_phases_[i]);
            for (std::size_t j = 0; j <= i; ++j) {
                const Real cj = std::cos(row_phases_[j]);
                const Real sj = std::sin(row_phases_[j]);
                const Real m = ci * cj * Gcc.matrix(i, j) +
                               (ci * sj + si * cj) * Gcs.matrix(i, j) +
                               si * sj * Gss.matrix(i, j);
                out.matrix(i, j) = m;
                out.matrix(j, i) = m;
            }
        }
        return out;
    }

  private:
    // Both triangular scans include the diagonal bucket boundary: each b_j is
    // re-anchored to its two neighbouring sorted row anchors, so every
    // aggregation exponent is <= 0 and each b_j reaches each output index
    // exactly once. Ties b_j == a_i go to the left aggregate.
    std::vector<Real> matvec_unphased(const std::vector<Real>& x, Dispatch dispatch) const {
        if (x.size() != k()) throw DimensionMismatch("matvec: x length");
        require_finite(x, "matvec x");
        stats::matvec_calls().fetch_add(1, std::memory_order_relaxed);
        const bool branch_a = dispatch == Dispatch::ForceA ||
                              (dispatch == Dispatch::Auto && n() <= k());
        return branch_a ? matvec_branch_a(x) : matvec_branch_b(x);
    }

    // Workspace shared across calls on the same thread; avoids repeated large
    // allocations in benchmark loops.
    struct Workspace {
        std::vector<Real> xs, u, staged;
    };
    static Workspace& workspace() {
        thread_local Workspace ws;
        return ws;
    }

    // Permute x into sorted column order, via the blocked plan when present.
    void gather_cols(const std::vector<Real>& x, std::vector<Real>& xs) const {
        const std::size_t kk = k();
        xs.resize(kk);
        if (col_plan_.empty()) {
            for (std::size_t js = 0; js < kk; ++js) {
                if (js + 16 < kk) __builtin_prefetch(&x[cols_.perm[js + 16]]);
                xs[js] = x[cols_.perm[js]];
            }
            return;
        }
        auto& staged = workspace().staged;
        staged.resize(kk);
        std::array<std::uint32_t, 256> cur{};
        std::copy(col_plan_.starts.begin(), col_plan_.starts.end() - 1, cur.begin());
        for (std::size_t j = 0; j < kk; ++j) staged[cur[col_plan_.bucket[j]]++] = x[j];
        for (std::size_t i = 0; i < kk; ++i) xs[col_plan_.grouped_dest[i]] = staged[i];
    }

    // Emit y[rows_.perm[is]] = val(is) for sequential is, blocked when large.
    template <typename ValFn>
    std::vector<Real> scatter_rows(ValFn&& val) const {
        const std::size_t nn = n();
        std::vector<Real> y(nn);
        if (row_plan_.empty()) {
            for (std::size_t is = 0; is < nn; ++is) {
                if (is + 16 < nn) __builtin_prefetch(&y[rows_.perm[is + 16]], 1);
                y[rows_.perm[is]] = val(is);
            }
            return y;
        }
        auto& staged = workspace().staged;
        staged.resize(nn);
        std::array<std::uint32_t, 256> cur{};
        std::copy(row_plan_.starts.begin(), row_plan_.starts.end() - 1, cur.begin());
        for (std::size_t is = 0; is < nn; ++is) staged[cur[row_plan_.bucket[is]]++] = val(is);
        for (std::size_t i = 0; i < nn; ++i) y[row_plan_.grouped_dest[i]] = staged[i];
        return y;
    }

    // Two fused sweeps over the sorted rows. The backward sweep accumulates
    // the right-neighbour aggregate (columns with b_j >= a_i, re-anchored at
    // the bucket boundary) directly into the running suffix recurrence; the
    // forward sweep does the same for the left aggregate and emits the output
    // without materializing the intermediate payload arrays.
    std::vector<Real> matvec_branch_a(const std::vector<Real>& x) const {
        const std::size_t nn = n(), kk = k();
        const auto& A = rows_.values;
        const auto& B = cols_.values;
        auto& ws = workspace();
        gather_cols(x, ws.xs);
        const Real* xs = ws.xs.data();

        ws.u.resize(nn);
        Real* u = ws.u.data();
        Real urun = Real(0);
        std::size_t js = kk;  // consumes buckets r = nn down to r = 1
        for (std::size_t i = nn; i-- > 0;) {
            if (i + 1 < nn) urun *= rows_.decays[i];
            const std::size_t lo = bucket_starts_[i + 1];
            while (js > lo) {
                --js;
                urun += xs[js] * std::exp(A[i] - B[js]);
            }
            u[i] = urun;
        }

        Real vrun = Real(0);
        std::size_t jf = 0;  // consumes buckets r = 0 up to r = nn-1
        return scatter_rows([&](std::size_t i) {
            if (i > 0) vrun *= rows_.decays[i - 1];
            const std::size_t hi = bucket_starts_[i + 1];
            while (jf < hi) {
                vrun += xs[jf] * std::exp(B[jf] - A[i]);
                ++jf;
            }
            return u[i] + vrun;
        });
    }

    std::vector<Real> matvec_branch_b(const std::vector<Real>& x) const {
        const std::size_t kk = k();
        const auto& A = rows_.values;
        const auto& B = cols_.values;
        auto& ws = workspace();
        gather_cols(x, ws.xs);
        std::vector<Real> u = prefix_decay_scan(cols_, ws.xs);
        std::vector<Real> v = suffix_decay_scan(cols_, ws.xs);
        return scatter_rows([&](std::size_t is) {
            const std::size_t j = j_of_row_[is];  // #{b <= a_i}
            Real yi = Real(0);
            if (j >= 1) yi += std::exp(B[j - 1] - A[is]) * u[j - 1];
            if (j <= kk - 1) yi += std::exp(A[is] - B[j]) * v[j];
            return yi;
        });
    }

    GramResult<Real> weighted_gram_unphased(const std::vector<Real>& D) const {
        if (D.size() != k()) throw DimensionMismatch("weighted_gram: D length");
        require_finite(D, "weighted_gram D");
        stats::weighted_gram_calls().fetch_add(1, std::memory_order_relaxed);

        const std::size_t nn = n(), kk = k();
        const auto& A = rows_.values;
        const auto& B = cols_.values;

        std::vector<Real> ell(nn, Real(0)), rho(nn, Real(0)), bucket_mass(nn + 1, Real(0));
        for (std::size_t ts = 0; ts < kk; ++ts) {
            const Real Dt = D[cols_.perm[ts]];
            const std::size_t r = r_of_col_[ts];
            if (r <= nn - 1) ell[r] += Dt * std::exp(Real(2) * (B[ts] - A[r]));
            if (r >= 1) rho[r - 1] += Dt * std::exp(Real(2) * (A[r - 1] - B[ts]));
            bucket_mass[r] += Dt;
        }
        // C[m] = sum of bucket masses for r <= m; middle mass for sorted
        // i >= j is C[i] - C[j].
        std::vector<Real> C(nn + 1);
        C[0] = bucket_mass[0];
        for (std::size_t m = 1; m <= nn; ++m) C[m] = C[m - 1] + bucket_mass[m];

        // Scans of the doubled kernel LAPLEX(2a): decays squared.
        std::vector<Real> U(nn), V(nn);
        U[0] = ell[0];
        for (std::size_t i = 1; i < nn; ++i)
            U[i] = ell[i] + rows_.decays[i - 1] * rows_.decays[i - 1] * U[i - 1];
        V[nn - 1] = rho[nn - 1];
        for (std::size_t i = nn - 1; i-- > 0;)
            V[i] = rho[i] + rows_.decays[i] * rows_.decays[i] * V[i + 1];

        GramResult<Real> out;
        out.matrix = Matrix<Real>(nn, nn);
        for (std::size_t is = 0; is < nn; ++is) {
            const std::size_t ui = rows_.perm[is];
            for (std::size_t js = 0; js <= is; ++js) {
                const Real m = std::exp(A[js] - A[is]) * (U[js] + (C[is] - C[js]) + V[is]);
                const std::size_t uj = rows_.perm[js];
                out.matrix(ui, uj) = m;
                out.matrix(uj, ui) = m;
            }
        }
        return out;
    }

    std::vector<Real> raw_rows_;
    std::vector<Real> raw_cols_;
    Real temperature_;
    std::vector<Real> row_phases_;
    std::vector<Real> col_phases_;

    SortedAnchors<Real> rows_;  // raw_rows_ / t, sorted
    SortedAnchors<Real> cols_;  // raw_cols_ / t, sorted
    std::vector<std::size_t> r_of_col_;
    std::vector<std::size_t> j_of_row_;

    // bucket_starts_[v] is the first sorted column index with r_of_col_ >= v;
    // the extra trailing slot makes bucket v span [v, v+1) without bounds checks.
    std::vector<std::uint32_t> bucket_starts_;

    // Cache-blocked permutation plans, built only past the threshold where
    // random gather/scatter starts missing in cache.
    static constexpr std::size_t kBlockThreshold = std::size_t(1) << 18;
    detail::ScatterPlan col_plan_;
    detail::ScatterPlan row_plan_;
};

}  // namespace laplex
