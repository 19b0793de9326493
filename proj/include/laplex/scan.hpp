#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "laplex/common.hpp"
#include "laplex/errors.hpp"

namespace laplex {

/// One sorted 1-D anchor coordinate set together with the permutation back to
/// the user-supplied order and the precomputed neighbour decay factors
/// decays[i] = exp(values[i] - values[i+1]) in (0, 1].
template <typename Real>
struct SortedAnchors {
    std::vector<Real> values;        // ascending, duplicates allowed
    std::vector<std::size_t> perm;   // sorted index -> original index
    std::vector<Real> decays;        // length size()-1

    std::size_t size() const { return values.size(); }
};

/// Stable sort: equal values keep input order.
template <typename Real>
SortedAnchors<Real> sort_anchors(const std::vector<Real>& raw) {
    if (raw.empty()) throw EmptyInput("sort_anchors: empty input");
    require_finite(raw, "sort_anchors");

    SortedAnchors<Real> out;
    const std::size_t n = raw.size();
    out.perm.resize(n);
    std::iota(out.perm.begin(), out.perm.end(), std::size_t(0));
    std::stable_sort(out.perm.begin(), out.perm.end(),
                     [&raw](std::size_t a, std::size_t b) { return raw[a] < raw[b]; });

    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = raw[out.perm[i]];

    out.decays.resize(n > 0 ? n - 1 : 0);
    for (std::size_t i = 0; i + 1 < n; ++i)
        out.decays[i] = std::exp(out.values[i] - out.values[i + 1]);
    return out;
}

/// t_i = payload_i + exp(a_{i-1} - a_i) * t_{i-1}, i.e.
/// t_i = sum_{j <= i} exp(a_j - a_i) payload_j. Payload is in sorted order.
template <typename Real>
std::vector<Real> prefix_decay_scan(const SortedAnchors<Real>& anchors,
                                    const std::vector<Real>& payload) {
    const std::size_t n = anchors.size();
    if (payload.size() != n) throw DimensionMismatch("prefix_decay_scan: payload length");
    std::vector<Real> t(n);
    if (n == 0) return t;
    t[0] = payload[0];
    for (std::size_t i = 1; i < n; ++i) t[i] = payload[i] + anchors.decays[i - 1] * t[i - 1];
    return t;
}

/// s_i = sum_{j >= i} exp(a_i - a_j) payload_j (reverse scan).
template <typename Real>
std::vector<Real> suffix_decay_scan(const SortedAnchors<Real>& anchors,
                                    const std::vector<Real>& payload) {
    const std::size_t n = anchors.size();
    if (payload.size() != n) throw DimensionMismatch("suffix_decay_scan: payload length");
    std::vector<Real> s(n);
    if (n == 0) return s;
    s[n - 1] = payload[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) s[i] = payload[i] + anchors.decays[i] * s[i + 1];
    return s;
}

/// y_i = sum_j exp(-|a_i - a_j|) x_j. The diagonal appears in both scans and
/// is subtracted once.
template <typename Real>
std::vector<Real> symmetric_matvec(const SortedAnchors<Real>& anchors,
                                   const std::vector<Real>& x) {
    const std::size_t n = anchors.size();
    if (x.size() != n) throw DimensionMismatch("symmetric_matvec: x length");
    std::vector<Real> y = prefix_decay_scan(anchors, x);
    std::vector<Real> s = suffix_decay_scan(anchors, x);
    for (std::size_t i = 0; i < n; ++i) y[i] += s[i] - x[i];
    return y;
}

}  // namespace laplex
