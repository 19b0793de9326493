#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "laplex/common.hpp"
#include "laplex/errors.hpp"

namespace laplex {

/// Radix-2 iterative transform. Forward is unnormalized; inverse carries the
/// 1/N factor.
template <typename Real>
std::vector<std::complex<Real>> fft(std::vector<std::complex<Real>> v, bool inverse) {
    const std::size_t n = v.size();
    if (n == 0 || (n & (n - 1)) != 0) throw NonPowerOfTwo("fft: length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(v[i], v[j]);
    }
    const Real pi = Real(3.14159265358979323846264338327950288L);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const Real ang = (inverse ? Real(2) : Real(-2)) * pi / Real(len);
        const std::complex<Real> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<Real> w(1);
            for (std::size_t j = 0; j < len / 2; ++j) {
                std::complex<Real> u = v[i + j];
                std::complex<Real> t = v[i + j + len / 2] * w;
                v[i + j] = u + t;
                v[i + j + len / 2] = u - t;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& z : v) z /= Real(n);
    return v;
}

/// Uniform grid a_i = b_i = i * delta, on which the kernel matrix is
/// symmetric Toeplitz with first column exp(-m * delta).
struct UniformGridSpec {
    std::size_t n = 0;
    double delta = 0;
};

/// Toeplitz product by circulant embedding of size 2^ceil(log2(2n-1)) and
/// three transforms.
template <typename Real>
std::vector<Real> toeplitz_fft_matvec(const UniformGridSpec& grid, const std::vector<Real>& x) {
    const std::size_t n = grid.n;
    if (n == 0 || !(grid.delta > 0)) throw EmptyInput("toeplitz_fft_matvec: bad grid");
    if (x.size() != n) throw DimensionMismatch("toeplitz_fft_matvec: x length");
    if (n == 1) return x;

    std::size_t N = 1;
    while (N < 2 * n - 1) N <<= 1;
    std::vector<std::complex<Real>> c(N, std::complex<Real>(0)), xv(N, std::complex<Real>(0));
    for (std::size_t m = 0; m < n; ++m) {
        const Real t = std::exp(-Real(m) * Real(grid.delta));
        c[m] = t;
        if (m > 0) c[N - m] = t;
    }
    for (std::size_t i = 0; i < n; ++i) xv[i] = x[i];
    std::vector<std::complex<Real>> C = fft(std::move(c), false);
    std::vector<std::complex<Real>> X = fft(std::move(xv), false);
    for (std::size_t i = 0; i < N; ++i) X[i] *= C[i];
    std::vector<std::complex<Real>> Y = fft(std::move(X), true);
    std::vector<Real> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = Y[i].real();
    return y;
}

/// Random Fourier features for the Laplace kernel: Cauchy frequencies via the
/// inverse CDF, uniform phase offsets.
template <typename Real>
struct RffFeatures {
    std::vector<Real> frequencies;  // w_d, Cauchy
    std::vector<Real> offsets;      // c_d in [0, 2pi)
    std::size_t feature_count = 0;
};

template <typename Real>
RffFeatures<Real> rff_sample(std::size_t D, std::uint64_t seed) {
    if (D == 0) throw EmptyInput("rff_sample: D must be >= 1");
    RffFeatures<Real> f;
    f.feature_count = D;
    f.frequencies.resize(D);
    f.offsets.resize(D);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double pi = 3.14159265358979323846;
    for (std::size_t d = 0; d < D; ++d)
        f.frequencies[d] = Real(std::tan(pi * (unit(rng) - 0.5)));
    for (std::size_t d = 0; d < D; ++d) f.offsets[d] = Real(2.0 * pi * unit(rng));
    return f;
}

/// y_i = (2/D) sum_d cos(w_d a_i + c_d) * sum_j cos(w_d b_j + c_d) x_j.
/// Unbiased for the t=1 Laplace matvec; O((n+k) D).
template <typename Real>
std::vector<Real> rff_matvec_estimate(const RffFeatures<Real>& feats, const std::vector<Real>& a,
                                      const std::vector<Real>& b, const std::vector<Real>& x) {
    if (x.size() != b.size()) throw DimensionMismatch("rff_matvec_estimate: x length");
    const std::size_t D = feats.feature_count;
    std::vector<Real> y(a.size(), Real(0));
    for (std::size_t d = 0; d < D; ++d) {
        const Real w = feats.frequencies[d], c = feats.offsets[d];
        Real z = Real(0);
        for (std::size_t j = 0; j < b.size(); ++j) z += std::cos(w * b[j] + c) * x[j];
        for (std::size_t i = 0; i < a.size(); ++i) y[i] += std::cos(w * a[i] + c) * z;
    }
    const Real scale = Real(2) / Real(D);
    for (auto& v : y) v *= scale;
    return y;
}

/// Anchor-gradient estimator for L = g^T y with y the RFF matvec estimate.
/// Differentiating the feature map introduces a frequency factor w_d, so the
/// estimator is heavy-tailed under Cauchy frequencies.
template <typename Real>
std::pair<std::vector<Real>, std::vector<Real>> rff_grad_estimate(
    const RffFeatures<Real>& feats, const std::vector<Real>& a, const std::vector<Real>& b,
    const std::vector<Real>& x, const std::vector<Real>& g) {
    if (x.size() != b.size()) throw DimensionMismatch("rff_grad_estimate: x length");
    if (g.size() != a.size()) throw DimensionMismatch("rff_grad_estimate: g length");
    const std::size_t D = feats.feature_count;
    std::vector<Real> a_bar(a.size(), Real(0)), b_bar(b.size(), Real(0));
    for (std::size_t d = 0; d < D; ++d) {
        const Real w = feats.frequencies[d], c = feats.offsets[d];
        Real s = Real(0), r = Real(0);
        for (std::size_t j = 0; j < b.size(); ++j) s += std::cos(w * b[j] + c) * x[j];
        for (std::size_t i = 0; i < a.size(); ++i) r += std::cos(w * a[i] + c) * g[i];
        for (std::size_t i = 0; i < a.size(); ++i)
            a_bar[i] -= w * std::sin(w * a[i] + c) * g[i] * s;
        for (std::size_t j = 0; j < b.size(); ++j)
            b_bar[j] -= w * std::sin(w * b[j] + c) * x[j] * r;
    }
    const Real scale = Real(2) / Real(D);
    for (auto& v : a_bar) v *= scale;
    for (auto& v : b_bar) v *= scale;
    return {std::move(a_bar), std::move(b_bar)};
}

}  // namespace laplex
