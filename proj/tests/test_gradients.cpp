#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "laplex/gradients.hpp"
#include "laplex/oracle.hpp"

using namespace laplex;

namespace {

// Anchors with pairwise gaps >= min_gap between the two sets, so finite
// differences never cross a kink of |a_i - b_j|.
void separate(std::vector<double>& a, std::vector<double>& b, double min_gap) {
    for (auto& ai : a)
        for (auto& bj : b)
            if (std::abs(ai - bj) < min_gap) ai += 2 * min_gap;
}

double dot(const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

}  // namespace

TEST_CASE("matvec_vjp x_bar equals the transpose product") {
    auto g = testutil::rng(41);
    auto a = testutil::random_anchors(g, 25);
    auto b = testutil::random_anchors(g, 40);
    auto x = testutil::random_vec(g, 40);
    auto gv = testutil::random_vec(g, 25);
    LaplexOperator<double> op(a, b, 1.3);
    auto v = matvec_vjp(op, x, gv);
    auto want = oracle::dense_matvec(b, a, 1.3, gv);
    CHECK(testutil::rel_err_l2(v.x_bar, want) <= 1e-13);
}

TEST_CASE("matvec_vjp anchor gradients match central finite differences") {
    auto g = testutil::rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<std::size_t> sz(2, 24);
        const std::size_t n = sz(g), k = sz(g);
        auto a = testutil::random_anchors(g, n, 3.0);
        auto b = testutil::random_anchors(g, k, 3.0);
        separate(a, b, 1e-3);
        auto x = testutil::random_vec(g, k);
        auto gv = testutil::random_vec(g, n);
        const double t = trial % 2 ? 1.0 : 0.5;
        LaplexOperator<double> op(a, b, t);
        auto v = matvec_vjp(op, x, gv);

        auto fd_a = oracle::finite_diff<double>(
            [&](const std::vector<double>& av) {
                return dot(gv, oracle::dense_matvec(av, b, t, x));
            },
            a);
        auto fd_b = oracle::finite_diff<double>(
            [&](const std::vector<double>& bv) {
                return dot(gv, oracle::dense_matvec(a, bv, t, x));
            },
            b);
        CHECK(testutil::rel_err_l2(v.a_bar, fd_a) <= 1e-5);
        CHECK(testutil::rel_err_l2(v.b_bar, fd_b) <= 1e-5);
    }
}

TEST_CASE("translation conservation: total anchor gradient mass is zero") {
    auto g = testutil::rng(43);
    auto a = testutil::random_anchors(g, 30);
    auto b = testutil::random_anchors(g, 45);
    auto x = testutil::random_vec(g, 45);
    auto gv = testutil::random_vec(g, 30);
    LaplexOperator<double> op(a, b, 0.9);
    auto v = matvec_vjp(op, x, gv);
    double sum = 0;
    for (double t : v.a_bar) sum += t;
    for (double t : v.b_bar) sum += t;
    double gn = std::sqrt(dot(gv, gv)), xn = std::sqrt(dot(x, x));
    CHECK(std::abs(sum) <= 1e-10 * gn * xn);
}

TEST_CASE("exact ties contribute zero to anchor gradients") {
    // single coincident pair: |a-b| has subgradient 0 at the tie
    LaplexOperator<double> op({2.0}, {2.0}, 1.0);
    auto v = matvec_vjp(op, {1.5}, {3.0});
    CHECK(v.a_bar[0] == 0.0);
    CHECK(v.b_bar[0] == 0.0);
    CHECK(v.x_bar[0] == doctest::Approx(3.0));

    // a tied pair inside a larger instance keeps the non-tied contributions
    LaplexOperator<double> op2({0.0, 5.0}, {5.0}, 1.0);
    auto v2 = matvec_vjp(op2, {1.0}, {1.0, 1.0});
    CHECK(v2.a_bar[0] == doctest::Approx(std::exp(-5.0)));
    CHECK(v2.a_bar[1] == 0.0);
    CHECK(v2.b_bar[0] == doctest::Approx(-std::exp(-5.0)));
}

TEST_CASE("single separated pair has the closed-form gradient") {
    LaplexOperator<double> op({0.0}, {5.0}, 1.0);
    auto v = matvec_vjp(op, {1.0}, {1.0});
    CHECK(v.a_bar[0] == doctest::Approx(std::exp(-5.0)).epsilon(1e-14));
    CHECK(v.b_bar[0] == doctest::Approx(-std::exp(-5.0)).epsilon(1e-14));
}

TEST_CASE("phased_matvec_vjp matches finite differences on every input") {
    auto g = testutil::rng(44);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 8, k = 11;
        auto a = testutil::random_anchors(g, n, 2.0);
        auto b = testutil::random_anchors(g, k, 2.0);
        separate(a, b, 1e-3);
        auto phi = testutil::random_vec(g, n, 0.0, 6.28);
        auto psi = testutil::random_vec(g, k, 0.0, 6.28);
        auto x = testutil::random_vec(g, k);
        auto gv = testutil::random_vec(g, n);
        const double t = 0.8;
        LaplexOperator<double> op(a, b, t, phi, psi);
        auto v = phased_matvec_vjp(op, x, gv);

        auto loss_a = [&](const std::vector<double>& av) {
            return dot(gv, oracle::dense_matvec(av, b, t, x, phi, psi));
        };
        auto loss_b = [&](const std::vector<double>& bv) {
            return dot(gv, oracle::dense_matvec(a, bv, t, x, phi, psi));
        };
        auto loss_phi = [&](const std::vector<double>& pv) {
            return dot(gv, oracle::dense_matvec(a, b, t, x, pv, psi));
        };
        auto loss_psi = [&](const std::vector<double>& pv) {
            return dot(gv, oracle::dense_matvec(a, b, t, x, phi, pv));
        };
        auto loss_x = [&](const std::vector<double>& xv) {
            return dot(gv, oracle::dense_matvec(a, b, t, xv, phi, psi));
        };
        CHECK(testutil::rel_err_l2(v.a_bar, oracle::finite_diff<double>(loss_a, a)) <= 1e-5);
        CHECK(testutil::rel_err_l2(v.b_bar, oracle::finite_diff<double>(loss_b, b)) <= 1e-5);
        CHECK(testutil::rel_err_l2(v.phi_bar, oracle::finite_diff<double>(loss_phi, phi)) <= 1e-5);
        CHECK(testutil::rel_err_l2(v.psi_bar, oracle::finite_diff<double>(loss_psi, psi)) <= 1e-5);
        CHECK(testutil::rel_err_l2(v.x_bar, oracle::finite_diff<double>(loss_x, x)) <= 1e-5);
    }
}

TEST_CASE("gram_vjp_weights equals the quadratic-form diagonal") {
    auto g = testutil::rng(45);
    const std::size_t n = 18, k = 30;
    auto a = testutil::random_anchors(g, n, 3.0);
    auto b = testutil::random_anchors(g, k, 3.0);
    const double t = 1.2;
    LaplexOperator<double> op(a, b, t);

    // symmetric cotangent
    Matrix<double> Gb(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double v = testutil::random_vec(g, 1)[0];
            Gb(i, j) = v;
            Gb(j, i) = v;
        }
    auto D = testutil::random_vec(g, k);
    auto got = gram_vjp_weights(op, D, Gb);

    auto K = oracle::dense_kernel(a, b, t);
    for (std::size_t tt = 0; tt < k; ++tt) {
        double want = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) want += K(i, tt) * Gb(i, j) * K(j, tt);
        CHECK(got[tt] == doctest::Approx(want).epsilon(1e-11));
    }
}

TEST_CASE("gram_vjp_weights matches finite differences of the gram inner product") {
    auto g = testutil::rng(46);
    const std::size_t n = 10, k = 14;
    auto a = testutil::random_anchors(g, n, 2.0);
    auto b = testutil::random_anchors(g, k, 2.0);
    LaplexOperator<double> op(a, b, 1.0);
    Matrix<double> Gb(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double v = testutil::random_vec(g, 1)[0];
            Gb(i, j) = v;
            Gb(j, i) = v;
        }
    auto D = testutil::random_vec(g, k);
    auto got = gram_vjp_weights(op, D, Gb);
    auto fd = oracle::finite_diff<double>(
        [&](const std::vector<double>& Dv) {
            auto M = oracle::dense_gram(a, b, 1.0, Dv);
            double s = 0;
            for (std::size_t i = 0; i < n * n; ++i) s += M.data[i] * Gb.data[i];
            return s;
        },
        D);
    CHECK(testutil::rel_err_l2(got, fd) <= 1e-5);
}

TEST_CASE("gram_vjp_weights rejects asymmetric cotangents and phased operators") {
    LaplexOperator<double> op({0.0, 1.0}, {0.5, 2.0}, 1.0);
    Matrix<double> Gb(2, 2);
    Gb(0, 0) = 1;
    Gb(0, 1) = 2;
    Gb(1, 0) = 2.5;
    Gb(1, 1) = 1;
    CHECK_THROWS_AS(gram_vjp_weights(op, {1.0, 1.0}, Gb), AsymmetricCotangent);

    LaplexOperator<double> ph({0.0, 1.0}, {0.5, 2.0}, 1.0, {0.1, 0.2}, {0.3, 0.4});
    Matrix<double> sym(2, 2, 1.0);
    CHECK_THROWS_AS(gram_vjp_weights(ph, {1.0, 1.0}, sym), PhasePresent);
}

TEST_CASE("vjp dimension checks") {
    LaplexOperator<double> op({0.0, 1.0}, {0.5});
    CHECK_THROWS_AS(matvec_vjp(op, {1.0, 2.0}, {1.0, 1.0}), DimensionMismatch);
    CHECK_THROWS_AS(matvec_vjp(op, {1.0}, {1.0}), DimensionMismatch);
}
