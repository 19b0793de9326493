#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "laplex/limits.hpp"
#include "laplex/oracle.hpp"

using namespace laplex;

namespace {

HashRouting random_routing(std::mt19937_64& g, std::size_t n_in, std::size_t m_out) {
    HashRouting r;
    std::uniform_int_distribution<std::size_t> hb(0, m_out - 1);
    std::uniform_int_distribution<int> sb(0, 1);
    r.hash.resize(n_in);
    r.signs.resize(n_in);
    for (std::size_t j = 0; j < n_in; ++j) {
        r.hash[j] = hb(g);
        r.signs[j] = sb(g) ? 1 : -1;
    }
    r.labels.resize(m_out);
    for (std::size_t i = 0; i < m_out; ++i) r.labels[i] = double(i);  // unit-gap integer grid
    return r;
}

}  // namespace

TEST_CASE("matching_matrix basics") {
    auto M = matching_matrix<double>({1, 2}, {2, 1, 3});
    CHECK(M.rows == 2);
    CHECK(M.cols == 3);
    CHECK(M.data == std::vector<int>{0, 1, 0, 1, 0, 0});

    auto I = matching_matrix<double>({5, -3, 0.25}, {5, -3, 0.25});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(I(i, j) == (i == j ? 1 : 0));

    CHECK_THROWS_AS(matching_matrix<double>({std::nan("")}, {1.0}), NonFinite);
}

TEST_CASE("small-temperature kernel reproduces matching_matrix on integer anchors") {
    std::vector<double> a{0, 1, 2, 3}, b{2, 0, 3};
    auto M = matching_matrix(a, b);
    auto K = oracle::dense_kernel(a, b, 1e-3);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(std::lround(K(i, j)) == M(i, j));  // off-matches underflow to 0
}

TEST_CASE("countsketch_apply hand example and zero input") {
    HashRouting r;
    r.hash = {0, 1, 0};
    r.signs = {1, -1, 1};
    r.labels = {0.0, 10.0};
    auto y = countsketch_apply<double>(r, {1, 2, 3});
    CHECK(y == std::vector<double>{4, -2});
    CHECK(countsketch_apply<double>(r, {0, 0, 0}) == std::vector<double>{0, 0});
}

TEST_CASE("countsketch via the kernel route matches the discrete reference") {
    HashRouting r;
    r.hash = {0, 1, 0};
    r.signs = {1, -1, 1};
    r.labels = {0.0, 10.0};
    auto y = countsketch_via_laplex<double>(r, {1, 2, 3}, 0.01);
    CHECK(y[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(-2.0).epsilon(1e-12));

    // large temperature: all kernel entries ~ 1, output broadcasts the signed sum
    auto yb = countsketch_via_laplex<double>(r, {1, 2, 3}, 1e6);
    CHECK(yb[0] == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(yb[1] == doctest::Approx(2.0).epsilon(1e-4));

    // single bucket: signed sum for any temperature
    HashRouting one;
    one.hash = {0, 0, 0};
    one.signs = {1, -1, 1};
    one.labels = {3.0};
    for (double t : {0.01, 1.0, 50.0}) {
        auto ys = countsketch_via_laplex<double>(one, {1, 2, 3}, t);
        CHECK(ys[0] == doctest::Approx(2.0).epsilon(1e-12));
    }
}

TEST_CASE("100 random routings agree below the underflow threshold") {
    auto g = testutil::rng(51);
    for (int trial = 0; trial < 100; ++trial) {
        std::uniform_int_distribution<std::size_t> ns(1, 64), ms(1, 8);
        auto r = random_routing(g, ns(g), ms(g));
        auto x = testutil::random_vec(g, r.n_in());
        auto direct = countsketch_apply(r, x);
        // min_gap is 1 on the integer grid; t = 0.01 << 1/40
        auto via = countsketch_via_laplex(r, x, 0.01);
        CHECK(testutil::rel_err_l2(via, direct) <= 1e-12);
    }
}

TEST_CASE("routing validation") {
    HashRouting r;
    r.hash = {0, 2};
    r.signs = {1, 1};
    r.labels = {0.0, 1.0};
    CHECK_THROWS_AS(countsketch_apply<double>(r, {1, 2}), DimensionMismatch);  // hash out of range
    r.hash = {0, 1};
    r.signs = {1, 3};
    CHECK_THROWS_AS(countsketch_apply<double>(r, {1, 2}), NonFinite);  // bad sign
    r.signs = {1, 1};
    CHECK_THROWS_AS(countsketch_apply<double>(r, {1.0}), DimensionMismatch);
}

TEST_CASE("universal_embed realizes the identity and the zero matrix") {
    Matrix<double> I2(2, 2);
    I2(0, 0) = 1;
    I2(1, 1) = 1;
    auto e = universal_embed(I2);
    auto y = e.apply({3.0, 4.0}, 0.01);
    CHECK(y[0] == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(y[1] == doctest::Approx(4.0).epsilon(1e-10));

    Matrix<double> Z(3, 2, 0.0);
    auto ez = universal_embed(Z);
    for (double t : {0.01, 1.0}) {
        auto yz = ez.apply({1.0, -2.0}, t);
        for (double v : yz) CHECK(v == 0.0);
    }
}

TEST_CASE("universal_embed reproduces a random dense product") {
    auto g = testutil::rng(52);
    Matrix<double> W(4, 5);
    for (auto& v : W.data) v = testutil::random_vec(g, 1, -10.0, 10.0)[0];
    auto x = testutil::random_vec(g, 5);
    auto e = universal_embed(W);
    auto y = e.apply(x, 0.01);
    std::vector<double> want(4, 0.0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j) want[i] += W(i, j) * x[j];
    CHECK(testutil::rel_err_l2(y, want) <= 1e-10);
}
