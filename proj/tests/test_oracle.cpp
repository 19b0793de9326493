#include <cmath>
#include <cstdlib>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "laplex/oracle.hpp"

using namespace laplex;

TEST_CASE("dense_kernel trivial entries") {
    auto K1 = oracle::dense_kernel<double>({0.0}, {0.0}, 1.0);
    CHECK(K1(0, 0) == 1.0);

    auto K2 = oracle::dense_kernel<double>({0.0, std::log(2.0)}, {0.0}, 1.0);
    CHECK(K2(0, 0) == 1.0);
    CHECK(K2(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("dense_kernel entries stay in range and peak only at coincidences") {
    auto g = testutil::rng(61);
    auto a = testutil::random_anchors(g, 64);
    auto b = testutil::random_anchors(g, 64);
    b[10] = a[3];  // one planted coincidence
    auto K = oracle::dense_kernel(a, b, 1.0);
    for (std::size_t i = 0; i < 64; ++i)
        for (std::size_t j = 0; j < 64; ++j) {
            CHECK(K(i, j) > 0.0);
            CHECK(K(i, j) <= 1.0);
            if (K(i, j) == 1.0) CHECK(a[i] == b[j]);
        }
    CHECK(K(3, 10) == 1.0);
}

TEST_CASE("dense_matvec and dense_gram reduce correctly in rank-1 cases") {
    std::vector<double> a{0.0, 1.0, -0.5}, b{0.3, 2.0};
    auto K = oracle::dense_kernel(a, b, 0.7);

    // one-hot weight: gram equals the outer product of one kernel column
    std::vector<double> D{0.0, 1.0};
    auto G = oracle::dense_gram(a, b, 0.7, D);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(G(i, j) == doctest::Approx(K(i, 1) * K(j, 1)).epsilon(1e-15));

    auto y = oracle::dense_matvec(a, b, 0.7, {2.0, -1.0});
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(y[i] == doctest::Approx(2.0 * K(i, 0) - K(i, 1)).epsilon(1e-15));
}

TEST_CASE("size cap triggers and responds to the environment override") {
    std::vector<double> a(1 << 13, 0.0), b(1 << 13, 0.0);
    // 2^26 entries > default 2^24 cap
    CHECK_THROWS_AS(oracle::dense_kernel(a, b, 1.0), SizeCapExceeded);

    setenv("LAPLEX_ORACLE_CAP", "128", 1);
    std::vector<double> a2(16, 0.0), b2(16, 0.0);
    CHECK_THROWS_AS(oracle::dense_kernel(a2, b2, 1.0), SizeCapExceeded);
    unsetenv("LAPLEX_ORACLE_CAP");
    CHECK_NOTHROW(oracle::dense_kernel(a2, b2, 1.0));
}

TEST_CASE("finite_diff on a quadratic and a constant") {
    auto fd = oracle::finite_diff<double>(
        [](const std::vector<double>& v) { return 0.5 * (v[0] * v[0] + v[1] * v[1]); },
        {1.0, 2.0});
    CHECK(fd[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(fd[1] == doctest::Approx(2.0).epsilon(1e-8));

    auto fc = oracle::finite_diff<double>([](const std::vector<double>&) { return 7.0; },
                                          {1.0, -3.0, 0.0});
    for (double v : fc) CHECK(v == 0.0);
}

TEST_CASE("oracle validation") {
    CHECK_THROWS_AS(oracle::dense_kernel<double>({}, {1.0}, 1.0), EmptyInput);
    CHECK_THROWS_AS(oracle::dense_kernel<double>({0.0}, {1.0}, 0.0), NonFinite);
    CHECK_THROWS_AS(oracle::finite_diff<double>(
                        [](const std::vector<double>&) { return std::nan(""); }, {1.0}),
                    NonFinite);
}
