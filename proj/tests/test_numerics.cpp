#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tkit/numerics.hpp"

using namespace tkit;

TEST_CASE("log_sum_exp basics") {
    const double x = 0.37;
    CHECK(log_sum_exp(std::vector<double>{x}) == x);
    CHECK(log_sum_exp(std::vector<double>{x, x}) == doctest::Approx(x + std::log(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(log_sum_exp(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("log_sum_exp matches naive summation") {
    SeededRng rng(3, 1);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> v(8);
        double naive = 0.0;
        for (auto &x : v) {
            x = 4.0 * rng.normal();
            naive += std::exp(x);
        }
        naive = std::log(naive);
        CHECK(std::abs(log_sum_exp(v) - naive) <= 1e-12 * std::abs(naive));
    }
}

TEST_CASE("log_sum_exp does not overflow and absorbs the zero sentinel") {
    CHECK(log_sum_exp(std::vector<double>{1e6, 1e6}) == doctest::Approx(1e6 + std::log(2.0)));
    CHECK(std::isfinite(log_sum_exp(std::vector<double>{-1e6, -1e6 + 1})));
    CHECK(log_sum_exp(std::vector<double>{kLogZero, kLogZero}) == kLogZero);
    CHECK(log_sum_exp(std::vector<double>{kLogZero, 2.0}) == 2.0);
    CHECK(log_add(kLogZero, kLogZero) == kLogZero);
    CHECK(log_add(kLogZero, -3.0) == -3.0);
}

TEST_CASE("softmax examples") {
    const auto u = softmax(std::vector<double>(5, 1.3));
    for (double p : u) {
        CHECK(p == doctest::Approx(0.2).epsilon(1e-14));
    }
    const auto p = softmax(std::vector<double>{0.0, std::log(3.0)});
    CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-14));
    CHECK_THROWS_AS(softmax(std::vector<double>{0.0, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(softmax(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("softmax sums to one, is shift invariant and monotone") {
    SeededRng rng(4, 0);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> s(7);
        for (auto &x : s) {
            x = 5.0 * rng.normal();
        }
        const auto p = softmax(s);
        CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-12);
        const double c = 100.0 * rng.normal();
        auto shifted = s;
        for (auto &x : shifted) {
            x += c;
        }
        const auto q = softmax(shifted);
        for (std::size_t k = 0; k < p.size(); ++k) {
            CHECK(std::abs(p[k] - q[k]) <= 1e-12);
            for (std::size_t j = 0; j < p.size(); ++j) {
                if (s[k] > s[j]) {
                    CHECK(p[k] >= p[j]);
                }
            }
        }
        const auto lp = log_softmax(s);
        for (std::size_t k = 0; k < p.size(); ++k) {
            CHECK(std::exp(lp[k]) == doctest::Approx(p[k]).epsilon(1e-12));
        }
    }
}

TEST_CASE("SeededRng is reproducible per (seed, stream)") {
    SeededRng a(42, 7);
    SeededRng b(42, 7);
    SeededRng c(42, 8);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        differs = differs || x != c.next_u64();
    }
    CHECK(differs);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
        const auto k = a.uniform_int(-2, 3);
        CHECK(k >= -2);
        CHECK(k <= 3);
        CHECK(a.uniform_index(5) < 5);
    }
}

TEST_CASE("sample_without_replacement") {
    SeededRng rng(1, 0);
    SUBCASE("k equals the support") {
        const std::vector<double> w{0.5, 0.0, 2.0, 1.0};
        CHECK(sample_without_replacement(w, 3, rng) == std::vector<std::size_t>{0, 2, 3});
    }
    SUBCASE("zero weights are never drawn") {
        const std::vector<double> w{1.0, 0.0, 1.0};
        for (int i = 0; i < 200; ++i) {
            CHECK(sample_without_replacement(w, 2, rng) == std::vector<std::size_t>{0, 2});
        }
    }
    SUBCASE("k beyond the support is an error") {
        CHECK_THROWS_AS(sample_without_replacement(std::vector<double>{1.0, 0.0}, 2, rng),
                        std::invalid_argument);
        CHECK_THROWS_AS(sample_without_replacement(std::vector<double>{1.0, -1.0}, 1, rng),
                        std::invalid_argument);
    }
    SUBCASE("distinct indices") {
        const std::vector<double> w(30, 1.0);
        for (int i = 0; i < 50; ++i) {
            const auto s = sample_without_replacement(w, 10, rng);
            CHECK(s.size() == 10);
            CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
            CHECK(std::is_sorted(s.begin(), s.end()));
        }
    }
    SUBCASE("deterministic under seed") {
        const std::vector<double> w{0.1, 0.3, 0.2, 0.4, 0.7};
        SeededRng a(9, 3);
        SeededRng b(9, 3);
        CHECK(sample_without_replacement(w, 3, a) == sample_without_replacement(w, 3, b));
    }
}

TEST_CASE("first draw marginal equals the normalized weight") {
    const std::vector<double> w{1.0, 2.0, 1.0};
    int hits = 0;
    const int n = 100000;
    for (int s = 0; s < n; ++s) {
        SeededRng rng(static_cast<std::uint64_t>(s), 0);
        hits += sample_without_replacement(w, 1, rng)[0] == 1 ? 1 : 0;
    }
    CHECK(std::abs(static_cast<double>(hits) / n - 0.5) <= 0.01);
}

TEST_CASE("max_relative_error") {
    CHECK(max_relative_error(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0}) == 0.0);
    CHECK(max_relative_error(std::vector<double>{1.0}, std::vector<double>{1.1}) ==
          doctest::Approx(0.1 / 1.1));
    CHECK(max_relative_error(std::vector<double>{0.0}, std::vector<double>{1e-9}) ==
          doctest::Approx(1e-5));
}
