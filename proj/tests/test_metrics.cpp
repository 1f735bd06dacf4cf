#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "revrank/metrics.hpp"
#include "revrank/rng.hpp"

using namespace revrank;

TEST_CASE("auc on hand cases") {
    CHECK(*auc({1, 0}, {0.9, 0.1}) == doctest::Approx(1.0));
    CHECK(*auc({1, 0, 1, 0}, {0.8, 0.7, 0.6, 0.5}) == doctest::Approx(0.75));
    CHECK(*auc({1, 0, 1, 0}, {0.5, 0.5, 0.5, 0.5}) == doctest::Approx(0.5));
    CHECK_FALSE(auc({1, 1, 1}, {0.1, 0.2, 0.3}).has_value());
}

TEST_CASE("auc matches brute-force pair counting on random instances") {
    Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(40);
        std::vector<int> labels(n);
        std::vector<double> scores(n);
        bool pos = false, neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = rng.bernoulli(0.3) ? 1 : 0;
            (labels[i] ? pos : neg) = true;
            scores[i] = rng.bernoulli(0.2) ? 0.5 : rng.uniform();  // force some ties
        }
        if (!pos || !neg) continue;
        CHECK(*auc(labels, scores) ==
              doctest::Approx(oracles::auc_bruteforce(labels, scores)).epsilon(1e-9));
    }
}

TEST_CASE("auc is invariant under strictly monotone score transforms") {
    Rng rng(43);
    std::vector<int> labels(30);
    std::vector<double> scores(30), warped(30);
    for (std::size_t i = 0; i < 30; ++i) {
        labels[i] = rng.bernoulli(0.4) ? 1 : 0;
        scores[i] = rng.uniform(-2.0, 2.0);
        warped[i] = std::exp(3.0 * scores[i]) + 7.0;
    }
    labels[0] = 1;
    labels[1] = 0;
    CHECK(*auc(labels, scores) == doctest::Approx(*auc(labels, warped)).epsilon(1e-12));
}

TEST_CASE("gauc averages defined pages and reports skips") {
    const auto res = gauc({{1, 0}, {0, 1}, {0, 0}}, {{0.9, 0.1}, {0.9, 0.1}, {0.5, 0.4}});
    CHECK(res.used == 2);
    CHECK(res.skipped == 1);
    CHECK(*res.value == doctest::Approx(0.5));  // mean of 1.0 and 0.0
    CHECK_FALSE(gauc({{1, 1}}, {{0.2, 0.3}}).value.has_value());
}

TEST_CASE("gauc equals auc for a single page") {
    Rng rng(47);
    std::vector<int> labels = {1, 0, 0, 1, 0};
    std::vector<double> scores(5);
    for (auto& s : scores) s = rng.uniform();
    CHECK(*gauc({labels}, {scores}).value == doctest::Approx(*auc(labels, scores)));
}

TEST_CASE("difference of the identity is zero and the two-item swap matches Eq-style value") {
    CHECK(difference(Permutation::identity(7), 0.5) == doctest::Approx(0.0));
    const Permutation swap({1, 0});
    CHECK(difference(swap, 0.5) == doctest::Approx(std::log(2.0) / 3.0).epsilon(1e-12));
    CHECK_THROWS_AS(difference(swap, 0.0), ConfigError);
    CHECK_THROWS_AS(difference(swap, 1.0), ConfigError);
}

TEST_CASE("bottom swaps disturb the profile less than top swaps") {
    for (double P : {0.3, 0.5, 0.9, 0.99}) {
        const auto top = Permutation::identity(30).swapped(0, 1);
        const auto bottom = Permutation::identity(30).swapped(28, 29);
        CHECK(difference(bottom, P) < difference(top, P));
    }
}

TEST_CASE("difference and ndcg match direct-formula oracles on random permutations") {
    Rng rng(53);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(20);
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        rng.shuffle(order);
        const Permutation perm(order);
        const double P = rng.uniform(0.05, 0.95);
        CHECK(difference(perm, P) ==
              doctest::Approx(oracles::difference_bruteforce(perm, P)).epsilon(1e-9));
        CHECK(ndcg(perm, P) == doctest::Approx(oracles::ndcg_bruteforce(perm, P)).epsilon(1e-9));
        CHECK(difference(perm, P) >= -1e-12);
        CHECK((perm.is_identity() || difference(perm, P) > 0.0));
    }
}

TEST_CASE("ndcg of the identity is one and any true permutation scores below one") {
    CHECK(ndcg(Permutation::identity(12), 0.7) == doctest::Approx(1.0));
    Rng rng(59);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::size_t> order(10);
        for (std::size_t i = 0; i < 10; ++i) order[i] = i;
        rng.shuffle(order);
        const Permutation perm(order);
        if (perm.is_identity()) continue;
        CHECK(ndcg(perm, 0.7) < 1.0);
    }
}

TEST_CASE("pearson on exact linear relations and the undefined case") {
    std::vector<double> x = {1, 2, 3, 4, 5};
    std::vector<double> y(5), z(5), c(5, 3.0);
    for (std::size_t i = 0; i < 5; ++i) {
        y[i] = 2.0 * x[i] + 1.0;
        z[i] = -x[i];
    }
    CHECK(*pearson(x, y) == doctest::Approx(1.0));
    CHECK(*pearson(x, z) == doctest::Approx(-1.0));
    CHECK_FALSE(pearson(x, c).has_value());

    Rng rng(61);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(8), b(8);
        for (std::size_t i = 0; i < 8; ++i) {
            a[i] = rng.normal();
            b[i] = rng.normal();
        }
        CHECK(*pearson(a, b) == doctest::Approx(oracles::pearson_bruteforce(a, b)).epsilon(1e-9));
    }
}
