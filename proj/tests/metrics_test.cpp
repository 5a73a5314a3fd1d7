#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "hybridlm/metrics.hpp"
#include "oracles.hpp"

using namespace hybridlm;

static std::vector<int64_t> chars(const std::string& s) {
    return std::vector<int64_t>(s.begin(), s.end());
}

TEST_CASE("edit_distance basics") {
    auto same = edit_distance(chars("abc"), chars("abc"));
    CHECK(same.distance == 0);
    CHECK(same.substitutions + same.insertions + same.deletions == 0);

    auto kitten = edit_distance(chars("kitten"), chars("sitting"));
    CHECK(kitten.distance == 3);
    CHECK(kitten.substitutions + kitten.insertions + kitten.deletions == 3);

    auto all_del = edit_distance(chars("abcd"), {});
    CHECK(all_del.distance == 4);
    CHECK(all_del.deletions == 4);

    // the decomposition always sums to the distance
    std::mt19937 rng(5);
    for (int i = 0; i < 200; ++i) {
        std::vector<int64_t> a((size_t)(rng() % 8)), b((size_t)(rng() % 8));
        for (auto& x : a) x = (int64_t)(rng() % 3);
        for (auto& x : b) x = (int64_t)(rng() % 3);
        auto c = edit_distance(a, b);
        CHECK(c.distance == c.substitutions + c.insertions + c.deletions);
        CHECK(c.distance == edit_distance(b, a).distance);  // symmetric
        CHECK(c.distance == oracles::edit_distance(a, b));
    }
}

TEST_CASE("edit_distance satisfies the triangle inequality") {
    std::mt19937 rng(6);
    for (int i = 0; i < 300; ++i) {
        std::vector<int64_t> a((size_t)(rng() % 6)), b((size_t)(rng() % 6)),
            c((size_t)(rng() % 6));
        for (auto& x : a) x = (int64_t)(rng() % 3);
        for (auto& x : b) x = (int64_t)(rng() % 3);
        for (auto& x : c) x = (int64_t)(rng() % 3);
        size_t ab = edit_distance(a, b).distance;
        size_t bc = edit_distance(b, c).distance;
        size_t ac = edit_distance(a, c).distance;
        CHECK(ac <= ab + bc);
        CHECK(edit_distance(a, a).distance == 0);
    }
}

TEST_CASE("wer") {
    CHECK(wer({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(wer({1, 2, 3, 4}, {1, 9, 3, 4}) == doctest::Approx(0.25));
    CHECK(wer({1}, {2, 3, 4}) > 1.0);  // may exceed 1
    CHECK_THROWS_AS(wer({}, {1}), std::invalid_argument);
}

TEST_CASE("cosine_similarity") {
    CHECK(cosine_similarity({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_similarity({1, 0}, {0, 1}) == doctest::Approx(0.0));
    CHECK(cosine_similarity({1, 0}, {1, 1}) == doctest::Approx(0.70711).epsilon(1e-5));
    CHECK_THROWS_AS(cosine_similarity({0, 0}, {1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(cosine_similarity({1}, {1, 2}), std::invalid_argument);

    // scale invariance to 1e-12
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> a(5), b(5);
        for (auto& x : a) x = u(rng);
        for (auto& x : b) x = u(rng);
        double base = cosine_similarity(a, b);
        for (double lambda : {0.5, 3.0, 1e6}) {
            auto scaled = a;
            for (auto& x : scaled) x *= lambda;
            CHECK(std::abs(cosine_similarity(scaled, b) - base) < 1e-12);
        }
    }
}

TEST_CASE("normalize_contour z-scores the voiced region") {
    auto c = normalize_contour({100.0, 200.0}, {1, 1});
    REQUIRE(c.values.size() == 2);
    CHECK(c.values[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(c.values[1] == doctest::Approx(1.0).epsilon(1e-12));

    auto dropped = normalize_contour({5.0, 100.0, 200.0, 7.0}, {0, 1, 1, 0});
    CHECK(dropped.values.size() == 2);

    CHECK_THROWS_AS(normalize_contour({5.0, 5.0}, {1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(normalize_contour({1.0, 2.0}, {0, 0}), std::invalid_argument);

    std::mt19937 rng(10);
    std::uniform_real_distribution<double> u(50.0, 400.0);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> raw(20);
        std::vector<uint8_t> mask(20, 1);
        for (auto& x : raw) x = u(rng);
        auto n = normalize_contour(raw, mask);
        double mean = 0.0, var = 0.0;
        for (double v : n.values) mean += v;
        mean /= (double)n.values.size();
        for (double v : n.values) var += (v - mean) * (v - mean);
        var /= (double)n.values.size();
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
    }
}

TEST_CASE("contour_mse with linear resampling") {
    Contour a{{0.0, 1.0}};
    CHECK(contour_mse(a, a) == 0.0);
    CHECK(contour_mse(Contour{{0.0, 0.0}}, Contour{{1.0, 1.0}}) == doctest::Approx(1.0));

    // [0,1] resampled to length 4 is [0, 1/3, 2/3, 1]
    Contour b{{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0}};
    CHECK(contour_mse(a, b) == doctest::Approx(0.0).epsilon(1e-15));

    CHECK_THROWS_AS(contour_mse(Contour{}, a), std::invalid_argument);
}

TEST_CASE("dtw_distance") {
    Contour a{{0.0, 1.0, 2.0}};
    CHECK(dtw_distance(a, a) == 0.0);
    CHECK(dtw_distance(a, Contour{{0.0, 2.0}}) == doctest::Approx(1.0));
    CHECK(dtw_distance(Contour{{3.0}}, Contour{{1.5}}) == doctest::Approx(1.5));
    CHECK_THROWS_AS(dtw_distance(Contour{}, a), std::invalid_argument);

    // normalized variant divides by |a| + |b|
    CHECK(dtw_distance(a, Contour{{0.0, 2.0}}, true) == doctest::Approx(0.2));
}

TEST_CASE("dtw matches exhaustive path enumeration and the diagonal bound") {
    std::mt19937 rng(12);
    // exhaustive over short contour pairs from {0,1,2}
    std::vector<std::vector<double>> pool;
    for (int len = 1; len <= 3; ++len) {
        int count = 1;
        for (int i = 0; i < len; ++i) count *= 3;
        for (int code = 0; code < count; ++code) {
            std::vector<double> v((size_t)len);
            int c = code;
            for (int i = 0; i < len; ++i) {
                v[(size_t)i] = (double)(c % 3);
                c /= 3;
            }
            pool.push_back(std::move(v));
        }
    }
    for (const auto& x : pool)
        for (const auto& y : pool)
            CHECK(dtw_distance(Contour{x}, Contour{y}) ==
                  doctest::Approx(oracles::dtw_enumerate(x, y)).epsilon(1e-12));

    // random longer pairs, plus the equal-length diagonal bound
    for (int i = 0; i < 100; ++i) {
        size_t n = 1 + rng() % 8;
        std::vector<double> x(n), y(n);
        for (auto& v : x) v = (double)(rng() % 3);
        for (auto& v : y) v = (double)(rng() % 3);
        double d = dtw_distance(Contour{x}, Contour{y});
        CHECK(d == doctest::Approx(oracles::dtw_enumerate(x, y)).epsilon(1e-12));
        double diag = 0.0;
        for (size_t k = 0; k < n; ++k) diag += std::abs(x[k] - y[k]);
        CHECK(d <= diag + 1e-12);
    }
}
