#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "molq/metrics.hpp"
#include "molq/rng.hpp"

using namespace molq;

namespace {

// O(n^2) pairwise-count AUC oracle: P(score_pos > score_neg) + 0.5 P(tie).
double pairwise_auc(const std::vector<double>& scores, const std::vector<bool>& flags) {
    double wins = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!flags[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (flags[j]) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("roc auc equals the pairwise-count oracle, ties included") {
    Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 20 + static_cast<int>(rng.index(200));
        std::vector<double> scores;
        std::vector<bool> flags;
        for (int i = 0; i < n; ++i) {
            // quantized scores force ties
            scores.push_back(std::floor(rng.uniform(0, 8)) / 4.0);
            flags.push_back(rng.uniform() < 0.3);
        }
        auto got = roc_auc(scores, flags);
        int pos = 0;
        for (bool f : flags) pos += f;
        if (pos == 0 || pos == n) {
            CHECK_FALSE(got.has_value());
            continue;
        }
        REQUIRE(got.has_value());
        CHECK(*got == Catch::Approx(pairwise_auc(scores, flags)).margin(1e-12));
    }
}

TEST_CASE("roc auc on separable and degenerate inputs") {
    CHECK(*roc_auc({1, 2, 3, 4}, {false, false, true, true}) == 1.0);
    CHECK(*roc_auc({4, 3, 2, 1}, {false, false, true, true}) == 0.0);
    CHECK(*roc_auc({1, 1, 1, 1}, {false, true, false, true}) == Catch::Approx(0.5));
    CHECK_FALSE(roc_auc({1, 2}, {false, false}).has_value());
    CHECK_FALSE(roc_auc({1, 2}, {true, true}).has_value());
    CHECK_THROWS_AS(roc_auc({1, 2}, {true}), ShapeError);
}

TEST_CASE("quantile with interpolation") {
    std::vector<double> v{4, 1, 3, 2};
    CHECK(quantile(v, 0.0) == 1.0);
    CHECK(quantile(v, 1.0) == 4.0);
    CHECK(quantile(v, 0.5) == Catch::Approx(2.5));
    CHECK(quantile(v, 0.25) == Catch::Approx(1.75));
    CHECK(quantile({7.0}, 0.9) == 7.0);
    CHECK_THROWS_AS(quantile({}, 0.5), TooSmallError);
}

TEST_CASE("histogram bins with fixed width") {
    auto bins = histogram({0.01, 0.02, 0.06, 0.11, 0.11}, 0.05);
    REQUIRE(bins.size() == 3);
    CHECK(bins[0].lo == 0.0);
    CHECK(bins[0].count == 2);
    CHECK(bins[1].count == 1);
    CHECK(bins[2].count == 2);
    long total = 0;
    for (const auto& b : bins) total += b.count;
    CHECK(total == 5);
    CHECK(histogram({}, 0.05).empty());
}

TEST_CASE("confidence bins cover (0,0.1] .. (0.4,0.5]") {
    CHECK(confidence_bin(0.0) == 0);
    CHECK(confidence_bin(0.05) == 0);
    CHECK(confidence_bin(0.1) == 0);
    CHECK(confidence_bin(0.1000001) == 1);
    CHECK(confidence_bin(0.2) == 1);
    CHECK(confidence_bin(0.35) == 3);
    CHECK(confidence_bin(0.45) == 4);
    CHECK(confidence_bin(0.5) == 4);
    CHECK(confidence_bin(0.7) == 4);  // clamp: cannot exceed 0.5 mathematically
}

TEST_CASE("probability deciles") {
    CHECK(probability_decile(0.0) == 0);
    CHECK(probability_decile(0.099) == 0);
    CHECK(probability_decile(0.45) == 4);
    CHECK(probability_decile(0.55) == 5);
    CHECK(probability_decile(0.999) == 9);
    CHECK(probability_decile(1.0) == 9);
}
