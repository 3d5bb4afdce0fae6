#include <doctest.h>

#include <cmath>

#include "anomforge/metrics.hpp"
#include "metrics_oracle.hpp"
#include "support.hpp"

using namespace anomforge;

namespace {

std::vector<bool> labels_of(std::initializer_list<int> v) {
    std::vector<bool> out;
    for (int x : v) out.push_back(x != 0);
    return out;
}

struct Pair {
    std::vector<double> s;
    std::vector<bool> y;
};

Pair random_pair(Rng& rng, std::size_t n, bool coarse) {
    Pair p;
    for (std::size_t i = 0; i < n; ++i) {
        p.s.push_back(coarse ? double(rng.below(5)) / 4.0 : rng.uniform());
        p.y.push_back(rng.bernoulli(0.4));
    }
    p.y[0] = true;
    p.y[1] = false;
    return p;
}

SampleScore score(double dice, double ap, double auc, double fpr, double thr) {
    SampleScore s;
    s.dice_max = dice;
    s.ap = ap;
    s.auc = auc;
    s.fpr = fpr;
    s.best_threshold = thr;
    return s;
}

}  // namespace

TEST_CASE("AUC examples") {
    const std::vector<bool> y = labels_of({1, 0, 0, 1, 0, 1, 0, 0});
    std::vector<double> gt(y.begin(), y.end()), inv;
    for (double v : gt) inv.push_back(1.0 - v);
    CHECK(pixel_auc(gt, y) == 1.0);
    CHECK(pixel_auc(inv, y) == 0.0);
    CHECK(pixel_auc(std::vector<double>(8, 0.3), y) == 0.5);
    CHECK_THROWS_AS(pixel_auc(std::vector<double>(3, 0.1), labels_of({1, 1, 1})), DegenerateSample);
    CHECK_THROWS_AS(pixel_auc(std::vector<double>(3, 0.1), labels_of({0, 0, 0})), DegenerateSample);
    CHECK_THROWS_AS(pixel_auc(std::vector<double>(2, 0.1), labels_of({0, 1, 0})), std::invalid_argument);
}

TEST_CASE("AP examples") {
    CHECK(average_precision(std::vector<double>{0.9, 0.8, 0.7}, labels_of({1, 0, 1})) ==
          doctest::Approx(0.5 * (1.0 + 2.0 / 3.0)).epsilon(1e-15));
    const std::vector<double> perfect{0.9, 0.8, 0.7, 0.1, 0.1, 0.2, 0.3, 0.0};
    CHECK(average_precision(perfect, labels_of({1, 1, 1, 0, 0, 0, 0, 0})) == 1.0);
    CHECK_THROWS_AS(average_precision(perfect, std::vector<bool>(8, false)), DegenerateSample);
}

TEST_CASE("AP of a random map approaches the prevalence") {
    Rng rng(99);
    const double prevalence = 0.1;
    double mean = 0.0;
    const int trials = 200;
    for (int k = 0; k < trials; ++k) {
        std::vector<double> s(2000);
        std::vector<bool> y(2000);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = rng.uniform();
            y[i] = rng.bernoulli(prevalence);
        }
        mean += average_precision(s, y) / trials;
    }
    CHECK(std::fabs(mean - prevalence) <= 0.015);
}

TEST_CASE("Dice examples") {
    const std::vector<bool> y = labels_of({0, 1, 1, 0, 0, 1, 0, 0});
    std::vector<double> gt(y.begin(), y.end());
    CHECK(max_dice(gt, y).dice_max == 1.0);

    const DiceResult zero = max_dice(std::vector<double>(8, 0.0), y);
    CHECK(zero.dice_max == 0.0);
    CHECK(zero.best_threshold == 0.0);
    for (double t : candidate_thresholds(std::vector<double>(8, 0.0))) {
        std::size_t tp = 0;
        for (std::size_t i = 0; i < 8; ++i) tp += (0.0 > t) && y[i];
        CHECK(tp == 0);
    }

    // hand-set 8-voxel case
    const std::vector<double> s{0.1, 0.9, 0.4, 0.6, 0.2, 0.4, 0.05, 0.3};
    const DiceResult d = max_dice(s, y);
    const testing::BruteScores b = testing::brute_metrics(s, y);
    CHECK(d.dice_max == b.dice);
    CHECK(d.best_threshold == b.threshold);
    // {0.9, 0.6, 0.4, 0.4} flagged at t = 0.3: tp 3, fp 1
    CHECK(d.dice_max == doctest::Approx(6.0 / 7.0).epsilon(1e-15));
    CHECK(d.best_threshold == 0.3);
    CHECK(false_positive_rate(s, y, d.best_threshold) == b.fpr);
    CHECK(b.fpr == 0.2);
}

TEST_CASE("FPR examples") {
    const Dims dm{4, 4, 2};
    const BinaryMask3D gt = testing::box_mask(dm, 0, 2);
    const BinaryMask3D all(dm, true);
    CHECK(fpr_at_max_dice(to_volume(gt), gt, all) == 0.0);
    CHECK(fpr_at_max_dice(Volume3D(dm, {}, 1.0), gt, all) == 1.0);
    CHECK_THROWS_AS(false_positive_rate(std::vector<double>{0.5}, labels_of({1}), 0.2), DegenerateSample);
}

TEST_CASE("candidate thresholds") {
    const std::vector<double> s{0.5, 0.123, 0.5, 2.0};
    const auto t = candidate_thresholds(s);
    CHECK(t.size() == 256 + 3);
    CHECK(std::is_sorted(t.begin(), t.end()));
    CHECK(std::find(t.begin(), t.end(), 0.123) != t.end());
    CHECK(t.back() == 2.0);
    ThresholdParams few;
    few.n_thresholds = 3;
    few.max_distinct = 1;
    CHECK(candidate_thresholds(s, few) == std::vector<double>{0.0, 0.5, 1.0});
}

TEST_CASE("metrics equal the brute-force oracle on small inputs") {
    Rng rng(12345);
    for (int k = 0; k < 400; ++k) {
        const Pair p = random_pair(rng, 2 + rng.below(15), k % 2 == 0);
        const testing::BruteScores b = testing::brute_metrics(p.s, p.y);
        CHECK(pixel_auc(p.s, p.y) == b.auc);
        CHECK(average_precision(p.s, p.y) == b.ap);
        const DiceResult d = max_dice(p.s, p.y);
        CHECK(d.dice_max == b.dice);
        CHECK(d.best_threshold == b.threshold);
        CHECK(false_positive_rate(p.s, p.y, d.best_threshold) == b.fpr);
    }
}

TEST_CASE("strictly increasing transforms leave the metrics unchanged") {
    Rng rng(5);
    for (int k = 0; k < 200; ++k) {
        const Pair p = random_pair(rng, 2 + rng.below(40), k % 2 == 0);
        std::vector<double> sq;
        for (double v : p.s) sq.push_back(v * v);
        CHECK(pixel_auc(sq, p.y) == pixel_auc(p.s, p.y));
        CHECK(average_precision(sq, p.y) == average_precision(p.s, p.y));
        const DiceResult a = max_dice(p.s, p.y), b = max_dice(sq, p.y);
        CHECK(a.dice_max == b.dice_max);
        CHECK(false_positive_rate(p.s, p.y, a.best_threshold) == false_positive_rate(sq, p.y, b.best_threshold));
    }
}

TEST_CASE("AUC of the reversed ranking is the complement") {
    Rng rng(6);
    for (int k = 0; k < 200; ++k) {
        const Pair p = random_pair(rng, 2 + rng.below(60), k % 2 == 0);
        std::vector<double> flipped;
        for (double v : p.s) flipped.push_back(1.0 - v);
        CHECK(pixel_auc(p.s, p.y) + pixel_auc(flipped, p.y) == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("volume overloads restrict to the evaluation mask") {
    const Dims d{6, 6, 6};
    const BinaryMask3D gt = testing::ball_mask(d, 2.5, 2.5, 2.5, 1.5);
    const BinaryMask3D eval = testing::box_mask(d, 1, 5);
    Volume3D map = testing::random_volume(d, 3);
    // outside values would spoil a perfect score if they leaked in
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (!eval[i]) map[i] = gt[i] ? 0.0 : 1.0;
        else map[i] = gt[i] ? 0.9 : 0.1;
    }
    CHECK(pixel_auc(map, gt, eval) == 1.0);
    CHECK(average_precision(map, gt, eval) == 1.0);
    CHECK(max_dice(map, gt, eval).dice_max == 1.0);
    CHECK(fpr_at_max_dice(map, gt, eval) == 0.0);
    const ScoredVoxels sv = gather(map, gt, eval);
    CHECK(sv.scores.size() == eval.count());
    CHECK(sv.positives() == mask_and(gt, eval).count());
}

TEST_CASE("score_sample exclusions") {
    const Dims d{4, 4, 4};
    const Volume3D map = testing::random_volume(d, 1);
    const BinaryMask3D eval = testing::box_mask(d, 1, 3);
    const SampleResult empty = score_sample("a", map, BinaryMask3D(d), eval);
    CHECK_FALSE(empty.score.has_value());
    CHECK(empty.exclusion_reason == "empty ground truth within evaluation mask");
    const SampleResult all = score_sample("b", map, BinaryMask3D(d, true), eval);
    CHECK_FALSE(all.score.has_value());
    CHECK(all.exclusion_reason == "no negative voxels within evaluation mask");
    const SampleResult ok = score_sample("c", map, testing::box_mask(d, 1, 2), eval);
    REQUIRE(ok.score.has_value());
    CHECK(ok.exclusion_reason.empty());
    CHECK(ok.id == "c");
}

TEST_CASE("aggregate") {
    const SampleScore one = score(0.2, 0.5, 0.9, 0.1, 0.3);
    const MetricsReport single = aggregate({SampleResult{"x", one, ""}});
    REQUIRE(single.mean.has_value());
    CHECK(single.mean->dice_max == 0.2);
    CHECK(single.mean->ap == 0.5);
    CHECK(single.mean->auc == 0.9);
    CHECK(single.mean->fpr == 0.1);
    CHECK(single.mean->best_threshold == 0.3);

    const MetricsReport two = aggregate({SampleResult{"x", one, ""}, SampleResult{"y", score(0.4, 0.5, 0.9, 0.1, 0.3), ""},
                                         SampleResult{"z", std::nullopt, "empty ground truth within evaluation mask"}});
    CHECK(two.mean->dice_max == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(two.included == 2);
    CHECK(two.excluded == 1);
    CHECK(two.samples.size() == 3);

    const MetricsReport none = aggregate({SampleResult{"z", std::nullopt, "reason"}});
    CHECK_FALSE(none.mean.has_value());
    CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
}
