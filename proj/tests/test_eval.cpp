#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "mf3d/eval.hpp"
#include "oracles.hpp"

using namespace mf3d;

namespace {

struct Labels {
    std::vector<std::int32_t> pred, gt;
};

Labels random_labels(std::mt19937& rng, std::size_t n, int k) {
    std::uniform_int_distribution<int> label(0, k);
    Labels l;
    for (std::size_t i = 0; i < n; ++i) {
        l.gt.push_back(label(rng));
        // Mostly correct, so metrics are not degenerate.
        l.pred.push_back(rng() % 3 ? l.gt.back() : label(rng));
    }
    return l;
}

} // namespace

TEST(Metrics, HandComputedCase) {
    // cm = [[5, 5], [0, 10]] for K = 2 with no "other" points.
    std::vector<std::int32_t> gt, pred;
    for (int i = 0; i < 5; ++i) gt.push_back(0), pred.push_back(0);
    for (int i = 0; i < 5; ++i) gt.push_back(0), pred.push_back(1);
    for (int i = 0; i < 10; ++i) gt.push_back(1), pred.push_back(1);
    const auto cm = confusion(pred, gt, 2);
    EXPECT_EQ(cm.at(0, 0), 5);
    EXPECT_EQ(cm.at(0, 1), 5);
    EXPECT_EQ(cm.at(1, 1), 10);
    const auto m = metrics(cm);
    EXPECT_DOUBLE_EQ(m.oa, 75.00);
    EXPECT_DOUBLE_EQ(m.macc, 75.00);
    EXPECT_DOUBLE_EQ(m.miou, 58.33);
    EXPECT_EQ(metrics_csv_row(8, m), "8,75.00,75.00,58.33");
}

TEST(Metrics, PerfectPrediction) {
    const std::vector<std::int32_t> l{0, 1, 2, 2, 1};
    const auto m = metrics(confusion(l, l, 3));
    EXPECT_EQ(m.oa, 100.0);
    EXPECT_EQ(m.macc, 100.0);
    EXPECT_EQ(m.miou, 100.0);
}

TEST(Confusion, MatchesTallyOracle) {
    std::mt19937 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + trial % 8;
        const auto l = random_labels(rng, 200 + static_cast<std::size_t>(trial), k);
        EXPECT_EQ(confusion(l.pred, l.gt, k).counts, oracle::tally(l.pred, l.gt, k));
    }
}

TEST(Metrics, PointPermutationInvariance) {
    std::mt19937 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 2 + trial % 5;
        auto l = random_labels(rng, 300, k);
        const auto before = metrics(confusion(l.pred, l.gt, k));
        std::vector<std::size_t> perm(l.gt.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Labels p;
        for (auto i : perm) p.pred.push_back(l.pred[i]), p.gt.push_back(l.gt[i]);
        const auto after = metrics(confusion(p.pred, p.gt, k));
        EXPECT_EQ(before.oa, after.oa);
        EXPECT_EQ(before.macc, after.macc);
        EXPECT_EQ(before.miou, after.miou);
    }
}

TEST(Metrics, DuplicationInvariance) {
    std::mt19937 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 2 + trial % 5;
        const auto l = random_labels(rng, 250, k);
        Labels twice = l;
        twice.pred.insert(twice.pred.end(), l.pred.begin(), l.pred.end());
        twice.gt.insert(twice.gt.end(), l.gt.begin(), l.gt.end());
        const auto a = metrics(confusion(l.pred, l.gt, k));
        const auto b = metrics(confusion(twice.pred, twice.gt, k));
        EXPECT_EQ(a.oa, b.oa);
        EXPECT_EQ(a.macc, b.macc);
        EXPECT_EQ(a.miou, b.miou);
    }
}

TEST(Metrics, ClassPermutationInvariance) {
    std::mt19937 rng(4);
    const int k = 5;
    const auto l = random_labels(rng, 400, k);
    std::vector<std::int32_t> relabel{3, 0, 4, 1, 2, k}; // "other" stays put
    Labels r;
    for (std::size_t i = 0; i < l.gt.size(); ++i) {
        r.gt.push_back(relabel[static_cast<std::size_t>(l.gt[i])]);
        r.pred.push_back(relabel[static_cast<std::size_t>(l.pred[i])]);
    }
    const auto a = metrics(confusion(l.pred, l.gt, k));
    const auto b = metrics(confusion(r.pred, r.gt, k));
    EXPECT_EQ(a.oa, b.oa);
    EXPECT_EQ(a.macc, b.macc);
    EXPECT_EQ(a.miou, b.miou);
}

TEST(Metrics, AbsentClassIsSkipped) {
    // Class 2 never appears in gt or predictions: it contributes to neither mean.
    const std::vector<std::int32_t> gt{0, 0, 1, 1}, pred{0, 1, 1, 1};
    const auto m = metrics(confusion(pred, gt, 3));
    EXPECT_DOUBLE_EQ(m.macc, 75.0);                 // (50 + 100) / 2
    EXPECT_DOUBLE_EQ(m.miou, round2(100 * (0.5 + 2.0 / 3.0) / 2));
}

TEST(Metrics, PredictedButAbsentClassHurtsIou) {
    const std::vector<std::int32_t> gt{0, 0, 0, 0}, pred{0, 0, 0, 1};
    const auto m = metrics(confusion(pred, gt, 2));
    EXPECT_DOUBLE_EQ(m.oa, 75.0);
    EXPECT_DOUBLE_EQ(m.macc, 75.0);
    EXPECT_DOUBLE_EQ(m.miou, 37.5); // (3/4 + 0/1) / 2
}

TEST(Metrics, OtherHandling) {
    // K = 1: points with gt "other" are excluded unless requested.
    const std::vector<std::int32_t> gt{0, 0, 1, 1}, pred{0, 1, 1, 0};
    const auto cm = confusion(pred, gt, 1);
    EXPECT_EQ(cm.unlabeled_total(), 2);
    EXPECT_DOUBLE_EQ(metrics(cm).oa, 50.0);
    EXPECT_DOUBLE_EQ(metrics(cm, true).oa, 50.0); // 2 correct of 4
    const std::vector<std::int32_t> pred2{0, 0, 1, 1};
    EXPECT_DOUBLE_EQ(metrics(confusion(pred2, gt, 1)).oa, 100.0);
    EXPECT_DOUBLE_EQ(metrics(confusion(pred2, gt, 1), true).oa, 100.0);
}

TEST(Confusion, IncludeFilter) {
    const std::vector<std::int32_t> gt{0, 1, 1}, pred{0, 0, 1};
    const std::vector<std::uint8_t> include{1, 0, 1};
    const auto m = metrics(confusion(pred, gt, 2, include));
    EXPECT_EQ(m.oa, 100.0);
}

TEST(Confusion, Errors) {
    const std::vector<std::int32_t> a{0, 1}, b{0};
    EXPECT_THROW(confusion(a, b, 2), InputError);
    EXPECT_THROW(confusion(a, a, 0), InputError);
    const std::vector<std::int32_t> bad{0, 5};
    EXPECT_THROW(confusion(bad, a, 2), InputError);
    EXPECT_THROW(confusion(a, bad, 2), InputError);
    EXPECT_THROW(metrics(ConfusionMatrix(2)), InputError);
    const std::vector<std::int32_t> others{2, 2};
    EXPECT_THROW(metrics(confusion(a, others, 2)), InputError);
}

TEST(Metrics, JsonAndCsvFormat) {
    const Metrics m{100, 66.666, 12.5};
    EXPECT_EQ(std::string(kMetricsCsvHeader), "views,OA,mAcc,mIoU");
    EXPECT_EQ(metrics_csv_row(2, m), "2,100.00,66.67,12.50");
    const auto j = metrics_to_json(m);
    EXPECT_DOUBLE_EQ(j["OA"].get<double>(), 100.0);
    EXPECT_TRUE(j.contains("mAcc"));
    EXPECT_TRUE(j.contains("mIoU"));
}
