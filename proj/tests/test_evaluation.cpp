#include <gtest/gtest.h>

#include <random>

#include "icr/evaluation.hpp"

using namespace icr;

namespace {

// Independent oracle: for every positive, the precision of the set scoring at least as high,
// averaged over positives. Quadratic, no sorting.
double brute_force_ap(const std::vector<double>& s, const std::vector<int>& y) {
    double total = 0;
    long pos = 0;
    for (int v : y) pos += v;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        // threshold at s[i]: everything scoring >= s[i] is predicted positive
        long tp = 0, n = 0;
        for (std::size_t j = 0; j < s.size(); ++j)
            if (s[j] >= s[i]) ++n, tp += y[j];
        total += static_cast<double>(tp) / static_cast<double>(n);
    }
    return total / static_cast<double>(pos);
}

}  // namespace

TEST(AveragePrecision, HandExample) {
    // ranks of positives 1 and 3: (1/1 + 2/3) / 2 = 5/6
    const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
    const std::vector<int> y{1, 0, 1, 0};
    EXPECT_NEAR(average_precision(s, y), 5.0 / 6.0, 1e-12);
}

TEST(AveragePrecision, PerfectAndConstantScorers) {
    const std::vector<int> y{0, 1, 0, 0, 1, 0, 0, 0, 0, 0};
    const std::vector<double> perfect{0, 1, 0, 0, 1, 0, 0, 0, 0, 0};
    EXPECT_DOUBLE_EQ(average_precision(perfect, y), 1.0);
    const std::vector<double> constant(10, 0.3);
    EXPECT_DOUBLE_EQ(average_precision(constant, y), 0.2);
}

TEST(AveragePrecision, MatchesBruteForceOracle) {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 40);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (int i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng() % 7);  // plenty of ties
            y[i] = rng() % 3 == 0;
        }
        y[0] = 1;
        EXPECT_NEAR(average_precision(s, y), brute_force_ap(s, y), 1e-9);
    }
}

TEST(AveragePrecision, InvariantToMonotoneTransforms) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> s(100), t(100);
    std::vector<int> y(100);
    for (int i = 0; i < 100; ++i) {
        s[i] = u(rng);
        t[i] = std::exp(3 * s[i]) - 7;
        y[i] = u(rng) < 0.2;
    }
    y[3] = 1;
    EXPECT_NEAR(average_precision(s, y), average_precision(t, y), 1e-12);
}

TEST(AveragePrecision, Errors) {
    const std::vector<double> s{0.1, 0.2};
    EXPECT_THROW(average_precision(s, std::vector<int>{0, 0}), NoPositives);
    EXPECT_THROW(average_precision(s, std::vector<int>{1}), Error);
}

TEST(MacroF1, ClosedForm) {
    BinaryCounts c{5, 5, 5, 85};
    // positive F1 = 0.5, negative F1 = 170/180
    EXPECT_NEAR(macro_f1(c), (0.5 + 17.0 / 18.0) / 2, 1e-12);
    BinaryCounts swapped{85, 5, 5, 5};
    EXPECT_NEAR(macro_f1(swapped), macro_f1(c), 1e-12);
}

TEST(MacroF1, ThresholdIsInclusive) {
    const std::vector<double> s{0.5, 0.49};
    const std::vector<int> y{1, 0};
    const auto c = confusion(s, y);
    EXPECT_EQ(c.tp, 1);
    EXPECT_EQ(c.tn, 1);
    EXPECT_DOUBLE_EQ(macro_f1(s, y), 1.0);
}

TEST(Curves, MatchThresholdSweep) {
    const std::vector<double> s{0.9, 0.7, 0.7, 0.4, 0.1};
    const std::vector<int> y{1, 0, 1, 0, 1};
    const auto c = curves(s, y);
    ASSERT_EQ(c.pr.size(), 4u);
    ASSERT_EQ(c.roc.size(), 5u);
    for (const auto& p : c.pr) {
        const auto k = confusion(s, y, p.threshold);
        EXPECT_NEAR(p.recall, static_cast<double>(k.tp) / 3, 1e-12);
        EXPECT_NEAR(p.precision, static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fp), 1e-12);
    }
    EXPECT_EQ(c.roc.front().fpr, 0.0);
    EXPECT_EQ(c.roc.back().fpr, 1.0);
    EXPECT_EQ(c.roc.back().tpr, 1.0);
    EXPECT_NE(curves_tsv(c).find("roc\t"), std::string::npos);
}

TEST(Evaluate, PerRoundAndReport) {
    const std::vector<double> s{0.9, 0.2, 0.8, 0.1, 0.3};
    const std::vector<int> y{1, 0, 0, 0, 1};
    const std::vector<int> r{0, 0, 1, 1, 2};
    const auto rep = evaluate(s, y, r, "val");
    ASSERT_TRUE(rep.ap.has_value());
    EXPECT_EQ(rep.per_round.size(), 3u);
    EXPECT_DOUBLE_EQ(*rep.per_round.at(0), 1.0);
    EXPECT_FALSE(rep.per_round.at(1).has_value());
    EXPECT_NEAR(rep.positive_fraction, 0.4, 1e-12);
    const auto j = to_json(rep);
    EXPECT_TRUE(j["per_round_ap"][1]["ap"].is_null());

    const std::vector<int> none{0, 0, 0, 0, 0};
    EXPECT_FALSE(evaluate(s, none, r).ap.has_value());
}

TEST(RandomBaseline, ApIsPrevalenceAndF1Reproducible) {
    std::vector<int> y(200, 0);
    for (int i = 0; i < 30; ++i) y[i] = 1;
    const auto a = random_baseline(y, 9, 500);
    EXPECT_DOUBLE_EQ(a.ap, 0.15);
    EXPECT_EQ(a.macro_f1, random_baseline(y, 9, 500).macro_f1);
    EXPECT_GT(a.macro_f1, 0.4);
    EXPECT_LT(a.macro_f1, 0.6);
}

TEST(ResultsTable, RendersLeadingDotAndDashes) {
    ResultsTable t;
    t.set("Baseline", "val", "task1", {0.347, 0.5});
    t.set("Baseline", "test", "task2", {0.9, std::nullopt});
    const auto text = t.render();
    EXPECT_NE(text.find(".347"), std::string::npos) << text;
    EXPECT_EQ(text.find("0.347"), std::string::npos);
    EXPECT_NE(text.find(".500"), std::string::npos);
    EXPECT_NE(text.find(" -"), std::string::npos);
    EXPECT_EQ(t.to_json().size(), 2u);
    EXPECT_FALSE(t.get("Baseline", "test", "task1").has_value());
}
