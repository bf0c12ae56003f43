#include <gtest/gtest.h>

#include <bitset>

#include "icr/analysis.hpp"
#include "icr/synthetic.hpp"

using namespace icr;

namespace {

struct Fixture {
    Corpus corpus;
    UtteranceLabels labels;
};

/// Dialogue rows: drawer forms, "*" prefix marks an iCR, and `peek` the peek round (-1 none).
Dialogue make_dialogue(const std::string& id, const std::vector<std::string>& forms, int peek, UtteranceLabels& labels) {
    Dialogue d;
    d.id = id;
    d.split = *split_from_name(id.substr(0, id.find('_')));
    for (std::size_t i = 0; i < forms.size(); ++i) {
        Round r;
        r.index = static_cast<int>(i);
        r.teller = {Speaker::Teller, {"go"}, r.index};
        std::string f = forms[i];
        const bool icr = !f.empty() && f[0] == '*';
        if (icr) f = f.substr(1);
        r.drawer = Utterance{Speaker::Drawer, tokenize(f), r.index};
        r.actions = {Action{}};
        r.is_peek_round = static_cast<int>(i) == peek;
        labels[{id, r.index}] = icr ? Label::ICR : Label::NotICR;
        d.rounds.push_back(r);
    }
    return d;
}

Fixture fixture() {
    Fixture f;
    f.corpus.dialogues.push_back(make_dialogue("train_a", {"ok", "*which tree ?", "*which tree ?", "done"}, 2, f.labels));
    f.corpus.dialogues.push_back(make_dialogue("train_b", {"ok", "ok"}, -1, f.labels));
    f.corpus.dialogues.push_back(make_dialogue("val_c", {"*which tree ?", "*ok , how big ?", "ok"}, 1, f.labels));
    return f;
}

/// Exact p-value by enumerating every assignment of the pooled values to the first group.
double enumerate_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::size_t n = pooled.size(), k = a.size();
    auto stat = [&](unsigned mask) {
        double s1 = 0, s2 = 0;
        for (std::size_t i = 0; i < n; ++i) (mask >> i & 1u ? s1 : s2) += pooled[i];
        return std::abs(s1 / k - s2 / (n - k));
    };
    const double obs = stat((1u << k) - 1);
    int extreme = 0, total = 0;
    for (unsigned m = 0; m < (1u << n); ++m) {
        if (std::bitset<32>(m).count() != k) continue;
        ++total;
        extreme += stat(m) >= obs - 1e-12;
    }
    return static_cast<double>(extreme) / total;
}

}  // namespace

TEST(Descriptive, HandFixture) {
    const auto f = fixture();
    const auto s = descriptive_stats(f.corpus, f.labels);
    EXPECT_EQ(s.all.dialogues, 3);
    EXPECT_EQ(s.all.rounds, 9);
    EXPECT_EQ(s.all.icrs, 4);
    EXPECT_NEAR(s.all.icr_percent, 400.0 / 9.0, 1e-12);
    EXPECT_NEAR(s.all.mean_icrs_per_dialogue, 4.0 / 3.0, 1e-12);
    // population std of {2, 0, 2}
    EXPECT_NEAR(s.all.std_icrs_per_dialogue, std::sqrt(((2 - 4.0 / 3) * (2 - 4.0 / 3) * 2 + (4.0 / 3) * (4.0 / 3)) / 3), 1e-12);
    EXPECT_EQ(s.with_icrs.dialogues, 2);
    EXPECT_EQ(s.with_icrs.rounds, 7);
    EXPECT_EQ(s.with_icrs.icrs, s.all.icrs);
    // until peek: train_a rounds 0-1 (1 iCR), train_b both rounds, val_c round 0 (1 iCR)
    EXPECT_EQ(s.until_peek.rounds, 5);
    EXPECT_EQ(s.until_peek.icrs, 2);
}

TEST(Descriptive, ZeroIcrLabels) {
    auto f = fixture();
    for (auto& [k, v] : f.labels) v = Label::NotICR;
    const auto s = descriptive_stats(f.corpus, f.labels);
    EXPECT_EQ(s.with_icrs.dialogues, 0);
    EXPECT_EQ(s.with_icrs.icr_percent, 0.0);
    EXPECT_EQ(s.all.icr_percent, 0.0);
}

TEST(Descriptive, SyntheticRateEqualsPlantedCounts) {
    const auto s = generate_corpus({});
    const auto st = descriptive_stats(s.corpus, s.planted);
    EXPECT_EQ(st.all.icrs, s.manifest.icr_utterances);
    EXPECT_EQ(st.all.rounds, s.manifest.drawer_utterances);
    EXPECT_DOUBLE_EQ(st.all.icr_percent, 100.0 * s.manifest.icr_utterances / s.manifest.drawer_utterances);
}

TEST(RankFrequency, CountsAndHapax) {
    const auto f = fixture();
    const auto types = collapse_types(f.corpus);
    LabelSet l("x");
    for (const auto& t : types) l.set(t.type_id, t.form == "which tree ?" || t.form == "ok , how big ?" ? Label::ICR : Label::NotICR);
    const auto rf = rank_frequency(l, types);
    ASSERT_EQ(rf.ranked.size(), 2u);
    EXPECT_EQ(rf.ranked[0].form, "which tree ?");
    EXPECT_EQ(rf.ranked[0].count, 3);
    EXPECT_EQ(rf.hapax, 1);
    EXPECT_DOUBLE_EQ(rf.hapax_share, 0.5);

    UtteranceLabels scratch;
    Corpus repeated;
    repeated.dialogues.push_back(make_dialogue("train_z", {"what ?", "what ?", "what ?", "what ?", "what ?"}, -1, scratch));
    const auto single = collapse_types(repeated);
    LabelSet one("x");
    one.set(0, Label::ICR);
    const auto r1 = rank_frequency(one, single);
    EXPECT_EQ(r1.ranked[0].count, 5);
    EXPECT_EQ(r1.hapax_share, 0.0);
}

TEST(Bigrams, RuleApplication) {
    EXPECT_EQ(initial_bigram(tokenize("ok , which tree ?")), (std::pair<std::string, std::string>{"which", "tree"}));
    EXPECT_EQ(initial_bigram(tokenize("okay ok what size")), (std::pair<std::string, std::string>{"what", "size"}));
    EXPECT_EQ(initial_bigram(tokenize("ok ?")).first, kShortFormBucket);
    EXPECT_EQ(initial_bigram(tokenize("“ which … one")), (std::pair<std::string, std::string>{"which", "one"}));
    EXPECT_TRUE(is_punctuation_token("?!"));
    EXPECT_FALSE(is_punctuation_token("a?"));
}

TEST(Bigrams, FixtureTable) {
    const auto f = fixture();
    const auto b = initial_bigrams(f.labels, f.corpus);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b[0].first, "which");
    EXPECT_EQ(b[0].second, "tree");
    EXPECT_EQ(b[0].count, 3);
    EXPECT_EQ(b[1].first, "how");
    EXPECT_EQ(b[1].count, 1);
}

TEST(Vocab, PartitionAndZeroIcrs) {
    auto f = fixture();
    const auto p = vocab_partition(f.labels, f.corpus);
    EXPECT_EQ(p.icr_vocab, 7u);  // which tree ? ok , how big
    EXPECT_EQ(p.drawer_vocab, 8u);
    for (auto& [k, v] : f.labels) v = Label::NotICR;
    EXPECT_TRUE(vocab_partition(f.labels, f.corpus).icr.empty());
}

TEST(Permutation, IdenticalSamplesGiveOne) {
    EXPECT_DOUBLE_EQ(permutation_test({1, 2, 3}, {1, 2, 3}, 9999, 1).p_value, 1.0);
    EXPECT_DOUBLE_EQ(permutation_test(std::vector<double>(40, 2.0), std::vector<double>(50, 2.0), 999, 1).p_value, 1.0);
}

TEST(Permutation, ExhaustiveFiveVersusFive) {
    const auto r = permutation_test({0, 0, 0, 0, 0}, {9, 9, 9, 9, 9}, 9999, 1);
    EXPECT_TRUE(r.exhaustive);
    EXPECT_EQ(r.evaluated, 252u);
    EXPECT_DOUBLE_EQ(r.p_value, 2.0 / 252.0);
}

TEST(Permutation, SmallCasesEqualEnumeration) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> a(1 + rng() % 5), b(1 + rng() % 5);
        for (auto& x : a) x = static_cast<double>(rng() % 6);
        for (auto& x : b) x = static_cast<double>(rng() % 6);
        const auto r = permutation_test(a, b, 9999, 1);
        EXPECT_TRUE(r.exhaustive);
        EXPECT_NEAR(r.p_value, enumerate_p(a, b), 1e-12);
        EXPECT_DOUBLE_EQ(permutation_test(b, a, 9999, 1).p_value, r.p_value);
    }
}

TEST(Permutation, MonteCarloDeterministicAndSwapInvariant) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0, 1);
    std::vector<double> a(40), b(55);
    for (auto& x : a) x = n(rng);
    for (auto& x : b) x = n(rng) + 0.3;
    const auto r1 = permutation_test(a, b, 999, 17);
    const auto r2 = permutation_test(a, b, 999, 17);
    EXPECT_FALSE(r1.exhaustive);
    EXPECT_EQ(r1.p_value, r2.p_value);
    EXPECT_EQ(permutation_test(b, a, 999, 17).p_value, r1.p_value);
    EXPECT_GT(r1.p_value, 0.0);
    EXPECT_LE(r1.p_value, 1.0);
    // add-one convention: a hugely separated sample gets exactly 1/(R+1)
    std::vector<double> far(40, 100.0);
    EXPECT_DOUBLE_EQ(permutation_test(far, b, 999, 17).p_value, 1.0 / 1000.0);
    EXPECT_THROW(permutation_test({}, b, 9, 1), EmptySample);
}

TEST(Dynamics, HandMeansAndAbsentGroups) {
    Fixture f;
    f.corpus.dialogues.push_back(make_dialogue("train_a", {"ok", "*which ?", "ok", "ok"}, -1, f.labels));
    std::vector<RoundRecord> table;
    const int acts[] = {1, 3, 2, 0};
    for (int i = 0; i < 4; ++i) table.push_back({"train_a", i, acts[i], 0.0, 0.5 * i, false, true});
    DynamicsOptions o;
    o.n_resamples = 99;
    const auto rep = round_dynamics(f.corpus, f.labels, table, o);
    EXPECT_DOUBLE_EQ(*rep.all.icr_actions.mean_in, 3.0);
    EXPECT_DOUBLE_EQ(*rep.all.icr_actions.mean_out, 1.0);
    EXPECT_DOUBLE_EQ(*rep.all.post_actions.mean_in, 2.0);
    EXPECT_DOUBLE_EQ(*rep.all.post_actions.mean_out, 4.0 / 3.0);
    EXPECT_DOUBLE_EQ(*rep.all.icr_score.mean_in, 0.5);
    ASSERT_TRUE(rep.all.icr_actions.p_value.has_value());

    for (auto& [k, v] : f.labels) v = Label::NotICR;
    const auto none = round_dynamics(f.corpus, f.labels, table, o);
    EXPECT_FALSE(none.all.icr_actions.mean_in.has_value());
    EXPECT_FALSE(none.all.icr_actions.p_value.has_value());
    EXPECT_FALSE(none.with_icrs.icr_actions.mean_out.has_value());
}

TEST(Dynamics, RoundCanBeBothIcrAndPostIcr) {
    Fixture f;
    f.corpus.dialogues.push_back(make_dialogue("train_a", {"*a ?", "*b ?", "ok"}, -1, f.labels));
    const auto g = assign_groups(f.corpus, f.labels);
    ASSERT_EQ(g.size(), 3u);
    EXPECT_TRUE(*g[1].is_icr_round);
    EXPECT_TRUE(g[1].is_post_icr_round);
    EXPECT_FALSE(g[0].is_post_icr_round);
}

TEST(Histograms, EmptyAndFixture) {
    EXPECT_TRUE(histograms(Corpus{}, {}).icrs_per_round.empty());
    const auto f = fixture();
    const auto h = histograms(f.corpus, f.labels);
    EXPECT_EQ(h.icrs_per_round.at(1), (std::pair<int, int>{3, 2}));
    EXPECT_EQ(h.icrs_per_dialogue.at(2), 2);
    EXPECT_EQ(h.icrs_per_dialogue.at(0), 1);
    EXPECT_EQ(h.icrs_vs_length.at(3), (std::pair<int, int>{1, 2}));
}

TEST(Overlap, SharedFormsOverValTypes) {
    const auto f = fixture();
    const auto o = split_overlap(f.labels, f.corpus);
    ASSERT_EQ(o.size(), 2u);
    EXPECT_EQ(o[0].icr_types, 2u);
    EXPECT_EQ(o[0].shared_types, 1u);
    EXPECT_DOUBLE_EQ(o[0].type_overlap(), 0.5);
    EXPECT_DOUBLE_EQ(o[0].utterance_overlap(), 0.5);
    EXPECT_EQ(o[1].icr_types, 0u);
    EXPECT_EQ(o[1].type_overlap(), 0.0);
}
