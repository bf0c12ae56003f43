#include <gtest/gtest.h>

#include <sstream>

#include "icr/annotation.hpp"
#include "icr/synthetic.hpp"
#include "support.hpp"

using namespace icr;

namespace {

Corpus small_corpus(const std::vector<std::vector<std::string>>& drawer_lines) {
    Corpus c;
    int n = 0;
    for (const auto& lines : drawer_lines) {
        Dialogue d;
        d.id = "train_" + std::to_string(n++);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            Round r;
            r.index = static_cast<int>(i);
            r.teller = {Speaker::Teller, tokenize("teller says " + std::to_string(i)), r.index};
            r.drawer = Utterance{Speaker::Drawer, tokenize(lines[i]), r.index};
            r.actions = {Action{}};
            d.rounds.push_back(r);
        }
        c.dialogues.push_back(d);
    }
    return c;
}

LabelSet labels_from(const std::vector<Label>& v, const std::string& who) {
    LabelSet s(who);
    for (std::size_t i = 0; i < v.size(); ++i) s.set(static_cast<int>(i), v[i]);
    return s;
}

std::vector<UtteranceType> ten_types() {
    std::vector<std::vector<std::string>> lines(1);
    for (int i = 0; i < 10; ++i) lines[0].push_back("form number " + std::to_string(i));
    return collapse_types(small_corpus(lines));
}

}  // namespace

TEST(CollapseTypes, IdenticalFormsShareAType) {
    const auto types = collapse_types(small_corpus({{"ok", "ok", "which tree ?"}, {"ok", "done"}}));
    ASSERT_EQ(types.size(), 3u);
    EXPECT_EQ(types[0].form, "ok");
    EXPECT_EQ(types[0].occurrences.size(), 3u);
    EXPECT_FALSE(types[0].is_singleton);
    EXPECT_TRUE(types[1].is_singleton);
    ASSERT_TRUE(types[1].context.has_value());
    EXPECT_EQ(types[1].context->preceding_teller, "teller says 2");
    EXPECT_FALSE(types[1].context->following_teller.has_value());
    EXPECT_FALSE(types[0].context.has_value());
    EXPECT_NEAR(singleton_share(types), 2.0 / 3.0, 1e-12);
}

TEST(CollapseTypes, AllOkIsOneType) {
    const auto types = collapse_types(small_corpus({{"ok", "ok"}, {"ok"}}));
    ASSERT_EQ(types.size(), 1u);
    EXPECT_EQ(types[0].occurrences.size(), 3u);
}

TEST(CollapseTypes, NoCaseFolding) {
    EXPECT_EQ(collapse_types(small_corpus({{"Ok", "ok"}})).size(), 2u);
}

TEST(CollapseTypes, SyntheticCountsMatchManifest) {
    const auto s = generate_corpus({});
    const auto types = collapse_types(s.corpus);
    EXPECT_EQ(static_cast<long>(types.size()), s.manifest.distinct_drawer_forms);
    long occ = 0;
    for (const auto& t : types) occ += static_cast<long>(t.occurrences.size());
    EXPECT_EQ(occ, s.manifest.drawer_utterances);
}

TEST(Kappa, IdenticalSetsGiveOne) {
    const auto a = labels_from({Label::ICR, Label::NotICR, Label::NotICR}, "a");
    EXPECT_DOUBLE_EQ(cohen_kappa(a, a), 1.0);
}

TEST(Kappa, ContingencyTableClosedForm) {
    std::vector<Label> a, b;
    auto push = [&](int n, Label x, Label y) {
        for (int i = 0; i < n; ++i) a.push_back(x), b.push_back(y);
    };
    push(20, Label::ICR, Label::ICR);
    push(5, Label::ICR, Label::NotICR);
    push(5, Label::NotICR, Label::ICR);
    push(70, Label::NotICR, Label::NotICR);
    // p_o = 0.9; marginals 0.25/0.25 -> p_e = 0.625; kappa = 0.275 / 0.375 = 11/15
    const auto la = labels_from(a, "a"), lb = labels_from(b, "b");
    EXPECT_NEAR(cohen_kappa(la, lb), 11.0 / 15.0, 1e-12);
    EXPECT_NEAR(cohen_kappa(lb, la), cohen_kappa(la, lb), 1e-12);
}

TEST(Kappa, DegenerateAndMismatchedInventories) {
    const auto a = labels_from({Label::NotICR, Label::NotICR}, "a");
    EXPECT_THROW(cohen_kappa(a, a), DegenerateMarginals);
    const auto b = labels_from({Label::NotICR, Label::NotICR, Label::ICR}, "b");
    EXPECT_THROW(cohen_kappa(a, b), InventoryMismatch);
}

TEST(Kappa, AgreementReportBothGranularities) {
    const auto types = collapse_types(small_corpus({{"ok", "ok", "ok", "which one ?", "done"}}));
    ASSERT_EQ(types.size(), 3u);
    const auto a = labels_from({Label::NotICR, Label::ICR, Label::NotICR}, "a");
    const auto b = labels_from({Label::NotICR, Label::ICR, Label::ICR}, "b");
    const auto rep = agreement_report(a, b, types);
    EXPECT_EQ(rep.n_types, 3u);
    EXPECT_EQ(rep.n_utterances, 5u);
    EXPECT_NEAR(rep.disagreement_types, 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(rep.disagreement_utterances, 1.0 / 5.0, 1e-12);
    // utterance level: a yes 1/5, b yes 2/5, p_o 4/5, p_e = 0.08 + 0.48 = 0.56
    EXPECT_NEAR(rep.kappa_utterances, (0.8 - 0.56) / 0.44, 1e-12);
    EXPECT_NEAR(rep.kappa_types, cohen_kappa(a, b), 1e-12);
}

TEST(Resolve, PreferSecondTakesSecondOnDisagreement) {
    const auto a = labels_from({Label::NotICR, Label::ICR, Label::NotICR}, "a");
    const auto b = labels_from({Label::NotICR, Label::ICR, Label::ICR}, "b");
    const auto r = resolve(a, b);
    EXPECT_EQ(r.labels(), b.labels());
    EXPECT_EQ(resolve(a, a).labels(), a.labels());
    EXPECT_EQ(resolve(a, b, ResolvePolicy::PreferFirst).labels(), a.labels());
}

TEST(Project, OccurrencesInheritTypeLabel) {
    const auto types = collapse_types(small_corpus({{"which one ?", "ok", "which one ?"}, {"which one ?"}}));
    LabelSet l("x");
    l.set(0, Label::ICR, "which one ?");
    l.set(1, Label::NotICR, "ok");
    const auto u = project_labels(l, types);
    EXPECT_EQ(u.size(), 4u);
    int icr = 0;
    for (auto& [k, v] : u) icr += v == Label::ICR;
    EXPECT_EQ(icr, 3);
}

TEST(Project, AllNegativeAndMissing) {
    const auto types = collapse_types(small_corpus({{"a", "b", "c"}}));
    LabelSet l("x");
    for (const auto& t : types) l.set(t.type_id, Label::NotICR, t.form);
    for (auto& [k, v] : project_labels(l, types)) EXPECT_EQ(v, Label::NotICR);
    LabelSet partial("x");
    partial.set(0, Label::ICR);
    partial.record({2, "c", std::nullopt, "x", ""});  // skipped
    try {
        project_labels(partial, types);
        FAIL();
    } catch (const UnlabeledType& e) {
        EXPECT_EQ(e.missing(), (std::vector<int>{1, 2}));
    }
}

TEST(LabelFile, JsonlRoundTripIncludingSkips) {
    LabelSet s("ann");
    s.set(0, Label::ICR, "which one ?", "t0");
    s.record({1, "ok", std::nullopt, "ann", "t1"});
    const auto back = labels_from_jsonl(labels_to_jsonl(s));
    EXPECT_EQ(back.labels(), s.labels());
    EXPECT_EQ(back.skipped(), std::vector<int>{1});
    EXPECT_EQ(back.annotator_id(), "ann");
    EXPECT_THROW(labels_from_jsonl("{\"type_id\":0,\"label\":\"maybe\"}\n"), CorruptLabelFile);
    EXPECT_THROW(labels_from_jsonl("not json\n"), CorruptLabelFile);
}

TEST(LabelSession, ScriptedReplayPersistsScript) {
    icr_test::TempDir dir("session");
    const auto types = ten_types();
    const std::string script = "y\nn\nn\ny\ns\nn\nn\ny\nn\nn\n";
    std::istringstream in(script);
    std::ostringstream out;
    SessionOptions opt;
    opt.annotator_id = "first";
    opt.clock = [] { return std::string("T"); };
    const auto res = label_session(types, dir / "labels.jsonl", in, out, opt);
    EXPECT_EQ(res.presented, 10);
    EXPECT_EQ(res.icr, 3);
    EXPECT_EQ(res.skipped, 1);
    EXPECT_FALSE(res.completed);

    const auto saved = read_labels(dir / "labels.jsonl");
    const char answers[] = {'y', 'n', 'n', 'y', 's', 'n', 'n', 'y', 'n', 'n'};
    for (int i = 0; i < 10; ++i) {
        auto l = saved.get(i);
        if (answers[i] == 's') EXPECT_FALSE(l.has_value());
        else EXPECT_EQ(*l, answers[i] == 'y' ? Label::ICR : Label::NotICR);
        EXPECT_EQ(saved.records().at(i).form, types[static_cast<std::size_t>(i)].form);
    }
}

TEST(LabelSession, ResumeContinuesAtNextItem) {
    icr_test::TempDir dir("resume");
    const auto types = ten_types();
    const auto file = dir / "labels.jsonl";
    {
        std::istringstream in("y\nn\nn\nq\n");
        std::ostringstream out;
        const auto res = label_session(types, file, in, out);
        EXPECT_EQ(res.presented, 3);
        EXPECT_EQ(res.remaining, 7);
    }
    {
        std::istringstream in("n\n");
        std::ostringstream out;
        EXPECT_THROW(label_session(types, file, in, out), Error);  // exists, resume not requested
    }
    std::istringstream in("n\nn\nn\nn\nn\nn\nn\n");
    std::ostringstream out;
    SessionOptions opt;
    opt.resume = true;
    const auto res = label_session(types, file, in, out, opt);
    EXPECT_NE(out.str().find("[1/7] type 3"), std::string::npos) << out.str();
    EXPECT_TRUE(res.completed);
    EXPECT_NE(out.str().find("Labeling complete"), std::string::npos);
    EXPECT_EQ(res.icr, 1);
    EXPECT_EQ(res.not_icr, 9);
}

TEST(LabelSession, CorruptFileIsPreserved) {
    icr_test::TempDir dir("corrupt");
    const auto file = dir / "labels.jsonl";
    write_file_atomic(file, "garbage\n");
    std::istringstream in("y\n");
    std::ostringstream out;
    SessionOptions opt;
    opt.resume = true;
    EXPECT_THROW(label_session(ten_types(), file, in, out, opt), CorruptLabelFile);
    EXPECT_EQ(read_file(file), "garbage\n");
}
