#include <gtest/gtest.h>

#include <map>
#include <random>

#include "icr/scene.hpp"
#include "support.hpp"

using namespace icr;

namespace {

/// Independent comparator: enumerates every (key, attribute) pair of the two scenes.
std::map<std::string, int> brute_force_counts(const Scene& a, const Scene& b) {
    std::map<std::string, int> n{{"add", 0}, {"del", 0}, {"move", 0}, {"resize", 0}, {"flip", 0}};
    for (int key = 0; key < 64; ++key) {
        const Clipart* x = a.find(key);
        const Clipart* y = b.find(key);
        if (!x && !y) continue;
        if (!y) { ++n["del"]; continue; }
        if (!x) { ++n["add"]; continue; }
        if (x->type_id != y->type_id || x->variant != y->variant) { ++n["del"]; ++n["add"]; continue; }
        if (x->x != y->x || x->y != y->y) ++n["move"];
        if (x->depth != y->depth) ++n["resize"];
        if (x->flip != y->flip) ++n["flip"];
    }
    return n;
}

Clipart make(int key, int type, double x, double y, int depth, bool flip) {
    Clipart c;
    c.object_key = key;
    c.type_id = type;
    if (is_person(type)) c.variant = PersonVariant{};
    c.x = x;
    c.y = y;
    c.depth = depth;
    c.flip = flip;
    return c;
}

}  // namespace

TEST(SceneParse, EmptyStringIsEmptyScene) {
    EXPECT_TRUE(parse_scene("").empty());
    EXPECT_TRUE(parse_scene("0,", SceneGrammar::documented(), ParseMode::Tolerant).empty());
    EXPECT_EQ(serialize_scene(Scene{}), "");
}

TEST(SceneParse, TwoClipartFixtureFieldByField) {
    const std::string s = "2,bear.png,2,2,100,200,1,0,hb1_12s.png,7,1,50.5,60,0,1,";
    const Scene scene = parse_scene(s, SceneGrammar::documented(), ParseMode::Strict);
    ASSERT_EQ(scene.size(), 2u);
    const Clipart* bear = scene.find(2);
    ASSERT_NE(bear, nullptr);
    EXPECT_EQ(bear->type_id, 2);
    EXPECT_FALSE(bear->variant.has_value());
    EXPECT_EQ(bear->x, 100.0);
    EXPECT_EQ(bear->y, 200.0);
    EXPECT_EQ(bear->depth, 1);
    EXPECT_FALSE(bear->flip);
    const Clipart* girl = scene.find(7);
    ASSERT_NE(girl, nullptr);
    EXPECT_EQ(girl->type_id, kGirlType);
    ASSERT_TRUE(girl->variant.has_value());
    // subtype 12 = pose 2, expression 2
    EXPECT_EQ(girl->variant->pose, 2);
    EXPECT_EQ(girl->variant->expression, 2);
    EXPECT_EQ(girl->x, 50.5);
    EXPECT_EQ(girl->y, 60.0);
    EXPECT_EQ(girl->depth, 0);
    EXPECT_TRUE(girl->flip);
    EXPECT_EQ(serialize_scene(scene), s);
}

TEST(SceneParse, RoundTripOnGeneratedScenes) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 500; ++i) {
        const Scene s = icr_test::random_scene(rng);
        const std::string text = serialize_scene(s);
        EXPECT_EQ(serialize_scene(parse_scene(text, SceneGrammar::documented(), ParseMode::Strict)), text);
        EXPECT_EQ(parse_scene(text), s);
    }
}

TEST(SceneParse, MalformedStringsReportOffsetAndField) {
    try {
        parse_scene("1,bear.png,2,2,abc,200,1,0,", SceneGrammar::documented(), ParseMode::Strict);
        FAIL() << "expected MalformedSceneString";
    } catch (const MalformedSceneString& e) {
        EXPECT_EQ(e.field(), "x");
        EXPECT_EQ(e.offset(), 15u);
    }
    EXPECT_THROW(parse_scene("2,bear.png,2,2,1,2,1,0,"), MalformedSceneString);   // field count
    EXPECT_THROW(parse_scene("1,bear.png,2,2,1,2,5,0,"), MalformedSceneString);   // depth range
    EXPECT_THROW(parse_scene("1,bear.png,2,99,1,2,1,0,"), MalformedSceneString);  // type range
}

TEST(SceneParse, TolerantModeAcceptsWhitespaceAndMissingFinalComma) {
    const Scene s = parse_scene(" 1, bear.png ,2,2, 100,200,1,0", SceneGrammar::documented(), ParseMode::Tolerant);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s.cliparts()[0].x, 100.0);
    EXPECT_THROW(parse_scene(" 1, bear.png ,2,2, 100,200,1,0", SceneGrammar::documented(), ParseMode::Strict),
                 MalformedSceneString);
}

TEST(SceneParse, ConfigurableGrammarWithSubtypeField) {
    const auto g = SceneGrammar::from_names({"local_index", "type_id", "subtype", "x", "y", "depth", "flip"});
    const Scene s = parse_scene("1,3,0,17,10,20,2,1,", g, ParseMode::Strict);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s.cliparts()[0].variant->subtype(), 17);
    EXPECT_EQ(serialize_scene(s, g), "1,3,0,17,10,20,2,1,");
    EXPECT_THROW(SceneGrammar::from_names({"x", "y"}), Error);
}

TEST(SceneParse, JsonFormRoundTrips) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        const Scene s = icr_test::random_scene(rng);
        EXPECT_EQ(scene_from_json(scene_to_json(s)), s);
    }
}

TEST(SceneDiff, IdentityIsNoAction) {
    std::mt19937_64 rng(1);
    const Scene s = icr_test::random_scene(rng);
    const auto d = diff_scenes(s, s);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].kind, ActionKind::NoAction);
    EXPECT_FALSE(d[0].object_key.has_value());
    EXPECT_EQ(count_actions(d).total, 0);
}

TEST(SceneDiff, SingleInsertionIsAdd) {
    const Scene after({make(3, 4, 10, 10, 0, false)});
    const auto d = diff_scenes(Scene{}, after);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].kind, ActionKind::Add);
    EXPECT_EQ(*d[0].object_key, 3);
}

TEST(SceneDiff, MoveAndFlipAreSeparateActions) {
    const Scene before({make(1, 4, 10, 10, 0, false)});
    const Scene after({make(1, 4, 30, 10, 0, true)});
    const auto d = diff_scenes(before, after);
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d[0].kind, ActionKind::Move);
    EXPECT_EQ(d[1].kind, ActionKind::Flip);
    EXPECT_EQ(d[0].before->x, 10.0);
    EXPECT_EQ(d[0].after->x, 30.0);
}

TEST(SceneDiff, PositionToleranceAbsorbsTransportNoise) {
    const Scene before({make(1, 4, 10, 10, 0, false)});
    const Scene after({make(1, 4, 10 + 1e-9, 10, 0, false)});
    EXPECT_EQ(diff_scenes(before, after)[0].kind, ActionKind::NoAction);
}

TEST(SceneDiff, CountActionsBreakdown) {
    std::vector<Action> acts{{ActionKind::Add, 1, std::nullopt, std::nullopt},
                             {ActionKind::Move, 2, std::nullopt, std::nullopt},
                             {ActionKind::Flip, 2, std::nullopt, std::nullopt}};
    const auto n = count_actions(acts);
    EXPECT_EQ(n.total, 3);
    EXPECT_EQ(n.add, 1);
    EXPECT_EQ(n.edit(), 2);
}

TEST(SceneDiff, MatchesBruteForceComparatorAndReplays) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 1000; ++i) {
        const Scene a = icr_test::random_scene(rng);
        const Scene b = rng() % 2 ? icr_test::mutate_scene(rng, a) : icr_test::random_scene(rng);
        const auto actions = diff_scenes(a, b);
        const auto n = count_actions(actions);
        auto oracle = brute_force_counts(a, b);
        EXPECT_EQ(n.add, oracle["add"]);
        EXPECT_EQ(n.del, oracle["del"]);
        EXPECT_EQ(n.move, oracle["move"]);
        EXPECT_EQ(n.resize, oracle["resize"]);
        EXPECT_EQ(n.flip, oracle["flip"]);
        EXPECT_EQ(apply_actions(a, actions), apply_actions(b, {}));
        // never two actions of the same kind for one key
        std::set<std::pair<int, int>> seen;
        for (const auto& act : actions)
            if (act.object_key) EXPECT_TRUE(seen.insert({*act.object_key, static_cast<int>(act.kind)}).second);
    }
}

TEST(SceneSimilarity, PerfectAndEmpty) {
    std::mt19937_64 rng(5);
    Scene s;
    while (s.empty()) s = icr_test::random_scene(rng);
    EXPECT_DOUBLE_EQ(scene_similarity(s, s), 5.0);
    EXPECT_DOUBLE_EQ(scene_similarity(s, Scene{}), 0.0);
    EXPECT_THROW(scene_similarity(Scene{}, s), EmptySourceScene);
}

TEST(SceneSimilarity, ThreeClipartSourceTwoCorrectOneMissing) {
    const Scene source({make(0, 3, 100, 100, 1, false), make(1, 4, 200, 200, 0, true), make(2, 5, 300, 50, 2, false)});
    const Scene recon({make(0, 3, 100, 100, 1, false), make(1, 4, 200, 200, 0, true)});
    // precision 1, recall 2/3 -> F1 0.8; agreement 1 -> 5 * 0.8 * 1
    EXPECT_NEAR(scene_similarity(source, recon), 4.0, 1e-12);
}

TEST(SceneSimilarity, PartialAgreementHandComputed) {
    const Scene source({make(0, 3, 0, 0, 1, false)});
    const Scene recon({make(0, 3, 300, 400, 0, false)});
    // flip 1, depth 0, position 1 - 500/sqrt(500^2+400^2)
    const double pos = 1.0 - 500.0 / std::sqrt(500.0 * 500.0 + 400.0 * 400.0);
    EXPECT_NEAR(scene_similarity(source, recon), 5.0 * (1.0 + 0.0 + pos) / 3.0, 1e-12);
}

TEST(SceneSimilarity, RangeOrderInvarianceAndMonotoneCorrections) {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 300; ++i) {
        Scene src;
        while (src.empty()) src = icr_test::random_scene(rng);
        const Scene rec = icr_test::mutate_scene(rng, src);
        const double m = scene_similarity(src, rec);
        EXPECT_GE(m, 0.0);
        EXPECT_LE(m, 5.0);
        auto shuffled = rec.cliparts();
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        EXPECT_NEAR(scene_similarity(src, Scene(shuffled)), m, 1e-12);
        EXPECT_EQ(m == 5.0, diff_scenes(src, rec)[0].kind == ActionKind::NoAction && rec.size() == src.size());

        // correct one attribute of one clipart toward its source counterpart
        auto fixed = rec.cliparts();
        for (auto& c : fixed) {
            const Clipart* t = src.find(c.object_key);
            if (!t || !same_identity(*t, c)) continue;
            switch (rng() % 3) {
                case 0: c.x = t->x; c.y = t->y; break;
                case 1: c.depth = t->depth; break;
                default: c.flip = t->flip; break;
            }
            break;
        }
        EXPECT_GE(scene_similarity(src, Scene(fixed)), m - 1e-12);
    }
}

TEST(SceneModel, InvalidCliparts) {
    Clipart boy = make(0, kBoyType, 1, 1, 0, false);
    boy.variant.reset();
    EXPECT_THROW(Scene({boy}), Error);
    EXPECT_THROW(Scene({make(0, 3, 1, 1, 0, false), make(0, 4, 1, 1, 0, false)}), Error);
    Clipart bear = make(0, 2, 1, 1, 0, false);
    bear.variant = PersonVariant{};
    EXPECT_THROW(Scene({bear}), Error);
}
