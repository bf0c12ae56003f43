#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "icr/error.hpp"
#include "icr/util.hpp"

namespace icr {

inline constexpr int kNumClipartTypes = 58;
inline constexpr int kBoyType = 0;
inline constexpr int kGirlType = 1;
inline constexpr int kNumExpressions = 5;
inline constexpr int kNumPoses = 7;
inline constexpr double kCanvasWidth = 500.0;
inline constexpr double kCanvasHeight = 400.0;
/// Positions are integer-valued upstream; this only absorbs float transport noise.
inline constexpr double kPositionTolerance = 1e-6;

/// Clipart type inventory indexed by type_id. Names are used for canonical asset names.
inline const std::array<std::string_view, kNumClipartTypes>& clipart_type_names() {
    static constexpr std::array<std::string_view, kNumClipartTypes> names = {
        "boy",          "girl",         "bear",         "cat",          "dog",
        "duck",         "owl",          "snake",        "sun",          "moon",
        "cloud_big",    "cloud_small",  "cloud_rain",   "lightning",    "airplane",
        "balloon",      "rocket",       "tree_apple",   "tree_pine",    "tree_palm",
        "bush",         "flower",       "slide",        "swing",        "sandbox",
        "table",        "bench",        "tent",         "grill",        "umbrella",
        "hat_baseball", "hat_beanie",   "hat_crown",    "hat_pirate",   "hat_chef",
        "hat_cowboy",   "hat_wizard",   "hat_viking",   "glasses_sun",  "glasses_reading",
        "glasses_star", "ball_soccer",  "ball_basket",  "ball_beach",   "ball_football",
        "ball_baseball", "ball_tennis", "bat",          "frisbee",      "kite",
        "shovel",       "pail",         "hamburger",    "hotdog",       "pizza",
        "pie",          "ketchup",      "drink"};
    return names;
}

constexpr bool is_person(int type_id) { return type_id == kBoyType || type_id == kGirlType; }

struct PersonVariant {
    int expression = 0;  // 0..4
    int pose = 0;        // 0..6

    int subtype() const { return pose * kNumExpressions + expression; }
    static PersonVariant from_subtype(int subtype) {
        return {subtype % kNumExpressions, subtype / kNumExpressions};
    }
    friend bool operator==(const PersonVariant&, const PersonVariant&) = default;
};

struct Clipart {
    int object_key = 0;
    int type_id = 0;
    std::optional<PersonVariant> variant;
    double x = 0.0;
    double y = 0.0;
    int depth = 0;
    bool flip = false;

    friend bool operator==(const Clipart&, const Clipart&) = default;
};

inline bool same_position(const Clipart& a, const Clipart& b) {
    return std::abs(a.x - b.x) <= kPositionTolerance && std::abs(a.y - b.y) <= kPositionTolerance;
}

/// Same clipart element (type and person variant); a change here is a replacement, not an edit.
inline bool same_identity(const Clipart& a, const Clipart& b) {
    return a.type_id == b.type_id && a.variant == b.variant;
}

inline bool attribute_identical(const Clipart& a, const Clipart& b) {
    return same_identity(a, b) && same_position(a, b) && a.depth == b.depth && a.flip == b.flip;
}

/// Returns an empty string when the clipart is valid, otherwise a description of the violation.
inline std::string clipart_violation(const Clipart& c) {
    if (c.type_id < 0 || c.type_id >= kNumClipartTypes) return "type_id out of range";
    if (is_person(c.type_id) != c.variant.has_value())
        return is_person(c.type_id) ? "person clipart without variant" : "variant on non-person clipart";
    if (c.variant) {
        if (c.variant->expression < 0 || c.variant->expression >= kNumExpressions) return "expression out of range";
        if (c.variant->pose < 0 || c.variant->pose >= kNumPoses) return "pose out of range";
    }
    if (c.depth < 0 || c.depth > 2) return "depth out of range";
    if (!std::isfinite(c.x) || !std::isfinite(c.y)) return "non-finite position";
    if (c.object_key < 0) return "negative object key";
    return {};
}

/// A set of placed cliparts with unique object keys. Immutable once built.
class Scene {
public:
    Scene() = default;

    explicit Scene(std::vector<Clipart> cliparts) : cliparts_(std::move(cliparts)) {
        for (std::size_t i = 0; i < cliparts_.size(); ++i) {
            if (auto v = clipart_violation(cliparts_[i]); !v.empty())
                throw Error("invalid clipart with key " + std::to_string(cliparts_[i].object_key) + ": " + v);
            for (std::size_t j = 0; j < i; ++j)
                if (cliparts_[j].object_key == cliparts_[i].object_key)
                    throw Error("duplicate object key " + std::to_string(cliparts_[i].object_key));
        }
    }

    const std::vector<Clipart>& cliparts() const noexcept { return cliparts_; }
    std::size_t size() const noexcept { return cliparts_.size(); }
    bool empty() const noexcept { return cliparts_.empty(); }

    const Clipart* find(int object_key) const {
        for (const auto& c : cliparts_)
            if (c.object_key == object_key) return &c;
        return nullptr;
    }

    friend bool operator==(const Scene&, const Scene&) = default;

private:
    std::vector<Clipart> cliparts_;
};

// ---------------------------------------------------------------------------
// Scene-state strings
// ---------------------------------------------------------------------------

enum class SceneField { AssetName, LocalIndex, TypeId, Subtype, X, Y, Depth, Flip };

inline std::string_view scene_field_name(SceneField f) {
    switch (f) {
        case SceneField::AssetName: return "asset";
        case SceneField::LocalIndex: return "local_index";
        case SceneField::TypeId: return "type_id";
        case SceneField::Subtype: return "subtype";
        case SceneField::X: return "x";
        case SceneField::Y: return "y";
        case SceneField::Depth: return "depth";
        case SceneField::Flip: return "flip";
    }
    return "?";
}

/// Field order of one clipart record. A scene string is
/// `<count>,` followed by each clipart's fields, every field terminated by a comma.
/// The empty scene is the empty string.
struct SceneGrammar {
    std::vector<SceneField> fields{SceneField::AssetName, SceneField::LocalIndex, SceneField::TypeId,
                                   SceneField::X,         SceneField::Y,          SceneField::Depth,
                                   SceneField::Flip};

    static SceneGrammar documented() { return {}; }

    static SceneGrammar from_names(const std::vector<std::string>& names) {
        SceneGrammar g;
        g.fields.clear();
        for (const auto& n : names) {
            bool found = false;
            for (auto f : {SceneField::AssetName, SceneField::LocalIndex, SceneField::TypeId, SceneField::Subtype,
                           SceneField::X, SceneField::Y, SceneField::Depth, SceneField::Flip}) {
                if (scene_field_name(f) == n) {
                    g.fields.push_back(f);
                    found = true;
                }
            }
            if (!found) throw Error("unknown scene grammar field '" + n + "'");
        }
        for (auto required : {SceneField::LocalIndex, SceneField::TypeId, SceneField::X, SceneField::Y,
                              SceneField::Depth, SceneField::Flip})
            if (std::count(g.fields.begin(), g.fields.end(), required) != 1)
                throw Error("scene grammar must contain field '" + std::string(scene_field_name(required)) +
                            "' exactly once");
        if (!g.has(SceneField::AssetName) && !g.has(SceneField::Subtype))
            throw Error("scene grammar needs an asset name or subtype field to carry person variants");
        return g;
    }

    bool has(SceneField f) const { return std::find(fields.begin(), fields.end(), f) != fields.end(); }
};

enum class ParseMode {
    Strict,    // canonical form only; serialize(parse(s)) == s
    Tolerant,  // whitespace, missing final comma, "0," empty sentinel, non-canonical numbers/asset names
};

inline std::string canonical_asset_name(const Clipart& c) {
    if (c.variant) {
        return std::string(c.type_id == kBoyType ? "hb0_" : "hb1_") + std::to_string(c.variant->subtype()) + "s.png";
    }
    return std::string(clipart_type_names().at(static_cast<std::size_t>(c.type_id))) + ".png";
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
        s.remove_suffix(1);
    return s;
}

struct Token {
    std::string_view text;
    std::size_t offset;
};

template <class T>
T parse_int_field(const Token& tok, std::string_view field, ParseMode mode) {
    T value{};
    auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), value);
    if (ec != std::errc{} || ptr != tok.text.data() + tok.text.size() || tok.text.empty())
        throw MalformedSceneString(tok.offset, std::string(field), "expected integer, got '" + std::string(tok.text) + "'");
    if (mode == ParseMode::Strict && std::to_string(value) != tok.text)
        throw MalformedSceneString(tok.offset, std::string(field), "non-canonical integer '" + std::string(tok.text) + "'");
    return value;
}

inline double parse_real_field(const Token& tok, std::string_view field, ParseMode mode) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), value);
    if (ec != std::errc{} || ptr != tok.text.data() + tok.text.size() || tok.text.empty())
        throw MalformedSceneString(tok.offset, std::string(field), "expected number, got '" + std::string(tok.text) + "'");
    if (!std::isfinite(value))
        throw MalformedSceneString(tok.offset, std::string(field), "non-finite value");
    if (mode == ParseMode::Strict && format_number(value) != tok.text)
        throw MalformedSceneString(tok.offset, std::string(field), "non-canonical number '" + std::string(tok.text) + "'");
    return value;
}

/// "hb0_12s.png" -> 12; nullopt when the name does not follow the person pattern.
inline std::optional<int> person_subtype_from_name(std::string_view name) {
    auto us = name.find('_');
    if (us == std::string_view::npos) return std::nullopt;
    std::size_t i = us + 1, j = i;
    while (j < name.size() && name[j] >= '0' && name[j] <= '9') ++j;
    if (j == i) return std::nullopt;
    int v = 0;
    std::from_chars(name.data() + i, name.data() + j, v);
    return v;
}

}  // namespace detail

/// Parses a scene-state string. Errors carry the byte offset and field name.
inline Scene parse_scene(std::string_view text, const SceneGrammar& grammar = SceneGrammar::documented(),
                         ParseMode mode = ParseMode::Strict) {
    using detail::Token;
    std::vector<Token> tokens;
    {
        std::size_t start = 0;
        for (std::size_t i = 0; i <= text.size(); ++i) {
            if (i == text.size() || text[i] == ',') {
                std::string_view raw = text.substr(start, i - start);
                std::size_t lead = 0;
                if (mode == ParseMode::Tolerant) {
                    while (lead < raw.size() && (raw[lead] == ' ' || raw[lead] == '\t')) ++lead;
                    raw = detail::trim(raw);
                }
                if (i < text.size() || !raw.empty() || mode == ParseMode::Strict)
                    tokens.push_back({raw, start + lead});
                start = i + 1;
            }
        }
    }
    // Strict form always ends with a comma, which leaves one empty trailing token.
    if (mode == ParseMode::Strict) {
        if (text.empty()) return Scene{};
        if (tokens.back().text.size() != 0)
            throw MalformedSceneString(text.size(), "terminator", "scene string must end with ','");
        tokens.pop_back();
    } else {
        if (!tokens.empty() && tokens.back().text.empty() && tokens.back().offset == text.size()) tokens.pop_back();
        if (tokens.empty()) return Scene{};
    }

    const auto count = detail::parse_int_field<long>(tokens[0], "count", mode);
    const std::size_t per = grammar.fields.size();
    if (count < 0) throw MalformedSceneString(tokens[0].offset, "count", "negative clipart count");
    if (mode == ParseMode::Strict && count == 0)
        throw MalformedSceneString(tokens[0].offset, "count", "empty scene must be the empty string");
    if (tokens.size() - 1 != static_cast<std::size_t>(count) * per) {
        std::size_t off = tokens.size() > 1 ? tokens.back().offset : tokens[0].offset;
        throw MalformedSceneString(off, "count",
                                   "field count mismatch: header announces " + std::to_string(count) +
                                       " cliparts (" + std::to_string(count * static_cast<long>(per)) +
                                       " fields), found " + std::to_string(tokens.size() - 1) + " fields");
    }

    std::vector<Clipart> cliparts;
    cliparts.reserve(static_cast<std::size_t>(count));
    for (long k = 0; k < count; ++k) {
        Clipart c;
        std::optional<Token> name_tok;
        std::optional<int> subtype;
        std::optional<Token> subtype_tok;
        for (std::size_t f = 0; f < per; ++f) {
            const Token& tok = tokens[1 + static_cast<std::size_t>(k) * per + f];
            const SceneField field = grammar.fields[f];
            const std::string_view fname = scene_field_name(field);
            switch (field) {
                case SceneField::AssetName:
                    if (tok.text.empty()) throw MalformedSceneString(tok.offset, std::string(fname), "empty asset name");
                    name_tok = tok;
                    break;
                case SceneField::LocalIndex:
                    c.object_key = detail::parse_int_field<int>(tok, fname, mode);
                    if (c.object_key < 0) throw MalformedSceneString(tok.offset, std::string(fname), "negative index");
                    break;
                case SceneField::TypeId:
                    c.type_id = detail::parse_int_field<int>(tok, fname, mode);
                    if (c.type_id < 0 || c.type_id >= kNumClipartTypes)
                        throw MalformedSceneString(tok.offset, std::string(fname), "type_id out of range 0..57");
                    break;
                case SceneField::Subtype:
                    subtype = detail::parse_int_field<int>(tok, fname, mode);
                    subtype_tok = tok;
                    break;
                case SceneField::X: c.x = detail::parse_real_field(tok, fname, mode); break;
                case SceneField::Y: c.y = detail::parse_real_field(tok, fname, mode); break;
                case SceneField::Depth:
                    c.depth = detail::parse_int_field<int>(tok, fname, mode);
                    if (c.depth < 0 || c.depth > 2)
                        throw MalformedSceneString(tok.offset, std::string(fname), "depth out of range 0..2");
                    break;
                case SceneField::Flip: {
                    int v = detail::parse_int_field<int>(tok, fname, mode);
                    if (v != 0 && v != 1) throw MalformedSceneString(tok.offset, std::string(fname), "flip must be 0 or 1");
                    c.flip = v == 1;
                    break;
                }
            }
        }
        const std::size_t record_offset = tokens[1 + static_cast<std::size_t>(k) * per].offset;
        if (is_person(c.type_id)) {
            if (!subtype && name_tok) subtype = detail::person_subtype_from_name(name_tok->text);
            if (!subtype)
                throw MalformedSceneString(name_tok ? name_tok->offset : record_offset, "asset",
                                           "cannot determine person variant");
            if (*subtype < 0 || *subtype >= kNumExpressions * kNumPoses)
                throw MalformedSceneString(subtype_tok ? subtype_tok->offset : name_tok->offset, "subtype",
                                           "person variant out of range");
            c.variant = PersonVariant::from_subtype(*subtype);
        } else if (subtype && *subtype != 0 && mode == ParseMode::Strict) {
            throw MalformedSceneString(subtype_tok->offset, "subtype", "non-person clipart with nonzero subtype");
        }
        if (mode == ParseMode::Strict && name_tok && name_tok->text != canonical_asset_name(c))
            throw MalformedSceneString(name_tok->offset, "asset",
                                       "asset name '" + std::string(name_tok->text) + "' does not match type (expected '" +
                                           canonical_asset_name(c) + "')");
        for (const auto& prev : cliparts)
            if (prev.object_key == c.object_key)
                throw MalformedSceneString(record_offset, "local_index", "duplicate object key " + std::to_string(c.object_key));
        cliparts.push_back(c);
    }
    return Scene(std::move(cliparts));
}

inline std::string serialize_scene(const Scene& scene, const SceneGrammar& grammar = SceneGrammar::documented()) {
    if (scene.empty()) return {};
    std::string out = std::to_string(scene.size()) + ",";
    for (const auto& c : scene.cliparts()) {
        for (auto field : grammar.fields) {
            switch (field) {
                case SceneField::AssetName: out += canonical_asset_name(c); break;
                case SceneField::LocalIndex: out += std::to_string(c.object_key); break;
                case SceneField::TypeId: out += std::to_string(c.type_id); break;
                case SceneField::Subtype: out += std::to_string(c.variant ? c.variant->subtype() : 0); break;
                case SceneField::X: out += format_number(c.x); break;
                case SceneField::Y: out += format_number(c.y); break;
                case SceneField::Depth: out += std::to_string(c.depth); break;
                case SceneField::Flip: out += c.flip ? "1" : "0"; break;
            }
            out += ',';
        }
    }
    return out;
}

inline nlohmann::json scene_to_json(const Scene& scene) {
    auto arr = nlohmann::json::array();
    for (const auto& c : scene.cliparts()) {
        nlohmann::json j{{"key", c.object_key},
                         {"type_id", c.type_id},
                         {"type", clipart_type_names()[static_cast<std::size_t>(c.type_id)]},
                         {"x", c.x},
                         {"y", c.y},
                         {"depth", c.depth},
                         {"flip", c.flip}};
        if (c.variant) {
            j["expression"] = c.variant->expression;
            j["pose"] = c.variant->pose;
        }
        arr.push_back(std::move(j));
    }
    return nlohmann::json{{"cliparts", std::move(arr)}};
}

inline Scene scene_from_json(const nlohmann::json& j) {
    std::vector<Clipart> cliparts;
    for (const auto& e : j.at("cliparts")) {
        Clipart c;
        c.object_key = e.at("key").get<int>();
        c.type_id = e.at("type_id").get<int>();
        c.x = e.at("x").get<double>();
        c.y = e.at("y").get<double>();
        c.depth = e.at("depth").get<int>();
        c.flip = e.at("flip").get<bool>();
        if (e.contains("expression")) c.variant = PersonVariant{e.at("expression").get<int>(), e.at("pose").get<int>()};
        cliparts.push_back(c);
    }
    return Scene(std::move(cliparts));
}

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

enum class ActionKind { Add, Delete, Move, Resize, Flip, NoAction };

inline std::string_view action_kind_name(ActionKind k) {
    switch (k) {
        case ActionKind::Add: return "add";
        case ActionKind::Delete: return "delete";
        case ActionKind::Move: return "move";
        case ActionKind::Resize: return "resize";
        case ActionKind::Flip: return "flip";
        case ActionKind::NoAction: return "none";
    }
    return "?";
}

/// One attribute-level change. `before`/`after` hold the clipart state on each side
/// (absent for Add/Delete respectively, both absent for NoAction).
struct Action {
    ActionKind kind = ActionKind::NoAction;
    std::optional<int> object_key;
    std::optional<Clipart> before;
    std::optional<Clipart> after;

    friend bool operator==(const Action&, const Action&) = default;
};

/// Minimal attribute-level edit list from `prev` to `curr`, ordered by object key.
/// A surviving key whose clipart element changed (type or person variant) is a
/// Delete followed by an Add. Newly added cliparts count once regardless of their
/// initial flip or size.
inline std::vector<Action> diff_scenes(const Scene& prev, const Scene& curr) {
    std::map<int, const Clipart*> before, after;
    for (const auto& c : prev.cliparts()) before[c.object_key] = &c;
    for (const auto& c : curr.cliparts()) after[c.object_key] = &c;

    std::vector<int> keys;
    for (auto& [k, _] : before) keys.push_back(k);
    for (auto& [k, _] : after)
        if (!before.count(k)) keys.push_back(k);
    std::sort(keys.begin(), keys.end());

    std::vector<Action> actions;
    for (int key : keys) {
        auto b = before.find(key);
        auto a = after.find(key);
        if (a == after.end()) {
            actions.push_back({ActionKind::Delete, key, *b->second, std::nullopt});
        } else if (b == before.end()) {
            actions.push_back({ActionKind::Add, key, std::nullopt, *a->second});
        } else if (!same_identity(*b->second, *a->second)) {
            actions.push_back({ActionKind::Delete, key, *b->second, std::nullopt});
            actions.push_back({ActionKind::Add, key, std::nullopt, *a->second});
        } else {
            const Clipart& x = *b->second;
            const Clipart& y = *a->second;
            if (!same_position(x, y)) actions.push_back({ActionKind::Move, key, x, y});
            if (x.depth != y.depth) actions.push_back({ActionKind::Resize, key, x, y});
            if (x.flip != y.flip) actions.push_back({ActionKind::Flip, key, x, y});
        }
    }
    if (actions.empty()) actions.push_back({ActionKind::NoAction, std::nullopt, std::nullopt, std::nullopt});
    return actions;
}

/// Applies an action list produced by diff_scenes.
inline Scene apply_actions(const Scene& scene, const std::vector<Action>& actions) {
    std::vector<Clipart> cliparts = scene.cliparts();
    auto locate = [&](int key) {
        return std::find_if(cliparts.begin(), cliparts.end(), [key](const Clipart& c) { return c.object_key == key; });
    };
    for (const auto& act : actions) {
        switch (act.kind) {
            case ActionKind::NoAction: break;
            case ActionKind::Add: cliparts.push_back(*act.after); break;
            case ActionKind::Delete: {
                auto it = locate(*act.object_key);
                if (it == cliparts.end()) throw Error("delete of absent key " + std::to_string(*act.object_key));
                cliparts.erase(it);
                break;
            }
            case ActionKind::Move:
            case ActionKind::Resize:
            case ActionKind::Flip: {
                auto it = locate(*act.object_key);
                if (it == cliparts.end()) throw Error("edit of absent key " + std::to_string(*act.object_key));
                if (act.kind == ActionKind::Move) {
                    it->x = act.after->x;
                    it->y = act.after->y;
                } else if (act.kind == ActionKind::Resize) {
                    it->depth = act.after->depth;
                } else {
                    it->flip = act.after->flip;
                }
                break;
            }
        }
    }
    std::sort(cliparts.begin(), cliparts.end(),
              [](const Clipart& a, const Clipart& b) { return a.object_key < b.object_key; });
    return Scene(std::move(cliparts));
}

struct ActionCount {
    int total = 0;
    int add = 0;
    int del = 0;
    int move = 0;
    int resize = 0;
    int flip = 0;

    /// Edits are every change to a clipart that already existed.
    int edit() const { return del + move + resize + flip; }
};

inline ActionCount count_actions(const std::vector<Action>& actions) {
    ActionCount n;
    for (const auto& a : actions) {
        switch (a.kind) {
            case ActionKind::Add: ++n.add; break;
            case ActionKind::Delete: ++n.del; break;
            case ActionKind::Move: ++n.move; break;
            case ActionKind::Resize: ++n.resize; break;
            case ActionKind::Flip: ++n.flip; break;
            case ActionKind::NoAction: continue;
        }
        ++n.total;
    }
    return n;
}

// ---------------------------------------------------------------------------
// Similarity
// ---------------------------------------------------------------------------

/// Scene similarity in [0,5]; 5 is a perfect match.
class SimilarityMetric {
public:
    virtual ~SimilarityMetric() = default;
    virtual double score(const Scene& source, const Scene& reconstruction) const = 0;
    virtual std::string name() const = 0;
};

/// 5 x presence-F1 over clipart types x mean attribute agreement over matched cliparts.
///
/// Matching is per type; within a type the pairing maximizing total agreement is used,
/// which keeps the score independent of clipart order and monotone under corrections.
/// Agreement of a pair averages flip (exact), depth (exact), position
/// (1 - Euclidean error / canvas diagonal, floored at 0) and, for persons, variant (exact).
class ReferenceSimilarity final : public SimilarityMetric {
public:
    std::string name() const override { return "reference-f1-agreement"; }

    static double pair_agreement(const Clipart& s, const Clipart& r) {
        double sum = 0.0;
        int n = 3;
        sum += s.flip == r.flip ? 1.0 : 0.0;
        sum += s.depth == r.depth ? 1.0 : 0.0;
        const double diag = std::hypot(kCanvasWidth, kCanvasHeight);
        const double err = std::hypot(s.x - r.x, s.y - r.y);
        sum += err <= kPositionTolerance ? 1.0 : std::max(0.0, 1.0 - err / diag);
        if (s.variant) {
            ++n;
            sum += s.variant == r.variant ? 1.0 : 0.0;
        }
        return sum / n;
    }

    double score(const Scene& source, const Scene& reconstruction) const override {
        if (source.empty()) throw EmptySourceScene();
        std::map<int, std::vector<const Clipart*>> src_by_type, rec_by_type;
        for (const auto& c : source.cliparts()) src_by_type[c.type_id].push_back(&c);
        for (const auto& c : reconstruction.cliparts()) rec_by_type[c.type_id].push_back(&c);

        int matched = 0;
        double agreement = 0.0;
        for (auto& [type, src] : src_by_type) {
            auto it = rec_by_type.find(type);
            if (it == rec_by_type.end()) continue;
            auto [n, total] = best_assignment(src, it->second);
            matched += n;
            agreement += total;
        }
        if (matched == 0) return 0.0;
        const double precision = static_cast<double>(matched) / static_cast<double>(reconstruction.size());
        const double recall = static_cast<double>(matched) / static_cast<double>(source.size());
        const double f1 = 2.0 * precision * recall / (precision + recall);
        return 5.0 * f1 * (agreement / matched);
    }

private:
    static std::pair<int, double> best_assignment(const std::vector<const Clipart*>& src,
                                                  const std::vector<const Clipart*>& rec) {
        // The smaller side is assigned into the larger one.
        const bool src_small = src.size() <= rec.size();
        const auto& small = src_small ? src : rec;
        const auto& large = src_small ? rec : src;
        auto agree = [&](std::size_t i, std::size_t j) {
            return src_small ? pair_agreement(*small[i], *large[j]) : pair_agreement(*large[j], *small[i]);
        };
        const int n = static_cast<int>(small.size());
        if (large.size() <= 8) {
            // Exhaustive over injective maps small -> large.
            std::vector<std::size_t> perm(large.size());
            std::iota(perm.begin(), perm.end(), 0);
            double best = -1.0;
            do {
                double total = 0.0;
                for (std::size_t i = 0; i < small.size(); ++i) total += agree(i, perm[i]);
                best = std::max(best, total);
            } while (std::next_permutation(perm.begin(), perm.end()));
            return {n, best};
        }
        // Greedy fallback for unusually crowded types.
        std::vector<bool> used(large.size(), false);
        double total = 0.0;
        for (std::size_t i = 0; i < small.size(); ++i) {
            double best = -1.0;
            std::size_t arg = 0;
            for (std::size_t j = 0; j < large.size(); ++j)
                if (!used[j] && agree(i, j) > best) best = agree(i, j), arg = j;
            used[arg] = true;
            total += best;
        }
        return {n, total};
    }
};

inline const SimilarityMetric& default_similarity() {
    static const ReferenceSimilarity metric;
    return metric;
}

inline double scene_similarity(const Scene& source, const Scene& reconstruction,
                               const SimilarityMetric& metric = default_similarity()) {
    return metric.score(source, reconstruction);
}

}  // namespace icr
