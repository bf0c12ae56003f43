#pragma once

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "icr/error.hpp"
#include "icr/scene.hpp"
#include "icr/util.hpp"

namespace icr {

enum class Split { Train, Val, Test };
enum class Speaker { Teller, Drawer };

inline std::string_view split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

inline std::optional<Split> split_from_name(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "val" || name == "valid" || name == "dev") return Split::Val;
    if (name == "test") return Split::Test;
    return std::nullopt;
}

struct Utterance {
    Speaker speaker = Speaker::Teller;
    std::vector<std::string> tokens;
    int round_index = 0;

    std::string text() const { return join(tokens); }
};

/// One round (g_i, a_i, f_i): teller message, drawer actions, drawer message.
struct Round {
    int index = 0;
    Utterance teller;
    std::optional<Utterance> drawer;  // absent for truncated rounds
    Scene scene_after;
    std::vector<Action> actions;
    bool is_peek_round = false;
};

struct Dialogue {
    std::string id;
    Split split = Split::Train;
    Scene source;
    std::vector<Round> rounds;
    double final_score = 0.0;

    std::optional<int> peek_round() const {
        for (const auto& r : rounds)
            if (r.is_peek_round) return r.index;
        return std::nullopt;
    }
};

struct Corpus {
    std::vector<Dialogue> dialogues;

    std::size_t size() const { return dialogues.size(); }
    const Dialogue* find(std::string_view id) const {
        for (const auto& d : dialogues)
            if (d.id == id) return &d;
        return nullptr;
    }
};

/// Field names of the dialogue JSON. Defaults follow the public CoDraw release.
///
///   { "<container>": { "<split>_<id>": { "<source_scene>": "...",
///                                        "<turns>": [ { "<teller>": "...", "<drawer>": "...",
///                                                       "<scene>": "...", "<peek>": bool }, ... ] } } }
///
/// When `container` is empty (or absent from the file) the top-level object holds the dialogues.
struct CorpusSchema {
    std::string container = "data";
    std::string source_scene = "abs_t";
    std::string turns = "dialog";
    std::string teller = "msg_t";
    std::string drawer = "msg_d";
    std::string scene = "abs_d";
    std::string peek = "peeked";
    /// Upstream flags may stay true after the peek; the peek round is then the first flagged one.
    bool peek_flag_sticky = false;
    SceneGrammar grammar;
    ParseMode scene_mode = ParseMode::Tolerant;

    static CorpusSchema from_json(const nlohmann::json& j) {
        CorpusSchema s;
        auto opt = [&](const char* key, std::string& field) {
            if (j.contains(key)) field = j.at(key).get<std::string>();
        };
        opt("container", s.container);
        opt("source_scene", s.source_scene);
        opt("turns", s.turns);
        opt("teller", s.teller);
        opt("drawer", s.drawer);
        opt("scene", s.scene);
        opt("peek", s.peek);
        if (j.contains("peek_flag_sticky")) s.peek_flag_sticky = j.at("peek_flag_sticky").get<bool>();
        if (j.contains("scene_fields")) s.grammar = SceneGrammar::from_names(j.at("scene_fields").get<std::vector<std::string>>());
        if (j.contains("scene_mode")) s.scene_mode = j.at("scene_mode").get<std::string>() == "strict" ? ParseMode::Strict : ParseMode::Tolerant;
        return s;
    }
};

struct LoadOptions {
    std::set<Split> splits{Split::Train, Split::Val, Split::Test};
    CorpusSchema schema;
    /// Throw on the first invariant violation after loading.
    bool validate = true;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Violation {
    std::string dialogue_id;
    std::optional<int> round;
    std::string message;

    std::string describe() const {
        std::string s = "dialogue '" + dialogue_id + "'";
        if (round) s += " round " + std::to_string(*round);
        return s + ": " + message;
    }
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

namespace detail {

inline std::string describe_action_mismatch(const std::vector<Action>& stored, const std::vector<Action>& expected) {
    std::ostringstream ss;
    ss << "actions inconsistent with scene diff:";
    auto attr = [](const Action& a) {
        std::string s(action_kind_name(a.kind));
        if (a.object_key) s += "(key " + std::to_string(*a.object_key) + ")";
        return s;
    };
    for (const auto& a : expected)
        if (std::find(stored.begin(), stored.end(), a) == stored.end()) ss << " missing " << attr(a);
    for (const auto& a : stored)
        if (std::find(expected.begin(), expected.end(), a) == expected.end()) ss << " unexpected " << attr(a);
    return ss.str();
}

}  // namespace detail

inline ValidationReport validate(const Corpus& corpus, const SimilarityMetric& metric = default_similarity()) {
    ValidationReport report;
    std::set<std::string> ids;
    for (const auto& d : corpus.dialogues) {
        auto add = [&](std::optional<int> round, std::string msg) {
            report.violations.push_back({d.id, round, std::move(msg)});
        };
        if (!ids.insert(d.id).second) add(std::nullopt, "duplicate dialogue id");
        if (d.source.empty()) add(std::nullopt, "empty source scene");
        int peeks = 0;
        const Scene empty;
        const Scene* prev = &empty;
        for (std::size_t i = 0; i < d.rounds.size(); ++i) {
            const Round& r = d.rounds[i];
            if (i > 0 && r.index <= d.rounds[i - 1].index)
                add(r.index, r.index == d.rounds[i - 1].index ? "duplicated round index" : "round indices out of order");
            if (r.is_peek_round) ++peeks;
            if (r.teller.speaker != Speaker::Teller) add(r.index, "teller slot holds a drawer utterance");
            if (r.teller.tokens.empty()) add(r.index, "empty teller utterance");
            if (r.drawer) {
                if (r.drawer->speaker != Speaker::Drawer) add(r.index, "drawer slot holds a teller utterance");
                if (r.drawer->tokens.empty()) add(r.index, "empty drawer utterance");
            } else if (i + 1 != d.rounds.size()) {
                add(r.index, "missing drawer utterance in a non-final round");
            }
            auto expected = diff_scenes(*prev, r.scene_after);
            if (expected != r.actions) add(r.index, detail::describe_action_mismatch(r.actions, expected));
            prev = &r.scene_after;
        }
        if (peeks > 1) add(std::nullopt, "more than one peek round (" + std::to_string(peeks) + ")");
        if (!d.source.empty()) {
            const double expected = metric.score(d.source, d.rounds.empty() ? empty : d.rounds.back().scene_after);
            if (std::abs(expected - d.final_score) > 1e-9)
                add(std::nullopt, "final_score " + format_number(d.final_score) + " differs from metric value " +
                                      format_number(expected));
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

inline Corpus parse_corpus(const nlohmann::json& root, const LoadOptions& options = {},
                           const SimilarityMetric& metric = default_similarity()) {
    const CorpusSchema& schema = options.schema;
    const nlohmann::json* dialogues = &root;
    if (!schema.container.empty() && root.is_object() && root.contains(schema.container))
        dialogues = &root.at(schema.container);
    if (!dialogues->is_object()) throw SchemaError("<root>", "/" + schema.container, "expected an object of dialogues");

    Corpus corpus;
    for (auto it = dialogues->begin(); it != dialogues->end(); ++it) {
        const std::string& id = it.key();
        const auto us = id.find('_');
        auto split = split_from_name(id.substr(0, us));
        if (us == std::string::npos || !split) throw SchemaError(id, "/" + id, "dialogue id lacks a split prefix");
        if (!options.splits.count(*split)) continue;

        const auto& jd = it.value();
        auto require = [&](const nlohmann::json& obj, const std::string& key, const std::string& path) -> const nlohmann::json& {
            if (!obj.is_object() || !obj.contains(key)) throw SchemaError(id, path + "/" + key, "missing field");
            return obj.at(key);
        };
        auto require_string = [&](const nlohmann::json& obj, const std::string& key, const std::string& path) {
            const auto& v = require(obj, key, path);
            if (!v.is_string()) throw SchemaError(id, path + "/" + key, "expected string");
            return v.get<std::string>();
        };

        Dialogue d;
        d.id = id;
        d.split = *split;
        try {
            d.source = parse_scene(require_string(jd, schema.source_scene, "/" + id), schema.grammar, schema.scene_mode);
        } catch (const MalformedSceneString& e) {
            throw SceneParseError(id, -1, e);
        }
        const auto& turns = require(jd, schema.turns, "/" + id);
        if (!turns.is_array()) throw SchemaError(id, "/" + id + "/" + schema.turns, "expected array");

        Scene prev;
        bool seen_peek = false;
        for (std::size_t i = 0; i < turns.size(); ++i) {
            const std::string path = "/" + id + "/" + schema.turns + "/" + std::to_string(i);
            const auto& jt = turns[i];
            Round r;
            r.index = static_cast<int>(i);
            r.teller = Utterance{Speaker::Teller, tokenize(require_string(jt, schema.teller, path)), r.index};
            if (jt.contains(schema.drawer) && !jt.at(schema.drawer).is_null()) {
                if (!jt.at(schema.drawer).is_string()) throw SchemaError(id, path + "/" + schema.drawer, "expected string");
                auto toks = tokenize(jt.at(schema.drawer).get<std::string>());
                if (!toks.empty()) r.drawer = Utterance{Speaker::Drawer, std::move(toks), r.index};
            }
            try {
                r.scene_after = parse_scene(require_string(jt, schema.scene, path), schema.grammar, schema.scene_mode);
            } catch (const MalformedSceneString& e) {
                throw SceneParseError(id, r.index, e);
            }
            if (jt.contains(schema.peek)) {
                const auto& p = jt.at(schema.peek);
                if (!p.is_boolean()) throw SchemaError(id, path + "/" + schema.peek, "expected boolean");
                bool flagged = p.get<bool>();
                r.is_peek_round = schema.peek_flag_sticky ? (flagged && !seen_peek) : flagged;
                seen_peek = seen_peek || flagged;
            }
            r.actions = diff_scenes(prev, r.scene_after);
            prev = r.scene_after;
            d.rounds.push_back(std::move(r));
        }
        d.final_score = d.source.empty() ? 0.0 : metric.score(d.source, prev);
        corpus.dialogues.push_back(std::move(d));
    }
    if (options.validate) {
        auto report = validate(corpus, metric);
        if (!report.ok()) {
            const auto& v = report.violations.front();
            throw SchemaError(v.dialogue_id, v.round ? "round " + std::to_string(*v.round) : "dialogue",
                              v.message + " (" + std::to_string(report.violations.size()) + " violation(s) total)");
        }
    }
    return corpus;
}

inline Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options = {},
                          const SimilarityMetric& metric = default_similarity()) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("<file>", path.string(), std::string("invalid JSON: ") + e.what());
    }
    return parse_corpus(root, options, metric);
}

/// Inverse of parse_corpus under the given schema.
inline nlohmann::json corpus_to_json(const Corpus& corpus, const CorpusSchema& schema = {}) {
    nlohmann::json dialogues = nlohmann::json::object();
    for (const auto& d : corpus.dialogues) {
        nlohmann::json turns = nlohmann::json::array();
        for (const auto& r : d.rounds) {
            nlohmann::json t;
            t[schema.teller] = r.teller.text();
            if (r.drawer) t[schema.drawer] = r.drawer->text();
            t[schema.scene] = serialize_scene(r.scene_after, schema.grammar);
            t[schema.peek] = r.is_peek_round;
            turns.push_back(std::move(t));
        }
        dialogues[d.id] = {{schema.source_scene, serialize_scene(d.source, schema.grammar)}, {schema.turns, std::move(turns)}};
    }
    if (schema.container.empty()) return dialogues;
    return nlohmann::json{{schema.container, std::move(dialogues)}};
}

// ---------------------------------------------------------------------------
// Round table
// ---------------------------------------------------------------------------

struct RoundRecord {
    std::string dialogue_id;
    int round = 0;
    int n_actions = 0;
    double score = 0.0;
    double score_diff = 0.0;
    bool is_peek = false;
    bool before_peek = false;
};

struct RoundTableOptions {
    /// Count the peek round itself as "until peek".
    bool include_peek_round = false;
};

/// Dialogues without a peek are entirely "before peek".
inline bool is_before_peek(const Dialogue& d, int round, const RoundTableOptions& opts = {}) {
    auto peek = d.peek_round();
    if (!peek) return true;
    return opts.include_peek_round ? round <= *peek : round < *peek;
}

/// Per-round scores against the source scene; the score before round 0 is M(S, empty) = 0.
inline std::vector<RoundRecord> round_table(const Corpus& corpus, const RoundTableOptions& opts = {},
                                            const SimilarityMetric& metric = default_similarity()) {
    std::vector<RoundRecord> out;
    for (const auto& d : corpus.dialogues) {
        double prev = 0.0;
        for (const auto& r : d.rounds) {
            RoundRecord rec;
            rec.dialogue_id = d.id;
            rec.round = r.index;
            rec.n_actions = count_actions(r.actions).total;
            rec.score = d.source.empty() ? 0.0 : metric.score(d.source, r.scene_after);
            rec.score_diff = rec.score - prev;
            rec.is_peek = r.is_peek_round;
            rec.before_peek = is_before_peek(d, r.index, opts);
            prev = rec.score;
            out.push_back(std::move(rec));
        }
    }
    return out;
}

inline constexpr std::string_view kRoundTableHeader = "dialogue_id\tround\tn_actions\tscore\tscore_diff\tis_peek\tbefore_peek";

inline std::string round_table_tsv(const std::vector<RoundRecord>& rows) {
    std::string out(kRoundTableHeader);
    out += '\n';
    for (const auto& r : rows) {
        out += r.dialogue_id + '\t' + std::to_string(r.round) + '\t' + std::to_string(r.n_actions) + '\t' +
               format_number(r.score) + '\t' + format_number(r.score_diff) + '\t' + (r.is_peek ? "1" : "0") + '\t' +
               (r.before_peek ? "1" : "0") + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus-level descriptive statistics
// ---------------------------------------------------------------------------

struct SplitStatistics {
    Split split = Split::Train;
    int dialogues = 0;
    int with_peek = 0;
    double mean_final_score = 0.0;
    /// Mean score of the last round before the peek, over dialogues that peek.
    double mean_score_before_peek = 0.0;
    double mean_rounds = 0.0;
    double mean_teller_len = 0.0;
    double mean_drawer_len = 0.0;
};

struct CorpusStatistics {
    std::vector<SplitStatistics> splits;
    std::size_t teller_vocab = 0;
    std::size_t drawer_vocab = 0;
};

inline CorpusStatistics corpus_statistics(const Corpus& corpus, const SimilarityMetric& metric = default_similarity()) {
    CorpusStatistics stats;
    std::set<std::string> teller_vocab, drawer_vocab;
    for (Split split : {Split::Train, Split::Val, Split::Test}) {
        SplitStatistics s;
        s.split = split;
        double score_sum = 0, before_sum = 0, rounds = 0, tlen = 0, dlen = 0;
        long tcount = 0, dcount = 0;
        for (const auto& d : corpus.dialogues) {
            if (d.split != split) continue;
            ++s.dialogues;
            score_sum += d.final_score;
            rounds += static_cast<double>(d.rounds.size());
            if (auto peek = d.peek_round()) {
                ++s.with_peek;
                double before = 0.0;
                for (const auto& r : d.rounds)
                    if (r.index < *peek && !d.source.empty()) before = metric.score(d.source, r.scene_after);
                before_sum += before;
            }
            for (const auto& r : d.rounds) {
                tlen += static_cast<double>(r.teller.tokens.size());
                ++tcount;
                teller_vocab.insert(r.teller.tokens.begin(), r.teller.tokens.end());
                if (r.drawer) {
                    dlen += static_cast<double>(r.drawer->tokens.size());
                    ++dcount;
                    drawer_vocab.insert(r.drawer->tokens.begin(), r.drawer->tokens.end());
                }
            }
        }
        if (s.dialogues) {
            s.mean_final_score = score_sum / s.dialogues;
            s.mean_rounds = rounds / s.dialogues;
        }
        if (s.with_peek) s.mean_score_before_peek = before_sum / s.with_peek;
        if (tcount) s.mean_teller_len = tlen / static_cast<double>(tcount);
        if (dcount) s.mean_drawer_len = dlen / static_cast<double>(dcount);
        stats.splits.push_back(s);
    }
    stats.teller_vocab = teller_vocab.size();
    stats.drawer_vocab = drawer_vocab.size();
    return stats;
}

inline nlohmann::json to_json(const CorpusStatistics& stats) {
    nlohmann::json j;
    for (const auto& s : stats.splits) {
        j["splits"][std::string(split_name(s.split))] = {{"dialogues", s.dialogues},
                                                         {"with_peek", s.with_peek},
                                                         {"mean_final_score", s.mean_final_score},
                                                         {"mean_score_before_peek", s.mean_score_before_peek},
                                                         {"mean_rounds", s.mean_rounds},
                                                         {"mean_teller_len", s.mean_teller_len},
                                                         {"mean_drawer_len", s.mean_drawer_len}};
    }
    j["teller_vocab"] = stats.teller_vocab;
    j["drawer_vocab"] = stats.drawer_vocab;
    return j;
}

}  // namespace icr
