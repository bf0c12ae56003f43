#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "icr/annotation.hpp"
#include "icr/corpus.hpp"
#include "icr/util.hpp"

namespace icr {

enum class Task { Task1, Task2 };

inline std::string_view task_name(Task t) { return t == Task::Task1 ? "task1" : "task2"; }

inline constexpr std::size_t kContextTokenLimit = 200;
inline const std::string kTellerMarker = "/T";
inline const std::string kDrawerMarker = "/D";
inline const std::string kPeekMarker = "/PEEK";

/// Which speakers' utterances enter the context.
enum class ContextFilter {
    Both,
    TellerOnly,  // context without drawer utterances
    DrawerOnly,  // context without teller utterances
};

/// Context covers every utterance strictly before (round, next_speaker).
struct ContextBoundary {
    int round = 0;
    Speaker next_speaker = Speaker::Teller;
};

/// Concatenates utterances before the boundary, each prefixed by /T or /D; utterances of
/// the peek round are additionally prefixed by /PEEK. Markers count toward `limit`, and
/// only the final `limit` tokens are kept.
inline std::vector<std::string> mark_context(std::span<const Round> rounds, std::optional<int> peek_round,
                                             ContextBoundary boundary, ContextFilter filter = ContextFilter::Both,
                                             std::size_t limit = kContextTokenLimit) {
    std::vector<std::string> out;
    auto append = [&](const Round& r, const Utterance& u, const std::string& marker) {
        if (peek_round && r.index == *peek_round) out.push_back(kPeekMarker);
        out.push_back(marker);
        out.insert(out.end(), u.tokens.begin(), u.tokens.end());
    };
    for (const auto& r : rounds) {
        if (r.index > boundary.round) break;
        const bool teller_allowed = r.index < boundary.round || boundary.next_speaker == Speaker::Drawer;
        const bool drawer_allowed = r.index < boundary.round;
        if (teller_allowed && filter != ContextFilter::DrawerOnly) append(r, r.teller, kTellerMarker);
        if (drawer_allowed && r.drawer && filter != ContextFilter::TellerOnly) append(r, *r.drawer, kDrawerMarker);
    }
    if (out.size() > limit) out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(limit));
    return out;
}

/// Datapoint (scene, context, message, label). Embedding keys are "<dialogue_id>/<round>/<field>".
struct Datapoint {
    Task task = Task::Task1;
    std::string dialogue_id;
    Split split = Split::Train;
    int round = 0;
    std::vector<std::string> context;
    std::vector<std::string> message;
    std::string scene_key;
    Label label = Label::NotICR;

    std::string key(std::string_view field) const {
        return dialogue_id + "/" + std::to_string(round) + "/" + std::string(field);
    }
    bool positive() const { return label == Label::ICR; }
};

namespace detail {

template <class MakeContext, class MakeMessage>
std::vector<Datapoint> build_task(const Corpus& corpus, const UtteranceLabels& labels, Task task, MakeContext ctx,
                                  MakeMessage msg) {
    std::vector<Datapoint> out;
    for (const auto& d : corpus.dialogues) {
        const auto peek = d.peek_round();
        for (const auto& r : d.rounds) {
            if (!r.drawer) continue;
            auto it = labels.find(RoundRef{d.id, r.index});
            if (it == labels.end())
                throw Error("no label for drawer utterance " + d.id + "/" + std::to_string(r.index));
            Datapoint dp;
            dp.task = task;
            dp.dialogue_id = d.id;
            dp.split = d.split;
            dp.round = r.index;
            dp.context = ctx(d, peek, r);
            dp.message = msg(r);
            dp.scene_key = dp.key("img");
            dp.label = it->second;
            out.push_back(std::move(dp));
        }
    }
    return out;
}

}  // namespace detail

/// Task 1 (ask an iCR?): context before g_i, message g_i, scene s_i, label of f_i.
inline std::vector<Datapoint> build_task1(const Corpus& corpus, const UtteranceLabels& labels,
                                          ContextFilter filter = ContextFilter::Both) {
    return detail::build_task(
        corpus, labels, Task::Task1,
        [&](const Dialogue& d, std::optional<int> peek, const Round& r) {
            return mark_context(d.rounds, peek, {r.index, Speaker::Teller}, filter);
        },
        [](const Round& r) { return r.teller.tokens; });
}

/// Task 2 (was this an iCR?): context through g_i, message f_i, source scene S, label of f_i.
/// f_i is the separate message input and never part of the context.
inline std::vector<Datapoint> build_task2(const Corpus& corpus, const UtteranceLabels& labels,
                                          ContextFilter filter = ContextFilter::Both) {
    return detail::build_task(
        corpus, labels, Task::Task2,
        [&](const Dialogue& d, std::optional<int> peek, const Round& r) {
            return mark_context(d.rounds, peek, {r.index, Speaker::Drawer}, filter);
        },
        [](const Round& r) { return r.drawer->tokens; });
}

inline std::vector<Datapoint> build_task(Task task, const Corpus& corpus, const UtteranceLabels& labels,
                                         ContextFilter filter = ContextFilter::Both) {
    return task == Task::Task1 ? build_task1(corpus, labels, filter) : build_task2(corpus, labels, filter);
}

inline std::vector<Datapoint> select_split(const std::vector<Datapoint>& dps, Split split) {
    std::vector<Datapoint> out;
    std::copy_if(dps.begin(), dps.end(), std::back_inserter(out), [split](const Datapoint& d) { return d.split == split; });
    return out;
}

inline std::string datapoints_to_jsonl(const std::vector<Datapoint>& dps) {
    std::string out;
    for (const auto& dp : dps) {
        nlohmann::json j{{"task", task_name(dp.task)},
                         {"dialogue_id", dp.dialogue_id},
                         {"split", split_name(dp.split)},
                         {"round", dp.round},
                         {"context", join(dp.context)},
                         {"message", join(dp.message)},
                         {"scene_key", dp.scene_key},
                         {"label", label_name(dp.label)}};
        out += j.dump() + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Feature baselines
// ---------------------------------------------------------------------------

/// Clipart nouns and attribute terms, version 1. Mirrors data/content_words_v1.txt.
inline const std::vector<std::string>& default_content_words() {
    static const std::vector<std::string> words = {
        // cliparts
        "boy", "girl", "kid", "man", "woman", "bear", "cat", "dog", "duck", "owl", "snake", "sun", "moon", "cloud",
        "clouds", "lightning", "plane", "airplane", "balloon", "rocket", "tree", "trees", "bush", "flower", "slide",
        "swing", "sandbox", "table", "bench", "tent", "grill", "umbrella", "hat", "cap", "crown", "glasses",
        "sunglasses", "ball", "bat", "frisbee", "kite", "shovel", "pail", "bucket", "hamburger", "burger", "hotdog",
        "pizza", "pie", "ketchup", "drink", "apple", "pine", "palm",
        // attributes
        "size", "big", "bigger", "small", "smaller", "medium", "large", "facing", "face", "left", "right", "top",
        "bottom", "middle", "center", "edge", "horizon", "touching", "position", "far", "close", "pose", "expression",
        "happy", "sad", "angry", "surprised", "arms", "legs", "color", "kind", "type"};
    return words;
}

class ContentWords {
public:
    ContentWords() : words_(default_content_words().begin(), default_content_words().end()) {}
    explicit ContentWords(std::set<std::string> words) : words_(std::move(words)) {}

    /// One word per line; '#' starts a comment.
    static ContentWords from_file(const std::filesystem::path& path) {
        std::set<std::string> words;
        for (const auto& line : split_fields(read_file(path), '\n')) {
            auto hash = line.find('#');
            for (auto& t : tokenize(line.substr(0, hash))) words.insert(t);
        }
        return ContentWords(std::move(words));
    }

    bool contains(const std::string& w) const { return words_.count(w) > 0; }
    bool any_in(const std::vector<std::string>& tokens) const {
        return std::any_of(tokens.begin(), tokens.end(), [&](const std::string& t) { return contains(t); });
    }
    const std::set<std::string>& words() const { return words_; }

private:
    std::set<std::string> words_;
};

/// Teller vocabulary over training-split Task 1 messages; indices in sorted token order.
class TellerVocabulary {
public:
    TellerVocabulary() = default;

    static TellerVocabulary from_training(const std::vector<Datapoint>& dps) {
        std::set<std::string> tokens;
        for (const auto& dp : dps)
            if (dp.split == Split::Train && dp.task == Task::Task1) tokens.insert(dp.message.begin(), dp.message.end());
        TellerVocabulary v;
        int i = 0;
        for (const auto& t : tokens) v.index_[t] = i++;
        return v;
    }

    /// Rebuilds a saved vocabulary; indices follow sorted token order.
    static TellerVocabulary from_tokens(const std::vector<std::string>& tokens) {
        TellerVocabulary v;
        std::set<std::string> sorted(tokens.begin(), tokens.end());
        int i = 0;
        for (const auto& t : sorted) v.index_[t] = i++;
        return v;
    }

    std::vector<std::string> tokens() const {
        std::vector<std::string> out;
        for (const auto& [t, i] : index_) out.push_back(t);
        return out;
    }

    std::optional<int> find(const std::string& token) const {
        auto it = index_.find(token);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }
    std::size_t size() const { return index_.size(); }

private:
    std::map<std::string, int> index_;
};

/// Sparse feature vector: `dim` columns, listed nonzeros in increasing column order.
struct FeatureVector {
    std::size_t dim = 0;
    std::vector<std::pair<int, double>> nonzeros;

    std::vector<double> dense() const {
        std::vector<double> v(dim, 0.0);
        for (auto [i, x] : nonzeros) v[static_cast<std::size_t>(i)] = x;
        return v;
    }
};

/// Task 1: [utterance length, boolean bag-of-words over the teller vocabulary].
/// Task 2: [utterance length, content-word indicator]. Unseen tokens set no bit.
inline FeatureVector featurize(const Datapoint& dp, const TellerVocabulary& vocab, const ContentWords& content) {
    FeatureVector f;
    const double len = static_cast<double>(dp.message.size());
    if (dp.task == Task::Task1) {
        f.dim = 1 + vocab.size();
        if (len != 0.0) f.nonzeros.emplace_back(0, len);
        std::set<int> bits;
        for (const auto& t : dp.message)
            if (auto i = vocab.find(t)) bits.insert(*i + 1);
        for (int b : bits) f.nonzeros.emplace_back(b, 1.0);
    } else {
        f.dim = 2;
        if (len != 0.0) f.nonzeros.emplace_back(0, len);
        if (content.any_in(dp.message)) f.nonzeros.emplace_back(1, 1.0);
    }
    return f;
}

inline std::string features_tsv(const std::vector<Datapoint>& dps, const std::vector<FeatureVector>& features) {
    std::string out = "dialogue_id\tround\tlabel";
    const std::size_t dim = features.empty() ? 0 : features.front().dim;
    for (std::size_t i = 0; i < dim; ++i) out += "\tf" + std::to_string(i);
    out += '\n';
    for (std::size_t k = 0; k < dps.size(); ++k) {
        out += dps[k].dialogue_id + '\t' + std::to_string(dps[k].round) + '\t' + (dps[k].positive() ? "1" : "0");
        for (double x : features[k].dense()) out += '\t' + format_number(x);
        out += '\n';
    }
    return out;
}

}  // namespace icr
