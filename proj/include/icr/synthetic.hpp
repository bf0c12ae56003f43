#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "icr/annotation.hpp"
#include "icr/classifier.hpp"
#include "icr/corpus.hpp"
#include "icr/dataset.hpp"
#include "icr/embedding_store.hpp"
#include "icr/scene.hpp"
#include "icr/training.hpp"
#include "icr/util.hpp"

namespace icr {

// Deterministic generators for desk-scale corpora, labels and embeddings. Every planted
// quantity is recorded in a manifest so tests can check pipeline outputs against it.

struct SynthOptions {
    int train_dialogues = 40;
    int val_dialogues = 5;
    int test_dialogues = 5;
    int min_rounds = 3;
    int max_rounds = 12;
    /// Probability that a drawer utterance is drawn from the clarification pool.
    double icr_rate = 0.11;
    double peek_rate = 0.6;
    /// Probability that the final round lacks a drawer utterance.
    double truncate_rate = 0.05;
    std::uint64_t seed = 1;
};

struct SynthManifest {
    std::map<std::string, int> dialogues;  // split name -> count
    std::map<std::string, int> rounds;     // dialogue id -> round count
    long total_rounds = 0;
    long drawer_utterances = 0;
    long distinct_drawer_forms = 0;
    long icr_utterances = 0;
    long icr_forms = 0;
    long peeks = 0;
    long dialogues_with_icr = 0;
    std::map<std::string, long> split_drawer_utterances;
    std::map<std::string, long> split_icr_utterances;

    nlohmann::json to_json() const {
        return {{"dialogues", dialogues},
                {"rounds", rounds},
                {"total_rounds", total_rounds},
                {"drawer_utterances", drawer_utterances},
                {"distinct_drawer_forms", distinct_drawer_forms},
                {"icr_utterances", icr_utterances},
                {"icr_forms", icr_forms},
                {"peeks", peeks},
                {"dialogues_with_icr", dialogues_with_icr},
                {"split_drawer_utterances", split_drawer_utterances},
                {"split_icr_utterances", split_icr_utterances}};
    }
};

struct SynthCorpus {
    Corpus corpus;
    /// Planted label of every drawer utterance.
    UtteranceLabels planted;
    SynthManifest manifest;
};

namespace detail {

inline const std::vector<std::string>& synth_nouns() {
    static const std::vector<std::string> v = {"boy",  "girl", "bear",  "cat",   "dog",   "duck",  "owl",
                                               "snake", "sun", "moon",  "cloud", "tree",  "bush",  "slide",
                                               "swing", "table", "bench", "tent", "ball", "kite", "hat"};
    return v;
}

/// Clarification questions; each mentions a clipart noun or attribute.
inline std::string icr_form(std::mt19937_64& rng) {
    static const std::vector<std::string> templates = {
        "what size is the {} ?",          "is the {} facing left or right ?", "where is the {} ?",
        "how big is the {} ?",            "is the {} touching the edge ?",    "which {} ?",
        "what color is the {} ?",         "is the {} on the left ?",          "how far is the {} from the top ?",
        "is the {} big or small ?"};
    static const std::vector<std::string> prefixes = {"", "", "", "ok ", "done . ", "got it . "};
    const auto& nouns = synth_nouns();
    std::string t = templates[rng() % templates.size()];
    t.replace(t.find("{}"), 2, nouns[rng() % nouns.size()]);
    return prefixes[rng() % prefixes.size()] + t;
}

/// Acknowledgements and prompts without content words.
inline std::string plain_form(std::mt19937_64& rng) {
    static const std::vector<std::string> heads = {"ok", "okay", "done", "got it", "alright", "cool", "yes", "ready"};
    static const std::vector<std::string> tails = {"", "", "", " next", " what's next ?", " go on", " thanks",
                                                   " !", " next please", " i am ready"};
    return heads[rng() % heads.size()] + tails[rng() % tails.size()];
}

inline std::string teller_message(std::mt19937_64& rng) {
    static const std::vector<std::string> where = {"on the left", "on the right", "in the middle", "near the top",
                                                   "at the bottom", "close to the horizon"};
    static const std::vector<std::string> size = {"small", "medium", "big"};
    static const std::vector<std::string> dir = {"left", "right"};
    const auto& nouns = synth_nouns();
    std::string s = where[rng() % where.size()] + " there is a " + size[rng() % size.size()] + " " +
                    nouns[rng() % nouns.size()] + " facing " + dir[rng() % dir.size()];
    if (rng() % 3 == 0) s += " and a " + nouns[rng() % nouns.size()] + " " + where[rng() % where.size()];
    return s;
}

inline Clipart random_clipart(std::mt19937_64& rng, int key, int type_id) {
    Clipart c;
    c.object_key = key;
    c.type_id = type_id;
    if (is_person(type_id))
        c.variant = PersonVariant{static_cast<int>(rng() % kNumExpressions), static_cast<int>(rng() % kNumPoses)};
    c.x = static_cast<double>(20 + rng() % 461);
    c.y = static_cast<double>(20 + rng() % 361);
    c.depth = static_cast<int>(rng() % 3);
    c.flip = rng() % 2 == 1;
    return c;
}

inline bool coin(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

}  // namespace detail

/// Generates a corpus that passes validation. Drawer utterances come from two disjoint
/// pools: clarification questions (each containing a content word) and plain
/// acknowledgements (none), chosen independently of the teller's message.
inline SynthCorpus generate_corpus(const SynthOptions& opts, const SimilarityMetric& metric = default_similarity()) {
    if (opts.min_rounds < 1 || opts.max_rounds < opts.min_rounds) throw Error("invalid synthetic round bounds");
    std::mt19937_64 rng(derive_seed(opts.seed, "synthetic-corpus"));
    SynthCorpus out;
    std::set<std::string> forms, icr_forms;

    const std::pair<Split, int> plan[] = {
        {Split::Train, opts.train_dialogues}, {Split::Val, opts.val_dialogues}, {Split::Test, opts.test_dialogues}};
    for (auto [split, count] : plan) {
        out.manifest.dialogues[std::string(split_name(split))] = count;
        for (int n = 0; n < count; ++n) {
            Dialogue d;
            d.id = std::string(split_name(split)) + "_" + std::to_string(10000 + n);
            d.split = split;

            std::vector<int> types(kNumClipartTypes);
            std::iota(types.begin(), types.end(), 0);
            std::shuffle(types.begin(), types.end(), rng);
            const int k = 6 + static_cast<int>(rng() % 12);
            std::vector<Clipart> source;
            for (int i = 0; i < k; ++i) source.push_back(detail::random_clipart(rng, i, types[static_cast<std::size_t>(i)]));
            d.source = Scene(source);

            const int n_rounds = opts.min_rounds + static_cast<int>(rng() % static_cast<unsigned>(opts.max_rounds - opts.min_rounds + 1));
            std::optional<int> peek;
            if (n_rounds >= 2 && detail::coin(rng, opts.peek_rate)) peek = 1 + static_cast<int>(rng() % static_cast<unsigned>(n_rounds - 1));
            const bool truncated = detail::coin(rng, opts.truncate_rate);
            const std::string split_key(split_name(split));
            bool any_icr = false;

            std::map<int, Clipart> canvas;
            Scene prev;
            for (int i = 0; i < n_rounds; ++i) {
                Round r;
                r.index = i;
                r.teller = Utterance{Speaker::Teller, tokenize(detail::teller_message(rng)), i};
                if (!(truncated && i == n_rounds - 1)) {
                    const bool icr = detail::coin(rng, opts.icr_rate);
                    const std::string form = icr ? detail::icr_form(rng) : detail::plain_form(rng);
                    r.drawer = Utterance{Speaker::Drawer, tokenize(form), i};
                    const std::string text = r.drawer->text();
                    forms.insert(text);
                    if (icr) icr_forms.insert(text);
                    out.planted[{d.id, i}] = icr ? Label::ICR : Label::NotICR;
                    out.manifest.drawer_utterances += 1;
                    out.manifest.icr_utterances += icr;
                    out.manifest.split_drawer_utterances[split_key] += 1;
                    out.manifest.split_icr_utterances[split_key] += icr;
                    any_icr = any_icr || icr;
                }
                // Drawer edits: add missing cliparts roughly in place, sometimes fix or flip placed ones.
                if (!detail::coin(rng, 0.15)) {
                    std::vector<const Clipart*> missing;
                    for (const auto& c : source)
                        if (!canvas.count(c.object_key)) missing.push_back(&c);
                    const std::size_t adds = std::min<std::size_t>(missing.size(), 1 + rng() % 2);
                    for (std::size_t a = 0; a < adds; ++a) {
                        Clipart c = *missing[a];
                        c.x = std::clamp(c.x + static_cast<double>(static_cast<int>(rng() % 61) - 30), 0.0, kCanvasWidth);
                        c.y = std::clamp(c.y + static_cast<double>(static_cast<int>(rng() % 61) - 30), 0.0, kCanvasHeight);
                        if (detail::coin(rng, 0.3)) c.depth = static_cast<int>(rng() % 3);
                        if (detail::coin(rng, 0.2)) c.flip = !c.flip;
                        canvas[c.object_key] = c;
                    }
                    if (!canvas.empty() && detail::coin(rng, 0.3)) {
                        auto it = std::next(canvas.begin(), static_cast<long>(rng() % canvas.size()));
                        const Clipart* target = d.source.find(it->first);
                        it->second.x = target->x;
                        it->second.y = target->y;
                    }
                    if (!canvas.empty() && detail::coin(rng, 0.1)) {
                        auto it = std::next(canvas.begin(), static_cast<long>(rng() % canvas.size()));
                        it->second.flip = !it->second.flip;
                    }
                }
                std::vector<Clipart> placed;
                for (const auto& [key, c] : canvas) placed.push_back(c);
                r.scene_after = Scene(std::move(placed));
                r.actions = diff_scenes(prev, r.scene_after);
                r.is_peek_round = peek && *peek == i;
                prev = r.scene_after;
                d.rounds.push_back(std::move(r));
            }
            d.final_score = metric.score(d.source, prev);
            out.manifest.rounds[d.id] = n_rounds;
            out.manifest.total_rounds += n_rounds;
            out.manifest.peeks += peek.has_value();
            out.manifest.dialogues_with_icr += any_icr;
            out.corpus.dialogues.push_back(std::move(d));
        }
    }
    // same order as a reloaded corpus, so type ids agree before and after a round trip
    std::sort(out.corpus.dialogues.begin(), out.corpus.dialogues.end(),
              [](const Dialogue& a, const Dialogue& b) { return a.id < b.id; });
    out.manifest.distinct_drawer_forms = static_cast<long>(forms.size());
    out.manifest.icr_forms = static_cast<long>(icr_forms.size());
    return out;
}

/// Type-level labels from a rule: iCR iff the form contains a content word.
inline LabelSet content_word_labels(const std::vector<UtteranceType>& types, const ContentWords& content = {},
                                    const std::string& annotator = "content-word-rule") {
    LabelSet set(annotator);
    for (const auto& t : types) set.set(t.type_id, content.any_in(tokenize(t.form)) ? Label::ICR : Label::NotICR, t.form);
    return set;
}

/// Type-level labels read off planted utterance labels (the label of each type's first
/// occurrence; the generator never reuses a form across classes).
inline LabelSet planted_type_labels(const std::vector<UtteranceType>& types, const UtteranceLabels& planted,
                                    const std::string& annotator = "generator") {
    LabelSet set(annotator);
    for (const auto& t : types) {
        auto it = planted.find(t.occurrences.front());
        if (it == planted.end()) throw Error("no planted label for form '" + t.form + "'");
        set.set(t.type_id, it->second, t.form);
    }
    return set;
}

// ---------------------------------------------------------------------------
// Planted embeddings
// ---------------------------------------------------------------------------

/// `n` datapoints with exactly round(n * positive_rate) positives at seeded positions.
inline std::vector<Datapoint> planted_datapoints(std::size_t n, double positive_rate, Split split, std::uint64_t seed,
                                                 Task task = Task::Task2) {
    std::vector<Datapoint> out(n);
    const auto positives = static_cast<std::size_t>(std::llround(static_cast<double>(n) * positive_rate));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, "planted-datapoints"));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
        auto& dp = out[i];
        dp.task = task;
        dp.split = split;
        dp.dialogue_id = std::string(split_name(split)) + "_p" + std::to_string(i);
        dp.round = 0;
        dp.scene_key = dp.key("img");
    }
    for (std::size_t i = 0; i < positives; ++i) out[order[i]].label = Label::ICR;
    return out;
}

struct PlantedStores {
    EmbeddingStore image;
    EmbeddingStore message;
    EmbeddingStore context;

    InputStores view() const { return {&image, &message, &context}; }
};

/// Unit-variance Gaussian vectors; positives are shifted by `separation` along one fixed
/// random unit direction per input, so the classes are (nearly) linearly separable.
inline PlantedStores planted_stores(const std::vector<Datapoint>& dps, const ClassifierConfig& cfg, double separation,
                                    std::uint64_t seed) {
    PlantedStores s{EmbeddingStore(static_cast<std::size_t>(cfg.image_dim)),
                    EmbeddingStore(static_cast<std::size_t>(cfg.message_dim)),
                    EmbeddingStore(static_cast<std::size_t>(cfg.context_dim))};
    auto fill = [&](EmbeddingStore& store, std::string_view stage, auto key_of) {
        const std::size_t dim = store.dim();
        std::mt19937_64 rng(derive_seed(seed, stage));
        std::normal_distribution<float> normal(0.0f, 1.0f);
        std::vector<float> dir(dim);
        double norm = 0.0;
        for (auto& v : dir) {
            v = normal(rng);
            norm += static_cast<double>(v) * v;
        }
        for (auto& v : dir) v = static_cast<float>(v / std::sqrt(norm));
        std::vector<float> x(dim);
        for (const auto& dp : dps) {
            for (auto& v : x) v = normal(rng);
            if (dp.positive())
                for (std::size_t i = 0; i < dim; ++i) x[i] += static_cast<float>(separation) * dir[i];
            store.add(key_of(dp), x);
        }
    };
    fill(s.image, "planted-image", [](const Datapoint& d) { return d.scene_key; });
    fill(s.message, "planted-message", [](const Datapoint& d) { return d.key("msg"); });
    fill(s.context, "planted-context", [](const Datapoint& d) { return d.key("ctx"); });
    return s;
}

/// Copy of `dps` with labels permuted by a seeded shuffle (prevalence preserved).
inline std::vector<Datapoint> shuffle_labels(std::vector<Datapoint> dps, std::uint64_t seed) {
    std::vector<Label> labels;
    for (const auto& d : dps) labels.push_back(d.label);
    std::mt19937_64 rng(derive_seed(seed, "shuffle-labels"));
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < dps.size(); ++i) dps[i].label = labels[i];
    return dps;
}

}  // namespace icr
