#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "icr/annotation.hpp"
#include "icr/corpus.hpp"
#include "icr/error.hpp"

namespace icr {

// ---------------------------------------------------------------------------
// Descriptive statistics
// ---------------------------------------------------------------------------

struct ScopeStats {
    int dialogues = 0;
    int rounds = 0;
    int icrs = 0;
    double icr_percent = 0.0;
    double mean_icrs_per_dialogue = 0.0;
    double std_icrs_per_dialogue = 0.0;
};

struct DescriptiveStats {
    ScopeStats all;
    ScopeStats with_icrs;
    ScopeStats until_peek;
};

namespace detail {

inline ScopeStats summarize(const std::vector<int>& icrs_per_dialogue, int rounds) {
    ScopeStats s;
    s.dialogues = static_cast<int>(icrs_per_dialogue.size());
    s.rounds = rounds;
    s.icrs = std::accumulate(icrs_per_dialogue.begin(), icrs_per_dialogue.end(), 0);
    s.icr_percent = rounds > 0 ? 100.0 * s.icrs / rounds : 0.0;
    if (s.dialogues > 0) {
        s.mean_icrs_per_dialogue = static_cast<double>(s.icrs) / s.dialogues;
        double ss = 0.0;
        for (int c : icrs_per_dialogue) ss += (c - s.mean_icrs_per_dialogue) * (c - s.mean_icrs_per_dialogue);
        s.std_icrs_per_dialogue = std::sqrt(ss / s.dialogues);
    }
    return s;
}

inline bool is_icr(const UtteranceLabels& labels, const std::string& id, int round) {
    auto it = labels.find(RoundRef{id, round});
    return it != labels.end() && it->second == Label::ICR;
}

inline bool has_label(const UtteranceLabels& labels, const std::string& id, int round) {
    return labels.count(RoundRef{id, round}) > 0;
}

}  // namespace detail

/// Rounds are counted where the drawer spoke (i.e. the round carries a label).
/// Per-dialogue standard deviations are population deviations.
inline DescriptiveStats descriptive_stats(const Corpus& corpus, const UtteranceLabels& labels,
                                          const RoundTableOptions& peek_opts = {}) {
    std::vector<int> all, with, until;
    int rounds_all = 0, rounds_with = 0, rounds_until = 0;
    for (const auto& d : corpus.dialogues) {
        int n = 0, n_until = 0, r_all = 0, r_until = 0;
        for (const auto& r : d.rounds) {
            if (!detail::has_label(labels, d.id, r.index)) continue;
            const bool icr = detail::is_icr(labels, d.id, r.index);
            ++r_all;
            n += icr;
            if (is_before_peek(d, r.index, peek_opts)) {
                ++r_until;
                n_until += icr;
            }
        }
        all.push_back(n);
        until.push_back(n_until);
        rounds_all += r_all;
        rounds_until += r_until;
        if (n > 0) {
            with.push_back(n);
            rounds_with += r_all;
        }
    }
    return {detail::summarize(all, rounds_all), detail::summarize(with, rounds_with), detail::summarize(until, rounds_until)};
}

inline nlohmann::json to_json(const ScopeStats& s) {
    return {{"dialogues", s.dialogues},
            {"rounds", s.rounds},
            {"icr_utterances", s.icrs},
            {"icr_percent", s.icr_percent},
            {"mean_icrs_per_dialogue", s.mean_icrs_per_dialogue},
            {"std_icrs_per_dialogue", s.std_icrs_per_dialogue}};
}

inline nlohmann::json to_json(const DescriptiveStats& s) {
    return {{"all", to_json(s.all)}, {"with_icrs", to_json(s.with_icrs)}, {"until_peek", to_json(s.until_peek)}};
}

// ---------------------------------------------------------------------------
// Rank/frequency of iCR types
// ---------------------------------------------------------------------------

struct RankedType {
    int type_id = 0;
    std::string form;
    int count = 0;
};

struct RankFrequency {
    std::vector<RankedType> ranked;  // descending count, ties by first occurrence
    int hapax = 0;
    double hapax_share = 0.0;
};

inline RankFrequency rank_frequency(const LabelSet& labels, const std::vector<UtteranceType>& types) {
    RankFrequency rf;
    for (const auto& t : types) {
        if (labels.get(t.type_id) != Label::ICR) continue;
        rf.ranked.push_back({t.type_id, t.form, static_cast<int>(t.occurrences.size())});
    }
    std::stable_sort(rf.ranked.begin(), rf.ranked.end(), [](const RankedType& a, const RankedType& b) {
        return a.count != b.count ? a.count > b.count : a.type_id < b.type_id;
    });
    for (const auto& r : rf.ranked) rf.hapax += r.count == 1;
    if (!rf.ranked.empty()) rf.hapax_share = static_cast<double>(rf.hapax) / static_cast<double>(rf.ranked.size());
    return rf;
}

// ---------------------------------------------------------------------------
// Initial bigrams
// ---------------------------------------------------------------------------

/// Unicode punctuation characters recognized beyond ASCII (UTF-8 encoded).
inline const std::vector<std::string_view>& unicode_punctuation() {
    static const std::vector<std::string_view> marks = {
        "‘", "’", "“", "”", "…", "–", "—", "«", "»", "¿",
        "¡", "•", "·", "′", "″", "‚", "„", "‹", "›"};
    return marks;
}

/// True when every character of the token is punctuation: ASCII punctuation and
/// symbols (!"#$%&'()*+,-./:;<=>?@[\]^_`{|}~) or one of unicode_punctuation().
inline bool is_punctuation_token(std::string_view tok) {
    if (tok.empty()) return false;
    std::size_t i = 0;
    while (i < tok.size()) {
        const unsigned char c = static_cast<unsigned char>(tok[i]);
        if (c < 0x80) {
            if (!std::ispunct(c)) return false;
            ++i;
            continue;
        }
        bool matched = false;
        for (auto mark : unicode_punctuation()) {
            if (tok.substr(i, mark.size()) == mark) {
                i += mark.size();
                matched = true;
                break;
            }
        }
        if (!matched) return false;
    }
    return true;
}

inline const std::string kShortFormBucket = "<short>";

/// First two tokens after dropping punctuation tokens and a leading run of ok/okay.
/// Utterances with fewer than two remaining tokens map to {kShortFormBucket, ""}.
inline std::pair<std::string, std::string> initial_bigram(const std::vector<std::string>& tokens) {
    std::vector<std::string> kept;
    for (const auto& t : tokens)
        if (!is_punctuation_token(t)) kept.push_back(t);
    std::size_t start = 0;
    while (start < kept.size() && (kept[start] == "ok" || kept[start] == "okay")) ++start;
    if (kept.size() - start < 2) return {kShortFormBucket, ""};
    return {kept[start], kept[start + 1]};
}

struct BigramCount {
    std::string first;
    std::string second;
    int count = 0;
};

/// Bigram counts over iCR utterances, descending by count then lexicographic.
inline std::vector<BigramCount> initial_bigrams(const UtteranceLabels& labels, const Corpus& corpus) {
    std::map<std::pair<std::string, std::string>, int> counts;
    for (const auto& d : corpus.dialogues)
        for (const auto& r : d.rounds)
            if (r.drawer && detail::is_icr(labels, d.id, r.index)) ++counts[initial_bigram(r.drawer->tokens)];
    std::vector<BigramCount> out;
    for (auto& [k, v] : counts) out.push_back({k.first, k.second, v});
    std::stable_sort(out.begin(), out.end(), [](const BigramCount& a, const BigramCount& b) { return a.count > b.count; });
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary partition
// ---------------------------------------------------------------------------

struct TokenCount {
    std::string token;
    int count = 0;
};

struct VocabPartition {
    std::vector<TokenCount> icr;    // tokens in iCR drawer utterances
    std::vector<TokenCount> other;  // tokens in the remaining drawer utterances
    std::size_t drawer_vocab = 0;
    std::size_t icr_vocab = 0;
};

inline VocabPartition vocab_partition(const UtteranceLabels& labels, const Corpus& corpus) {
    std::map<std::string, int> icr, other;
    std::set<std::string> vocab;
    for (const auto& d : corpus.dialogues)
        for (const auto& r : d.rounds) {
            if (!r.drawer) continue;
            auto& table = detail::is_icr(labels, d.id, r.index) ? icr : other;
            for (const auto& t : r.drawer->tokens) {
                ++table[t];
                vocab.insert(t);
            }
        }
    auto ranked = [](const std::map<std::string, int>& m) {
        std::vector<TokenCount> v;
        for (auto& [k, c] : m) v.push_back({k, c});
        std::stable_sort(v.begin(), v.end(), [](const TokenCount& a, const TokenCount& b) { return a.count > b.count; });
        return v;
    };
    VocabPartition p;
    p.icr = ranked(icr);
    p.other = ranked(other);
    p.drawer_vocab = vocab.size();
    p.icr_vocab = icr.size();
    return p;
}

// ---------------------------------------------------------------------------
// Permutation test
// ---------------------------------------------------------------------------

struct PermutationResult {
    double p_value = 1.0;
    double statistic = 0.0;  // mean(a) - mean(b)
    bool exhaustive = false;
    std::uint64_t evaluated = 0;
};

namespace detail {

/// C(n, k), saturating at `cap`.
inline std::uint64_t binomial_capped(std::uint64_t n, std::uint64_t k, std::uint64_t cap) {
    k = std::min(k, n - k);
    long double r = 1.0L;
    for (std::uint64_t i = 1; i <= k; ++i) {
        r = r * static_cast<long double>(n - k + i) / static_cast<long double>(i);
        if (r > static_cast<long double>(cap)) return cap + 1;
    }
    return static_cast<std::uint64_t>(std::llround(r));
}

}  // namespace detail

/// Two-sided permutation test for the difference of independent means.
///
/// When the number of distinct splits does not exceed `n_resamples` every split is
/// enumerated and the exact p-value returned. Otherwise `n_resamples` random splits are
/// drawn and p = (1 + #extreme) / (1 + n_resamples).
inline PermutationResult permutation_test(const std::vector<double>& sample_a, const std::vector<double>& sample_b,
                                          std::uint64_t n_resamples, std::uint64_t seed) {
    if (sample_a.empty() || sample_b.empty()) throw EmptySample();
    const std::size_t na = sample_a.size(), nb = sample_b.size(), n = na + nb;
    auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };

    PermutationResult res;
    res.statistic = mean(sample_a) - mean(sample_b);

    // Canonical orientation makes the resampling invariant under swapping the samples.
    std::vector<double> first = sample_a, second = sample_b;
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    if (first.size() > second.size() || (first.size() == second.size() && second < first)) std::swap(first, second);
    const std::size_t k = first.size();
    std::vector<double> pooled = first;
    pooled.insert(pooled.end(), second.begin(), second.end());
    const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);

    auto stat_from_sum = [&](double sum_first) {
        return std::abs(sum_first / static_cast<double>(k) - (total - sum_first) / static_cast<double>(n - k));
    };
    const double observed = stat_from_sum(std::accumulate(first.begin(), first.end(), 0.0));
    // Relative slack so splits equal to the observed one up to rounding count as extreme.
    const double threshold = observed - 1e-12 * std::max(1.0, observed);

    const std::uint64_t splits = detail::binomial_capped(n, k, n_resamples);
    std::uint64_t extreme = 0;
    if (splits <= n_resamples) {
        res.exhaustive = true;
        std::vector<std::size_t> idx(k);
        std::iota(idx.begin(), idx.end(), 0);
        while (true) {
            double s = 0.0;
            for (auto i : idx) s += pooled[i];
            extreme += stat_from_sum(s) >= threshold;
            ++res.evaluated;
            // next combination in lexicographic order
            std::size_t i = k;
            while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
            if (i == 0) break;
            ++idx[i - 1];
            for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
        }
        res.p_value = static_cast<double>(extreme) / static_cast<double>(res.evaluated);
        return res;
    }

    std::mt19937_64 rng(seed);
    std::vector<double> work = pooled;
    for (std::uint64_t r = 0; r < n_resamples; ++r) {
        // Partial Fisher-Yates: the first k slots become a uniform random subset.
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n - 1);
            std::swap(work[i], work[pick(rng)]);
            s += work[i];
        }
        extreme += stat_from_sum(s) >= threshold;
    }
    res.evaluated = n_resamples;
    res.p_value = static_cast<double>(1 + extreme) / static_cast<double>(1 + n_resamples);
    return res;
}

// ---------------------------------------------------------------------------
// Round dynamics
// ---------------------------------------------------------------------------

/// Group membership of one round.
struct DynamicsGroups {
    std::optional<bool> is_icr_round;  // empty when the round has no drawer utterance
    bool is_post_icr_round = false;
    bool in_with_icr_subset = false;
    bool before_peek = false;
};

inline std::vector<DynamicsGroups> assign_groups(const Corpus& corpus, const UtteranceLabels& labels,
                                                 const RoundTableOptions& peek_opts = {}) {
    std::vector<DynamicsGroups> out;
    for (const auto& d : corpus.dialogues) {
        bool any = false;
        for (const auto& r : d.rounds) any = any || detail::is_icr(labels, d.id, r.index);
        for (std::size_t i = 0; i < d.rounds.size(); ++i) {
            const Round& r = d.rounds[i];
            DynamicsGroups g;
            if (detail::has_label(labels, d.id, r.index)) g.is_icr_round = detail::is_icr(labels, d.id, r.index);
            g.is_post_icr_round = i > 0 && detail::is_icr(labels, d.id, d.rounds[i - 1].index);
            g.in_with_icr_subset = any;
            g.before_peek = is_before_peek(d, r.index, peek_opts);
            out.push_back(g);
        }
    }
    return out;
}

struct GroupComparison {
    std::optional<double> mean_in;   // e.g. iCR rounds
    std::optional<double> mean_out;  // e.g. not-iCR rounds
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    std::optional<double> p_value;
};

struct ScopeDynamics {
    GroupComparison icr_actions, post_actions, icr_score, post_score;
};

struct DynamicsReport {
    ScopeDynamics all;
    ScopeDynamics with_icrs;
    /// In the with-iCRs scope, the not-post-iCR group is restricted to with-iCR dialogues.
    bool with_icrs_restricts_complement = true;
};

struct DynamicsOptions {
    std::uint64_t n_resamples = 9999;
    std::uint64_t seed = 0;
    RoundTableOptions peek;
};

/// Means of actions and score difference for iCR/not-iCR and post-iCR/not-post-iCR rounds.
/// A round can be both an iCR and a post-iCR round; the groups are assigned independently.
inline DynamicsReport round_dynamics(const Corpus& corpus, const UtteranceLabels& labels,
                                     const std::vector<RoundRecord>& table, const DynamicsOptions& opts = {}) {
    const auto groups = assign_groups(corpus, labels, opts.peek);
    if (groups.size() != table.size()) throw Error("round table does not match the corpus");

    auto compare = [&](auto in_group, auto value, bool with_only, std::string_view stage) {
        std::vector<double> in, out;
        for (std::size_t i = 0; i < table.size(); ++i) {
            if (with_only && !groups[i].in_with_icr_subset) continue;
            auto g = in_group(groups[i]);
            if (!g) continue;
            (*g ? in : out).push_back(value(table[i]));
        }
        GroupComparison c;
        c.n_in = in.size();
        c.n_out = out.size();
        auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
        if (!in.empty()) c.mean_in = mean(in);
        if (!out.empty()) c.mean_out = mean(out);
        if (!in.empty() && !out.empty())
            c.p_value = permutation_test(in, out, opts.n_resamples, derive_seed(opts.seed, stage)).p_value;
        return c;
    };
    auto icr = [](const DynamicsGroups& g) { return g.is_icr_round; };
    auto post = [](const DynamicsGroups& g) { return std::optional<bool>(g.is_post_icr_round); };
    auto actions = [](const RoundRecord& r) { return static_cast<double>(r.n_actions); };
    auto score = [](const RoundRecord& r) { return r.score_diff; };

    DynamicsReport rep;
    for (bool with_only : {false, true}) {
        ScopeDynamics& s = with_only ? rep.with_icrs : rep.all;
        const std::string scope = with_only ? "with:" : "all:";
        s.icr_actions = compare(icr, actions, with_only, scope + "icr-actions");
        s.post_actions = compare(post, actions, with_only, scope + "post-actions");
        s.icr_score = compare(icr, score, with_only, scope + "icr-score");
        s.post_score = compare(post, score, with_only, scope + "post-score");
    }
    return rep;
}

inline nlohmann::json to_json(const GroupComparison& c) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"mean_in", opt(c.mean_in)}, {"mean_out", opt(c.mean_out)}, {"n_in", c.n_in}, {"n_out", c.n_out}, {"p_value", opt(c.p_value)}};
}

inline nlohmann::json to_json(const DynamicsReport& r) {
    auto scope = [](const ScopeDynamics& s) {
        return nlohmann::json{{"icr_vs_not_actions", to_json(s.icr_actions)},
                              {"post_vs_not_actions", to_json(s.post_actions)},
                              {"icr_vs_not_score_diff", to_json(s.icr_score)},
                              {"post_vs_not_score_diff", to_json(s.post_score)}};
    };
    return {{"all", scope(r.all)},
            {"with_icrs", scope(r.with_icrs)},
            {"metadata", {{"with_icrs_restricts_complement", r.with_icrs_restricts_complement}}}};
}

// ---------------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------------

struct Histograms {
    /// round index -> (labeled rounds at that index, iCRs at that index)
    std::map<int, std::pair<int, int>> icrs_per_round;
    /// number of iCRs in a dialogue -> dialogues
    std::map<int, int> icrs_per_dialogue;
    /// dialogue length in rounds -> (dialogues, total iCRs)
    std::map<int, std::pair<int, int>> icrs_vs_length;
};

inline Histograms histograms(const Corpus& corpus, const UtteranceLabels& labels) {
    Histograms h;
    for (const auto& d : corpus.dialogues) {
        int n = 0;
        for (const auto& r : d.rounds) {
            if (!detail::has_label(labels, d.id, r.index)) continue;
            auto& cell = h.icrs_per_round[r.index];
            ++cell.first;
            if (detail::is_icr(labels, d.id, r.index)) {
                ++cell.second;
                ++n;
            }
        }
        ++h.icrs_per_dialogue[n];
        auto& len = h.icrs_vs_length[static_cast<int>(d.rounds.size())];
        ++len.first;
        len.second += n;
    }
    return h;
}

inline nlohmann::json to_json(const Histograms& h) {
    nlohmann::json j;
    j["icrs_per_round"] = nlohmann::json::array();
    for (auto& [round, c] : h.icrs_per_round) j["icrs_per_round"].push_back({{"round", round}, {"rounds", c.first}, {"icrs", c.second}});
    j["icrs_per_dialogue"] = nlohmann::json::array();
    for (auto& [n, c] : h.icrs_per_dialogue) j["icrs_per_dialogue"].push_back({{"icrs", n}, {"dialogues", c}});
    j["icrs_vs_length"] = nlohmann::json::array();
    for (auto& [len, c] : h.icrs_vs_length)
        j["icrs_vs_length"].push_back({{"rounds", len}, {"dialogues", c.first}, {"icrs", c.second}});
    return j;
}

// ---------------------------------------------------------------------------
// Split overlap
// ---------------------------------------------------------------------------

struct OverlapStats {
    Split split = Split::Val;
    std::size_t icr_types = 0;
    std::size_t shared_types = 0;
    std::size_t icr_utterances = 0;
    std::size_t shared_utterances = 0;

    double type_overlap() const { return icr_types ? static_cast<double>(shared_types) / icr_types : 0.0; }
    double utterance_overlap() const { return icr_utterances ? static_cast<double>(shared_utterances) / icr_utterances : 0.0; }
};

/// Share of val/test iCR forms (types and occurrences) that also occur as iCRs in train.
inline std::vector<OverlapStats> split_overlap(const UtteranceLabels& labels, const Corpus& corpus) {
    std::set<std::string> train_forms;
    std::map<Split, std::vector<std::string>> icr_utts;
    for (const auto& d : corpus.dialogues)
        for (const auto& r : d.rounds) {
            if (!r.drawer || !detail::is_icr(labels, d.id, r.index)) continue;
            if (d.split == Split::Train) train_forms.insert(r.drawer->text());
            else icr_utts[d.split].push_back(r.drawer->text());
        }
    std::vector<OverlapStats> out;
    for (Split s : {Split::Val, Split::Test}) {
        OverlapStats o;
        o.split = s;
        std::set<std::string> forms;
        for (const auto& f : icr_utts[s]) {
            forms.insert(f);
            ++o.icr_utterances;
            o.shared_utterances += train_forms.count(f);
        }
        o.icr_types = forms.size();
        for (const auto& f : forms) o.shared_types += train_forms.count(f);
        out.push_back(o);
    }
    return out;
}

}  // namespace icr
