#pragma once

#include <chrono>
#include <compare>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "icr/corpus.hpp"
#include "icr/error.hpp"
#include "icr/util.hpp"

namespace icr {

enum class Label { ICR, NotICR };

inline std::string_view label_name(Label l) { return l == Label::ICR ? "iCR" : "notICR"; }

/// Position of a drawer utterance: (dialogue id, round index).
struct RoundRef {
    std::string dialogue_id;
    int round = 0;

    friend auto operator<=>(const RoundRef&, const RoundRef&) = default;
    friend bool operator==(const RoundRef&, const RoundRef&) = default;
};

using UtteranceLabels = std::map<RoundRef, Label>;

struct ContextWindow {
    std::string preceding_teller;
    std::optional<std::string> following_teller;
};

/// A distinct drawer utterance form and every position it occurs at.
struct UtteranceType {
    int type_id = 0;
    std::string form;
    std::vector<RoundRef> occurrences;
    bool is_singleton = false;
    /// Only singletons are shown with context during annotation.
    std::optional<ContextWindow> context;
};

/// Groups drawer utterances by exact form. Type ids follow first-occurrence order.
inline std::vector<UtteranceType> collapse_types(const Corpus& corpus) {
    std::vector<UtteranceType> types;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<ContextWindow> first_context;
    for (const auto& d : corpus.dialogues) {
        for (std::size_t i = 0; i < d.rounds.size(); ++i) {
            const Round& r = d.rounds[i];
            if (!r.drawer) continue;
            std::string form = r.drawer->text();
            auto [it, inserted] = index.emplace(form, types.size());
            if (inserted) {
                UtteranceType t;
                t.type_id = static_cast<int>(types.size());
                t.form = std::move(form);
                types.push_back(std::move(t));
                ContextWindow w;
                w.preceding_teller = r.teller.text();
                if (i + 1 < d.rounds.size()) w.following_teller = d.rounds[i + 1].teller.text();
                first_context.push_back(std::move(w));
            }
            types[it->second].occurrences.push_back({d.id, r.index});
        }
    }
    for (std::size_t i = 0; i < types.size(); ++i) {
        types[i].is_singleton = types[i].occurrences.size() == 1;
        if (types[i].is_singleton) types[i].context = std::move(first_context[i]);
    }
    return types;
}

inline double singleton_share(const std::vector<UtteranceType>& types) {
    if (types.empty()) return 0.0;
    std::size_t n = 0;
    for (const auto& t : types) n += t.is_singleton;
    return static_cast<double>(n) / static_cast<double>(types.size());
}

// ---------------------------------------------------------------------------
// Label sets and their JSON-lines persistence
// ---------------------------------------------------------------------------

/// One annotation decision. `label` is empty for a skipped item.
struct LabelRecord {
    int type_id = 0;
    std::string form;
    std::optional<Label> label;
    std::string annotator_id;
    std::string timestamp;
};

class LabelSet {
public:
    LabelSet() = default;
    explicit LabelSet(std::string annotator_id) : annotator_id_(std::move(annotator_id)) {}

    const std::string& annotator_id() const noexcept { return annotator_id_; }
    void set_annotator_id(std::string id) { annotator_id_ = std::move(id); }

    void record(LabelRecord r) {
        const int id = r.type_id;
        records_[id] = std::move(r);
    }
    void set(int type_id, Label label, std::string form = {}, std::string timestamp = {}) {
        record({type_id, std::move(form), label, annotator_id_, std::move(timestamp)});
    }

    const std::map<int, LabelRecord>& records() const noexcept { return records_; }

    /// Binary labels only; skipped items are excluded.
    std::map<int, Label> labels() const {
        std::map<int, Label> out;
        for (const auto& [id, r] : records_)
            if (r.label) out[id] = *r.label;
        return out;
    }
    std::optional<Label> get(int type_id) const {
        auto it = records_.find(type_id);
        if (it == records_.end()) return std::nullopt;
        return it->second.label;
    }
    std::vector<int> skipped() const {
        std::vector<int> out;
        for (const auto& [id, r] : records_)
            if (!r.label) out.push_back(id);
        return out;
    }
    bool answered(int type_id) const { return records_.count(type_id) > 0; }
    std::size_t size() const { return records_.size(); }

private:
    std::string annotator_id_;
    std::map<int, LabelRecord> records_;
};

/// JSON-lines, one record per decision, ordered by type_id.
inline std::string labels_to_jsonl(const LabelSet& set) {
    std::string out;
    for (const auto& [id, r] : set.records()) {
        nlohmann::json j{{"type_id", r.type_id},
                         {"form", r.form},
                         {"label", r.label ? nlohmann::json(std::string(label_name(*r.label))) : nlohmann::json(nullptr)},
                         {"annotator_id", r.annotator_id},
                         {"timestamp", r.timestamp}};
        out += j.dump() + '\n';
    }
    return out;
}

inline LabelSet labels_from_jsonl(std::string_view text, const std::string& origin = "<memory>") {
    LabelSet set;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        auto where = origin + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            throw CorruptLabelFile(where + ": not valid JSON");
        }
        try {
            LabelRecord r;
            r.type_id = j.at("type_id").get<int>();
            r.form = j.value("form", std::string{});
            const auto& l = j.at("label");
            if (!l.is_null()) {
                const auto s = l.get<std::string>();
                if (s == "iCR") r.label = Label::ICR;
                else if (s == "notICR") r.label = Label::NotICR;
                else throw CorruptLabelFile(where + ": unknown label '" + s + "'");
            }
            r.annotator_id = j.value("annotator_id", std::string{});
            r.timestamp = j.value("timestamp", std::string{});
            if (r.type_id < 0) throw CorruptLabelFile(where + ": negative type_id");
            if (set.answered(r.type_id)) throw CorruptLabelFile(where + ": duplicate type_id " + std::to_string(r.type_id));
            if (set.annotator_id().empty()) set.set_annotator_id(r.annotator_id);
            set.record(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw CorruptLabelFile(where + ": " + e.what());
        }
    }
    return set;
}

inline LabelSet read_labels(const std::filesystem::path& path) { return labels_from_jsonl(read_file(path), path.string()); }

inline void write_labels(const std::filesystem::path& path, const LabelSet& set) {
    write_file_atomic(path, labels_to_jsonl(set));
}

// ---------------------------------------------------------------------------
// Interactive labeling
// ---------------------------------------------------------------------------

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct SessionOptions {
    std::string annotator_id = "annotator";
    bool resume = false;
    /// Present previously skipped items again.
    bool revisit_skipped = false;
    std::function<std::string()> clock = utc_timestamp;
};

struct SessionResult {
    int presented = 0;
    bool completed = false;
    int icr = 0;
    int not_icr = 0;
    int skipped = 0;
    int remaining = 0;
};

/// Terminal loop asking the binary iCR question for every utterance type.
///
/// Answers: y (iCR), n (not iCR), s (skip), q (quit). Every decision is persisted
/// immediately with an atomic rewrite, so the session can be resumed at the first
/// unanswered item. A corrupt existing file is never overwritten.
inline SessionResult label_session(const std::vector<UtteranceType>& types, const std::filesystem::path& label_file,
                                   std::istream& in, std::ostream& out, const SessionOptions& options = {}) {
    LabelSet set(options.annotator_id);
    if (std::filesystem::exists(label_file)) {
        if (!options.resume)
            throw Error("label file '" + label_file.string() + "' already exists; resume the session instead");
        set = read_labels(label_file);  // throws CorruptLabelFile, leaving the file untouched
        set.set_annotator_id(options.annotator_id);
        for (const auto& [id, r] : set.records())
            if (id >= static_cast<int>(types.size()) || types[static_cast<std::size_t>(id)].form != r.form)
                throw CorruptLabelFile("label file '" + label_file.string() + "' does not match the type inventory at type " +
                                       std::to_string(id));
    }

    auto pending = [&](const UtteranceType& t) {
        auto it = set.records().find(t.type_id);
        if (it == set.records().end()) return true;
        return options.revisit_skipped && !it->second.label;
    };

    SessionResult result;
    std::size_t total_pending = 0;
    for (const auto& t : types) total_pending += pending(t);

    bool quit = false;
    std::size_t shown = 0;
    for (const auto& t : types) {
        if (quit) break;
        if (!pending(t)) continue;
        ++shown;
        out << "\n[" << shown << "/" << total_pending << "] type " << t.type_id << " (" << t.occurrences.size()
            << " occurrence" << (t.occurrences.size() == 1 ? "" : "s") << ")\n";
        if (t.context) out << "  teller: " << t.context->preceding_teller << "\n";
        out << "  drawer: " << t.form << "\n";
        if (t.context && t.context->following_teller) out << "  teller: " << *t.context->following_teller << "\n";
        ++result.presented;
        while (true) {
            out << "Is this an instruction clarification request? [y]es/[n]o/[s]kip/[q]uit: " << std::flush;
            std::string answer;
            if (!std::getline(in, answer)) {
                quit = true;
                break;
            }
            auto tok = tokenize(answer);
            const std::string a = tok.empty() ? "" : tok.front();
            std::optional<Label> label;
            if (a == "y" || a == "yes" || a == "1") label = Label::ICR;
            else if (a == "n" || a == "no" || a == "0") label = Label::NotICR;
            else if (a == "q" || a == "quit") { quit = true; break; }
            else if (a != "s" && a != "skip") {
                out << "unrecognized answer '" << answer << "'\n";
                continue;
            }
            set.record({t.type_id, t.form, label, options.annotator_id, options.clock()});
            write_labels(label_file, set);
            break;
        }
        if (quit) --result.presented;
    }

    for (const auto& t : types) {
        auto l = set.get(t.type_id);
        if (!set.answered(t.type_id)) ++result.remaining;
        else if (!l) ++result.skipped;
        else if (*l == Label::ICR) ++result.icr;
        else ++result.not_icr;
    }
    result.completed = result.remaining == 0 && result.skipped == 0;
    out << "\n" << (result.completed ? "Labeling complete. " : "Session ended. ") << "iCR: " << result.icr
        << ", not iCR: " << result.not_icr << ", skipped: " << result.skipped << ", remaining: " << result.remaining
        << "\n";
    return result;
}

// ---------------------------------------------------------------------------
// Agreement
// ---------------------------------------------------------------------------

namespace detail {

inline void check_same_inventory(const std::map<int, Label>& a, const std::map<int, Label>& b) {
    if (a.size() != b.size())
        throw InventoryMismatch("label sets cover " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                                " types");
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib)
        if (ia->first != ib->first)
            throw InventoryMismatch("label sets differ at type " + std::to_string(std::min(ia->first, ib->first)));
    if (a.empty()) throw InventoryMismatch("label sets are empty");
}

/// kappa over items with nonnegative weights.
inline double weighted_kappa(const std::map<int, Label>& a, const std::map<int, Label>& b,
                             const std::function<double(int)>& weight) {
    double n = 0, agree = 0, a_yes = 0, b_yes = 0;
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
        const double w = weight(ia->first);
        n += w;
        agree += ia->second == ib->second ? w : 0.0;
        a_yes += ia->second == Label::ICR ? w : 0.0;
        b_yes += ib->second == Label::ICR ? w : 0.0;
    }
    const double po = agree / n;
    const double pa = a_yes / n, pb = b_yes / n;
    const double pe = pa * pb + (1 - pa) * (1 - pb);
    if (pe >= 1.0) throw DegenerateMarginals();
    return (po - pe) / (1 - pe);
}

}  // namespace detail

/// Cohen's kappa over the labeled utterance types.
inline double cohen_kappa(const LabelSet& a, const LabelSet& b) {
    const auto la = a.labels(), lb = b.labels();
    detail::check_same_inventory(la, lb);
    return detail::weighted_kappa(la, lb, [](int) { return 1.0; });
}

struct AgreementReport {
    double kappa_types = 0.0;
    double kappa_utterances = 0.0;
    std::size_t n_types = 0;
    std::size_t n_utterances = 0;
    double disagreement_types = 0.0;       // fraction of types
    double disagreement_utterances = 0.0;  // fraction of utterance occurrences
};

/// Agreement at both granularities: per type (as annotated) and per utterance occurrence.
inline AgreementReport agreement_report(const LabelSet& a, const LabelSet& b, const std::vector<UtteranceType>& types) {
    const auto la = a.labels(), lb = b.labels();
    detail::check_same_inventory(la, lb);
    auto occurrences = [&](int id) {
        if (id < 0 || id >= static_cast<int>(types.size()))
            throw InventoryMismatch("type " + std::to_string(id) + " not in the type inventory");
        return static_cast<double>(types[static_cast<std::size_t>(id)].occurrences.size());
    };
    AgreementReport r;
    r.kappa_types = detail::weighted_kappa(la, lb, [](int) { return 1.0; });
    r.kappa_utterances = detail::weighted_kappa(la, lb, occurrences);
    double dis_t = 0, dis_u = 0, n_u = 0;
    for (auto ia = la.begin(), ib = lb.begin(); ia != la.end(); ++ia, ++ib) {
        const double occ = occurrences(ia->first);
        n_u += occ;
        if (ia->second != ib->second) {
            ++dis_t;
            dis_u += occ;
        }
    }
    r.n_types = la.size();
    r.n_utterances = static_cast<std::size_t>(n_u);
    r.disagreement_types = dis_t / static_cast<double>(la.size());
    r.disagreement_utterances = n_u > 0 ? dis_u / n_u : 0.0;
    return r;
}

enum class ResolvePolicy { PreferSecond, PreferFirst };

inline LabelSet resolve(const LabelSet& a, const LabelSet& b, ResolvePolicy policy = ResolvePolicy::PreferSecond) {
    const auto la = a.labels(), lb = b.labels();
    detail::check_same_inventory(la, lb);
    LabelSet out("resolved:" + a.annotator_id() + "+" + b.annotator_id());
    const LabelSet& winner = policy == ResolvePolicy::PreferSecond ? b : a;
    for (const auto& [id, rec] : winner.records()) {
        if (!rec.label) continue;
        LabelRecord r = rec;
        r.annotator_id = out.annotator_id();
        out.record(std::move(r));
    }
    return out;
}

/// Assigns every drawer utterance the label of its type.
inline UtteranceLabels project_labels(const LabelSet& final_labels, const std::vector<UtteranceType>& types) {
    std::vector<int> missing;
    UtteranceLabels out;
    for (const auto& t : types) {
        auto it = final_labels.records().find(t.type_id);
        if (it == final_labels.records().end() || !it->second.label) {
            missing.push_back(t.type_id);
            continue;
        }
        if (!it->second.form.empty() && it->second.form != t.form)
            throw InventoryMismatch("label for type " + std::to_string(t.type_id) + " has form '" + it->second.form +
                                    "', inventory has '" + t.form + "'");
        for (const auto& pos : t.occurrences) {
            if (!out.emplace(pos, *it->second.label).second)
                throw InventoryMismatch("utterance position " + pos.dialogue_id + "/" + std::to_string(pos.round) +
                                        " labeled twice");
        }
    }
    if (!missing.empty()) throw UnlabeledType(std::move(missing));
    return out;
}

inline std::string utterance_labels_tsv(const UtteranceLabels& labels) {
    std::string out = "dialogue_id\tround\tlabel\n";
    for (const auto& [pos, l] : labels) out += pos.dialogue_id + '\t' + std::to_string(pos.round) + '\t' + std::string(label_name(l)) + '\n';
    return out;
}

}  // namespace icr
