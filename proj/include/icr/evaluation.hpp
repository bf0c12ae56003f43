#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "icr/error.hpp"
#include "icr/util.hpp"

namespace icr {

inline constexpr double kDecisionThreshold = 0.5;

namespace detail {

/// Indices ordered by descending score (stable for equal scores).
inline std::vector<std::size_t> descending_order(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

inline void check_sizes(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw Error("scores and labels differ in length (" + std::to_string(scores.size()) + " vs " +
                    std::to_string(labels.size()) + ")");
}

}  // namespace detail

/// AP = sum_k (R_k - R_{k-1}) P_k over descending distinct-score thresholds; equal scores
/// form a single threshold step.
inline double average_precision(std::span<const double> scores, std::span<const int> labels) {
    detail::check_sizes(scores, labels);
    const auto positives = std::count(labels.begin(), labels.end(), 1);
    if (positives == 0) throw NoPositives();
    const auto order = detail::descending_order(scores);
    double ap = 0.0, prev_recall = 0.0;
    long tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (labels[order[i]] == 1 ? tp : fp) += 1;
        const bool group_end = i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]];
        if (!group_end) continue;
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

struct BinaryCounts {
    long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline BinaryCounts confusion(std::span<const double> scores, std::span<const int> labels,
                              double threshold = kDecisionThreshold) {
    detail::check_sizes(scores, labels);
    BinaryCounts c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        const bool truth = labels[i] == 1;
        if (pred && truth) ++c.tp;
        else if (pred) ++c.fp;
        else if (truth) ++c.fn;
        else ++c.tn;
    }
    return c;
}

/// Unweighted mean of per-class F1; a class with no true and no predicted members scores 1.
inline double macro_f1(const BinaryCounts& c) {
    auto f1 = [](long tp, long fp, long fn) {
        const long denom = 2 * tp + fp + fn;
        return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    };
    return 0.5 * (f1(c.tp, c.fp, c.fn) + f1(c.tn, c.fn, c.fp));
}

inline double macro_f1(std::span<const double> scores, std::span<const int> labels, double threshold = kDecisionThreshold) {
    return macro_f1(confusion(scores, labels, threshold));
}

struct PrPoint {
    double threshold;
    double recall;
    double precision;
};

struct RocPoint {
    double threshold;
    double fpr;
    double tpr;
};

struct Curves {
    std::vector<PrPoint> pr;
    std::vector<RocPoint> roc;  // starts at (0,0), ends at (1,1)
};

/// One point per distinct score threshold (predict positive when score >= threshold).
inline Curves curves(std::span<const double> scores, std::span<const int> labels) {
    detail::check_sizes(scores, labels);
    const auto positives = std::count(labels.begin(), labels.end(), 1);
    const auto negatives = static_cast<long>(labels.size()) - positives;
    const auto order = detail::descending_order(scores);
    Curves c;
    c.roc.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    long tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (labels[order[i]] == 1 ? tp : fp) += 1;
        if (i + 1 != order.size() && scores[order[i + 1]] == scores[order[i]]) continue;
        const double t = scores[order[i]];
        const double tpr = positives ? static_cast<double>(tp) / positives : 0.0;
        const double fpr = negatives ? static_cast<double>(fp) / negatives : 0.0;
        c.pr.push_back({t, tpr, static_cast<double>(tp) / static_cast<double>(tp + fp)});
        c.roc.push_back({t, fpr, tpr});
    }
    return c;
}

/// AP per round index; rounds without positives map to nullopt.
inline std::map<int, std::optional<double>> per_round_ap(std::span<const double> scores, std::span<const int> labels,
                                                         std::span<const int> rounds) {
    detail::check_sizes(scores, labels);
    if (rounds.size() != scores.size()) throw Error("rounds and scores differ in length");
    std::map<int, std::pair<std::vector<double>, std::vector<int>>> groups;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        groups[rounds[i]].first.push_back(scores[i]);
        groups[rounds[i]].second.push_back(labels[i]);
    }
    std::map<int, std::optional<double>> out;
    for (auto& [r, g] : groups) {
        if (std::count(g.second.begin(), g.second.end(), 1) == 0) out[r] = std::nullopt;
        else out[r] = average_precision(g.first, g.second);
    }
    return out;
}

struct EvalReport {
    std::string split;
    std::size_t n = 0;
    double positive_fraction = 0.0;
    double threshold = kDecisionThreshold;
    std::optional<double> ap;  // absent without positives
    double macro_f1 = 0.0;
    Curves curves;
    std::map<int, std::optional<double>> per_round;
};

inline EvalReport evaluate(std::span<const double> scores, std::span<const int> labels, std::span<const int> rounds,
                           std::string split = {}) {
    EvalReport r;
    r.split = std::move(split);
    r.n = scores.size();
    const auto positives = std::count(labels.begin(), labels.end(), 1);
    r.positive_fraction = r.n ? static_cast<double>(positives) / static_cast<double>(r.n) : 0.0;
    if (positives > 0) r.ap = average_precision(scores, labels);
    r.macro_f1 = macro_f1(scores, labels, r.threshold);
    r.curves = curves(scores, labels);
    if (!rounds.empty()) r.per_round = per_round_ap(scores, labels, rounds);
    return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json j{{"split", r.split},
                     {"n", r.n},
                     {"positive_fraction", r.positive_fraction},
                     {"threshold", r.threshold},
                     {"ap", opt(r.ap)},
                     {"macro_f1", r.macro_f1}};
    for (auto& [round, ap] : r.per_round) j["per_round_ap"].push_back({{"round", round}, {"ap", opt(ap)}});
    return j;
}

inline std::string curves_tsv(const Curves& c) {
    std::string out = "curve\tthreshold\tx\ty\n";
    for (const auto& p : c.pr) out += "pr\t" + format_number(p.threshold) + '\t' + format_number(p.recall) + '\t' + format_number(p.precision) + '\n';
    for (const auto& p : c.roc) out += "roc\t" + format_number(p.threshold) + '\t' + format_number(p.fpr) + '\t' + format_number(p.tpr) + '\n';
    return out;
}

struct RandomBaseline {
    double ap = 0.0;
    double macro_f1 = 0.0;
};

/// AP of a random scorer is the prevalence; mF1 is averaged over seeded Bernoulli(prevalence) predictors.
inline RandomBaseline random_baseline(std::span<const int> labels, std::uint64_t seed, int simulations = 10000) {
    RandomBaseline b;
    if (labels.empty()) return b;
    const double prevalence = static_cast<double>(std::count(labels.begin(), labels.end(), 1)) / static_cast<double>(labels.size());
    b.ap = prevalence;
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(prevalence);
    double sum = 0.0;
    for (int s = 0; s < simulations; ++s) {
        BinaryCounts c;
        for (int y : labels) {
            const bool pred = coin(rng);
            if (pred && y == 1) ++c.tp;
            else if (pred) ++c.fp;
            else if (y == 1) ++c.fn;
            else ++c.tn;
        }
        sum += macro_f1(c);
    }
    b.macro_f1 = sum / simulations;
    return b;
}

// ---------------------------------------------------------------------------
// Results table
// ---------------------------------------------------------------------------

struct ResultCell {
    std::optional<double> ap;
    std::optional<double> macro_f1;
};

/// (method, split, task) -> metrics; methods and splits are rendered in insertion order.
class ResultsTable {
public:
    void set(const std::string& method, const std::string& split, const std::string& task, ResultCell cell) {
        if (std::find(methods_.begin(), methods_.end(), method) == methods_.end()) methods_.push_back(method);
        if (std::find(splits_.begin(), splits_.end(), split) == splits_.end()) splits_.push_back(split);
        if (std::find(tasks_.begin(), tasks_.end(), task) == tasks_.end()) tasks_.push_back(task);
        cells_[{method, split, task}] = cell;
    }

    std::optional<ResultCell> get(const std::string& method, const std::string& split, const std::string& task) const {
        auto it = cells_.find({method, split, task});
        if (it == cells_.end()) return std::nullopt;
        return it->second;
    }

    /// Aligned text; values printed as ".347", missing cells as "-".
    std::string render() const {
        auto fmt = [](const std::optional<double>& v) -> std::string {
            if (!v) return "-";
            std::string s = format_fixed(*v, 3);
            if (s.rfind("0.", 0) == 0) s.erase(0, 1);
            else if (s.rfind("-0.", 0) == 0) s.erase(1, 1);
            return s;
        };
        std::vector<std::vector<std::string>> rows;
        std::vector<std::string> h1{"", ""}, h2{"method", "split"};
        for (const auto& t : tasks_) {
            h1.push_back(t);
            h1.push_back("");
            h2.push_back("AP");
            h2.push_back("mF1");
        }
        rows.push_back(h1);
        rows.push_back(h2);
        for (const auto& m : methods_)
            for (const auto& s : splits_) {
                std::vector<std::string> row{m, s};
                for (const auto& t : tasks_) {
                    auto c = get(m, s, t);
                    row.push_back(c ? fmt(c->ap) : "-");
                    row.push_back(c ? fmt(c->macro_f1) : "-");
                }
                rows.push_back(row);
            }
        std::vector<std::size_t> width(rows.front().size(), 0);
        for (const auto& r : rows)
            for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
        std::string out;
        for (const auto& r : rows) {
            std::string line;
            for (std::size_t i = 0; i < r.size(); ++i) {
                line += r[i] + std::string(width[i] - r[i].size(), ' ');
                if (i + 1 < r.size()) line += "  ";
            }
            while (!line.empty() && line.back() == ' ') line.pop_back();
            out += line + '\n';
        }
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::array();
        for (auto& [k, c] : cells_) {
            auto [m, s, t] = k;
            j.push_back({{"method", m},
                         {"split", s},
                         {"task", t},
                         {"ap", c.ap ? nlohmann::json(*c.ap) : nlohmann::json(nullptr)},
                         {"macro_f1", c.macro_f1 ? nlohmann::json(*c.macro_f1) : nlohmann::json(nullptr)}});
        }
        return j;
    }

private:
    std::vector<std::string> methods_, splits_, tasks_;
    std::map<std::tuple<std::string, std::string, std::string>, ResultCell> cells_;
};

}  // namespace icr
