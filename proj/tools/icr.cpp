// Command-line entry point. Every subcommand writes its outputs and a manifest.json into
// one output directory: --out, else $ICR_OUTPUT_DIR/<subcommand>, else ./icr-out/<subcommand>.

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "icr/icr.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace icr;

namespace {

constexpr std::string_view kVersion = "1.0.0";

/// A usage problem detected after parsing (bad enum value, missing store file, ...).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Validation found problems; the report has already been printed.
struct ValidationFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

json file_provenance(const fs::path& p) {
    const auto bytes = read_file(p);
    return {{"path", p.string()}, {"bytes", bytes.size()}, {"fnv1a64", hex64(fnv1a64(bytes))}};
}

class Run {
public:
    Run(std::string command, const std::string& out_flag) : command_(std::move(command)) {
        if (!out_flag.empty()) dir_ = out_flag;
        else if (const char* env = std::getenv("ICR_OUTPUT_DIR"); env && *env) dir_ = fs::path(env) / command_;
        else dir_ = fs::path("icr-out") / command_;
        fs::create_directories(dir_);
        manifest_ = {{"tool", "icr"}, {"version", kVersion}, {"command", command_}};
        config(json::object());
    }

    const fs::path& dir() const { return dir_; }
    json& manifest() { return manifest_; }

    void input(const fs::path& p) { manifest_["inputs"].push_back(file_provenance(p)); }
    void store(const fs::path& p, const EmbeddingStore& s) {
        auto j = file_provenance(p);
        j["dim"] = s.dim();
        j["records"] = s.size();
        j["fallback"] = s.fallback();
        manifest_["stores"].push_back(j);
    }
    void seed(std::uint64_t base, std::initializer_list<std::string_view> stages) {
        manifest_["seed"] = base;
        for (auto s : stages) manifest_["derived_seeds"][std::string(s)] = derive_seed(base, s);
    }
    void config(const json& cfg) {
        manifest_["config"] = cfg;
        manifest_["config_hash"] = hex64(fnv1a64(cfg.dump()));
    }
    void write(const std::string& name, std::string_view contents) {
        write_file_atomic(dir_ / name, contents);
        manifest_["outputs"].push_back(name);
    }
    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

    ~Run() {
        try {
            write_file_atomic(dir_ / "manifest.json", manifest_.dump(2) + "\n");
        } catch (...) {
        }
    }

private:
    std::string command_;
    fs::path dir_;
    json manifest_;
};

// ---------------------------------------------------------------------------
// Shared option groups
// ---------------------------------------------------------------------------

struct CorpusArgs {
    std::string corpus;
    std::string schema;
    std::vector<std::string> splits;

    void add(CLI::App* app) {
        app->add_option("--corpus", corpus, "Dialogue corpus (JSON)")->required()->check(CLI::ExistingFile);
        app->add_option("--schema", schema, "JSON file overriding corpus field names")->check(CLI::ExistingFile);
        app->add_option("--splits", splits, "Splits to load (train, val, test)")->delimiter(',');
    }

    LoadOptions options(bool validate = true) const {
        LoadOptions o;
        o.validate = validate;
        if (!schema.empty()) o.schema = CorpusSchema::from_json(json::parse(read_file(schema)));
        if (!splits.empty()) {
            o.splits.clear();
            for (const auto& s : splits) {
                auto sp = split_from_name(s);
                if (!sp) throw UsageError("--splits: unknown split '" + s + "'");
                o.splits.insert(*sp);
            }
        }
        return o;
    }

    Corpus load(Run* run = nullptr, bool validate = true) const {
        if (run) run->input(corpus);
        return load_corpus(corpus, options(validate));
    }
};

/// Type-level label file projected onto every drawer utterance of the corpus.
UtteranceLabels project_file(const Corpus& corpus, const std::string& labels_path, Run& run,
                             std::vector<UtteranceType>* types_out = nullptr, LabelSet* set_out = nullptr) {
    run.input(labels_path);
    auto types = collapse_types(corpus);
    auto set = read_labels(labels_path);
    auto projected = project_labels(set, types);
    if (types_out) *types_out = std::move(types);
    if (set_out) *set_out = std::move(set);
    return projected;
}

Task parse_task(const std::string& s) {
    if (s == "1" || s == "task1") return Task::Task1;
    if (s == "2" || s == "task2") return Task::Task2;
    throw UsageError("--task: expected 1 or 2, got '" + s + "'");
}

ContextFilter parse_filter(const std::string& s) {
    if (s == "both") return ContextFilter::Both;
    if (s == "teller-only") return ContextFilter::TellerOnly;
    if (s == "drawer-only") return ContextFilter::DrawerOnly;
    throw UsageError("--context-filter: expected both, teller-only or drawer-only, got '" + s + "'");
}

std::string context_store_name(ContextFilter f) {
    switch (f) {
        case ContextFilter::Both: return "ctx.icre";
        case ContextFilter::TellerOnly: return "ctx_teller_only.icre";
        case ContextFilter::DrawerOnly: return "ctx_drawer_only.icre";
    }
    return {};
}

struct ModelConfig {
    ClassifierConfig classifier;
    TrainConfig train;

    json to_json() const { return {{"classifier", classifier.to_json()}, {"train", train.to_json()}}; }
};

/// "default" or a JSON file {"classifier": {...}, "train": {...}}; missing keys keep defaults.
ModelConfig load_model_config(const std::string& path) {
    ModelConfig c;
    if (path.empty() || path == "default") return c;
    if (!fs::exists(path)) throw UsageError("--config: no such file '" + path + "'");
    const auto j = json::parse(read_file(path));
    if (j.contains("classifier")) c.classifier = ClassifierConfig::from_json(j["classifier"]);
    if (j.contains("train")) c.train = TrainConfig::from_json(j["train"]);
    return c;
}

struct LoadedStores {
    EmbeddingStore image, message, context;
    InputStores view() const { return {&image, &message, &context}; }
};

LoadedStores load_stores(const fs::path& dir, const ClassifierConfig& cfg, ContextFilter filter, Run& run) {
    LoadedStores s;
    auto load = [&](const std::string& name, std::size_t dim, EmbeddingStore& into) {
        const auto p = dir / name;
        if (!fs::exists(p)) throw UsageError("--stores: missing " + p.string());
        into = read_store(p, dim);
        run.store(p, into);
    };
    if (cfg.use_image) load("img.icre", static_cast<std::size_t>(cfg.image_dim), s.image);
    if (cfg.use_message) load("msg.icre", static_cast<std::size_t>(cfg.message_dim), s.message);
    if (cfg.use_context) load(context_store_name(filter), static_cast<std::size_t>(cfg.context_dim), s.context);
    return s;
}

std::string scores_tsv(const std::vector<Datapoint>& dps, const std::vector<double>& scores) {
    std::string out = "dialogue_id\tround\tsplit\tlabel\tscore\n";
    for (std::size_t i = 0; i < dps.size(); ++i)
        out += dps[i].dialogue_id + '\t' + std::to_string(dps[i].round) + '\t' + std::string(split_name(dps[i].split)) + '\t' +
               (dps[i].positive() ? "1" : "0") + '\t' + format_number(scores[i]) + '\n';
    return out;
}

struct ScoreFile {
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<int> rounds;
};

ScoreFile read_scores(const fs::path& path) {
    ScoreFile f;
    int line_no = 0;
    for (const auto& line : split_fields(read_file(path), '\n')) {
        ++line_no;
        if (line.empty() || line_no == 1) continue;
        const auto cols = split_fields(line, '\t');
        if (cols.size() != 5) throw Error(path.string() + ":" + std::to_string(line_no) + ": expected 5 columns");
        try {
            f.rounds.push_back(std::stoi(cols[1]));
            f.labels.push_back(std::stoi(cols[3]));
            f.scores.push_back(std::stod(cols[4]));
        } catch (const std::exception&) {
            throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed number");
        }
    }
    return f;
}

std::vector<int> labels_of(const std::vector<Datapoint>& dps) {
    std::vector<int> y;
    for (const auto& d : dps) y.push_back(d.positive() ? 1 : 0);
    return y;
}
std::vector<int> rounds_of(const std::vector<Datapoint>& dps) {
    std::vector<int> r;
    for (const auto& d : dps) r.push_back(d.round);
    return r;
}

// ---------------------------------------------------------------------------
// Logistic baseline persistence
// ---------------------------------------------------------------------------

struct Baseline {
    Task task = Task::Task2;
    TellerVocabulary vocab;
    ContentWords content;
    LogisticModel model;

    Eigen::SparseMatrix<double> matrix(const std::vector<Datapoint>& dps) const {
        std::vector<Eigen::Triplet<double>> trips;
        std::size_t dim = task == Task::Task1 ? 1 + vocab.size() : 2;
        for (std::size_t i = 0; i < dps.size(); ++i)
            for (auto [c, v] : featurize(dps[i], vocab, content).nonzeros) trips.emplace_back(static_cast<int>(i), c, v);
        Eigen::SparseMatrix<double> x(static_cast<Eigen::Index>(dps.size()), static_cast<Eigen::Index>(dim));
        x.setFromTriplets(trips.begin(), trips.end());
        return x;
    }

    json to_json() const {
        std::vector<double> w(model.weights.data(), model.weights.data() + model.weights.size());
        return {{"kind", "logistic"},
                {"task", task_name(task)},
                {"vocabulary", vocab.tokens()},
                {"content_words", content.words()},
                {"weights", w},
                {"intercept", model.intercept},
                {"iterations", model.iterations},
                {"converged", model.converged}};
    }

    static Baseline from_json(const json& j) {
        Baseline b;
        b.task = parse_task(j.at("task").get<std::string>());
        b.vocab = TellerVocabulary::from_tokens(j.at("vocabulary").get<std::vector<std::string>>());
        b.content = ContentWords(j.at("content_words").get<std::set<std::string>>());
        const auto w = j.at("weights").get<std::vector<double>>();
        b.model.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        b.model.intercept = j.at("intercept").get<double>();
        return b;
    }
};

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void print_violations(const ValidationReport& rep) {
    for (const auto& v : rep.violations)
        std::cout << v.dialogue_id << (v.round ? " round " + std::to_string(*v.round) : std::string()) << ": " << v.message << "\n";
}

std::string corpus_stats_text(const CorpusStatistics& s) {
    std::ostringstream os;
    os << "split\tdialogues\tmean_rounds\tmean_teller_len\tmean_drawer_len\twith_peek\tmean_final_score\n";
    for (const auto& sp : s.splits)
        os << split_name(sp.split) << '\t' << sp.dialogues << '\t' << format_fixed(sp.mean_rounds, 2) << '\t'
           << format_fixed(sp.mean_teller_len, 2) << '\t' << format_fixed(sp.mean_drawer_len, 2) << '\t' << sp.with_peek
           << '\t' << format_fixed(sp.mean_final_score, 2) << '\n';
    os << "teller_vocab\t" << s.teller_vocab << "\ndrawer_vocab\t" << s.drawer_vocab << '\n';
    return os.str();
}

std::string types_jsonl(const std::vector<UtteranceType>& types) {
    std::string out;
    for (const auto& t : types) {
        json j{{"type_id", t.type_id}, {"form", t.form}, {"count", t.occurrences.size()}, {"singleton", t.is_singleton}};
        if (t.context) {
            j["preceding_teller"] = t.context->preceding_teller;
            j["following_teller"] = t.context->following_teller ? json(*t.context->following_teller) : json(nullptr);
        }
        out += j.dump() + '\n';
    }
    return out;
}

std::string descriptive_text(const DescriptiveStats& d) {
    std::ostringstream os;
    os << "scope\tdialogues\trounds\ticrs\ticr_percent\tmean_per_dialogue\tstd_per_dialogue\n";
    auto row = [&](const char* name, const ScopeStats& s) {
        os << name << '\t' << s.dialogues << '\t' << s.rounds << '\t' << s.icrs << '\t' << format_fixed(s.icr_percent, 2)
           << '\t' << format_fixed(s.mean_icrs_per_dialogue, 2) << '\t' << format_fixed(s.std_icrs_per_dialogue, 2) << '\n';
    };
    row("all", d.all);
    row("with_icrs", d.with_icrs);
    row("until_peek", d.until_peek);
    return os.str();
}

json label_distribution_json(const Corpus& corpus, const UtteranceLabels& labels) {
    const auto dps = build_task1(corpus, labels);
    json j = json::object();
    for (Split s : {Split::Train, Split::Val, Split::Test}) {
        long n = 0, pos = 0;
        for (const auto& d : dps)
            if (d.split == s) ++n, pos += d.positive();
        j[std::string(split_name(s))] = {{"datapoints", n}, {"positives", pos},
                                         {"positive_percent", n ? 100.0 * static_cast<double>(pos) / static_cast<double>(n) : 0.0}};
    }
    return j;
}

/// Every drawer utterance labeled notICR, for commands that need datapoints but no labels.
UtteranceLabels placeholder_labels(const Corpus& corpus) {
    UtteranceLabels l;
    for (const auto& d : corpus.dialogues)
        for (const auto& r : d.rounds)
            if (r.drawer) l[{d.id, r.index}] = Label::NotICR;
    return l;
}

/// Task 1 sees the drawer's canvas before round i acts; Task 2 the source scene.
const Scene& scene_for(const Dialogue& d, int round, Task task) {
    static const Scene empty;
    if (task == Task::Task2) return d.source;
    if (round == 0) return empty;
    return d.rounds[static_cast<std::size_t>(round - 1)].scene_after;
}

struct TrainedModel {
    std::string kind;  // "neural" or "logistic"
    std::optional<Checkpoint> neural;
    std::optional<Baseline> baseline;
};

TrainedModel load_model(const fs::path& path) {
    TrainedModel m;
    const auto bytes = read_file(path);
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kCheckpointMagic, 4) == 0) {
        m.kind = "neural";
        m.neural = decode_checkpoint(bytes);
    } else {
        m.kind = "logistic";
        json j;
        try {
            j = json::parse(bytes);
        } catch (const json::exception&) {
            throw Error(path.string() + ": neither a checkpoint nor a baseline model");
        }
        m.baseline = Baseline::from_json(j);
    }
    return m;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Instruction clarification request toolkit"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string out;
    std::uint64_t seed = TrainConfig{}.seed;
    auto add_out = [&](CLI::App* c) { c->add_option("--out", out, "Output directory"); };
    auto add_seed = [&](CLI::App* c) { c->add_option("--seed", seed, "Base seed; every stage derives its own"); };

    CorpusArgs corpus_args;
    std::string labels, labels_b, task_arg = "2", filter_arg = "both", stores_dir, config_arg = "default", model_kind = "neural";
    std::string checkpoint, split_arg = "test", annotator = "annotator", policy = "prefer-second", content_file;
    std::vector<std::string> cells;
    bool resume = false, revisit = false, with_random = false;
    int epochs = 0, top = 20, text_dim = static_cast<int>(kTextEmbeddingDim), image_dim = static_cast<int>(kImageEmbeddingDim);
    std::uint64_t resamples = 9999;
    double threshold = kDecisionThreshold;
    SynthOptions synth;
    std::string labeler = "planted";

    auto* ingest = app.add_subcommand("ingest", "Load a corpus and write corpus statistics and the round table");
    auto* validate_cmd = app.add_subcommand("validate", "Check corpus invariants (exit 1 on violations)");
    auto* collapse = app.add_subcommand("collapse", "Group drawer utterances into types");
    auto* annotate = app.add_subcommand("annotate", "Interactive type labeling on stdin");
    auto* agree = app.add_subcommand("agree", "Inter-annotator agreement");
    auto* project = app.add_subcommand("project", "Resolve two label sets and project onto utterances");
    auto* stats = app.add_subcommand("stats", "Descriptive iCR statistics");
    auto* dynamics = app.add_subcommand("dynamics", "Round dynamics around iCRs with permutation tests");
    auto* bigrams = app.add_subcommand("bigrams", "Initial bigrams and vocabulary partition of iCRs");
    auto* overlap = app.add_subcommand("overlap", "Overlap of val/test iCR forms with train");
    auto* build = app.add_subcommand("build-dataset", "Task datapoints and baseline features");
    auto* embed = app.add_subcommand("embed-fallback", "Hashing embeddings for every datapoint");
    auto* train_cmd = app.add_subcommand("train", "Train the neural classifier or the logistic baseline");
    auto* predict_cmd = app.add_subcommand("predict", "Score a split with a trained model");
    auto* evaluate_cmd = app.add_subcommand("evaluate", "AP, macro-F1 and curves for a score file");
    auto* ablate_cmd = app.add_subcommand("ablate", "Train every input ablation");
    auto* report = app.add_subcommand("report", "Results table from score files");
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus with planted labels");

    for (auto* c : {ingest, validate_cmd, collapse, annotate, agree, project, stats, dynamics, bigrams, overlap, build, embed,
                    train_cmd, predict_cmd, ablate_cmd})
        corpus_args.add(c);
    for (auto* c : {ingest, collapse, agree, project, stats, dynamics, bigrams, overlap, build, embed, train_cmd, predict_cmd,
                    evaluate_cmd, ablate_cmd, report, synth_cmd})
        add_out(c);
    for (auto* c : {stats, dynamics, bigrams, overlap, build, train_cmd, predict_cmd, ablate_cmd})
        c->add_option("--labels", labels, "Final type-level label file (JSONL)")->required()->check(CLI::ExistingFile);
    for (auto* c : {build, embed, train_cmd, predict_cmd, ablate_cmd}) c->add_option("--task", task_arg, "1 or 2");
    for (auto* c : {dynamics, embed, train_cmd, ablate_cmd, report, synth_cmd}) add_seed(c);
    for (auto* c : {train_cmd, predict_cmd, ablate_cmd})
        c->add_option("--stores", stores_dir, "Directory with img/msg/ctx embedding stores");
    for (auto* c : {train_cmd, ablate_cmd}) {
        c->add_option("--config", config_arg, "'default' or a JSON config file");
        c->add_option("--epochs", epochs, "Override the maximum number of epochs");
    }
    for (auto* c : {build, train_cmd, predict_cmd})
        c->add_option("--content-words", content_file, "Content-word list (one per line)")->check(CLI::ExistingFile);

    annotate->add_option("--labels", labels, "Label file to create or resume")->required();
    annotate->add_option("--annotator", annotator, "Annotator id");
    annotate->add_flag("--resume", resume, "Continue an existing label file");
    annotate->add_flag("--revisit-skipped", revisit, "Present skipped items again");
    agree->add_option("--a", labels, "First label file")->required()->check(CLI::ExistingFile);
    agree->add_option("--b", labels_b, "Second label file")->required()->check(CLI::ExistingFile);
    project->add_option("--a", labels, "First label file")->required()->check(CLI::ExistingFile);
    project->add_option("--b", labels_b, "Second label file (resolution pass)")->check(CLI::ExistingFile);
    project->add_option("--policy", policy, "prefer-second or prefer-first");
    dynamics->add_option("--resamples", resamples, "Permutation resamples");
    bigrams->add_option("--top", top, "Rows printed");
    build->add_option("--context-filter", filter_arg, "both, teller-only or drawer-only");
    embed->add_option("--text-dim", text_dim, "Text embedding dimension");
    embed->add_option("--image-dim", image_dim, "Image embedding dimension");
    train_cmd->add_option("--model", model_kind, "neural or logistic");
    predict_cmd->add_option("--checkpoint", checkpoint, "Model file from train")->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--split", split_arg, "train, val or test");
    evaluate_cmd->add_option("--scores", checkpoint, "Score file from predict")->required()->check(CLI::ExistingFile);
    evaluate_cmd->add_option("--threshold", threshold, "Decision threshold for macro-F1");
    report->add_option("--cell", cells, "method,task,split,scores.tsv (repeatable)")->required();
    report->add_flag("--random", with_random, "Add the random-baseline row");
    synth_cmd->add_option("--train", synth.train_dialogues, "Training dialogues");
    synth_cmd->add_option("--val", synth.val_dialogues, "Validation dialogues");
    synth_cmd->add_option("--test", synth.test_dialogues, "Test dialogues");
    synth_cmd->add_option("--icr-rate", synth.icr_rate, "Probability a drawer utterance is an iCR");
    synth_cmd->add_option("--labeler", labeler, "planted or content-words");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*ingest) {
            Run run("ingest", out);
            const auto corpus = corpus_args.load(&run);
            const auto s = corpus_statistics(corpus);
            run.write_json("corpus_stats.json", to_json(s));
            run.write("corpus_stats.tsv", corpus_stats_text(s));
            run.write("round_table.tsv", round_table_tsv(round_table(corpus)));
            std::cout << corpus_stats_text(s);
        } else if (*validate_cmd) {
            const auto corpus = corpus_args.load(nullptr, false);
            const auto rep = validate(corpus);
            print_violations(rep);
            if (!rep.ok()) throw ValidationFailed(std::to_string(rep.violations.size()) + " violation(s)");
            std::cout << "ok: " << corpus.size() << " dialogues\n";
        } else if (*collapse) {
            Run run("collapse", out);
            const auto types = collapse_types(corpus_args.load(&run));
            run.write("types.jsonl", types_jsonl(types));
            json summary{{"types", types.size()}, {"singleton_share", singleton_share(types)}};
            run.write_json("summary.json", summary);
            std::cout << types.size() << " types, singleton share " << format_fixed(singleton_share(types), 4) << "\n";
        } else if (*annotate) {
            const auto types = collapse_types(corpus_args.load());
            SessionOptions o;
            o.annotator_id = annotator;
            o.resume = resume;
            o.revisit_skipped = revisit;
            const auto r = label_session(types, labels, std::cin, std::cout, o);
            std::cout << "presented " << r.presented << ", remaining " << r.remaining << "\n";
        } else if (*agree) {
            Run run("agree", out);
            const auto types = collapse_types(corpus_args.load(&run));
            run.input(labels);
            run.input(labels_b);
            const auto rep = agreement_report(read_labels(labels), read_labels(labels_b), types);
            const json j{{"kappa_types", rep.kappa_types},
                         {"kappa_utterances", rep.kappa_utterances},
                         {"n_types", rep.n_types},
                         {"n_utterances", rep.n_utterances},
                         {"disagreement_types", rep.disagreement_types},
                         {"disagreement_utterances", rep.disagreement_utterances}};
            run.write_json("agreement.json", j);
            std::cout << "kappa (types) " << format_fixed(rep.kappa_types, 4) << ", kappa (utterances) "
                      << format_fixed(rep.kappa_utterances, 4) << "\n";
        } else if (*project) {
            Run run("project", out);
            const auto types = collapse_types(corpus_args.load(&run));
            run.input(labels);
            LabelSet final_set = read_labels(labels);
            if (!labels_b.empty()) {
                run.input(labels_b);
                if (policy != "prefer-second" && policy != "prefer-first")
                    throw UsageError("--policy: expected prefer-second or prefer-first");
                final_set = resolve(final_set, read_labels(labels_b),
                                    policy == "prefer-first" ? ResolvePolicy::PreferFirst : ResolvePolicy::PreferSecond);
            }
            const auto u = project_labels(final_set, types);
            run.write("final.labels", labels_to_jsonl(final_set));
            run.write("utterance_labels.tsv", utterance_labels_tsv(u));
            std::cout << u.size() << " utterances labeled\n";
        } else if (*stats) {
            Run run("stats", out);
            const auto corpus = corpus_args.load(&run);
            std::vector<UtteranceType> types;
            LabelSet set;
            const auto u = project_file(corpus, labels, run, &types, &set);
            const auto d = descriptive_stats(corpus, u);
            run.write_json("descriptive.json", to_json(d));
            run.write("descriptive.tsv", descriptive_text(d));
            run.write_json("label_distribution.json", label_distribution_json(corpus, u));
            run.write_json("histograms.json", to_json(histograms(corpus, u)));
            const auto rf = rank_frequency(set, types);
            std::string rft = "rank\ttype_id\tcount\tform\n";
            for (std::size_t i = 0; i < rf.ranked.size(); ++i)
                rft += std::to_string(i + 1) + '\t' + std::to_string(rf.ranked[i].type_id) + '\t' +
                       std::to_string(rf.ranked[i].count) + '\t' + rf.ranked[i].form + '\n';
            run.write("icr_rank_frequency.tsv", rft);
            std::cout << descriptive_text(d);
        } else if (*dynamics) {
            Run run("dynamics", out);
            run.seed(seed, {"permutation"});
            const auto corpus = corpus_args.load(&run);
            const auto u = project_file(corpus, labels, run);
            DynamicsOptions o;
            o.n_resamples = resamples;
            o.seed = derive_seed(seed, "permutation");
            const auto rep = round_dynamics(corpus, u, round_table(corpus), o);
            run.write_json("dynamics.json", to_json(rep));
            std::cout << to_json(rep).dump(2) << "\n";
        } else if (*bigrams) {
            Run run("bigrams", out);
            const auto corpus = corpus_args.load(&run);
            const auto u = project_file(corpus, labels, run);
            const auto b = initial_bigrams(u, corpus);
            std::string t = "first\tsecond\tcount\n";
            for (const auto& x : b) t += x.first + '\t' + x.second + '\t' + std::to_string(x.count) + '\n';
            run.write("initial_bigrams.tsv", t);
            const auto v = vocab_partition(u, corpus);
            std::string vt = "partition\ttoken\tcount\n";
            for (const auto& x : v.icr) vt += "icr\t" + x.token + '\t' + std::to_string(x.count) + '\n';
            for (const auto& x : v.other) vt += "other\t" + x.token + '\t' + std::to_string(x.count) + '\n';
            run.write("vocabulary.tsv", vt);
            run.write_json("vocabulary_summary.json", {{"drawer_vocab", v.drawer_vocab}, {"icr_vocab", v.icr_vocab}});
            for (std::size_t i = 0; i < b.size() && static_cast<int>(i) < top; ++i)
                std::cout << b[i].first << ' ' << b[i].second << '\t' << b[i].count << '\n';
        } else if (*overlap) {
            Run run("overlap", out);
            const auto corpus = corpus_args.load(&run);
            const auto u = project_file(corpus, labels, run);
            json j = json::array();
            for (const auto& o : split_overlap(u, corpus)) {
                j.push_back({{"split", split_name(o.split)},
                             {"icr_types", o.icr_types},
                             {"shared_types", o.shared_types},
                             {"type_overlap", o.type_overlap()},
                             {"icr_utterances", o.icr_utterances},
                             {"shared_utterances", o.shared_utterances},
                             {"utterance_overlap", o.utterance_overlap()}});
                std::cout << split_name(o.split) << ": types " << format_fixed(100 * o.type_overlap(), 2) << "%, utterances "
                          << format_fixed(100 * o.utterance_overlap(), 2) << "%\n";
            }
            run.write_json("overlap.json", j);
        } else if (*build) {
            Run run("build-dataset", out);
            const auto corpus = corpus_args.load(&run);
            const auto u = project_file(corpus, labels, run);
            const Task task = parse_task(task_arg);
            const auto dps = build_task(task, corpus, u, parse_filter(filter_arg));
            run.write("datapoints.jsonl", datapoints_to_jsonl(dps));
            const auto vocab = TellerVocabulary::from_training(dps);
            const ContentWords cw = content_file.empty() ? ContentWords{} : ContentWords::from_file(content_file);
            for (Split s : {Split::Train, Split::Val, Split::Test}) {
                const auto part = select_split(dps, s);
                std::vector<FeatureVector> f;
                for (const auto& d : part) f.push_back(featurize(d, vocab, cw));
                run.write("features_" + std::string(split_name(s)) + ".tsv", features_tsv(part, f));
            }
            std::cout << dps.size() << " datapoints\n";
        } else if (*embed) {
            Run run("embed-fallback", out);
            run.seed(seed, {"embed-text", "embed-image"});
            if (text_dim <= 0 || image_dim <= 0) throw UsageError("--text-dim/--image-dim must be positive");
            const auto corpus = corpus_args.load(&run);
            const Task task = parse_task(task_arg);
            const auto base = placeholder_labels(corpus);
            const auto dps = build_task(task, corpus, base);
            const auto text_seed = derive_seed(seed, "embed-text"), image_seed = derive_seed(seed, "embed-image");
            EmbeddingStore img(static_cast<std::size_t>(image_dim), true), msg(static_cast<std::size_t>(text_dim), true);
            for (const auto& dp : dps) {
                const Dialogue* d = corpus.find(dp.dialogue_id);
                img.add(dp.scene_key, hash_embed_scene(scene_for(*d, dp.round, task), img.dim(), image_seed));
                msg.add(dp.key("msg"), hash_embed(dp.message, msg.dim(), text_seed));
            }
            auto emit = [&](const std::string& name, const EmbeddingStore& s) {
                run.write(name, encode_store(s));
                run.store(run.dir() / name, s);
            };
            emit("img.icre", img);
            emit("msg.icre", msg);
            for (auto f : {ContextFilter::Both, ContextFilter::TellerOnly, ContextFilter::DrawerOnly}) {
                EmbeddingStore ctx(static_cast<std::size_t>(text_dim), true);
                for (const auto& dp : build_task(task, corpus, base, f)) ctx.add(dp.key("ctx"), hash_embed(dp.context, ctx.dim(), text_seed));
                emit(context_store_name(f), ctx);
            }
            std::cout << dps.size() << " datapoints embedded\n";
        } else if (*train_cmd) {
            Run run("train", out);
            auto cfg = load_model_config(config_arg);
            cfg.train.seed = seed;
            if (epochs > 0) cfg.train.max_epochs = epochs;
            const auto corpus = corpus_args.load(&run);
            const auto u = project_file(corpus, labels, run);
            const Task task = parse_task(task_arg);
            const auto dps = build_task(task, corpus, u);
            const auto tr = select_split(dps, Split::Train), va = select_split(dps, Split::Val);
            if (model_kind == "logistic") {
                run.config({{"model", "logistic"}, {"task", task_name(task)}});
                Baseline b;
                b.task = task;
                b.vocab = TellerVocabulary::from_training(dps);
                if (!content_file.empty()) b.content = ContentWords::from_file(content_file);
                b.model = fit_logistic(b.matrix(tr), labels_of(tr));
                run.write_json("model.json", b.to_json());
                if (!va.empty()) {
                    const auto rep = evaluate(b.model.predict_proba(b.matrix(va)), labels_of(va), rounds_of(va), "val");
                    run.write_json("val_report.json", to_json(rep));
                    if (rep.ap) std::cout << "val AP " << format_fixed(*rep.ap, 4) << "\n";
                }
            } else if (model_kind == "neural") {
                run.seed(seed, {"init", "shuffle", "dropout"});
                run.config(cfg.to_json());
                if (stores_dir.empty()) throw UsageError("--stores is required for the neural model");
                const auto stores = load_stores(stores_dir, cfg.classifier, ContextFilter::Both, run);
                const auto result = train(cfg.classifier, tr, va, stores.view(), cfg.train, [](const EpochMetrics& m) {
                    std::cout << "epoch " << m.epoch << " loss " << format_fixed(m.train_loss, 5) << " val AP "
                              << (m.val_ap ? format_fixed(*m.val_ap, 4) : std::string("-")) << "\n";
                });
                run.write("model.ckpt", encode_checkpoint(result.best));
                run.write("training_log.jsonl", training_log_jsonl(result.history));
                run.manifest()["best_epoch"] = result.best.epoch;
            } else {
                throw UsageError("--model: expected neural or logistic, got '" + model_kind + "'");
            }
        } else if (*predict_cmd) {
            Run run("predict", out);
            run.input(checkpoint);
            const auto corpus = corpus_args.load(&run);
            const auto u = project_file(corpus, labels, run);
            const auto split = split_from_name(split_arg);
            if (!split) throw UsageError("--split: unknown split '" + split_arg + "'");
            const auto model = load_model(checkpoint);
            const Task task = model.baseline ? model.baseline->task : parse_task(task_arg);
            const auto dps = select_split(build_task(task, corpus, u), *split);
            std::vector<double> scores;
            if (model.baseline) {
                scores = model.baseline->model.predict_proba(model.baseline->matrix(dps));
            } else {
                if (stores_dir.empty()) throw UsageError("--stores is required for a neural checkpoint");
                const auto stores = load_stores(stores_dir, model.neural->model.config(), ContextFilter::Both, run);
                scores = predict(*model.neural, dps, stores.view());
            }
            run.write("scores.tsv", scores_tsv(dps, scores));
            std::cout << dps.size() << " scored\n";
        } else if (*evaluate_cmd) {
            Run run("evaluate", out);
            run.input(checkpoint);
            const auto f = read_scores(checkpoint);
            EvalReport rep;
            if (std::count(f.labels.begin(), f.labels.end(), 1) == 0) throw NoPositives();
            rep = evaluate(f.scores, f.labels, f.rounds);
            rep.threshold = threshold;
            rep.macro_f1 = macro_f1(f.scores, f.labels, threshold);
            run.write_json("report.json", to_json(rep));
            run.write("curves.tsv", curves_tsv(rep.curves));
            std::cout << "AP " << format_fixed(*rep.ap, 4) << "  mF1 " << format_fixed(rep.macro_f1, 4) << "\n";
        } else if (*ablate_cmd) {
            Run run("ablate", out);
            run.seed(seed, {"init", "shuffle", "dropout"});
            auto cfg = load_model_config(config_arg);
            cfg.train.seed = seed;
            if (epochs > 0) cfg.train.max_epochs = epochs;
            run.config(cfg.to_json());
            if (stores_dir.empty()) throw UsageError("--stores is required");
            const auto corpus = corpus_args.load(&run);
            const auto u = project_file(corpus, labels, run);
            const Task task = parse_task(task_arg);
            ResultsTable table;
            json results = json::array();
            std::vector<AblationVariant> variants{{"full", cfg.classifier, ContextFilter::Both}};
            for (auto& v : ablate(cfg.classifier)) variants.push_back(v);
            for (const auto& v : variants) {
                const auto dps = build_task(task, corpus, u, v.context_filter);
                const auto stores = load_stores(stores_dir, v.config, v.context_filter, run);
                const auto r = train(v.config, select_split(dps, Split::Train), select_split(dps, Split::Val), stores.view(), cfg.train);
                for (Split s : {Split::Val, Split::Test}) {
                    const auto part = select_split(dps, s);
                    if (part.empty()) continue;
                    const auto rep = evaluate(predict(r.best, part, stores.view()), labels_of(part), rounds_of(part));
                    table.set(v.name, std::string(split_name(s)), std::string(task_name(task)), {rep.ap, rep.macro_f1});
                    results.push_back({{"variant", v.name},
                                       {"split", split_name(s)},
                                       {"parameters", v.config.parameter_count()},
                                       {"best_epoch", r.best.epoch},
                                       {"report", to_json(rep)}});
                }
                std::cout << v.name << " done (best epoch " << r.best.epoch << ")\n";
            }
            run.write_json("ablation.json", results);
            run.write("ablation.txt", table.render());
            std::cout << table.render();
        } else if (*report) {
            Run run("report", out);
            run.seed(seed, {"random-baseline"});
            ResultsTable table;
            std::map<std::pair<std::string, std::string>, std::vector<int>> labels_by_cell;
            for (const auto& c : cells) {
                const auto parts = split_fields(c, ',');
                if (parts.size() != 4) throw UsageError("--cell: expected method,task,split,path; got '" + c + "'");
                if (!fs::exists(parts[3])) throw UsageError("--cell: no such file '" + parts[3] + "'");
                run.input(parts[3]);
                const auto f = read_scores(parts[3]);
                ResultCell cell;
                if (std::count(f.labels.begin(), f.labels.end(), 1) > 0) cell.ap = average_precision(f.scores, f.labels);
                cell.macro_f1 = macro_f1(f.scores, f.labels);
                table.set(parts[0], parts[2], parts[1], cell);
                labels_by_cell[{parts[1], parts[2]}] = f.labels;
            }
            if (with_random)
                for (const auto& [key, y] : labels_by_cell) {
                    const auto b = random_baseline(y, derive_seed(seed, "random-baseline"));
                    table.set("random", key.second, key.first, {b.ap, b.macro_f1});
                }
            run.write("results.txt", table.render());
            run.write_json("results.json", table.to_json());
            std::cout << table.render();
        } else if (*synth_cmd) {
            Run run("synth", out);
            synth.seed = seed;
            run.seed(seed, {"synthetic-corpus"});
            const auto s = generate_corpus(synth);
            const auto types = collapse_types(s.corpus);
            LabelSet set;
            if (labeler == "planted") set = planted_type_labels(types, s.planted);
            else if (labeler == "content-words") set = content_word_labels(types);
            else throw UsageError("--labeler: expected planted or content-words");
            run.write("corpus.json", corpus_to_json(s.corpus).dump() + "\n");
            run.write("corpus.labels", labels_to_jsonl(set));
            run.write_json("generator_manifest.json", s.manifest.to_json());
            std::cout << s.corpus.size() << " dialogues, " << s.manifest.drawer_utterances << " drawer utterances\n";
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationFailed& e) {
        std::cerr << "validation failed: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
