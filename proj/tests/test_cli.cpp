#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "icr/util.hpp"
#include "json.hpp"
#include "support.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = ICR_FIXTURE_DIR;

int run_icr(const std::string& args, const std::string& stdin_text = "") {
    std::string cmd = std::string("'") + ICR_CLI_PATH + "' " + args + " >/dev/null 2>&1";
    if (!stdin_text.empty()) cmd = "printf '" + stdin_text + "' | " + cmd;
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

const std::string kTiny = "--corpus " + q(kFixtures / "tiny.json");
const std::string kTinyLabels = kTiny + " --labels " + q(kFixtures / "tiny.labels");

}  // namespace

TEST(Cli, StatsMatchFixtureManifest) {
    icr_test::TempDir dir("cli_stats");
    ASSERT_EQ(run_icr("stats " + kTinyLabels + " --out " + q(dir.path())), 0);
    const auto m = load(kFixtures / "tiny.manifest.json");
    const auto d = load(dir / "descriptive.json");
    EXPECT_EQ(d["all"]["icr_utterances"], m["icr_utterances"]);
    EXPECT_EQ(d["all"]["rounds"], m["drawer_utterances"]);
    int dialogues = 0;
    for (const auto& [split, n] : m["dialogues"].items()) dialogues += n.get<int>();
    EXPECT_EQ(d["all"]["dialogues"], dialogues);
    EXPECT_EQ(d["with_icrs"]["dialogues"], m["dialogues_with_icr"]);
    const auto dist = load(dir / "label_distribution.json");
    for (const auto& [split, n] : m["split_drawer_utterances"].items()) {
        EXPECT_EQ(dist[split]["datapoints"], n) << split;
        EXPECT_EQ(dist[split]["positives"], m["split_icr_utterances"][split]) << split;
    }
    EXPECT_TRUE(fs::exists(dir / "descriptive.tsv"));
    EXPECT_TRUE(fs::exists(dir / "icr_rank_frequency.tsv"));
    const auto manifest = load(dir / "manifest.json");
    EXPECT_EQ(manifest["command"], "stats");
    EXPECT_TRUE(manifest.contains("config_hash"));
}

TEST(Cli, OutputsAreByteIdenticalAcrossRuns) {
    icr_test::TempDir a("cli_idem_a"), b("cli_idem_b");
    for (const auto* d : {&a, &b}) {
        ASSERT_EQ(run_icr("stats " + kTinyLabels + " --out " + q(d->path())), 0);
        ASSERT_EQ(run_icr("build-dataset " + kTinyLabels + " --task 1 --out " + q(d->path() / "ds")), 0);
    }
    for (const char* f : {"descriptive.json", "descriptive.tsv", "histograms.json", "manifest.json", "ds/datapoints.jsonl",
                          "ds/features_train.tsv", "ds/manifest.json"})
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Cli, PerfectScoreFileHasApOne) {
    icr_test::TempDir dir("cli_eval");
    icr::write_file_atomic(dir / "scores.tsv", "dialogue_id\tround\tsplit\tlabel\tscore\n"
                                   "d1\t0\ttest\t1\t0.9\nd1\t1\ttest\t0\t0.1\nd2\t0\ttest\t0\t0.2\nd2\t1\ttest\t1\t0.8\n");
    ASSERT_EQ(run_icr("evaluate --scores " + q(dir / "scores.tsv") + " --out " + q(dir / "out")), 0);
    const auto r = load(dir / "out" / "report.json");
    EXPECT_DOUBLE_EQ(r["ap"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(r["macro_f1"].get<double>(), 1.0);
}

TEST(Cli, ExitCodes) {
    icr_test::TempDir dir("cli_exit");
    EXPECT_EQ(run_icr("--help"), 0);
    EXPECT_EQ(run_icr(""), 2);
    EXPECT_EQ(run_icr("stats --no-such-flag"), 2);
    EXPECT_EQ(run_icr("build-dataset " + kTinyLabels + " --task 3 --out " + q(dir.path())), 2);
    EXPECT_EQ(run_icr("build-dataset " + kTinyLabels + " --context-filter sideways --out " + q(dir.path())), 2);
    icr::write_file_atomic(dir / "bad.json", "{\"dialogues\": [");
    EXPECT_EQ(run_icr("validate --corpus " + q(dir / "bad.json")), 1);
    EXPECT_EQ(run_icr("validate " + kTiny), 0);
    EXPECT_EQ(run_icr("evaluate --scores " + q(dir / "missing.tsv")), 2);
}

TEST(Cli, OutputDirFromEnvironment) {
    icr_test::TempDir dir("cli_env");
    const std::string cmd = "ICR_OUTPUT_DIR=" + q(dir.path()) + " '" + ICR_CLI_PATH + "' ingest " + kTiny + " >/dev/null 2>&1";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(dir / "ingest" / "corpus_stats.json"));
    EXPECT_TRUE(fs::exists(dir / "ingest" / "round_table.tsv"));
}

TEST(Cli, NeuralPipeline) {
    icr_test::TempDir dir("cli_pipe");
    const auto out = [&](const char* sub) { return " --out " + q(dir / sub); };
    ASSERT_EQ(run_icr("embed-fallback " + kTiny + " --task 2 --text-dim 16 --image-dim 24" + out("stores")), 0);
    const auto cfg = dir / "config.json";
    icr::write_file_atomic(cfg, R"({"classifier": {"image_dim": 24, "message_dim": 16, "context_dim": 16, "internal_dim": 8, "hidden_dim": 8},
                        "train": {"batch_size": 8, "grad_accumulation": 1, "max_epochs": 2}})");
    const std::string common = kTinyLabels + " --task 2 --stores " + q(dir / "stores") + " --config " + q(cfg);
    ASSERT_EQ(run_icr("train " + common + out("train")), 0);
    ASSERT_TRUE(fs::exists(dir / "train" / "model.ckpt"));
    std::istringstream log(slurp(dir / "train" / "training_log.jsonl"));
    int lines = 0;
    for (std::string l; std::getline(log, l);) lines += !l.empty();
    EXPECT_EQ(lines, 2);

    const std::string predict_args = kTinyLabels + " --task 2 --stores " + q(dir / "stores");
    ASSERT_EQ(run_icr("predict " + predict_args + " --split test --checkpoint " + q(dir / "train" / "model.ckpt") + out("pred")), 0);
    ASSERT_EQ(run_icr("evaluate --scores " + q(dir / "pred" / "scores.tsv") + out("eval")), 0);
    EXPECT_TRUE(load(dir / "eval" / "report.json").contains("ap"));
    ASSERT_EQ(run_icr("report --random --cell " + q("Neural,task2,test," + (dir / "pred" / "scores.tsv").string()) + out("report")), 0);
    EXPECT_NE(slurp(dir / "report" / "results.txt").find("Neural"), std::string::npos);

    const auto manifest = load(dir / "train" / "manifest.json");
    EXPECT_TRUE(manifest.contains("stores"));
    EXPECT_TRUE(manifest["stores"].dump().find("fallback") != std::string::npos);

    // stores built for the training split only lack the validation keys
    ASSERT_EQ(run_icr("embed-fallback " + kTiny + " --splits train --task 2 --text-dim 16 --image-dim 24" + out("stores1")), 0);
    EXPECT_EQ(run_icr("train " + kTinyLabels + " --task 2 --stores " + q(dir / "stores1") + " --config " + q(cfg) + out("bad")), 1);
}

TEST(Cli, LogisticBaseline) {
    icr_test::TempDir dir("cli_logreg");
    ASSERT_EQ(run_icr("train " + kTinyLabels + " --task 2 --model logistic --out " + q(dir.path())), 0);
    const auto model = load(dir / "model.json");
    EXPECT_TRUE(model.contains("weights"));
    ASSERT_EQ(run_icr("predict " + kTinyLabels + " --task 2 --split val --checkpoint " + q(dir / "model.json") + " --out " +
                  q(dir / "pred")),
              0);
    EXPECT_NE(slurp(dir / "pred" / "scores.tsv").find("\tval\t"), std::string::npos);
}

TEST(Cli, AnnotateFromStdin) {
    icr_test::TempDir dir("cli_annotate");
    const auto labels = dir / "a.labels";
    ASSERT_EQ(run_icr("annotate " + kTiny + " --labels " + q(labels) + " --annotator ann1", "y\\nn\\ns\\nq\\n"), 0);
    std::istringstream in(slurp(labels));
    int records = 0;
    for (std::string l; std::getline(in, l);) records += !l.empty();
    EXPECT_EQ(records, 3);
    ASSERT_EQ(run_icr("agree " + kTiny + " --a " + q(labels) + " --b " + q(labels) + " --out " + q(dir / "agree")), 0);
}
