// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Drives the built `sfld` binary end to end on a small toy corpus.

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sfld/datasets.hpp"
#include "sfld/detector.hpp"
#include "sfld/digest.hpp"
#include "test_util.hpp"

namespace sfld {
namespace {

namespace fs = std::filesystem;
using testing::scratch_dir;

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::vector<std::string> out;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

/// Finds the single artifact `name` under any run directory in `root`.
fs::path find_artifact(const fs::path& root, const std::string& name) {
    std::vector<fs::path> hits;
    if (fs::exists(root)) {
        for (const auto& e : fs::recursive_directory_iterator(root)) {
            if (e.path().filename() == name) hits.push_back(e.path());
        }
    }
    EXPECT_EQ(hits.size(), 1u) << name << " under " << root;
    return hits.empty() ? fs::path{} : hits.front();
}

class Cli : public ::testing::Test {
protected:
    static inline fs::path work;
    static inline fs::path config;
    static inline fs::path corpus;
    static inline fs::path bundle;

    static Result run(const std::string& args, const std::string& env = "") {
        const auto out = work / "stdout.txt", err = work / "stderr.txt";
        const std::string cmd = env + (env.empty() ? "" : " ") + "\"" SFLD_CLI_PATH "\" " + args + " > \"" +
                                out.string() + "\" 2> \"" + err.string() + "\"";
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
    }

    static std::string with_config(const std::string& args, const fs::path& out_root) {
        return "-c \"" + config.string() + "\" -o \"" + out_root.string() + "\" " + args;
    }

    static void SetUpTestSuite() {
        work = scratch_dir("cli-" + std::to_string(::getpid()));
        config = work / "toy.json";
        std::ofstream(config) << R"({
  "backend": {"preprocessing": {"mean": [0.5, 0.5, 0.5], "stdev": [0.05, 0.05, 0.05]}},
  "seed": 3,
  "train": {"epochs": 10, "learning_rate": 0.01, "batch_size": 16},
  "twins": {"gan": {"steps": 20, "widths": [16, 8], "target_size": 16, "psnr_gate": 0}}
})";
        auto r = run(with_config("toy-corpus --train-per-label 8 --val-per-label 2 --test-per-label 4", work / "setup"));
        ASSERT_EQ(r.code, 0) << r.err;
        corpus = find_artifact(work / "setup", "toy.manifest");
        r = run(with_config("train -m \"" + corpus.string() + "\"", work / "setup"));
        ASSERT_EQ(r.code, 0) << r.err;
        bundle = find_artifact(work / "setup", "bundle.json");
    }

    /// Writes a test-split manifest over `n` corpus images, plus optional junk.
    static fs::path small_manifest(const std::string& name, std::size_t n, bool junk) {
        auto m = load_manifest(corpus);
        std::vector<ManifestRow> rows;
        for (const auto& r : m.rows) {
            if (rows.size() < n) rows.push_back({m.resolve(r).string(), r.label, r.generator, r.content_class, Split::Test});
        }
        if (junk) {
            std::ofstream(work / "junk.png") << "not an image";
            rows.push_back({(work / "junk.png").string(), 0, "", "", Split::Test});
        }
        m.rows = rows;
        m.root = work;
        save_manifest(m, work / name);
        return work / name;
    }
};

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("--help").code, 0);
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("score -b \"" + bundle.string() + "\" -m /no/such/manifest").code, 2);
    EXPECT_EQ(run("score -m \"" + corpus.string() + "\"").code, 2);  // neither bundle nor probe

    std::ofstream(work / "bad.json") << R"({"n_view": 3})";
    EXPECT_EQ(run("-c \"" + (work / "bad.json").string() + "\" toy-corpus -o \"" + (work / "x").string() + "\"").code, 2);
    const auto r = run("-o \"" + (work / "x").string() + "\" toy-corpus", "SFLD_CONFIG=\"" + (work / "bad.json").string() + "\"");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("n_view"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(work / "x"));
}

TEST_F(Cli, EmptyManifestGivesEmptyScoreFile) {
    const auto m = small_manifest("empty.manifest", 0, false);
    const auto out = work / "empty";
    const auto r = run(with_config("score -b \"" + bundle.string() + "\" -m \"" + m.string() + "\"", out));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto sf = read_score_file(find_artifact(out, "scores.jsonl"));
    EXPECT_TRUE(sf.records.empty());
    EXPECT_EQ(sf.provenance.at("config_digest").get<std::string>().size(), 64u);
}

TEST_F(Cli, LenientModeKeepsGoing) {
    const auto m = small_manifest("junk.manifest", 3, true);
    const auto out = work / "lenient";
    const auto r = run(with_config("score -b \"" + bundle.string() + "\" -m \"" + m.string() + "\"", out));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("warning"), std::string::npos);
    const auto sf = read_score_file(find_artifact(out, "scores.jsonl"));
    ASSERT_EQ(sf.records.size(), 4u);
    EXPECT_EQ(std::count_if(sf.records.begin(), sf.records.end(), [](const auto& x) { return x.ok(); }), 3);

    const auto strict = run(with_config("score --strict -b \"" + bundle.string() + "\" -m \"" + m.string() + "\"",
                                        work / "strict"));
    EXPECT_EQ(strict.code, 1);
}

TEST_F(Cli, WorkerCountDoesNotChangeScores) {
    const auto m = small_manifest("workers.manifest", 6, false);
    const std::string args = "score -b \"" + bundle.string() + "\" -m \"" + m.string() + "\"";
    ASSERT_EQ(run(with_config("-j 1 " + args, work / "w1")).code, 0);
    ASSERT_EQ(run(with_config("-j 4 " + args, work / "w4")).code, 0);
    EXPECT_EQ(sha256_file(find_artifact(work / "w1", "scores.jsonl")),
              sha256_file(find_artifact(work / "w4", "scores.jsonl")));
}

TEST_F(Cli, SweepTableHasOneRowPerValue) {
    const auto m = small_manifest("sweep.manifest", 6, false);
    const auto out = work / "sweep";
    const auto r = run(with_config("sweep -b \"" + bundle.string() + "\" -m \"" + m.string() + "\" --values 1,10", out));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto dir = find_artifact(out, "sweep.tsv").parent_path();
    const auto lines = lines_of(dir / "sweep.tsv");
    ASSERT_EQ(lines.size(), 4u);  // digest, header, two rows
    const auto run_json = nlohmann::json::parse(slurp(dir / "run.json"));
    EXPECT_EQ(lines[0], "# config_digest=" + run_json.at("config_digest").get<std::string>());
    EXPECT_EQ(lines[2].substr(0, 2), "1\t");
    EXPECT_EQ(lines[3].substr(0, 3), "10\t");
    EXPECT_TRUE(fs::exists(dir / "sweep.png"));

    const auto bad = run(with_config("sweep --axis patch_size --values 112 -b \"" + bundle.string() + "\" -m \"" +
                                         m.string() + "\"",
                                     out));
    EXPECT_EQ(bad.code, 2);
}

TEST_F(Cli, EmptyDegradeGridIsNoOp) {
    const auto out = work / "degrade-empty";
    const auto r = run(with_config("degrade --blur \"\" --jpeg \"\" -m \"" + corpus.string() + "\"", out));
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, DegradeWritesDerivedManifests) {
    const auto m = small_manifest("degrade.manifest", 2, false);
    const auto out = work / "degrade";
    const auto r = run(with_config("degrade --blur 1 --jpeg 90 -m \"" + m.string() + "\"", out));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto derived = load_manifest(find_artifact(out, "degrade.jpeg-q90.manifest"), true);
    EXPECT_EQ(derived.rows.size(), 2u);
    EXPECT_EQ(derived.meta.at("config_digest").size(), 64u);
}

TEST_F(Cli, TwinsOneRowPerRealImage) {
    auto m = load_manifest(corpus);
    Manifest reals{m.schema_version, m.root, m.meta, {}};
    for (const auto& row : m.rows) {
        if (row.label == 0 && reals.rows.size() < 3) reals.rows.push_back(row);
    }
    save_manifest(reals, work / "reals.manifest");
    const auto out = work / "twins";
    const auto r = run(with_config("twins -m \"" + (work / "reals.manifest").string() + "\"", out));
    ASSERT_EQ(r.code, 0) << r.err;
    std::size_t rows = 0;
    for (const auto& line : lines_of(find_artifact(out, "twins.tsv"))) rows += !line.empty() && line[0] != '#';
    EXPECT_EQ(rows, 1u + 3u);  // header plus one row per image
    EXPECT_EQ(load_manifest(find_artifact(out, "twins.manifest"), true).rows.size(), 6u);
}

TEST_F(Cli, SameSeedSameCheckpoint) {
    const std::string args = "train -s 28 -m \"" + corpus.string() + "\"";
    ASSERT_EQ(run(with_config(args, work / "rerun-a")).code, 0);
    ASSERT_EQ(run(with_config(args, work / "rerun-b")).code, 0);
    ASSERT_EQ(run(with_config("--seed 99 " + args, work / "rerun-c")).code, 0);
    const auto a = sha256_file(find_artifact(work / "rerun-a", "head-28.json"));
    EXPECT_EQ(a, sha256_file(find_artifact(work / "rerun-b", "head-28.json")));
    EXPECT_NE(a, sha256_file(find_artifact(work / "rerun-c", "head-28.json")));
}

TEST_F(Cli, FullImageBundleMatchesLinearProbe) {
    ASSERT_EQ(run(with_config("train -s 224 -m \"" + corpus.string() + "\"", work / "k1")).code, 0);
    const auto b224 = find_artifact(work / "k1", "bundle.json");
    const auto head = b224.parent_path() / "head-224.json";
    const auto m = small_manifest("k1.manifest", 8, false);
    ASSERT_EQ(run(with_config("score -b \"" + b224.string() + "\" -m \"" + m.string() + "\"", work / "k1-bundle")).code, 0);
    ASSERT_EQ(run(with_config("score --linear-probe \"" + head.string() + "\" -m \"" + m.string() + "\"",
                              work / "k1-probe"))
                  .code,
              0);
    const auto a = read_score_file(find_artifact(work / "k1-bundle", "scores.jsonl"));
    const auto b = read_score_file(find_artifact(work / "k1-probe", "scores.jsonl"));
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        EXPECT_EQ(a.records[i].image_id, b.records[i].image_id);
        EXPECT_NEAR(a.records[i].fused_logit, b.records[i].fused_logit, 1e-9);
        EXPECT_EQ(a.records[i].predicted_label, b.records[i].predicted_label);
    }
}

TEST_F(Cli, EvalWritesReportsAndScatter) {
    const auto m = small_manifest("eval.manifest", 8, false);
    const std::string score = "score -b \"" + bundle.string() + "\" -m \"" + m.string() + "\"";
    ASSERT_EQ(run(with_config(score, work / "eval-s1")).code, 0);
    ASSERT_EQ(run(with_config("--seed 5 " + score, work / "eval-s2")).code, 0);
    const auto s1 = find_artifact(work / "eval-s1", "scores.jsonl"), s2 = find_artifact(work / "eval-s2", "scores.jsonl");
    const auto out = work / "eval";
    const auto r = run(with_config("eval --scatter \"" + s1.string() + "\" \"" + s2.string() + "\"", out));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("Avg."), std::string::npos);
    const auto report = nlohmann::json::parse(slurp(find_artifact(out, "report-0.json")));
    EXPECT_TRUE(report.at("averages").contains("mAP"));
    EXPECT_EQ(lines_of(find_artifact(out, "scatter.csv")).size(), 3u + 1u + 8u);  // meta, header, rows
    EXPECT_TRUE(fs::exists(find_artifact(out, "scatter.png")));
    EXPECT_EQ(run(with_config("eval --scatter \"" + s1.string() + "\"", out)).code, 2);
}

}  // namespace
}  // namespace sfld
