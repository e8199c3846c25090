// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "sfld/eval.hpp"
#include "test_util.hpp"

namespace sfld {
namespace {

using testing::error_code_of;
using testing::scratch_dir;

/// Mean, over positives, of the precision at that positive's score
/// (everything scoring >= it counts as retrieved).
double ap_by_positive_precision(const std::vector<double>& s, const std::vector<int>& y) {
    double sum = 0.0;
    int n_pos = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        ++n_pos;
        int retrieved = 0, hits = 0;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (s[j] >= s[i]) {
                ++retrieved;
                hits += y[j];
            }
        }
        sum += static_cast<double>(hits) / retrieved;
    }
    return sum / n_pos;
}

ScoreRecord rec(std::string id, double p, std::optional<int> label, std::string gen = "g",
                std::string cls = "c") {
    ScoreRecord r;
    r.image_id = std::move(id);
    r.probability = p;
    r.fused_logit = std::log(p / (1 - p));
    r.predicted_label = classify(p);
    r.true_label = label;
    r.generator = std::move(gen);
    r.content_class = std::move(cls);
    return r;
}

TEST(AveragePrecision, HandWorkedExample) {
    EXPECT_NEAR(average_precision(std::vector<double>{0.9, 0.8, 0.3}, std::vector<int>{1, 0, 1}), 5.0 / 6.0, 1e-15);
    EXPECT_DOUBLE_EQ(average_precision(std::vector<double>{3, 2, 1}, std::vector<int>{1, 1, 0}), 1.0);
    EXPECT_NEAR(average_precision(std::vector<double>{1, 2, 3}, std::vector<int>{1, 0, 0}), 1.0 / 3.0, 1e-15);
}

TEST(AveragePrecision, TiesFormOneStep) {
    EXPECT_NEAR(average_precision(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{1, 0, 0, 1}), 0.5, 1e-15);
    // Tie between the top positive and a negative: precision 1/2 at that step.
    EXPECT_NEAR(average_precision(std::vector<double>{0.9, 0.9, 0.1}, std::vector<int>{1, 0, 1}),
                0.5 * 0.5 + 0.5 * (2.0 / 3.0), 1e-15);
}

TEST(AveragePrecision, MatchesPerPositiveOracle) {
    Rng rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.below(49);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = trial % 3 == 0 ? static_cast<double>(rng.below(5)) : rng.uniform();
            y[i] = static_cast<int>(rng.below(2));
        }
        y[0] = 1;
        y[1] = 0;
        EXPECT_NEAR(average_precision(s, y), ap_by_positive_precision(s, y), 1e-12);
    }
}

TEST(AveragePrecision, Errors) {
    EXPECT_EQ(error_code_of([] { average_precision(std::vector<double>{1, 2}, std::vector<int>{1, 1}); }),
              Errc::DegenerateLabels);
    EXPECT_EQ(error_code_of([] { average_precision(std::vector<double>{1}, std::vector<int>{1, 0}); }),
              Errc::LengthMismatch);
}

TEST(Accuracy, DecomposesByClass) {
    const std::vector<ScoreRecord> rs{rec("a", 0.9, 1), rec("b", 0.2, 1), rec("c", 0.1, 0),
                                      rec("d", 0.7, 0), rec("e", 0.3, 0), rec("f", 0.4, std::nullopt)};
    const auto a = accuracy(rs);
    EXPECT_EQ(a.n_fake, 2u);
    EXPECT_EQ(a.n_real, 3u);
    EXPECT_DOUBLE_EQ(a.fake_acc, 0.5);
    EXPECT_DOUBLE_EQ(a.real_acc, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(a.acc, (a.n_real * a.real_acc + a.n_fake * a.fake_acc) / 5.0);
}

TEST(Accuracy, ThresholdTieIsFake) {
    EXPECT_EQ(classify(0.5), 1);
    EXPECT_EQ(classify(0.4999999), 0);
    EXPECT_DOUBLE_EQ(accuracy({rec("a", 0.5, 1), rec("b", 0.5, 0)}).acc, 0.5);
    EXPECT_DOUBLE_EQ(accuracy({rec("a", 0.6, 1), rec("b", 0.6, 0)}, 0.7).acc, 0.5);
}

TEST(Accuracy, IgnoresErrorsAndRejectsEmpty) {
    auto broken = rec("x", 0.9, 0);
    broken.error = "DecodeError: nope";
    EXPECT_DOUBLE_EQ(accuracy({broken, rec("a", 0.9, 1)}).acc, 1.0);
    EXPECT_EQ(error_code_of([&] { accuracy({broken}); }), Errc::EmptySet);
}

TEST(PerClass, GroupsAndWarns) {
    const std::vector<ScoreRecord> rs{rec("a", 0.9, 1, "g", "cat"), rec("b", 0.9, 0, "g", "cat"),
                                      rec("c", 0.1, 0, "g", "dog")};
    const auto pc = per_class_accuracy(rs, {"cat", "dog", "bird"});
    EXPECT_DOUBLE_EQ(pc.accuracy.at("cat"), 0.5);
    EXPECT_DOUBLE_EQ(pc.accuracy.at("dog"), 1.0);
    EXPECT_FALSE(pc.accuracy.contains("bird"));
    ASSERT_EQ(pc.warnings.size(), 1u);
    EXPECT_NE(pc.warnings[0].find("bird"), std::string::npos);
}

TEST(Report, PerGeneratorAndAverages) {
    auto err = rec("z", 0.5, 1, "g1");
    err.error = "boom";
    const std::vector<ScoreRecord> rs{rec("a", 0.9, 1, "g1"), rec("b", 0.2, 0, "g1"), rec("c", 0.6, 0, "g1"),
                                      rec("d", 0.8, 1, "g2"), rec("e", 0.3, 1, "g2"), err};
    const auto rep = build_report(rs);
    ASSERT_EQ(rep.per_generator.size(), 2u);
    const auto& g1 = rep.per_generator.at("g1");
    ASSERT_TRUE(g1.ap.has_value());
    EXPECT_DOUBLE_EQ(*g1.ap, 1.0);
    EXPECT_DOUBLE_EQ(g1.acc, 2.0 / 3.0);
    const auto& g2 = rep.per_generator.at("g2");
    EXPECT_FALSE(g2.ap.has_value());
    EXPECT_DOUBLE_EQ(g2.fake_acc, 0.5);
    EXPECT_DOUBLE_EQ(rep.mean_ap, 1.0);
    EXPECT_DOUBLE_EQ(rep.mean_acc, (2.0 / 3.0 + 0.5) / 2.0);
    EXPECT_EQ(rep.n_errors, 1u);

    const auto j = to_json(rep);
    EXPECT_EQ(j["schema_version"], kReportSchemaVersion);
    EXPECT_TRUE(j["per_generator"]["g2"]["ap"].is_null());
    const auto table = format_report_table(rep);
    EXPECT_NE(table.find("100.00"), std::string::npos);
    EXPECT_NE(table.find("Avg."), std::string::npos);
    EXPECT_EQ(error_code_of([&] { build_report({err}); }), Errc::EmptySet);
}

TEST(Scatter, JoinsOnIdAndCountsQuadrants) {
    const std::vector<ScoreRecord> x{rec("a", 0.9, 1), rec("b", 0.2, 0), rec("c", 0.3, 1), rec("d", 0.8, 0)};
    const std::vector<ScoreRecord> y{rec("d", 0.1, 0), rec("c", 0.7, 1), rec("b", 0.4, 0), rec("a", 0.6, 1)};
    const auto s = export_scatter(x, y, "probe", "ensemble");
    ASSERT_EQ(s.rows.size(), 4u);
    EXPECT_EQ(s.rows[2].image_id, "c");
    EXPECT_DOUBLE_EQ(s.rows[2].logit_y, y[1].fused_logit);
    EXPECT_EQ(quadrant_counts(s), (std::array<std::size_t, 4>{1, 1, 1, 1}));

    const std::vector<ScoreRecord> short_y{rec("a", 0.9, 1)};
    EXPECT_EQ(error_code_of([&] { export_scatter(x, short_y); }), Errc::IdMismatch);
    auto renamed = y;
    renamed[0].image_id = "q";
    EXPECT_EQ(error_code_of([&] { export_scatter(x, renamed); }), Errc::IdMismatch);

    const auto path = scratch_dir("scatter") / "s.csv";
    write_scatter_csv(s, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "image_id,probe,ensemble,true_label");
}

TEST(Sweep, OneRowPerGridPoint) {
    const std::vector<ScoreRecord> perfect{rec("a", 0.9, 1), rec("b", 0.1, 0)};
    const std::vector<ScoreRecord> inverted{rec("a", 0.1, 1), rec("b", 0.9, 0)};
    std::vector<int> seen;
    const auto rows = sweep(SweepAxis::NViews, {1, 10}, [&](int v) {
        seen.push_back(v);
        return v == 1 ? inverted : perfect;
    });
    EXPECT_EQ(seen, (std::vector<int>{1, 10}));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_DOUBLE_EQ(rows[0].map, 0.5);
    EXPECT_DOUBLE_EQ(rows[1].map, 1.0);
    EXPECT_GE(rows[1].mean_wall_time, 0.0);

    const auto path = scratch_dir("sweep") / "t.tsv";
    write_sweep_table(rows, SweepAxis::NViews, path);
    std::ifstream in(path);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) ++n;
    EXPECT_EQ(n, 3);

    auto never = [](int) -> std::vector<ScoreRecord> { throw std::logic_error("unreachable"); };
    EXPECT_EQ(error_code_of([&] { sweep(SweepAxis::PatchSize, {}, never); }), Errc::InvalidConfig);
    EXPECT_EQ(error_code_of([&] { sweep(SweepAxis::PatchSize, {30}, never); }), Errc::IndivisibleTarget);
    EXPECT_EQ(error_code_of([&] { sweep(SweepAxis::NViews, {0}, never); }), Errc::InvalidConfig);
}

}  // namespace
}  // namespace sfld
