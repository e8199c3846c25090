// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfld/detector.hpp"
#include "sfld/error.hpp"
#include "sfld/metrics.hpp"

namespace sfld {

struct AccuracyResult {
    double acc = 0.0;
    double real_acc = 0.0;
    double fake_acc = 0.0;
    std::size_t n_real = 0;
    std::size_t n_fake = 0;
};

inline bool usable(const ScoreRecord& r) { return r.ok() && r.true_label.has_value(); }

/// Overall and per-true-class accuracy at `threshold`; records without a
/// label or with an error are ignored. A class with no records reports 0.
inline AccuracyResult accuracy(const std::vector<ScoreRecord>& records, double threshold = 0.5) {
    AccuracyResult a;
    std::size_t real_ok = 0, fake_ok = 0;
    for (const auto& r : records) {
        if (!usable(r)) continue;
        const bool correct = classify(r.probability, threshold) == *r.true_label;
        if (*r.true_label == 1) {
            ++a.n_fake;
            fake_ok += correct;
        } else {
            ++a.n_real;
            real_ok += correct;
        }
    }
    const auto n = a.n_real + a.n_fake;
    if (n == 0) fail(Errc::EmptySet, "accuracy over zero labeled records");
    a.acc = static_cast<double>(real_ok + fake_ok) / n;
    a.real_acc = a.n_real ? static_cast<double>(real_ok) / a.n_real : 0.0;
    a.fake_acc = a.n_fake ? static_cast<double>(fake_ok) / a.n_fake : 0.0;
    return a;
}

struct ClassAccuracy {
    std::map<std::string, double> accuracy;
    std::vector<std::string> warnings;  // requested classes with no records
};

/// Accuracy grouped by content class, restricted to `classes`.
inline ClassAccuracy per_class_accuracy(const std::vector<ScoreRecord>& records,
                                        const std::vector<std::string>& classes, double threshold = 0.5) {
    ClassAccuracy out;
    for (const auto& cls : classes) {
        std::vector<ScoreRecord> subset;
        std::copy_if(records.begin(), records.end(), std::back_inserter(subset),
                     [&](const ScoreRecord& r) { return r.content_class == cls && usable(r); });
        if (subset.empty()) {
            out.warnings.push_back("UnknownClass: no records for class '" + cls + "'");
            continue;
        }
        out.accuracy[cls] = accuracy(subset, threshold).acc;
    }
    return out;
}

inline double records_ap(const std::vector<ScoreRecord>& records) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& r : records) {
        if (!usable(r)) continue;
        scores.push_back(r.fused_logit);
        labels.push_back(*r.true_label);
    }
    return average_precision(scores, labels);
}

// ------------------------------------------------------------ reports

struct GeneratorMetrics {
    std::optional<double> ap;  // absent when a generator subset holds one class only
    double acc = 0.0;
    double real_acc = 0.0;
    double fake_acc = 0.0;
    std::size_t n_real = 0;
    std::size_t n_fake = 0;
};

inline constexpr int kReportSchemaVersion = 1;

struct EvalReport {
    std::map<std::string, GeneratorMetrics> per_generator;
    double mean_ap = 0.0;   // unweighted over generators with an AP
    double mean_acc = 0.0;  // unweighted over generators
    double mean_real_acc = 0.0;
    double mean_fake_acc = 0.0;
    std::size_t n_errors = 0;
    double threshold = 0.5;
    nlohmann::json provenance = nlohmann::json::object();  // config digest, degradation tag, codec
};

inline EvalReport build_report(const std::vector<ScoreRecord>& records, double threshold = 0.5,
                               nlohmann::json provenance = nlohmann::json::object()) {
    EvalReport rep;
    rep.threshold = threshold;
    rep.provenance = std::move(provenance);
    std::map<std::string, std::vector<ScoreRecord>> groups;
    for (const auto& r : records) {
        if (!r.ok()) {
            ++rep.n_errors;
            continue;
        }
        if (r.true_label) groups[r.generator].push_back(r);
    }
    if (groups.empty()) fail(Errc::EmptySet, "no labeled records to report on");
    std::size_t n_ap = 0;
    for (const auto& [gen, rs] : groups) {
        GeneratorMetrics g;
        const auto a = accuracy(rs, threshold);
        g.acc = a.acc;
        g.real_acc = a.real_acc;
        g.fake_acc = a.fake_acc;
        g.n_real = a.n_real;
        g.n_fake = a.n_fake;
        if (a.n_real > 0 && a.n_fake > 0) {
            g.ap = records_ap(rs);
            rep.mean_ap += *g.ap;
            ++n_ap;
        }
        rep.mean_acc += g.acc;
        rep.mean_real_acc += g.real_acc;
        rep.mean_fake_acc += g.fake_acc;
        rep.per_generator[gen] = g;
    }
    const double k = static_cast<double>(groups.size());
    rep.mean_ap = n_ap ? rep.mean_ap / n_ap : 0.0;
    rep.mean_acc /= k;
    rep.mean_real_acc /= k;
    rep.mean_fake_acc /= k;
    return rep;
}

inline nlohmann::json to_json(const EvalReport& rep) {
    nlohmann::json gens = nlohmann::json::object();
    for (const auto& [name, g] : rep.per_generator) {
        gens[name] = {{"ap", g.ap ? nlohmann::json(*g.ap) : nlohmann::json(nullptr)},
                      {"acc", g.acc},
                      {"real_acc", g.real_acc},
                      {"fake_acc", g.fake_acc},
                      {"n_real", g.n_real},
                      {"n_fake", g.n_fake}};
    }
    return {{"format", "sfld-report"},
            {"schema_version", kReportSchemaVersion},
            {"threshold", rep.threshold},
            {"per_generator", gens},
            {"averages",
             {{"mAP", rep.mean_ap}, {"acc", rep.mean_acc}, {"real_acc", rep.mean_real_acc}, {"fake_acc", rep.mean_fake_acc}}},
            {"n_errors", rep.n_errors},
            {"provenance", rep.provenance}};
}

/// Human-readable table, percentages with two decimals.
inline std::string format_report_table(const EvalReport& rep) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << std::left << std::setw(24) << "generator" << std::right << std::setw(8) << "AP" << std::setw(8) << "Acc"
        << std::setw(9) << "RealAcc" << std::setw(9) << "FakeAcc" << std::setw(8) << "n_real" << std::setw(8)
        << "n_fake" << "\n";
    for (const auto& [name, g] : rep.per_generator) {
        out << std::left << std::setw(24) << name << std::right << std::setw(8);
        if (g.ap) out << 100 * *g.ap;
        else out << "-";
        out << std::setw(8) << 100 * g.acc << std::setw(9) << 100 * g.real_acc << std::setw(9) << 100 * g.fake_acc
            << std::setw(8) << g.n_real << std::setw(8) << g.n_fake << "\n";
    }
    out << std::left << std::setw(24) << "Avg." << std::right << std::setw(8) << 100 * rep.mean_ap << std::setw(8)
        << 100 * rep.mean_acc << std::setw(9) << 100 * rep.mean_real_acc << std::setw(9) << 100 * rep.mean_fake_acc
        << "\n";
    return out.str();
}

inline void write_report(const EvalReport& rep, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot write " + path.string());
    out << to_json(rep).dump(2) << "\n";
}

// ------------------------------------------------------------ scatter

struct ScatterRow {
    std::string image_id;
    double logit_x = 0.0;
    double logit_y = 0.0;
    std::optional<int> true_label;
};

struct ScatterExport {
    std::string axis_x;
    std::string axis_y;
    std::vector<ScatterRow> rows;
};

/// Joins two score sets on image id (order of records_x). Both sides must
/// cover exactly the same ids.
inline ScatterExport export_scatter(const std::vector<ScoreRecord>& records_x, const std::vector<ScoreRecord>& records_y,
                                    std::string axis_x = "x", std::string axis_y = "y") {
    std::map<std::string, const ScoreRecord*> by_id;
    for (const auto& r : records_y) by_id[r.image_id] = &r;
    std::set<std::string> x_ids;
    for (const auto& r : records_x) x_ids.insert(r.image_id);
    if (x_ids.size() != by_id.size()) fail(Errc::IdMismatch, "score sets cover different image ids");
    ScatterExport out{std::move(axis_x), std::move(axis_y), {}};
    for (const auto& r : records_x) {
        const auto it = by_id.find(r.image_id);
        if (it == by_id.end()) fail(Errc::IdMismatch, "image id '" + r.image_id + "' missing from second score set");
        out.rows.push_back({r.image_id, r.fused_logit, it->second->fused_logit, r.true_label});
    }
    return out;
}

/// Counts per quadrant split at logit 0: [x>=0&&y>=0, x<0&&y>=0, x<0&&y<0, x>=0&&y<0].
inline std::array<std::size_t, 4> quadrant_counts(const ScatterExport& s) {
    std::array<std::size_t, 4> q{};
    for (const auto& r : s.rows) {
        const bool px = r.logit_x >= 0, py = r.logit_y >= 0;
        q[px && py ? 0 : (!px && py ? 1 : (!px ? 2 : 3))]++;
    }
    return q;
}

/// `meta` entries are written first as "# key=value" lines.
inline void write_scatter_csv(const ScatterExport& s, const std::filesystem::path& path,
                              const std::map<std::string, std::string>& meta = {}) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot write " + path.string());
    for (const auto& [k, v] : meta) out << "# " << k << "=" << v << "\n";
    out << "image_id," << s.axis_x << "," << s.axis_y << ",true_label\n" << std::setprecision(17);
    for (const auto& r : s.rows) {
        out << r.image_id << "," << r.logit_x << "," << r.logit_y << ",";
        if (r.true_label) out << *r.true_label;
        out << "\n";
    }
}

// ------------------------------------------------------------ sweeps

struct SweepRow {
    double value = 0.0;
    double map = 0.0;
    double mean_wall_time = 0.0;  // seconds per scored image
};

enum class SweepAxis { PatchSize, NViews };

inline std::string_view sweep_axis_name(SweepAxis a) { return a == SweepAxis::PatchSize ? "patch_size" : "n_views"; }

/// Runs `evaluate(value)` for each grid point; mAP is the report's unweighted
/// per-generator mean.
inline std::vector<SweepRow> sweep(SweepAxis axis, const std::vector<int>& grid,
                                   const std::function<std::vector<ScoreRecord>(int)>& evaluate,
                                   int input_size = 224) {
    if (grid.empty()) fail(Errc::InvalidConfig, "sweep grid is empty");
    std::vector<SweepRow> rows;
    for (int v : grid) {
        if (axis == SweepAxis::PatchSize && (v < 1 || input_size % v != 0)) {
            fail(Errc::IndivisibleTarget, "patch size " + std::to_string(v) + " does not divide " +
                                              std::to_string(input_size));
        }
        if (axis == SweepAxis::NViews && v < 1) fail(Errc::InvalidConfig, "n_views must be >= 1");
        const auto t0 = std::chrono::steady_clock::now();
        const auto records = evaluate(v);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back({static_cast<double>(v), build_report(records).mean_ap,
                        records.empty() ? 0.0 : secs / static_cast<double>(records.size())});
    }
    return rows;
}

inline void write_sweep_table(const std::vector<SweepRow>& rows, SweepAxis axis, const std::filesystem::path& path,
                              const std::map<std::string, std::string>& meta = {}) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot write " + path.string());
    for (const auto& [k, v] : meta) out << "# " << k << "=" << v << "\n";
    out << sweep_axis_name(axis) << "\tmAP\tmean_wall_time_s\n" << std::setprecision(10);
    for (const auto& r : rows) out << r.value << "\t" << r.map << "\t" << r.mean_wall_time << "\n";
}

}  // namespace sfld
