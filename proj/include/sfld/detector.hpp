// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sfld/datasets.hpp"
#include "sfld/encoders.hpp"
#include "sfld/error.hpp"
#include "sfld/heads.hpp"
#include "sfld/image_io.hpp"
#include "sfld/metrics.hpp"
#include "sfld/patchcore.hpp"
#include "sfld/rng.hpp"

namespace sfld {

struct BundleMember {
    int patch_size = 0;
    LinearHead head;
};

/// Ordered (patch size, head) pairs plus the fusion parameters.
struct DetectorBundle {
    std::vector<BundleMember> members;
    int n_views = 10;
    double threshold = 0.5;
    std::string backend_name;

    /// Throws on hard violations; returns soft warnings (patch sizes below
    /// the backbone token size disrupt the token embedding itself).
    std::vector<std::string> validate(const EncoderBackend& backend) const {
        std::vector<std::string> warnings;
        if (members.empty()) fail(Errc::InvalidBundle, "bundle has no members");
        if (n_views < 1) fail(Errc::InvalidBundle, "n_views must be >= 1");
        if (backend_name != backend.name()) {
            fail(Errc::BundleBackendMismatch, "bundle built for '" + backend_name + "', backend is '" +
                                                  backend.name() + "'");
        }
        std::set<int> sizes;
        for (const auto& m : members) {
            if (!sizes.insert(m.patch_size).second) {
                fail(Errc::InvalidBundle, "duplicate patch size " + std::to_string(m.patch_size));
            }
            if (m.patch_size < 1 || m.patch_size > backend.input_size() || backend.input_size() % m.patch_size != 0) {
                fail(Errc::InvalidBundle, "patch size " + std::to_string(m.patch_size) + " does not divide input " +
                                              std::to_string(backend.input_size()));
            }
            if (m.head.patch_size != m.patch_size) fail(Errc::InvalidBundle, "head trained for another patch size");
            if (m.head.backend_name != backend.name()) {
                fail(Errc::BundleBackendMismatch, "head for patch size " + std::to_string(m.patch_size) +
                                                      " trained against '" + m.head.backend_name + "'");
            }
            if (m.head.dim() != backend.feature_dim()) {
                fail(Errc::DimensionMismatch, "head dim " + std::to_string(m.head.dim()) + " vs backend dim " +
                                                  std::to_string(backend.feature_dim()));
            }
            if (m.patch_size < backend.input_size() && m.patch_size < backend.token_size()) {
                warnings.push_back("patch size " + std::to_string(m.patch_size) + " is below the backbone token size " +
                                   std::to_string(backend.token_size()));
            }
        }
        return warnings;
    }
};

struct ScoreRecord {
    std::string image_id;
    std::string generator;
    std::string content_class;
    std::map<int, double> per_scale_logits;  // patch size -> view-averaged logit
    double fused_logit = 0.0;
    double probability = 0.5;
    int predicted_label = 0;
    std::optional<int> true_label;
    std::uint64_t seed = 0;
    std::optional<std::string> error;

    bool ok() const noexcept { return !error.has_value(); }
    bool operator==(const ScoreRecord&) const = default;
};

/// Ties go to fake.
inline int classify(double probability, double threshold = 0.5) { return probability >= threshold ? 1 : 0; }

inline int classify(const ScoreRecord& record, double threshold = 0.5) {
    return classify(record.probability, threshold);
}

/// The views a member sees: one center crop when s equals the input size,
/// otherwise n_views full-image composites.
inline std::vector<Image> member_views(const Image& image, int patch_size, int input_size, int n_views, Rng& rng) {
    if (patch_size == input_size) return {center_crop(image, input_size)};
    std::vector<Image> views;
    views.reserve(static_cast<std::size_t>(n_views));
    for (int v = 0; v < n_views; ++v) views.push_back(sample_composite(image, patch_size, input_size, rng));
    return views;
}

inline FeatureVector mean_feature(const std::vector<FeatureVector>& features) {
    FeatureVector mean(features.front().size(), 0.0);
    for (const auto& f : features) {
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += f[k];
    }
    for (auto& v : mean) v /= static_cast<double>(features.size());
    return mean;
}

/// Per-member RNG stream, so member order does not affect which views a
/// member draws.
inline Rng member_rng(std::uint64_t image_seed, int patch_size) {
    return Rng(derive_seed(image_seed, static_cast<std::uint64_t>(patch_size)));
}

/// z_s = psi_s(mean of view features); the fused logit is the mean of z_s
/// over members and the probability its sigmoid.
inline ScoreRecord score_image(const DetectorBundle& bundle, const EncoderBackend& backend, const Image& image,
                               std::uint64_t seed, std::string image_id = {}) {
    const int in = backend.input_size();
    if (image.height() < in || image.width() < in) {
        fail(Errc::ImageTooSmall, "image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                                      " below input size " + std::to_string(in));
    }
    if (bundle.backend_name != backend.name()) fail(Errc::BundleBackendMismatch, "bundle/backend mismatch");
    ScoreRecord rec;
    rec.image_id = std::move(image_id);
    rec.seed = seed;
    double sum = 0.0;
    for (const auto& m : bundle.members) {
        Rng rng = member_rng(seed, m.patch_size);
        const auto feats = backend.encode_batch(member_views(image, m.patch_size, in, bundle.n_views, rng));
        const double z = head_logit(m.head, mean_feature(feats));
        rec.per_scale_logits[m.patch_size] = z;
        sum += z;
    }
    rec.fused_logit = sum / static_cast<double>(bundle.members.size());
    rec.probability = sigmoid(rec.fused_logit);
    rec.predicted_label = classify(rec.probability, bundle.threshold);
    return rec;
}

/// Plain linear probe: center crop, encode, one head, sigmoid.
inline ScoreRecord score_linear_probe(const LinearHead& head, const EncoderBackend& backend, const Image& image,
                                     double threshold = 0.5, std::string image_id = {}) {
    ScoreRecord rec;
    rec.image_id = std::move(image_id);
    const double z = head_logit(head, backend.encode(center_crop(image, backend.input_size())));
    rec.per_scale_logits[backend.input_size()] = z;
    rec.fused_logit = z;
    rec.probability = sigmoid(z);
    rec.predicted_label = classify(rec.probability, threshold);
    return rec;
}

inline std::uint64_t image_seed(std::uint64_t master_seed, const std::string& image_id) {
    return derive_seed(master_seed, image_id);
}

struct ScoreOptions {
    std::uint64_t master_seed = 0;
    int workers = 1;
    bool strict = false;  // rethrow the first per-image failure instead of recording it
};

namespace detail {

template <typename ScoreFn>
std::vector<ScoreRecord> score_rows(const Manifest& manifest, const ScoreOptions& opt, ScoreFn&& fn) {
    std::vector<ScoreRecord> records(manifest.rows.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < manifest.rows.size(); i = next++) {
            const auto& row = manifest.rows[i];
            ScoreRecord rec;
            try {
                rec = fn(to_float(read_image(manifest.resolve(row))), row.image_path);
            } catch (const std::exception& e) {
                if (opt.strict) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
                rec = ScoreRecord{};
                rec.image_id = row.image_path;
                rec.error = e.what();
            }
            rec.generator = row.generator;
            rec.content_class = row.content_class;
            rec.true_label = row.label;
            records[i] = std::move(rec);
        }
    };
    const int n = std::max(1, opt.workers);
    std::vector<std::thread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return records;
}

}  // namespace detail

/// One record per manifest row, in manifest order. Each image's seed comes
/// from (master seed, image id), so the worker count never changes results.
inline std::vector<ScoreRecord> score_dataset(const DetectorBundle& bundle, const EncoderBackend& backend,
                                              const Manifest& manifest, const ScoreOptions& opt = {}) {
    bundle.validate(backend);
    return detail::score_rows(manifest, opt, [&](const Image& img, const std::string& id) {
        return score_image(bundle, backend, img, image_seed(opt.master_seed, id), id);
    });
}

inline std::vector<ScoreRecord> score_dataset_linear_probe(const LinearHead& head, const EncoderBackend& backend,
                                                           const Manifest& manifest, const ScoreOptions& opt = {},
                                                           double threshold = 0.5) {
    return detail::score_rows(manifest, opt, [&](const Image& img, const std::string& id) {
        auto rec = score_linear_probe(head, backend, img, threshold, id);
        rec.seed = image_seed(opt.master_seed, id);
        return rec;
    });
}

// ------------------------------------------------------------ score files

inline constexpr int kScoreFormatVersion = 1;

inline nlohmann::json to_json(const ScoreRecord& r) {
    nlohmann::json logits = nlohmann::json::object();
    for (const auto& [s, z] : r.per_scale_logits) logits[std::to_string(s)] = z;
    nlohmann::json j{{"image_id", r.image_id},
                     {"generator", r.generator},
                     {"content_class", r.content_class},
                     {"per_scale_logits", logits},
                     {"fused_logit", r.fused_logit},
                     {"probability", r.probability},
                     {"predicted_label", r.predicted_label},
                     {"true_label", r.true_label ? nlohmann::json(*r.true_label) : nlohmann::json(nullptr)},
                     {"seed", r.seed}};
    if (r.error) j["error"] = *r.error;
    return j;
}

inline ScoreRecord score_record_from_json(const nlohmann::json& j) {
    ScoreRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.generator = j.value("generator", "");
    r.content_class = j.value("content_class", "");
    for (const auto& [k, v] : j.at("per_scale_logits").items()) r.per_scale_logits[std::stoi(k)] = v.get<double>();
    r.fused_logit = j.at("fused_logit").get<double>();
    r.probability = j.at("probability").get<double>();
    r.predicted_label = j.at("predicted_label").get<int>();
    if (!j.at("true_label").is_null()) r.true_label = j.at("true_label").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("error")) r.error = j.at("error").get<std::string>();
    return r;
}

/// JSON lines: a header object, then one record per line.
inline void write_score_file(const std::filesystem::path& path, const std::vector<ScoreRecord>& records,
                             const nlohmann::json& provenance = nlohmann::json::object()) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot write " + path.string());
    nlohmann::json header{{"format", "sfld-scores"}, {"version", kScoreFormatVersion}, {"provenance", provenance}};
    out << header.dump() << "\n";
    for (const auto& r : records) out << to_json(r).dump() << "\n";
}

struct ScoreFile {
    nlohmann::json provenance;
    std::vector<ScoreRecord> records;
};

inline ScoreFile read_score_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::IoError, "cannot open score file " + path.string());
    ScoreFile out;
    std::string line;
    bool header = false;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto j = nlohmann::json::parse(line);
            if (!header) {
                if (j.value("format", "") != "sfld-scores" || j.value("version", 0) != kScoreFormatVersion) {
                    fail(Errc::DecodeError, path.string() + " is not a version-1 score file");
                }
                out.provenance = j.value("provenance", nlohmann::json::object());
                header = true;
                continue;
            }
            out.records.push_back(score_record_from_json(j));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::DecodeError, path.string() + ": " + e.what());
    }
    if (!header) fail(Errc::DecodeError, path.string() + " has no header line");
    return out;
}

// ------------------------------------------------------------ training a bundle

/// Trains the head for one patch size on fresh shuffled views each epoch.
/// Validation views are drawn once with a seed distinct from the training
/// views; an empty validation manifest disables early stopping. The member
/// seed depends only on (cfg.seed, s), so members can train in any order.
inline TrainResult train_member(const Manifest& train, const Manifest& validation, const EncoderBackend& backend,
                                int patch_size, const TrainConfig& cfg) {
    TrainConfig member_cfg = cfg;
    member_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(patch_size));
    TrainingFeatureSource source(train, backend, patch_size, member_cfg);
    std::vector<LabeledFeature> val;
    if (!validation.rows.empty()) {
        TrainConfig val_cfg = member_cfg;
        val_cfg.seed = derive_seed(member_cfg.seed, "validation");
        val_cfg.views_per_sample_per_epoch = 1;
        val = TrainingFeatureSource(validation, backend, patch_size, val_cfg).features(0);
    }
    return train_head([&](int epoch) { return source.features(epoch); }, patch_size, member_cfg, backend.name(), val);
}

/// One independently trained head per patch size.
inline DetectorBundle train_bundle(const Manifest& train, const Manifest& validation, const EncoderBackend& backend,
                                   const std::vector<int>& patch_sizes, const TrainConfig& cfg, int n_views = 10) {
    DetectorBundle bundle;
    bundle.backend_name = backend.name();
    bundle.n_views = n_views;
    for (int s : patch_sizes) bundle.members.push_back({s, train_member(train, validation, backend, s, cfg).head});
    bundle.validate(backend);
    return bundle;
}

// ------------------------------------------------------------ bundle files

inline constexpr int kBundleFormatVersion = 1;

/// Writes each head as head-<s>.json beside the bundle and a bundle file
/// that references them by relative path.
inline void save_bundle(const DetectorBundle& b, const std::filesystem::path& path) {
    const auto dir = path.parent_path();
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : b.members) {
        const std::string head_name = "head-" + std::to_string(m.patch_size) + ".json";
        save_head(m.head, dir / head_name);
        members.push_back({{"patch_size", m.patch_size}, {"head", head_name}});
    }
    nlohmann::json j{{"format", "sfld-bundle"},          {"version", kBundleFormatVersion},
                     {"backend_name", b.backend_name},   {"n_views", b.n_views},
                     {"threshold", b.threshold},         {"members", members}};
    if (!dir.empty()) std::filesystem::create_directories(dir);
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot write " + path.string());
    out << j.dump(2) << "\n";
}

inline DetectorBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::IoError, "cannot open bundle " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.value("format", "") != "sfld-bundle" || j.value("version", 0) != kBundleFormatVersion) {
            fail(Errc::InvalidBundle, path.string() + " is not a version-1 bundle");
        }
        DetectorBundle b;
        b.backend_name = j.at("backend_name").get<std::string>();
        b.n_views = j.value("n_views", 10);
        b.threshold = j.value("threshold", 0.5);
        for (const auto& m : j.at("members")) {
            const std::filesystem::path head_path(m.at("head").get<std::string>());
            b.members.push_back({m.at("patch_size").get<int>(),
                                 load_head(head_path.is_absolute() ? head_path : path.parent_path() / head_path)});
        }
        return b;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidBundle, path.string() + ": " + e.what());
    }
}

}  // namespace sfld
