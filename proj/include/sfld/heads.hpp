// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfld/datasets.hpp"
#include "sfld/digest.hpp"
#include "sfld/encoders.hpp"
#include "sfld/error.hpp"
#include "sfld/image_io.hpp"
#include "sfld/metrics.hpp"
#include "sfld/patchcore.hpp"
#include "sfld/rng.hpp"

namespace sfld {

/// psi_s: one affine layer on frozen features, one per patch size.
struct LinearHead {
    std::vector<double> weights;
    double bias = 0.0;
    int patch_size = 0;
    std::string backend_name;
    std::string train_config_digest;

    std::size_t dim() const noexcept { return weights.size(); }
    bool operator==(const LinearHead&) const = default;
};

struct LabeledFeature {
    FeatureVector feature;
    int label = 0;  // 0 real, 1 fake
};

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 256;
    int epochs = 20;
    std::string optimizer = "adam";  // adam | sgd
    std::uint64_t seed = 0;
    int views_per_sample_per_epoch = 1;
    int patience = 3;  // epochs without validation-AP gain before stopping; 0 disables
    double min_ap_delta = 1e-4;
    double min_loss_delta = 1e-4;  // tie-break on validation loss when AP is flat
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
            {"epochs", c.epochs},               {"optimizer", c.optimizer},
            {"seed", c.seed},                   {"views_per_sample_per_epoch", c.views_per_sample_per_epoch},
            {"patience", c.patience},           {"min_ap_delta", c.min_ap_delta},
            {"min_loss_delta", c.min_loss_delta}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.optimizer = j.value("optimizer", c.optimizer);
    c.seed = j.value("seed", c.seed);
    c.views_per_sample_per_epoch = j.value("views_per_sample_per_epoch", c.views_per_sample_per_epoch);
    c.patience = j.value("patience", c.patience);
    c.min_ap_delta = j.value("min_ap_delta", c.min_ap_delta);
    c.min_loss_delta = j.value("min_loss_delta", c.min_loss_delta);
    if (c.learning_rate <= 0 || c.batch_size < 1 || c.epochs < 1 || c.views_per_sample_per_epoch < 1 ||
        c.patience < 0 || (c.optimizer != "adam" && c.optimizer != "sgd")) {
        fail(Errc::InvalidConfig, "invalid train config " + j.dump());
    }
    return c;
}

inline std::string digest_of(const TrainConfig& c) { return sha256_hex(to_json(c).dump()); }

// ------------------------------------------------------------ objective

inline double head_logit(const LinearHead& head, std::span<const double> feature) {
    if (feature.size() != head.weights.size()) {
        fail(Errc::DimensionMismatch, "feature length " + std::to_string(feature.size()) + " vs head dim " +
                                          std::to_string(head.weights.size()));
    }
    return std::inner_product(head.weights.begin(), head.weights.end(), feature.begin(), head.bias);
}

/// -log sigma(z) for y=1, -log(1 - sigma(z)) for y=0, without overflow.
inline double bce_term(double z, int y) { return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))); }

inline double bce_loss(std::span<const double> logits, std::span<const int> labels) {
    if (logits.empty()) fail(Errc::EmptyBatch, "bce over empty batch");
    if (logits.size() != labels.size()) fail(Errc::LengthMismatch, "logits and labels differ in length");
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) sum += bce_term(logits[i], labels[i]);
    return sum / static_cast<double>(logits.size());
}

struct HeadGradient {
    std::vector<double> weights;
    double bias = 0.0;
    double loss = 0.0;
};

/// Mean BCE of `head` over the indexed samples and its analytic gradient:
/// dL/dz_i = (sigma(z_i) - y_i) / N.
inline HeadGradient bce_gradient(const LinearHead& head, std::span<const LabeledFeature> data,
                                 std::span<const std::size_t> indices) {
    if (indices.empty()) fail(Errc::EmptyBatch, "gradient over empty batch");
    HeadGradient g{std::vector<double>(head.dim(), 0.0), 0.0, 0.0};
    const double inv_n = 1.0 / static_cast<double>(indices.size());
    for (std::size_t idx : indices) {
        const auto& s = data[idx];
        const double z = head_logit(head, s.feature);
        g.loss += bce_term(z, s.label) * inv_n;
        const double dz = (sigmoid(z) - s.label) * inv_n;
        for (std::size_t k = 0; k < g.weights.size(); ++k) g.weights[k] += dz * s.feature[k];
        g.bias += dz;
    }
    return g;
}

inline HeadGradient bce_gradient(const LinearHead& head, std::span<const LabeledFeature> data) {
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return bce_gradient(head, data, all);
}

inline double dataset_loss(const LinearHead& head, std::span<const LabeledFeature> data) {
    double sum = 0.0;
    for (const auto& s : data) sum += bce_term(head_logit(head, s.feature), s.label);
    return sum / static_cast<double>(data.size());
}

inline double dataset_ap(const LinearHead& head, std::span<const LabeledFeature> data) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& s : data) {
        scores.push_back(head_logit(head, s.feature));
        labels.push_back(s.label);
    }
    return average_precision(scores, labels);
}

// ------------------------------------------------------------ training

struct TrainResult {
    LinearHead head;
    std::vector<double> loss_trace;    // mean training loss after each epoch
    std::vector<double> val_ap_trace;  // empty without a validation set
    int best_epoch = 0;                // 0-based epoch the returned head comes from
};

/// Supplies the training set for a given epoch (fresh shuffled views).
using FeatureProvider = std::function<std::vector<LabeledFeature>(int epoch)>;

/// Minimizes mean BCE over mini-batches. With a validation set and
/// cfg.patience > 0, stops once validation AP has not improved for
/// `patience` epochs and returns the best-validation head.
inline TrainResult train_head(const FeatureProvider& provider, int patch_size, const TrainConfig& cfg,
                              std::string backend_name = {},
                              std::span<const LabeledFeature> validation = {}) {
    TrainResult result;
    LinearHead head;
    head.patch_size = patch_size;
    head.backend_name = std::move(backend_name);
    head.train_config_digest = digest_of(cfg);

    std::vector<double> m1, m2;
    long step = 0;
    double best_ap = -1.0;
    double best_loss = std::numeric_limits<double>::infinity();
    int since_best = 0;
    const bool early_stop = !validation.empty() && cfg.patience > 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto data = provider(epoch);
        if (data.empty()) fail(Errc::EmptyBatch, "empty training set");
        if (epoch == 0) {
            const std::size_t d = data.front().feature.size();
            for (const auto& s : data) {
                if (s.feature.size() != d) fail(Errc::DimensionMismatch, "training features differ in length");
            }
            const auto pos = std::count_if(data.begin(), data.end(), [](const auto& s) { return s.label == 1; });
            if (pos == 0 || pos == static_cast<long>(data.size())) {
                fail(Errc::SingleClassDataset, "training set holds a single class");
            }
            head.weights.assign(d, 0.0);
            m1.assign(d + 1, 0.0);
            m2.assign(d + 1, 0.0);
        }
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, "minibatch/" + std::to_string(epoch)));
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            std::swap(order[i], order[i + rng.below(order.size() - i)]);
        }
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const auto g = bce_gradient(head, data, std::span(order).subspan(start, end - start));
            ++step;
            const std::size_t d = head.weights.size();
            if (cfg.optimizer == "sgd") {
                for (std::size_t k = 0; k < d; ++k) head.weights[k] -= cfg.learning_rate * g.weights[k];
                head.bias -= cfg.learning_rate * g.bias;
                continue;
            }
            constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
            auto update = [&](double& param, double grad, std::size_t k) {
                m1[k] = b1 * m1[k] + (1 - b1) * grad;
                m2[k] = b2 * m2[k] + (1 - b2) * grad * grad;
                param -= cfg.learning_rate * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + eps);
            };
            for (std::size_t k = 0; k < d; ++k) update(head.weights[k], g.weights[k], k);
            update(head.bias, g.bias, d);
        }
        result.loss_trace.push_back(dataset_loss(head, data));

        if (!validation.empty()) {
            const double ap = dataset_ap(head, validation);
            const double val_loss = dataset_loss(head, validation);
            result.val_ap_trace.push_back(ap);
            // AP saturates on easy data; ties are broken by validation loss.
            const bool better = ap > best_ap + cfg.min_ap_delta ||
                                (ap >= best_ap - cfg.min_ap_delta && val_loss < best_loss - cfg.min_loss_delta);
            if (better || epoch == 0) {
                best_ap = std::max(ap, best_ap);
                best_loss = val_loss;
                since_best = 0;
                result.head = head;
                result.best_epoch = epoch;
            } else if (early_stop && ++since_best >= cfg.patience) {
                break;
            }
        }
    }
    if (validation.empty() || !early_stop) {
        result.head = head;
        result.best_epoch = static_cast<int>(result.loss_trace.size()) - 1;
    }
    return result;
}

/// Fixed feature set, reused every epoch.
inline TrainResult train_head(const std::vector<LabeledFeature>& features, int patch_size, const TrainConfig& cfg,
                              std::string backend_name = {}, std::span<const LabeledFeature> validation = {}) {
    return train_head([&](int) { return features; }, patch_size, cfg, std::move(backend_name), validation);
}

// ------------------------------------------------------------ features from images

/// Decoded, center-cropped training images plus the per-epoch view generator.
/// For s < input_size every call draws fresh permutations keyed by
/// (seed, image id, epoch, view); for s == input_size the crop is encoded
/// once and reused.
class TrainingFeatureSource {
public:
    TrainingFeatureSource(const Manifest& manifest, const EncoderBackend& backend, int patch_size,
                          const TrainConfig& cfg)
        : backend_(backend), patch_size_(patch_size), cfg_(cfg) {
        const int in = backend.input_size();
        if (patch_size < 1 || patch_size > in || in % patch_size != 0) {
            fail(Errc::IndivisibleTarget, "patch size " + std::to_string(patch_size) + " must divide " +
                                              std::to_string(in));
        }
        for (const auto& row : manifest.rows) {
            crops_.push_back(center_crop(to_float(read_image(manifest.resolve(row))), in));
            labels_.push_back(row.label);
            ids_.push_back(row.image_path);
        }
        if (patch_size == in) fixed_ = encode_all(crops_);
    }

    std::size_t size() const noexcept { return crops_.size(); }

    std::vector<LabeledFeature> features(int epoch) const {
        std::vector<LabeledFeature> out;
        if (fixed_) {
            for (std::size_t i = 0; i < crops_.size(); ++i) {
                for (int v = 0; v < cfg_.views_per_sample_per_epoch; ++v) out.push_back({(*fixed_)[i], labels_[i]});
            }
            return out;
        }
        std::vector<Image> views;
        std::vector<int> labels;
        for (std::size_t i = 0; i < crops_.size(); ++i) {
            for (int v = 0; v < cfg_.views_per_sample_per_epoch; ++v) {
                Rng rng(derive_seed(cfg_.seed, ids_[i] + "#" + std::to_string(epoch) + "#" + std::to_string(v)));
                views.push_back(patch_shuffle(crops_[i], patch_size_, rng));
                labels.push_back(labels_[i]);
            }
        }
        auto feats = backend_.encode_batch(views);
        for (std::size_t k = 0; k < feats.size(); ++k) out.push_back({std::move(feats[k]), labels[k]});
        return out;
    }

    /// Unshuffled encodings of the crops (for validation of s == input_size heads
    /// and for the baseline pipeline).
    std::vector<LabeledFeature> plain_features() const {
        auto feats = encode_all(crops_);
        std::vector<LabeledFeature> out;
        for (std::size_t i = 0; i < feats.size(); ++i) out.push_back({std::move(feats[i]), labels_[i]});
        return out;
    }

private:
    std::vector<FeatureVector> encode_all(const std::vector<Image>& images) const {
        return backend_.encode_batch(images);
    }

    const EncoderBackend& backend_;
    int patch_size_;
    TrainConfig cfg_;
    std::vector<Image> crops_;
    std::vector<int> labels_;
    std::vector<std::string> ids_;
    std::optional<std::vector<FeatureVector>> fixed_;
};

/// One epoch's labeled features for a manifest.
inline std::vector<LabeledFeature> build_training_features(const Manifest& manifest, const EncoderBackend& backend,
                                                           int patch_size, const TrainConfig& cfg, int epoch = 0) {
    return TrainingFeatureSource(manifest, backend, patch_size, cfg).features(epoch);
}

// ------------------------------------------------------------ checkpoints

inline constexpr int kHeadFormatVersion = 1;

/// JSON container; doubles are written in shortest round-trip form, so a
/// save/load cycle is bit-exact on every IEEE-754 platform.
inline nlohmann::json to_json(const LinearHead& h) {
    return {{"format", "sfld-head"},
            {"version", kHeadFormatVersion},
            {"backend_name", h.backend_name},
            {"patch_size", h.patch_size},
            {"dim", h.weights.size()},
            {"weights", h.weights},
            {"bias", h.bias},
            {"train_config_digest", h.train_config_digest}};
}

inline LinearHead head_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "sfld-head" || j.value("version", 0) != kHeadFormatVersion) {
        fail(Errc::InvalidBundle, "not a version-1 sfld-head checkpoint");
    }
    LinearHead h;
    h.backend_name = j.at("backend_name").get<std::string>();
    h.patch_size = j.at("patch_size").get<int>();
    h.weights = j.at("weights").get<std::vector<double>>();
    h.bias = j.at("bias").get<double>();
    h.train_config_digest = j.value("train_config_digest", "");
    if (h.weights.size() != j.at("dim").get<std::size_t>()) fail(Errc::DimensionMismatch, "checkpoint dim mismatch");
    for (double w : h.weights) {
        if (!std::isfinite(w)) fail(Errc::InvalidBundle, "non-finite weight in checkpoint");
    }
    return h;
}

inline void save_head(const LinearHead& h, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot write " + path.string());
    out << to_json(h).dump() << "\n";
}

inline LinearHead load_head(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::IoError, "cannot open head checkpoint " + path.string());
    try {
        return head_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidBundle, path.string() + ": " + e.what());
    }
}

}  // namespace sfld
