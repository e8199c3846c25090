// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfld/degrade.hpp"
#include "sfld/digest.hpp"
#include "sfld/encoders.hpp"
#include "sfld/error.hpp"
#include "sfld/heads.hpp"
#include "sfld/twinsynths.hpp"

namespace sfld {

struct DegradeGrid {
    std::vector<double> blur_sigmas{0.5, 1.0, 2.0, 3.0};
    std::vector<int> jpeg_qualities{30, 50, 70, 90, 100};
};

struct TwinsConfig {
    std::string method = "gan";      // gan | dm
    std::string predictor = "zero";  // dm only: zero | affine-toy
    GanFitConfig gan;
    DmTwinConfig dm;
};

/// Everything a command needs besides its file arguments. Loaded from JSON;
/// missing keys keep these defaults, unknown keys are rejected.
struct ProjectConfig {
    BackendSpec backend;
    std::vector<int> patch_sizes{28, 56, 224};
    int n_views = 10;
    double threshold = 0.5;
    std::uint64_t seed = 0;
    double val_fraction = 0.1;
    TrainConfig train;
    DegradeGrid degrade;
    TwinsConfig twins;

    /// Backend-independent checks; patch sizes against input size.
    void validate() const {
        if (patch_sizes.empty()) fail(Errc::InvalidConfig, "patch_sizes is empty");
        std::set<int> seen;
        for (int s : patch_sizes) {
            if (s < 1 || backend.input_size % s != 0) {
                fail(Errc::InvalidConfig, "patch size " + std::to_string(s) + " does not divide input size " +
                                              std::to_string(backend.input_size));
            }
            if (!seen.insert(s).second) fail(Errc::InvalidConfig, "duplicate patch size " + std::to_string(s));
        }
        if (n_views < 1) fail(Errc::InvalidConfig, "n_views must be >= 1");
        if (!(threshold > 0.0 && threshold < 1.0)) fail(Errc::InvalidConfig, "threshold must lie in (0,1)");
        if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail(Errc::InvalidConfig, "val_fraction must lie in [0,1)");
        for (double s : degrade.blur_sigmas) DegradeSpec::blur(s);
        for (int q : degrade.jpeg_qualities) DegradeSpec::jpeg(q);
        if (twins.method != "gan" && twins.method != "dm") fail(Errc::InvalidConfig, "twins.method must be gan or dm");
        if (twins.predictor != "zero" && twins.predictor != "affine-toy") {
            fail(Errc::InvalidConfig, "twins.predictor must be zero or affine-toy");
        }
        if (twins.method == "gan") twins.gan.validate();
        if (twins.dm.steps < 0 || twins.dm.steps > 1000 || twins.dm.crop_size < 0) {
            fail(Errc::InvalidConfig, "bad twins.dm settings");
        }
    }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) fail(Errc::InvalidConfig, where + " must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        bool known = false;
        for (const char* key : keys) known = known || k == key;
        if (!known) fail(Errc::InvalidConfig, "unknown key '" + k + "' in " + where);
    }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::json to_json(const ProjectConfig& c) {
    const auto& b = c.backend;
    const auto& g = c.twins.gan;
    return {
        {"backend",
         {{"name", b.name},
          {"weights", b.weights},
          {"sha256", b.sha256},
          {"command", b.command},
          {"stride", b.stride},
          {"input_size", b.input_size},
          {"preprocessing", {{"mean", b.preprocessing.mean}, {"stdev", b.preprocessing.stdev}}}}},
        {"patch_sizes", c.patch_sizes},
        {"n_views", c.n_views},
        {"threshold", c.threshold},
        {"seed", c.seed},
        {"val_fraction", c.val_fraction},
        {"train", to_json(c.train)},
        {"degrade", {{"blur_sigmas", c.degrade.blur_sigmas}, {"jpeg_qualities", c.degrade.jpeg_qualities}}},
        {"twins",
         {{"method", c.twins.method},
          {"predictor", c.twins.predictor},
          {"gan",
           {{"latent_dim", g.latent_dim},
            {"widths", g.widths},
            {"steps", g.steps},
            {"learning_rate", g.learning_rate},
            {"beta1", g.beta1},
            {"beta2", g.beta2},
            {"linear_decay", g.linear_decay},
            {"seed", g.seed},
            {"target_size", g.target_size},
            {"batchnorm", g.batchnorm},
            {"tanh_output", g.tanh_output},
            {"psnr_gate", g.psnr_gate}}},
          {"dm", {{"steps", c.twins.dm.steps}, {"crop_size", c.twins.dm.crop_size}}}}},
    };
}

inline ProjectConfig project_config_from_json(const nlohmann::json& j) {
    using detail::read_opt;
    using detail::reject_unknown;
    ProjectConfig c;
    try {
        reject_unknown(j, {"backend", "patch_sizes", "n_views", "threshold", "seed", "val_fraction", "train", "degrade",
                           "twins"},
                       "config");
        if (j.contains("backend")) {
            const auto& b = j.at("backend");
            reject_unknown(b, {"name", "weights", "sha256", "command", "stride", "input_size", "preprocessing"},
                           "backend");
            read_opt(b, "name", c.backend.name);
            read_opt(b, "weights", c.backend.weights);
            read_opt(b, "sha256", c.backend.sha256);
            read_opt(b, "command", c.backend.command);
            read_opt(b, "stride", c.backend.stride);
            read_opt(b, "input_size", c.backend.input_size);
            if (b.contains("preprocessing")) {
                const auto& p = b.at("preprocessing");
                reject_unknown(p, {"mean", "stdev"}, "backend.preprocessing");
                read_opt(p, "mean", c.backend.preprocessing.mean);
                read_opt(p, "stdev", c.backend.preprocessing.stdev);
                for (double s : c.backend.preprocessing.stdev) {
                    if (!(s > 0)) fail(Errc::InvalidConfig, "preprocessing stdev must be > 0");
                }
            }
        }
        read_opt(j, "patch_sizes", c.patch_sizes);
        read_opt(j, "n_views", c.n_views);
        read_opt(j, "threshold", c.threshold);
        read_opt(j, "seed", c.seed);
        read_opt(j, "val_fraction", c.val_fraction);
        if (j.contains("train")) {
            reject_unknown(j.at("train"), {"learning_rate", "batch_size", "epochs", "optimizer", "seed",
                                           "views_per_sample_per_epoch", "patience", "min_ap_delta", "min_loss_delta"},
                           "train");
            c.train = train_config_from_json(j.at("train"));
        }
        if (j.contains("degrade")) {
            const auto& d = j.at("degrade");
            reject_unknown(d, {"blur_sigmas", "jpeg_qualities"}, "degrade");
            read_opt(d, "blur_sigmas", c.degrade.blur_sigmas);
            read_opt(d, "jpeg_qualities", c.degrade.jpeg_qualities);
        }
        if (j.contains("twins")) {
            const auto& t = j.at("twins");
            reject_unknown(t, {"method", "predictor", "gan", "dm"}, "twins");
            read_opt(t, "method", c.twins.method);
            read_opt(t, "predictor", c.twins.predictor);
            if (t.contains("gan")) {
                const auto& g = t.at("gan");
                reject_unknown(g, {"latent_dim", "widths", "steps", "learning_rate", "beta1", "beta2", "linear_decay",
                                   "seed", "target_size", "batchnorm", "tanh_output", "psnr_gate"},
                               "twins.gan");
                auto& o = c.twins.gan;
                read_opt(g, "latent_dim", o.latent_dim);
                read_opt(g, "widths", o.widths);
                read_opt(g, "steps", o.steps);
                read_opt(g, "learning_rate", o.learning_rate);
                read_opt(g, "beta1", o.beta1);
                read_opt(g, "beta2", o.beta2);
                read_opt(g, "linear_decay", o.linear_decay);
                read_opt(g, "seed", o.seed);
                read_opt(g, "target_size", o.target_size);
                read_opt(g, "batchnorm", o.batchnorm);
                read_opt(g, "tanh_output", o.tanh_output);
                read_opt(g, "psnr_gate", o.psnr_gate);
            }
            if (t.contains("dm")) {
                const auto& d = t.at("dm");
                reject_unknown(d, {"steps", "crop_size"}, "twins.dm");
                read_opt(d, "steps", c.twins.dm.steps);
                read_opt(d, "crop_size", c.twins.dm.crop_size);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidConfig, std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline ProjectConfig load_project_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::InvalidConfig, "cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidConfig, path.string() + ": " + e.what());
    }
    return project_config_from_json(j);
}

/// sha256 of the canonical (sorted-key, defaults-filled) JSON form.
inline std::string config_digest(const ProjectConfig& c) { return sha256_hex(to_json(c).dump()); }

}  // namespace sfld
