// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "sfld/digest.hpp"
#include "sfld/error.hpp"
#include "sfld/image.hpp"

namespace sfld {

using FeatureVector = std::vector<double>;

/// Per-channel normalization applied inside encode: (v - mean) / stdev.
struct Preprocessing {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> stdev{1.0, 1.0, 1.0};
};

/// How to obtain a backend; mirrors the "backend" block of the project config.
struct BackendSpec {
    std::string name = "avgpool-flatten";
    std::string weights;  // path; production backends only
    std::string sha256;   // expected content hash of `weights`; empty skips the check
    std::string command;  // feature-extraction executable; production backends only
    int stride = 14;      // toy backend only
    int input_size = 224;
    Preprocessing preprocessing{};  // toy backend only; production backends fix their own
};

/// Frozen feature extractor f(.). Implementations are immutable after
/// construction, so concurrent encode calls are safe.
class EncoderBackend {
public:
    virtual ~EncoderBackend() = default;

    virtual std::string name() const = 0;
    virtual int input_size() const = 0;
    virtual std::size_t feature_dim() const = 0;
    /// Side of the backbone's own input tokens; shuffling below it is flagged.
    virtual int token_size() const = 0;
    virtual Preprocessing preprocessing() const = 0;

    FeatureVector encode(const Image& image) const {
        auto out = encode_batch(std::span<const Image>(&image, 1));
        return std::move(out.front());
    }

    /// Element-wise equal to encode; order preserved.
    std::vector<FeatureVector> encode_batch(std::span<const Image> images) const {
        for (const auto& img : images) {
            if (img.height() != input_size() || img.width() != input_size()) {
                fail(Errc::SizeMismatch, name() + " expects " + std::to_string(input_size()) + "x" +
                                             std::to_string(input_size()) + ", got " +
                                             std::to_string(img.height()) + "x" + std::to_string(img.width()));
            }
            require_unit_range(img);
        }
        auto features = encode_validated(images);
        for (const auto& f : features) {
            if (f.size() != feature_dim()) fail(Errc::DimensionMismatch, name() + " returned wrong feature length");
            for (double v : f) {
                if (!std::isfinite(v)) fail(Errc::RangeViolation, name() + " produced a non-finite feature");
            }
        }
        return features;
    }

protected:
    virtual std::vector<FeatureVector> encode_validated(std::span<const Image> images) const = 0;
};

/// Deterministic in-tree backend: normalize, average-pool stride x stride
/// blocks per channel, flatten token-major (token, channel). Exactly linear in
/// the pixels, so encode(mean of images) == mean of encodings.
class AvgPoolBackend final : public EncoderBackend {
public:
    explicit AvgPoolBackend(int stride = 14, int input_size = 224, Preprocessing pre = {})
        : stride_(stride), input_size_(input_size), pre_(pre) {
        if (stride < 1 || input_size % stride != 0) {
            fail(Errc::InvalidConfig, "avgpool stride " + std::to_string(stride) + " must divide input size " +
                                          std::to_string(input_size));
        }
    }

    std::string name() const override { return "avgpool-flatten"; }
    int input_size() const override { return input_size_; }
    std::size_t feature_dim() const override {
        const auto g = static_cast<std::size_t>(input_size_ / stride_);
        return 3 * g * g;
    }
    int token_size() const override { return stride_; }
    Preprocessing preprocessing() const override { return pre_; }
    int stride() const noexcept { return stride_; }

protected:
    std::vector<FeatureVector> encode_validated(std::span<const Image> images) const override {
        std::vector<FeatureVector> out;
        out.reserve(images.size());
        const int g = input_size_ / stride_;
        const double area = static_cast<double>(stride_) * stride_;
        for (const auto& img : images) {
            FeatureVector f(feature_dim(), 0.0);
            for (int y = 0; y < input_size_; ++y) {
                const float* px = img.row(y);
                double* tok_row = f.data() + static_cast<std::size_t>(y / stride_) * g * 3;
                for (int x = 0; x < input_size_; ++x) {
                    double* tok = tok_row + static_cast<std::size_t>(x / stride_) * 3;
                    tok[0] += px[3 * x + 0];
                    tok[1] += px[3 * x + 1];
                    tok[2] += px[3 * x + 2];
                }
            }
            for (std::size_t i = 0; i < f.size(); ++i) {
                const std::size_t c = i % 3;
                f[i] = (f[i] / area - pre_.mean[c]) / pre_.stdev[c];
            }
            out.push_back(std::move(f));
        }
        return out;
    }

private:
    int stride_;
    int input_size_;
    Preprocessing pre_;
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4] = {};
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

}  // namespace detail

/// Production backend bridge. The frozen network runs out of process:
///
///   <command> --weights W --input IN --output OUT
///
/// IN  = "SFLDIMG1", u32 count, u32 height, u32 width, then count*H*W*3
///       little-endian f32 values, already normalized, HWC order.
/// OUT = "SFLDFEA1", u32 count, u32 dim, then count*dim little-endian f32.
///
/// tools/clip_features.py implements the command for CLIP ViT-L/14.
class ExternalCommandBackend final : public EncoderBackend {
public:
    struct Info {
        std::string name;
        int input_size = 224;
        std::size_t feature_dim = 0;
        int token_size = 14;
        Preprocessing pre;
    };

    ExternalCommandBackend(Info info, std::string command, std::string weights)
        : info_(std::move(info)), command_(std::move(command)), weights_(std::move(weights)) {}

    std::string name() const override { return info_.name; }
    int input_size() const override { return info_.input_size; }
    std::size_t feature_dim() const override { return info_.feature_dim; }
    int token_size() const override { return info_.token_size; }
    Preprocessing preprocessing() const override { return info_.pre; }

protected:
    std::vector<FeatureVector> encode_validated(std::span<const Image> images) const override {
        if (images.empty()) return {};
        static std::atomic<std::uint64_t> counter{0};
        const auto stem = std::filesystem::temp_directory_path() /
                          ("sfld-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        const auto in_path = stem.string() + ".img";
        const auto out_path = stem.string() + ".fea";
        struct Cleanup {
            std::string a, b;
            ~Cleanup() {
                std::error_code ec;
                std::filesystem::remove(a, ec);
                std::filesystem::remove(b, ec);
            }
        } cleanup{in_path, out_path};
        {
            std::ofstream out(in_path, std::ios::binary);
            out.write("SFLDIMG1", 8);
            detail::put_u32(out, static_cast<std::uint32_t>(images.size()));
            detail::put_u32(out, static_cast<std::uint32_t>(input_size()));
            detail::put_u32(out, static_cast<std::uint32_t>(input_size()));
            for (const auto& img : images) {
                const auto px = img.pixels();
                for (std::size_t i = 0; i < px.size(); ++i) {
                    const std::size_t c = i % 3;
                    detail::put_f32(out, static_cast<float>((px[i] - info_.pre.mean[c]) / info_.pre.stdev[c]));
                }
            }
            if (!out) fail(Errc::IoError, "cannot write " + in_path);
        }
        const std::string cmd = command_ + " --weights " + detail::shell_quote(weights_) + " --input " +
                                detail::shell_quote(in_path) + " --output " + detail::shell_quote(out_path);
        if (std::system(cmd.c_str()) != 0) fail(Errc::IoError, "feature command failed: " + cmd);
        std::ifstream in(out_path, std::ios::binary);
        char magic[8] = {};
        in.read(magic, 8);
        if (!in || std::memcmp(magic, "SFLDFEA1", 8) != 0) fail(Errc::DecodeError, "bad feature file " + out_path);
        const auto count = detail::get_u32(in);
        const auto dim = detail::get_u32(in);
        if (count != images.size() || dim != feature_dim()) {
            fail(Errc::DimensionMismatch, "feature file shape " + std::to_string(count) + "x" + std::to_string(dim));
        }
        std::vector<FeatureVector> features(count, FeatureVector(dim));
        for (auto& f : features) {
            for (auto& v : f) v = detail::get_f32(in);
        }
        if (!in) fail(Errc::DecodeError, "truncated feature file " + out_path);
        return features;
    }

private:
    Info info_;
    std::string command_;
    std::string weights_;
};

/// Published CLIP image-normalization constants.
inline constexpr Preprocessing kClipPreprocessing{{0.48145466, 0.4578275, 0.40821073},
                                                  {0.26862954, 0.26130258, 0.27577711}};

/// Centering for toy corpora, whose pixels sit near 0.5 with small spread.
inline constexpr Preprocessing kToyPreprocessing{{0.5, 0.5, 0.5}, {0.05, 0.05, 0.05}};

inline std::unique_ptr<EncoderBackend> load_backend(const BackendSpec& spec) {
    if (spec.name == "avgpool-flatten") {
        return std::make_unique<AvgPoolBackend>(spec.stride, spec.input_size, spec.preprocessing);
    }
    if (spec.name == "vit-large-14") {
        if (spec.weights.empty() || !std::filesystem::exists(spec.weights)) {
            fail(Errc::WeightsNotFound, "vit-large-14 weights not found at '" + spec.weights + "'");
        }
        if (!spec.sha256.empty()) {
            const auto actual = sha256_file(spec.weights);
            if (actual != spec.sha256) {
                fail(Errc::ChecksumMismatch, spec.weights + " has sha256 " + actual + ", expected " + spec.sha256);
            }
        }
        if (spec.command.empty()) fail(Errc::InvalidConfig, "vit-large-14 needs a feature command");
        ExternalCommandBackend::Info info{"vit-large-14", 224, 768, 14, kClipPreprocessing};
        return std::make_unique<ExternalCommandBackend>(info, spec.command, spec.weights);
    }
    fail(Errc::WeightsNotFound, "unknown backend '" + spec.name + "'");
}

}  // namespace sfld
