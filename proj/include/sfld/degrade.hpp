// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "sfld/datasets.hpp"
#include "sfld/digest.hpp"
#include "sfld/error.hpp"
#include "sfld/image.hpp"
#include "sfld/image_io.hpp"

namespace sfld {

/// Normalized 1-D Gaussian taps over [-r, r] with r = ceil(3 sigma).
inline std::vector<double> gaussian_kernel_1d(double sigma) {
    if (!(sigma > 0.0)) fail(Errc::NonPositiveSigma, "sigma must be > 0");
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    for (auto& v : k) v /= sum;
    return k;
}

/// Outer product of the 1-D taps; the blur is applied separably but this is
/// the equivalent 2-D kernel.
inline std::vector<std::vector<double>> gaussian_kernel_2d(double sigma) {
    const auto k = gaussian_kernel_1d(sigma);
    std::vector<std::vector<double>> out(k.size(), std::vector<double>(k.size()));
    for (std::size_t i = 0; i < k.size(); ++i)
        for (std::size_t j = 0; j < k.size(); ++j) out[i][j] = k[i] * k[j];
    return out;
}

/// Mirror index without repeating the edge sample (d c b | a b c d | c b a).
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

inline Image gaussian_blur(const Image& image, double sigma) {
    const auto k = gaussian_kernel_1d(sigma);
    const int r = static_cast<int>(k.size() / 2);
    const int h = image.height(), w = image.width();
    std::vector<double> tmp(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int t = -r; t <= r; ++t) acc += k[t + r] * image.at(y, reflect_index(x + t, w), c);
                tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
            }
        }
    }
    Image out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int t = -r; t <= r; ++t) {
                    acc += k[t + r] * tmp[(static_cast<std::size_t>(reflect_index(y + t, h)) * w + x) * 3 + c];
                }
                out.at(y, x, c) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
            }
        }
    }
    return out;
}

inline ImageU8 gaussian_blur(const ImageU8& image, double sigma) { return to_u8(gaussian_blur(to_float(image), sigma)); }

/// Encode-then-decode through the pinned codec (see encode_jpeg).
inline ImageU8 jpeg_compress(const ImageU8& image, int quality) { return decode_jpeg(encode_jpeg(image, quality)); }

struct DegradeSpec {
    enum class Kind { GaussianBlur, Jpeg };
    Kind kind = Kind::GaussianBlur;
    double sigma = 0.0;
    int quality = 0;

    static DegradeSpec blur(double sigma) {
        if (!(sigma > 0.0)) fail(Errc::NonPositiveSigma, "sigma must be > 0");
        return {Kind::GaussianBlur, sigma, 0};
    }
    static DegradeSpec jpeg(int quality) {
        if (quality < 1 || quality > 100) fail(Errc::QualityOutOfRange, "quality " + std::to_string(quality));
        return {Kind::Jpeg, 0.0, quality};
    }

    /// "blur-sigma2", "blur-sigma0.5", "jpeg-q30".
    std::string tag() const {
        char buf[64];
        if (kind == Kind::GaussianBlur) std::snprintf(buf, sizeof buf, "blur-sigma%g", sigma);
        else std::snprintf(buf, sizeof buf, "jpeg-q%d", quality);
        return buf;
    }

    ImageU8 apply(const ImageU8& image) const {
        return kind == Kind::GaussianBlur ? gaussian_blur(image, sigma) : jpeg_compress(image, quality);
    }
};

struct DegradationSweepResult {
    std::vector<std::filesystem::path> manifests;
    std::size_t files_written = 0;
    std::size_t files_unchanged = 0;
    std::vector<std::string> errors;  // "<image_path>: <message>"
};

/// For every spec, writes degraded PNG copies under out_dir/<tag>/ and a
/// sibling manifest out_dir/<base>.<tag>.manifest. Files whose content hash
/// already matches are left untouched, so reruns rewrite nothing.
inline DegradationSweepResult apply_degradation_sweep(const Manifest& manifest, const std::string& base_name,
                                                      const std::vector<DegradeSpec>& specs,
                                                      const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    DegradationSweepResult res;
    for (const auto& spec : specs) {
        const auto tag = spec.tag();
        Manifest derived;
        derived.root = fs::absolute(out_dir / tag).lexically_normal();
        derived.meta = manifest.meta;
        derived.meta["degradation"] = tag;
        derived.meta["codec"] = codec_version();
        for (const auto& row : manifest.rows) {
            fs::path rel(row.image_path);
            if (rel.is_absolute()) rel = rel.relative_path();
            rel.replace_extension(".png");
            try {
                const auto bytes = encode_png(spec.apply(read_image(manifest.resolve(row))));
                const auto dst = derived.root / rel;
                if (fs::exists(dst) && sha256_file(dst) == sha256_hex(bytes)) {
                    ++res.files_unchanged;
                } else {
                    write_file_bytes(dst, bytes);
                    ++res.files_written;
                }
                auto out_row = row;
                out_row.image_path = rel.generic_string();
                derived.rows.push_back(std::move(out_row));
            } catch (const Error& e) {
                res.errors.push_back(row.image_path + ": " + e.what());
            }
        }
        const auto path = out_dir / (base_name + "." + tag + ".manifest");
        const auto text = format_manifest(derived, path.parent_path());
        if (!fs::exists(path) || sha256_file(path) != sha256_hex(text)) {
            fs::create_directories(out_dir);
            std::ofstream(path, std::ios::trunc | std::ios::binary) << text;
        }
        res.manifests.push_back(path);
    }
    return res;
}

}  // namespace sfld
