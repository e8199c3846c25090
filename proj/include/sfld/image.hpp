// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "sfld/error.hpp"

namespace sfld {

template <typename T>
struct PixelTraits;

template <>
struct PixelTraits<std::uint8_t> {
    static constexpr double max_value = 255.0;
    static constexpr const char* name = "u8";
    static bool in_range(std::uint8_t) { return true; }
};

template <>
struct PixelTraits<float> {
    static constexpr double max_value = 1.0;
    static constexpr const char* name = "f32";
    static bool in_range(float v) { return v >= 0.0f && v <= 1.0f; }
};

template <typename T>
concept Pixel = std::is_same_v<T, std::uint8_t> || std::is_same_v<T, float>;

/// Interleaved RGB image (row-major, HWC). The pixel type fixes the value
/// range: 8-bit pixels span [0,255], float pixels span [0,1].
template <Pixel T>
class BasicImage {
public:
    static constexpr int channels = 3;
    using value_type = T;

    BasicImage() = default;

    BasicImage(int height, int width, T fill = T{}) : height_(height), width_(width) {
        check_dims(height, width);
        pixels_.assign(static_cast<std::size_t>(height) * width * channels, fill);
    }

    BasicImage(int height, int width, std::vector<T> pixels)
        : height_(height), width_(width), pixels_(std::move(pixels)) {
        check_dims(height, width);
        if (pixels_.size() != static_cast<std::size_t>(height) * width * channels) {
            fail(Errc::InvalidImage, "pixel buffer length does not match " + std::to_string(height) + "x" +
                                         std::to_string(width) + "x3");
        }
        if (!std::all_of(pixels_.begin(), pixels_.end(), PixelTraits<T>::in_range)) {
            fail(Errc::RangeViolation, "float image values must lie in [0,1]");
        }
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    bool empty() const noexcept { return pixels_.empty(); }

    T& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }
    const T& at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }

    std::span<T> pixels() noexcept { return pixels_; }
    std::span<const T> pixels() const noexcept { return pixels_; }

    /// Pointer to the first channel of row y, pixel x.
    T* row(int y, int x = 0) { return pixels_.data() + index(y, x, 0); }
    const T* row(int y, int x = 0) const { return pixels_.data() + index(y, x, 0); }

    bool operator==(const BasicImage&) const = default;

private:
    static void check_dims(int height, int width) {
        if (height < 1 || width < 1) {
            fail(Errc::InvalidImage, "image dimensions must be >= 1, got " + std::to_string(height) + "x" +
                                         std::to_string(width));
        }
    }

    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels + c;
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<T> pixels_;
};

using Image = BasicImage<float>;
using ImageU8 = BasicImage<std::uint8_t>;

inline Image to_float(const ImageU8& src) {
    std::vector<float> out(src.pixels().size());
    std::transform(src.pixels().begin(), src.pixels().end(), out.begin(),
                   [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
    return Image(src.height(), src.width(), std::move(out));
}

/// Round-to-nearest quantization with clamping.
inline ImageU8 to_u8(const Image& src) {
    std::vector<std::uint8_t> out(src.pixels().size());
    std::transform(src.pixels().begin(), src.pixels().end(), out.begin(), [](float v) {
        const float scaled = std::clamp(v, 0.0f, 1.0f) * 255.0f;
        return static_cast<std::uint8_t>(std::lround(scaled));
    });
    return ImageU8(src.height(), src.width(), std::move(out));
}

/// Throws RangeViolation if any float pixel escaped [0,1] (possible after
/// in-place edits through at()).
inline void require_unit_range(const Image& image) {
    for (float v : image.pixels()) {
        if (!(v >= 0.0f && v <= 1.0f)) fail(Errc::RangeViolation, "pixel value outside [0,1]");
    }
}

template <Pixel T>
BasicImage<T> crop(const BasicImage<T>& src, int top, int left, int height, int width) {
    if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > src.height() ||
        left + width > src.width()) {
        fail(Errc::SizeMismatch, "crop window exceeds image bounds");
    }
    BasicImage<T> out(height, width);
    for (int y = 0; y < height; ++y) {
        std::copy_n(src.row(top + y, left), static_cast<std::size_t>(width) * 3, out.row(y));
    }
    return out;
}

/// Square center crop; offsets round down, matching torchvision's CenterCrop.
template <Pixel T>
BasicImage<T> center_crop(const BasicImage<T>& src, int size) {
    if (src.height() < size || src.width() < size) {
        fail(Errc::ImageTooSmall, "image " + std::to_string(src.height()) + "x" + std::to_string(src.width()) +
                                      " smaller than crop " + std::to_string(size));
    }
    return crop(src, (src.height() - size) / 2, (src.width() - size) / 2, size, size);
}

/// Element-wise mean of equally sized images.
inline Image mean_image(std::span<const Image> images) {
    if (images.empty()) fail(Errc::EmptyBatch, "mean of zero images");
    const auto n = images.front().pixels().size();
    std::vector<double> acc(n, 0.0);
    for (const auto& img : images) {
        if (img.height() != images.front().height() || img.width() != images.front().width()) {
            fail(Errc::SizeMismatch, "mean_image over differently sized images");
        }
        for (std::size_t i = 0; i < n; ++i) acc[i] += img.pixels()[i];
    }
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(acc[i] / images.size());
    return Image(images.front().height(), images.front().width(), std::move(out));
}

/// PSNR in dB on the unit scale; +inf for identical images.
template <Pixel T>
double psnr(const BasicImage<T>& a, const BasicImage<T>& b) {
    if (a.height() != b.height() || a.width() != b.width()) fail(Errc::SizeMismatch, "psnr size mismatch");
    double se = 0.0;
    for (std::size_t i = 0; i < a.pixels().size(); ++i) {
        const double d = (static_cast<double>(a.pixels()[i]) - b.pixels()[i]) / PixelTraits<T>::max_value;
        se += d * d;
    }
    const double mse = se / a.pixels().size();
    if (mse == 0.0) return INFINITY;
    return -10.0 * std::log10(mse);
}

}  // namespace sfld
