// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <gtest/gtest.h>

#include "sfld/error.hpp"
#include "sfld/image.hpp"
#include "sfld/image_io.hpp"
#include "sfld/rng.hpp"

namespace sfld::testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(SFLD_FIXTURE_DIR) / name; }

inline ImageU8 random_u8_image(int h, int w, Rng& rng) {
    ImageU8 img(h, w);
    for (auto& v : img.pixels()) v = static_cast<std::uint8_t>(rng.below(256));
    return img;
}

inline Image random_image(int h, int w, Rng& rng) {
    Image img(h, w);
    for (auto& v : img.pixels()) v = static_cast<float>(rng.uniform());
    return img;
}

/// Smooth diagonal gradient with a per-channel phase, in [0,1].
inline Image gradient_image(int h, int w) {
    Image img(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = static_cast<float>(x) / (w - 1);
            img.at(y, x, 1) = static_cast<float>(y) / (h - 1);
            img.at(y, x, 2) = static_cast<float>(x + y) / (w + h - 2);
        }
    }
    return img;
}

template <typename T>
std::array<std::map<T, std::size_t>, 3> channel_histograms(const BasicImage<T>& img) {
    std::array<std::map<T, std::size_t>, 3> h;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c) ++h[c][img.at(y, x, c)];
    return h;
}

inline ImageU8 natural_fixture() { return read_image(fixture("natural_256.png")); }

/// Empty per-test directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("sfld-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

template <typename Fn>
Errc error_code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an sfld::Error";
    return Errc::InvalidConfig;
}

}  // namespace sfld::testing
