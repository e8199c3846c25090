// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "sfld/error.hpp"
#include "sfld/image.hpp"
#include "sfld/rng.hpp"

namespace sfld {

/// Bijection over tile indices: output slot k receives input tile mapping[k].
class Permutation {
public:
    Permutation() = default;

    explicit Permutation(std::vector<std::size_t> mapping) : mapping_(std::move(mapping)) {
        std::vector<bool> seen(mapping_.size(), false);
        for (std::size_t v : mapping_) {
            if (v >= mapping_.size() || seen[v]) fail(Errc::LengthMismatch, "mapping is not a bijection");
            seen[v] = true;
        }
    }

    static Permutation identity(std::size_t n) {
        std::vector<std::size_t> m(n);
        std::iota(m.begin(), m.end(), std::size_t{0});
        return Permutation(std::move(m));
    }

    /// Uniform permutation by forward Fisher-Yates.
    static Permutation random(std::size_t n, Rng& rng) { return Permutation(draw_prefix(n, n, rng)); }

    /// First `count` entries of a forward Fisher-Yates pass over [0, n):
    /// a uniform ordered sample without replacement. With count == n this
    /// consumes exactly the same draws as random(n, rng).
    static std::vector<std::size_t> draw_prefix(std::size_t n, std::size_t count, Rng& rng) {
        std::vector<std::size_t> m(n);
        std::iota(m.begin(), m.end(), std::size_t{0});
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
            std::swap(m[i], m[j]);
        }
        m.resize(count);
        return m;
    }

    Permutation inverse() const {
        std::vector<std::size_t> inv(mapping_.size());
        for (std::size_t k = 0; k < mapping_.size(); ++k) inv[mapping_[k]] = k;
        return Permutation(std::move(inv));
    }

    std::size_t size() const noexcept { return mapping_.size(); }
    std::size_t operator[](std::size_t k) const { return mapping_[k]; }
    const std::vector<std::size_t>& mapping() const noexcept { return mapping_; }

    bool operator==(const Permutation&) const = default;

private:
    std::vector<std::size_t> mapping_;
};

/// Non-overlapping s x s tiles of an image in row-major order.
template <Pixel T>
struct BasicPatchGrid {
    int patch_size = 0;
    int rows = 0;
    int cols = 0;
    std::vector<BasicImage<T>> tiles;

    std::size_t size() const noexcept { return tiles.size(); }
    bool operator==(const BasicPatchGrid&) const = default;
};

using PatchGrid = BasicPatchGrid<float>;

/// Top-left anchored partition; the right and bottom margins that do not
/// fill a whole tile are dropped.
template <Pixel T>
BasicPatchGrid<T> partition(const BasicImage<T>& image, int s) {
    if (s < 1) fail(Errc::PatchTooLarge, "patch size must be >= 1");
    if (s > image.height() || s > image.width()) {
        fail(Errc::PatchTooLarge, "patch size " + std::to_string(s) + " exceeds image " +
                                      std::to_string(image.height()) + "x" + std::to_string(image.width()));
    }
    BasicPatchGrid<T> grid;
    grid.patch_size = s;
    grid.rows = image.height() / s;
    grid.cols = image.width() / s;
    grid.tiles.reserve(static_cast<std::size_t>(grid.rows) * grid.cols);
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) grid.tiles.push_back(crop(image, r * s, c * s, s, s));
    }
    return grid;
}

template <Pixel T>
BasicPatchGrid<T> permute(const BasicPatchGrid<T>& grid, const Permutation& perm) {
    if (perm.size() != grid.size()) {
        fail(Errc::LengthMismatch, "permutation of length " + std::to_string(perm.size()) + " for " +
                                       std::to_string(grid.size()) + " tiles");
    }
    BasicPatchGrid<T> out{grid.patch_size, grid.rows, grid.cols, {}};
    out.tiles.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) out.tiles.push_back(grid.tiles[perm[k]]);
    return out;
}

template <Pixel T>
std::pair<BasicPatchGrid<T>, Permutation> shuffle(const BasicPatchGrid<T>& grid, Rng& rng) {
    Permutation perm = Permutation::random(grid.size(), rng);
    return {permute(grid, perm), std::move(perm)};
}

/// Inverse of shuffle: unshuffle(shuffle(g).first, perm) == g.
template <Pixel T>
BasicPatchGrid<T> unshuffle(const BasicPatchGrid<T>& grid, const Permutation& perm) {
    if (perm.size() != grid.size()) fail(Errc::LengthMismatch, "permutation length does not match tile count");
    return permute(grid, perm.inverse());
}

template <Pixel T>
BasicImage<T> assemble(const BasicPatchGrid<T>& grid) {
    const int s = grid.patch_size;
    if (grid.rows < 1 || grid.cols < 1 || grid.size() != static_cast<std::size_t>(grid.rows) * grid.cols) {
        fail(Errc::LengthMismatch, "grid tile count does not equal rows*cols");
    }
    BasicImage<T> out(grid.rows * s, grid.cols * s);
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            const auto& tile = grid.tiles[static_cast<std::size_t>(r) * grid.cols + c];
            if (tile.height() != s || tile.width() != s) fail(Errc::SizeMismatch, "tile is not s x s");
            for (int y = 0; y < s; ++y) {
                std::copy_n(tile.row(y), static_cast<std::size_t>(s) * 3, out.row(r * s + y, c * s));
            }
        }
    }
    return out;
}

/// partition -> shuffle -> assemble. Returns a new image of size
/// (rows*s) x (cols*s); the input is never modified.
template <Pixel T>
BasicImage<T> patch_shuffle(const BasicImage<T>& image, int s, Rng& rng) {
    return assemble(shuffle(partition(image, s), rng).first);
}

/// Builds a target x target image from (target/s)^2 tiles drawn uniformly
/// without replacement from the whole-image grid, in random order.
template <Pixel T>
BasicImage<T> sample_composite(const BasicImage<T>& image, int s, int target, Rng& rng) {
    if (s < 1 || target < s || target % s != 0) {
        fail(Errc::IndivisibleTarget, "patch size " + std::to_string(s) + " does not divide target " +
                                          std::to_string(target));
    }
    const auto grid = partition(image, s);
    const int per_side = target / s;
    const auto needed = static_cast<std::size_t>(per_side) * per_side;
    if (grid.size() < needed) {
        fail(Errc::NotEnoughPatches, "need " + std::to_string(needed) + " tiles, image yields " +
                                         std::to_string(grid.size()));
    }
    const auto picks = Permutation::draw_prefix(grid.size(), needed, rng);
    BasicPatchGrid<T> out{s, per_side, per_side, {}};
    out.tiles.reserve(needed);
    for (std::size_t idx : picks) out.tiles.push_back(grid.tiles[idx]);
    return assemble(out);
}

}  // namespace sfld
