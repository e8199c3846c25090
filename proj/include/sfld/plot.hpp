// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "sfld/error.hpp"
#include "sfld/eval.hpp"
#include "sfld/image.hpp"
#include "sfld/image_io.hpp"

// Static PNG renderings of scatter and line plots. Axis labels and legends
// live in the accompanying data files; the images carry marks only.

namespace sfld {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kGray{170, 170, 170};
inline constexpr Rgb kRed{214, 39, 40};
inline constexpr Rgb kBlue{31, 119, 180};
inline constexpr Rgb kGreen{44, 160, 44};
inline constexpr std::array<Rgb, 6> kPalette{{{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {148, 103, 189},
                                              {255, 127, 14}, {23, 190, 207}}};

class Canvas {
public:
    Canvas(int width, int height) : img_(height, width, 255) {}

    void set(int x, int y, Rgb c) {
        if (x < 0 || y < 0 || x >= img_.width() || y >= img_.height()) return;
        for (int ch = 0; ch < 3; ++ch) img_.at(y, x, ch) = c[ch];
    }

    void line(int x0, int y0, int x1, int y1, Rgb c) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void dot(int x, int y, int r, Rgb c) {
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx)
                if (dx * dx + dy * dy <= r * r) set(x + dx, y + dy, c);
    }

    const ImageU8& image() const noexcept { return img_; }
    int width() const noexcept { return img_.width(); }
    int height() const noexcept { return img_.height(); }

private:
    ImageU8 img_;
};

/// Maps data coordinates into a plot area with a fixed margin.
struct PlotFrame {
    double x_lo, x_hi, y_lo, y_hi;
    int width = 480, height = 360, margin = 30;

    int px(double x) const {
        return margin + static_cast<int>(std::lround((x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)));
    }
    int py(double y) const {
        return height - margin - static_cast<int>(std::lround((y - y_lo) / (y_hi - y_lo) * (height - 2 * margin)));
    }

    void draw_axes(Canvas& c) const {
        c.line(margin, height - margin, width - margin, height - margin, kBlack);
        c.line(margin, margin, margin, height - margin, kBlack);
        for (int i = 0; i <= 4; ++i) {
            const int tx = margin + i * (width - 2 * margin) / 4;
            const int ty = height - margin - i * (height - 2 * margin) / 4;
            c.line(tx, height - margin, tx, height - margin + 4, kBlack);
            c.line(margin - 4, ty, margin, ty, kBlack);
        }
    }
};

namespace detail {

inline std::pair<double, double> padded_range(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
    if (hi - lo < 1e-12) return {lo - 1.0, hi + 1.0};
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

}  // namespace detail

/// Per-sample logits: reals blue, fakes red. Gray lines mark x = 0 (the
/// x-axis detector's boundary); green marks x + y = 0, the boundary of the
/// two-member logit average.
inline void render_scatter_png(const ScatterExport& s, const std::filesystem::path& path) {
    double lo = 0.0, hi = 0.0;
    for (const auto& r : s.rows) {
        lo = std::min({lo, r.logit_x, r.logit_y});
        hi = std::max({hi, r.logit_x, r.logit_y});
    }
    const auto [a, b] = detail::padded_range(lo, hi);
    PlotFrame f{a, b, a, b, 420, 420, 30};
    Canvas c(f.width, f.height);
    f.draw_axes(c);
    c.line(f.px(0), f.py(a), f.px(0), f.py(b), kGray);
    c.line(f.px(a), f.py(0), f.px(b), f.py(0), kGray);
    c.line(f.px(a), f.py(-a), f.px(b), f.py(-b), kGreen);
    for (const auto& r : s.rows) {
        const Rgb col = !r.true_label ? kGray : (*r.true_label == 1 ? kRed : kBlue);
        c.dot(f.px(r.logit_x), f.py(r.logit_y), 2, col);
    }
    write_image(path, c.image());
}

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Polylines with markers, one palette color per series in order.
inline void render_line_plot(const std::vector<Series>& series, const std::filesystem::path& path) {
    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
    double y_lo = x_lo, y_hi = -x_lo;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) fail(Errc::LengthMismatch, "series '" + s.name + "' x/y lengths differ");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            x_lo = std::min(x_lo, s.x[i]);
            x_hi = std::max(x_hi, s.x[i]);
            y_lo = std::min(y_lo, s.y[i]);
            y_hi = std::max(y_hi, s.y[i]);
        }
    }
    const auto [xa, xb] = detail::padded_range(x_lo, x_hi);
    const auto [ya, yb] = detail::padded_range(y_lo, y_hi);
    PlotFrame f{xa, xb, ya, yb};
    Canvas c(f.width, f.height);
    f.draw_axes(c);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const Rgb col = kPalette[k % kPalette.size()];
        const auto& s = series[k];
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (i > 0) c.line(f.px(s.x[i - 1]), f.py(s.y[i - 1]), f.px(s.x[i]), f.py(s.y[i]), col);
            c.dot(f.px(s.x[i]), f.py(s.y[i]), 3, col);
        }
    }
    write_image(path, c.image());
}

}  // namespace sfld
