// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sfld/error.hpp"
#include "sfld/image.hpp"
#include "sfld/image_io.hpp"
#include "sfld/rng.hpp"

namespace sfld {

namespace fs = std::filesystem;

enum class Split { Train, Val, Test };

inline std::string_view split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "test";
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    fail(Errc::ManifestError, "unknown split '" + std::string(s) + "'");
}

struct ManifestRow {
    std::string image_path;  // relative to Manifest::root unless absolute
    int label = 0;           // 0 real, 1 fake
    std::string generator;
    std::string content_class;
    Split split = Split::Test;

    bool operator==(const ManifestRow&) const = default;
};

inline constexpr int kManifestSchemaVersion = 1;

/// Tabular list of labeled images; the only thing downstream modules read.
struct Manifest {
    int schema_version = kManifestSchemaVersion;
    fs::path root;
    std::map<std::string, std::string> meta;  // free-form provenance, e.g. codec, degradation
    std::vector<ManifestRow> rows;

    fs::path resolve(const ManifestRow& row) const {
        const fs::path p(row.image_path);
        return p.is_absolute() ? p : root / p;
    }

    Manifest filtered(Split split) const {
        Manifest out{schema_version, root, meta, {}};
        std::copy_if(rows.begin(), rows.end(), std::back_inserter(out.rows),
                     [&](const ManifestRow& r) { return r.split == split; });
        return out;
    }
};

inline void check_row(const ManifestRow& row, std::size_t index) {
    if (row.label != 0 && row.label != 1) {
        fail(Errc::ManifestError, "row " + std::to_string(index) + ": label must be 0 or 1");
    }
    if (row.label == 1 && row.generator.empty()) {
        fail(Errc::ManifestError, "row " + std::to_string(index) + ": fake row without generator name");
    }
    if (row.image_path.empty()) fail(Errc::ManifestError, "row " + std::to_string(index) + ": empty path");
}

/// Format:
///   # sfld-manifest
///   # schema_version=1
///   # root=<dir relative to the manifest file>
///   # <key>=<value>          (optional metadata)
///   image_path<TAB>label<TAB>generator<TAB>content_class<TAB>split
///   <rows...>
inline std::string format_manifest(const Manifest& m, const fs::path& manifest_dir) {
    std::ostringstream out;
    out << "# sfld-manifest\n# schema_version=" << m.schema_version << "\n";
    fs::path root_rel = m.root.empty() ? fs::path(".") : m.root;
    if (!manifest_dir.empty() && m.root.is_absolute()) {
        std::error_code ec;
        auto rel = fs::relative(m.root, fs::absolute(manifest_dir), ec);
        if (!ec && !rel.empty()) root_rel = rel;
    }
    out << "# root=" << root_rel.generic_string() << "\n";
    for (const auto& [k, v] : m.meta) out << "# " << k << "=" << v << "\n";
    out << "image_path\tlabel\tgenerator\tcontent_class\tsplit\n";
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        const auto& r = m.rows[i];
        check_row(r, i);
        out << r.image_path << '\t' << r.label << '\t' << r.generator << '\t' << r.content_class << '\t'
            << split_name(r.split) << '\n';
    }
    return out.str();
}

inline void save_manifest(const Manifest& m, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot write manifest " + path.string());
    out << format_manifest(m, path.parent_path());
}

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

/// strict: every referenced file must exist at load time.
inline Manifest load_manifest(const fs::path& path, bool strict = false) {
    std::ifstream in(path);
    if (!in) fail(Errc::ManifestError, "cannot open manifest " + path.string());
    Manifest m;
    m.schema_version = -1;
    m.root = path.parent_path();
    std::string line;
    bool header_seen = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.starts_with("#")) {
            const auto body = line.substr(line.find_first_not_of("# "));
            const auto eq = body.find('=');
            if (eq == std::string::npos) continue;
            const auto key = body.substr(0, eq);
            const auto value = body.substr(eq + 1);
            if (key == "schema_version") {
                m.schema_version = std::stoi(value);
            } else if (key == "root") {
                const fs::path r(value);
                m.root = r.is_absolute() ? r : (path.parent_path() / r).lexically_normal();
            } else {
                m.meta[key] = value;
            }
            continue;
        }
        if (!header_seen) {
            if (line != "image_path\tlabel\tgenerator\tcontent_class\tsplit") {
                fail(Errc::ManifestError, path.string() + ": unexpected column header");
            }
            header_seen = true;
            continue;
        }
        const auto cols = split_tabs(line);
        if (cols.size() != 5) {
            fail(Errc::ManifestError, path.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
        }
        ManifestRow row;
        row.image_path = cols[0];
        try {
            row.label = std::stoi(cols[1]);
        } catch (const std::exception&) {
            fail(Errc::ManifestError, path.string() + ":" + std::to_string(lineno) + ": bad label");
        }
        row.generator = cols[2];
        row.content_class = cols[3];
        row.split = parse_split(cols[4]);
        check_row(row, m.rows.size());
        m.rows.push_back(std::move(row));
    }
    if (m.schema_version != kManifestSchemaVersion) {
        fail(Errc::ManifestError, path.string() + ": unsupported schema_version " + std::to_string(m.schema_version));
    }
    if (!header_seen) fail(Errc::ManifestError, path.string() + ": missing column header");
    if (strict) {
        for (const auto& r : m.rows) {
            if (!fs::exists(m.resolve(r))) fail(Errc::ManifestError, "missing file " + m.resolve(r).string());
        }
    }
    return m;
}

// ------------------------------------------------------------ scanners

inline bool has_image_extension(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

inline std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (directories ? e.is_directory() : (e.is_regular_file() && has_image_extension(e.path()))) {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Reads the <class>/<0_real|1_fake>/ convention. A root that directly holds
/// 0_real/1_fake is treated as a single unnamed class. `generator` defaults
/// to the root directory's name.
inline Manifest scan_forensynths_layout(const fs::path& root, Split split, std::string generator = {}) {
    if (!fs::is_directory(root)) fail(Errc::LayoutNotRecognized, root.string() + " is not a directory");
    if (generator.empty()) generator = fs::absolute(root).lexically_normal().filename().string();
    if (generator.empty()) generator = fs::absolute(root).lexically_normal().parent_path().filename().string();
    Manifest m;
    m.root = fs::absolute(root).lexically_normal();

    auto add_class = [&](const fs::path& class_dir, const std::string& class_name) {
        const bool has_real = fs::is_directory(class_dir / "0_real");
        const bool has_fake = fs::is_directory(class_dir / "1_fake");
        if (!has_real && !has_fake) return false;
        if (!has_real) fail(Errc::LayoutNotRecognized, "missing 0_real under " + class_dir.string());
        if (!has_fake) fail(Errc::LayoutNotRecognized, "missing 1_fake under " + class_dir.string());
        for (int label = 0; label <= 1; ++label) {
            for (const auto& f : sorted_entries(class_dir / (label == 0 ? "0_real" : "1_fake"), false)) {
                m.rows.push_back({fs::relative(f, m.root).generic_string(), label, generator, class_name, split});
            }
        }
        return true;
    };

    if (!add_class(m.root, "")) {
        bool any = false;
        for (const auto& dir : sorted_entries(m.root, true)) any = add_class(dir, dir.filename().string()) || any;
        if (!any) fail(Errc::LayoutNotRecognized, "no <class>/0_real|1_fake folders under " + root.string());
    }
    return m;
}

/// Benchmark root with one ForenSynths-style folder per generator.
inline Manifest scan_forensynths_benchmark(const fs::path& root, Split split = Split::Test) {
    Manifest m;
    m.root = fs::absolute(root).lexically_normal();
    for (const auto& gen_dir : sorted_entries(m.root, true)) {
        const auto sub = scan_forensynths_layout(gen_dir, split, gen_dir.filename().string());
        for (auto row : sub.rows) {
            row.image_path = (gen_dir.filename() / row.image_path).generic_string();
            m.rows.push_back(std::move(row));
        }
    }
    if (m.rows.empty()) fail(Errc::LayoutNotRecognized, "no generator folders under " + root.string());
    return m;
}

/// Moves roughly `fraction` of the train rows into val, chosen by a seeded
/// hash of the path so the split does not depend on row order.
inline Manifest assign_validation_split(Manifest m, double fraction = 0.1, std::uint64_t seed = 0) {
    for (auto& r : m.rows) {
        if (r.split != Split::Train) continue;
        const double u = static_cast<double>(derive_seed(seed, r.image_path) >> 11) * 0x1.0p-53;
        if (u < fraction) r.split = Split::Val;
    }
    return m;
}

// ------------------------------------------------------------ validation

struct ValidationIssue {
    std::size_t row = 0;
    std::string kind;  // missing | decode | too-small | imbalance
    std::string message;
    bool warning = false;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    std::size_t n_real = 0;
    std::size_t n_fake = 0;

    std::size_t errors() const {
        return static_cast<std::size_t>(
            std::count_if(issues.begin(), issues.end(), [](const auto& i) { return !i.warning; }));
    }
};

/// Checks existence, decodability, minimum side length and label balance.
/// Never throws for data problems; everything lands in the report.
inline ValidationReport validate_manifest(const Manifest& m, int min_size = 224, double min_class_share = 0.4) {
    ValidationReport rep;
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        const auto& row = m.rows[i];
        (row.label == 0 ? rep.n_real : rep.n_fake)++;
        const auto path = m.resolve(row);
        if (!fs::exists(path)) {
            rep.issues.push_back({i, "missing", path.string() + " does not exist"});
            continue;
        }
        try {
            const auto img = read_image(path);
            if (img.height() < min_size || img.width() < min_size) {
                rep.issues.push_back({i, "too-small", path.string() + " is " + std::to_string(img.height()) + "x" +
                                                          std::to_string(img.width())});
            }
        } catch (const Error& e) {
            rep.issues.push_back({i, "decode", e.what()});
        }
    }
    const auto total = rep.n_real + rep.n_fake;
    if (total > 0) {
        const double share = static_cast<double>(std::min(rep.n_real, rep.n_fake)) / total;
        if (share < min_class_share) {
            std::ostringstream msg;
            msg << "label imbalance: " << rep.n_real << " real / " << rep.n_fake << " fake";
            rep.issues.push_back({total, "imbalance", msg.str(), true});
        }
    }
    return rep;
}

// ------------------------------------------------------------ toy corpus

/// Parameters of the synthetic corpus. Every image is a smooth "scene"
/// (content-class layout, value-noise texture, pixel noise); fake images add
/// planted generator traces:
///  - artifact_amplitude: +-a checkerboard with artifact_cell-pixel cells,
///    anchored at the origin (a low-level trace that survives tile shuffling
///    when the cell divides the patch size);
///  - global_artifact_amplitude: a whole-image cosine pattern (a high-level
///    trace that tile shuffling scrambles).
/// The content confound ties layout to label in train/val and seen-class
/// test rows; novel classes appear only in test.
struct ToyCorpusSpec {
    int image_size = 224;
    int train_per_label = 200;
    int val_per_label = 40;
    int test_per_label = 100;
    int novel_test_per_label = 100;
    std::vector<std::string> seen_classes{"alpha", "beta"};
    std::vector<std::string> novel_classes{};
    double artifact_amplitude = 0.04;
    int artifact_cell = 14;
    // "block": +-a over whole cells in a checkerboard.
    // "edge": +-a on the first row and column of each cell only, sign
    // alternating by cell parity; blur smears it across cell borders.
    std::string artifact_pattern = "block";
    double global_artifact_amplitude = 0.0;
    double confound_strength = 0.0;  // P(layout class is tied to the label)
    double layout_contrast = 0.15;
    double layout_span = std::numbers::pi;  // layout k sits at angle layout_span * k / n_layouts
    double texture_amplitude = 0.08;
    double noise_sigma = 0.03;
    std::string generator = "toygan";
};

/// Named corpus settings used by the toy experiments.
///   planted:  block artifact, no confound
///   confound: block artifact, layout fully tied to label, one novel class
///   blur:     blur-fragile edge artifact, layout partially tied to label
inline ToyCorpusSpec toy_preset(std::string_view name) {
    ToyCorpusSpec s;
    s.test_per_label = 50;
    s.novel_test_per_label = 50;
    if (name == "planted") return s;
    if (name == "confound") {
        s.confound_strength = 1.0;
        s.layout_span = std::numbers::pi / 2;
        s.novel_classes = {"gamma"};
        return s;
    }
    if (name == "blur") {
        s.artifact_pattern = "edge";
        s.artifact_amplitude = 0.1;
        s.confound_strength = 0.6;
        return s;
    }
    fail(Errc::InvalidConfig, "unknown toy preset '" + std::string(name) + "'");
}

namespace detail {

inline double value_noise(const std::vector<double>& lattice, int lat_w, double y, double x) {
    const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
    const double fy = y - y0, fx = x - x0;
    auto at = [&](int yy, int xx) { return lattice[static_cast<std::size_t>(yy) * lat_w + xx]; };
    const double top = at(y0, x0) * (1 - fx) + at(y0, x0 + 1) * fx;
    const double bot = at(y0 + 1, x0) * (1 - fx) + at(y0 + 1, x0 + 1) * fx;
    return top * (1 - fy) + bot * fy;
}

}  // namespace detail

/// Renders one toy image; class_index selects the layout orientation among
/// n_layouts evenly spaced half-plane angles.
inline Image render_toy_image(const ToyCorpusSpec& spec, int class_index, int n_layouts, int label, Rng& rng) {
    const int n = spec.image_size;
    const double base = rng.uniform(0.35, 0.65);
    const std::array<double, 3> tint{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
    const double angle = spec.layout_span * class_index / n_layouts + rng.uniform(-0.15, 0.15);
    const double nx = std::cos(angle), ny = std::sin(angle);
    const double offset = rng.uniform(-0.1, 0.1) * n;

    const int cell = 8 + static_cast<int>(rng.below(17));
    const int lat_h = n / cell + 2, lat_w = n / cell + 2;
    std::vector<double> lattice(static_cast<std::size_t>(lat_h) * lat_w);
    for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);

    const bool edge = spec.artifact_pattern == "edge";
    Image img(n, n);
    const double c = (n - 1) / 2.0;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double side = ((x - c) * nx + (y - c) * ny) > offset ? 1.0 : -1.0;
            double v = base + spec.layout_contrast * side +
                       spec.texture_amplitude * detail::value_noise(lattice, lat_w, double(y) / cell, double(x) / cell);
            if (label == 1) {
                const int cy = y / spec.artifact_cell, cx = x / spec.artifact_cell;
                const double sign = ((cy + cx) & 1) ? -1.0 : 1.0;
                if (!edge) v += spec.artifact_amplitude * sign;
                else if (y % spec.artifact_cell == 0 || x % spec.artifact_cell == 0) v += spec.artifact_amplitude * sign;
                v += spec.global_artifact_amplitude * std::cos(2 * std::numbers::pi * (x + 0.5) / n) *
                     std::cos(2 * std::numbers::pi * (y + 0.5) / n);
            }
            for (int ch = 0; ch < 3; ++ch) {
                const double p = v + tint[ch] + spec.noise_sigma * rng.normal();
                img.at(y, x, ch) = static_cast<float>(std::clamp(p, 0.0, 1.0));
            }
        }
    }
    return img;
}

/// Writes PNGs under out_dir/<split>/<class>/<0_real|1_fake>/ and the
/// manifest out_dir/toy.manifest. Each image's content depends only on
/// (seed, split, class, label, index), so reruns are byte-identical.
inline Manifest synth_toy_corpus(const ToyCorpusSpec& spec, std::uint64_t seed, const fs::path& out_dir) {
    if (spec.seen_classes.empty()) fail(Errc::InvalidConfig, "toy corpus needs at least one seen class");
    if (spec.image_size < 1 || spec.artifact_cell < 1) fail(Errc::InvalidConfig, "bad toy corpus geometry");
    if (spec.artifact_pattern != "block" && spec.artifact_pattern != "edge") {
        fail(Errc::InvalidConfig, "unknown artifact pattern '" + spec.artifact_pattern + "'");
    }
    const int n_seen = static_cast<int>(spec.seen_classes.size());
    const int n_layouts = n_seen + static_cast<int>(spec.novel_classes.size());
    Manifest m;
    m.root = fs::absolute(out_dir).lexically_normal();
    m.meta["generator"] = "synth_toy_corpus";
    m.meta["seed"] = std::to_string(seed);
    m.meta["codec"] = codec_version();

    auto emit = [&](Split split, int count, bool novel) {
        for (int label = 0; label <= 1; ++label) {
            for (int i = 0; i < count; ++i) {
                const std::string key = std::string(split_name(split)) + (novel ? "/novel/" : "/seen/") +
                                        std::to_string(label) + "/" + std::to_string(i);
                Rng rng(derive_seed(seed, key));
                int cls;
                if (novel) {
                    cls = n_seen + static_cast<int>(rng.below(spec.novel_classes.size()));
                } else if (n_seen >= 2 && rng.uniform() < spec.confound_strength) {
                    cls = label == 1 ? 0 : 1;
                } else {
                    cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_seen)));
                }
                const auto& cls_name = cls < n_seen ? spec.seen_classes[cls] : spec.novel_classes[cls - n_seen];
                const auto img = render_toy_image(spec, cls, n_layouts, label, rng);
                char name[32];
                std::snprintf(name, sizeof name, "%s%05d.png", novel ? "n" : "s", i);
                const fs::path rel = fs::path(split_name(split)) / cls_name / (label == 0 ? "0_real" : "1_fake") / name;
                write_file_bytes(m.root / rel, encode_png(to_u8(img)));
                m.rows.push_back({rel.generic_string(), label, spec.generator, cls_name, split});
            }
        }
    };
    emit(Split::Train, spec.train_per_label, false);
    emit(Split::Val, spec.val_per_label, false);
    emit(Split::Test, spec.test_per_label, false);
    if (!spec.novel_classes.empty()) emit(Split::Test, spec.novel_test_per_label, true);
    save_manifest(m, m.root / "toy.manifest");
    return m;
}

}  // namespace sfld
