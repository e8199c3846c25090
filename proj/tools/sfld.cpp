// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// sfld: train, score and evaluate patch-shuffle detector bundles, and build
// the supporting corpora (degradations, twin pairs, toy data).
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "sfld/config.hpp"
#include "sfld/degrade.hpp"
#include "sfld/detector.hpp"
#include "sfld/eval.hpp"
#include "sfld/plot.hpp"
#include "sfld/twinsynths.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::string config_path;
    std::string out_root = "runs";
    int workers = 1;
    std::optional<std::uint64_t> seed;
};

struct Run {
    sfld::ProjectConfig cfg;
    std::string digest;  // over config, command and inputs
    fs::path dir;
};

sfld::ProjectConfig load_config(const Globals& g) {
    try {
        auto cfg = g.config_path.empty() ? sfld::ProjectConfig{} : sfld::load_project_config(g.config_path);
        if (g.seed) cfg.seed = *g.seed;
        cfg.validate();
        return cfg;
    } catch (const sfld::Error& e) {
        throw UsageError(e.what());
    }
}

std::string file_digest(const fs::path& p) { return fs::is_regular_file(p) ? sfld::sha256_file(p) : ""; }

/// Resolves the config, hashes it with the command name and its inputs, and
/// creates <out>/<command>-<digest12>/ holding run.json.
Run start_run(const Globals& g, const std::string& command, json inputs, bool create = true) {
    Run r;
    r.cfg = load_config(g);
    const json cfg_json = sfld::to_json(r.cfg);
    r.digest = sfld::sha256_hex(json{{"command", command}, {"config", cfg_json}, {"inputs", inputs}}.dump());
    r.dir = fs::path(g.out_root) / (command + "-" + r.digest.substr(0, 12));
    if (!create) return r;
    fs::create_directories(r.dir);
    const json run{{"command", command},     {"config_digest", r.digest},
                   {"config", cfg_json},     {"inputs", inputs},
                   {"codec", sfld::codec_version()}, {"rng", sfld::kRngKind}};
    std::ofstream(r.dir / "run.json", std::ios::trunc) << run.dump(2) << "\n";
    return r;
}

json input_ref(const fs::path& p) {
    return {{"path", fs::absolute(p).lexically_normal().string()}, {"sha256", file_digest(p)}};
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) sfld::fail(sfld::Errc::IoError, "cannot write " + p.string());
    out << j.dump(2) << "\n";
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    for (std::string item; std::getline(in, item, ',');) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex m;
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(m);
                if (!err) err = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < std::min<int>(workers, static_cast<int>(n)); ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

// ------------------------------------------------------------ train

struct TrainArgs {
    std::string manifest;
    std::string val_manifest;
    std::vector<int> patch_sizes;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
    json inputs{{"manifest", input_ref(a.manifest)}, {"patch_sizes", a.patch_sizes}};
    if (!a.val_manifest.empty()) inputs["val_manifest"] = input_ref(a.val_manifest);
    auto run = start_run(g, "train", inputs);
    const auto sizes = a.patch_sizes.empty() ? run.cfg.patch_sizes : a.patch_sizes;
    for (int s : sizes) {
        if (s < 1 || run.cfg.backend.input_size % s != 0) {
            throw UsageError("patch size " + std::to_string(s) + " does not divide the input size");
        }
    }
    const auto backend = sfld::load_backend(run.cfg.backend);

    auto manifest = sfld::load_manifest(a.manifest);
    sfld::Manifest val;
    if (!a.val_manifest.empty()) {
        val = sfld::load_manifest(a.val_manifest);
    } else {
        if (manifest.filtered(sfld::Split::Val).rows.empty() && run.cfg.val_fraction > 0) {
            manifest = sfld::assign_validation_split(manifest, run.cfg.val_fraction, run.cfg.seed);
        }
        val = manifest.filtered(sfld::Split::Val);
    }
    const auto train = manifest.filtered(sfld::Split::Train);
    if (train.rows.empty()) sfld::fail(sfld::Errc::EmptySet, a.manifest + " has no train rows");
    std::cout << "training " << sizes.size() << " head(s) on " << train.rows.size() << " images ("
              << val.rows.size() << " validation)\n";

    auto tcfg = run.cfg.train;
    tcfg.seed = sfld::derive_seed(run.cfg.seed, "train");
    std::vector<sfld::TrainResult> results(sizes.size());
    parallel_for(sizes.size(), g.workers,
                 [&](std::size_t i) { results[i] = sfld::train_member(train, val, *backend, sizes[i], tcfg); });

    sfld::DetectorBundle bundle;
    bundle.backend_name = backend->name();
    bundle.n_views = run.cfg.n_views;
    bundle.threshold = run.cfg.threshold;
    json log{{"config_digest", run.digest}, {"members", json::array()}};
    std::vector<sfld::Series> curves;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        bundle.members.push_back({sizes[i], results[i].head});
        log["members"].push_back({{"patch_size", sizes[i]},
                                  {"best_epoch", results[i].best_epoch},
                                  {"loss_trace", results[i].loss_trace},
                                  {"val_ap_trace", results[i].val_ap_trace}});
        sfld::Series s{"s=" + std::to_string(sizes[i]), {}, results[i].loss_trace};
        for (std::size_t e = 0; e < s.y.size(); ++e) s.x.push_back(static_cast<double>(e));
        curves.push_back(std::move(s));
    }
    for (const auto& w : bundle.validate(*backend)) std::cerr << "warning: " << w << "\n";
    sfld::save_bundle(bundle, run.dir / "bundle.json");
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        log["members"][i]["head_sha256"] = sfld::sha256_file(run.dir / ("head-" + std::to_string(sizes[i]) + ".json"));
    }
    write_json(run.dir / "train-log.json", log);
    sfld::render_line_plot(curves, run.dir / "train-loss.png");
    for (const auto& m : log["members"]) {
        std::cout << "  s=" << m["patch_size"] << " best epoch " << m["best_epoch"] << " head "
                  << m["head_sha256"].get<std::string>() << "\n";
    }
    std::cout << "bundle: " << (run.dir / "bundle.json").string() << "\n";
    return 0;
}

// ------------------------------------------------------------ score

struct ScoreArgs {
    std::string bundle;
    std::string linear_probe;
    std::string manifest;
    std::string split = "all";
    int n_views = 0;
    bool strict = false;
};

sfld::Manifest select_split(const sfld::Manifest& m, const std::string& split) {
    if (split == "all") return m;
    try {
        return m.filtered(sfld::parse_split(split));
    } catch (const sfld::Error&) {
        throw UsageError("unknown split '" + split + "'");
    }
}

int cmd_score(const Globals& g, const ScoreArgs& a) {
    if (a.bundle.empty() == a.linear_probe.empty()) throw UsageError("give exactly one of --bundle or --linear-probe");
    const std::string model = a.bundle.empty() ? a.linear_probe : a.bundle;
    auto run = start_run(g, "score",
                         {{"model", input_ref(model)},
                          {"linear_probe", !a.linear_probe.empty()},
                          {"manifest", input_ref(a.manifest)},
                          {"split", a.split},
                          {"n_views", a.n_views},
                          {"strict", a.strict}});
    const auto backend = sfld::load_backend(run.cfg.backend);
    const auto manifest = select_split(sfld::load_manifest(a.manifest), a.split);
    sfld::ScoreOptions opt{run.cfg.seed, g.workers, a.strict};
    std::vector<sfld::ScoreRecord> records;
    json prov{{"config_digest", run.digest},
              {"model_sha256", file_digest(model)},
              {"manifest", fs::absolute(a.manifest).lexically_normal().string()},
              {"codec", sfld::codec_version()},
              {"rng", sfld::kRngKind}};
    for (const auto& [k, v] : manifest.meta) prov["manifest_meta"][k] = v;
    if (a.bundle.empty()) {
        const auto head = sfld::load_head(a.linear_probe);
        records = sfld::score_dataset_linear_probe(head, *backend, manifest, opt, run.cfg.threshold);
        prov["pipeline"] = "linear-probe";
    } else {
        auto bundle = sfld::load_bundle(a.bundle);
        if (a.n_views > 0) bundle.n_views = a.n_views;
        for (const auto& w : bundle.validate(*backend)) std::cerr << "warning: " << w << "\n";
        records = sfld::score_dataset(bundle, *backend, manifest, opt);
        prov["pipeline"] = "bundle";
        prov["n_views"] = bundle.n_views;
    }
    std::size_t failed = 0;
    for (const auto& r : records) {
        if (r.ok()) continue;
        ++failed;
        std::cerr << "warning: " << r.image_id << ": " << *r.error << "\n";
    }
    const auto path = run.dir / "scores.jsonl";
    sfld::write_score_file(path, records, prov);
    std::cout << "scored " << records.size() - failed << " of " << records.size() << " images\n";
    if (failed) std::cerr << "warning: " << failed << " image(s) could not be scored; see the error field\n";
    std::cout << "scores: " << path.string() << "\n";
    return 0;
}

// ------------------------------------------------------------ eval

struct EvalArgs {
    std::vector<std::string> score_files;
    std::string classes;
    double threshold = -1.0;
    bool scatter = false;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
    if (a.scatter && a.score_files.size() != 2) throw UsageError("--scatter needs exactly two score files");
    json files = json::array();
    for (const auto& f : a.score_files) files.push_back(input_ref(f));
    auto run = start_run(g, "eval", {{"scores", files}, {"classes", a.classes}, {"threshold", a.threshold},
                                     {"scatter", a.scatter}});
    const double threshold = a.threshold > 0 ? a.threshold : run.cfg.threshold;
    std::vector<sfld::ScoreFile> loaded;
    for (std::size_t k = 0; k < a.score_files.size(); ++k) {
        loaded.push_back(sfld::read_score_file(a.score_files[k]));
        const auto& sf = loaded.back();
        auto rep = sfld::build_report(sf.records, threshold,
                                      {{"config_digest", run.digest}, {"scores", a.score_files[k]},
                                       {"scores_provenance", sf.provenance}});
        auto j = sfld::to_json(rep);
        if (!a.classes.empty()) {
            const auto pc = sfld::per_class_accuracy(sf.records, split_list(a.classes), threshold);
            j["per_class_accuracy"] = pc.accuracy;
            for (const auto& w : pc.warnings) std::cerr << "warning: " << w << "\n";
        }
        const std::string stem = "report-" + std::to_string(k);
        write_json(run.dir / (stem + ".json"), j);
        const auto table = sfld::format_report_table(rep);
        std::ofstream(run.dir / (stem + ".txt"), std::ios::trunc) << "# config_digest=" << run.digest << "\n" << table;
        std::cout << a.score_files[k] << "\n" << table;
        if (j.contains("per_class_accuracy")) std::cout << "per-class accuracy: " << j["per_class_accuracy"].dump() << "\n";
    }
    if (a.scatter) {
        const auto s = sfld::export_scatter(loaded[0].records, loaded[1].records, "logit_x", "logit_y");
        sfld::write_scatter_csv(s, run.dir / "scatter.csv", {{"config_digest", run.digest},
                                                            {"x", a.score_files[0]},
                                                            {"y", a.score_files[1]}});
        sfld::render_scatter_png(s, run.dir / "scatter.png");
        const auto q = sfld::quadrant_counts(s);
        write_json(run.dir / "scatter.json",
                   {{"config_digest", run.digest}, {"quadrants", {{"x+y+", q[0]}, {"x-y+", q[1]}, {"x-y-", q[2]}, {"x+y-", q[3]}}}});
        std::cout << "scatter: " << (run.dir / "scatter.csv").string() << "\n";
    }
    std::cout << "reports: " << run.dir.string() << "\n";
    return 0;
}

// ------------------------------------------------------------ sweep

struct SweepArgs {
    std::string bundle;
    std::string manifest;
    std::string axis = "n_views";
    std::vector<int> values;
};

int cmd_sweep(const Globals& g, const SweepArgs& a) {
    if (a.axis != "n_views" && a.axis != "patch_size") throw UsageError("--axis must be n_views or patch_size");
    auto run = start_run(g, "sweep", {{"bundle", input_ref(a.bundle)},
                                      {"manifest", input_ref(a.manifest)},
                                      {"axis", a.axis},
                                      {"values", a.values}});
    const auto backend = sfld::load_backend(run.cfg.backend);
    const auto bundle = sfld::load_bundle(a.bundle);
    bundle.validate(*backend);
    const auto manifest = sfld::load_manifest(a.manifest);
    const auto axis = a.axis == "n_views" ? sfld::SweepAxis::NViews : sfld::SweepAxis::PatchSize;
    if (axis == sfld::SweepAxis::PatchSize) {
        for (int v : a.values) {
            const bool has = std::any_of(bundle.members.begin(), bundle.members.end(),
                                         [&](const auto& m) { return m.patch_size == v; });
            if (!has) throw UsageError("bundle has no head for patch size " + std::to_string(v));
        }
    }
    const sfld::ScoreOptions opt{run.cfg.seed, g.workers, false};
    const auto rows = sfld::sweep(
        axis, a.values,
        [&](int v) {
            auto b = bundle;
            if (axis == sfld::SweepAxis::NViews) {
                b.n_views = v;
            } else {
                std::erase_if(b.members, [&](const auto& m) { return m.patch_size != v; });
            }
            return sfld::score_dataset(b, *backend, manifest, opt);
        },
        backend->input_size());
    sfld::write_sweep_table(rows, axis, run.dir / "sweep.tsv", {{"config_digest", run.digest}});
    sfld::Series s{std::string(sfld::sweep_axis_name(axis)), {}, {}};
    for (const auto& r : rows) {
        s.x.push_back(r.value);
        s.y.push_back(r.map);
        std::cout << sfld::sweep_axis_name(axis) << "=" << r.value << "  mAP=" << r.map << "  s/img=" << r.mean_wall_time
                  << "\n";
    }
    sfld::render_line_plot({s}, run.dir / "sweep.png");
    std::cout << "table: " << (run.dir / "sweep.tsv").string() << "\n";
    return 0;
}

// ------------------------------------------------------------ degrade

struct DegradeArgs {
    std::string manifest;
    std::optional<std::string> blur;
    std::optional<std::string> jpeg;
    std::string bundle;
};

int cmd_degrade(const Globals& g, const DegradeArgs& a) {
    auto cfg = load_config(g);
    std::vector<sfld::DegradeSpec> specs;
    try {
        const auto sigmas = a.blur ? split_list(*a.blur) : std::vector<std::string>{};
        const auto quals = a.jpeg ? split_list(*a.jpeg) : std::vector<std::string>{};
        if (a.blur) {
            for (const auto& s : sigmas) specs.push_back(sfld::DegradeSpec::blur(std::stod(s)));
        } else {
            for (double s : cfg.degrade.blur_sigmas) specs.push_back(sfld::DegradeSpec::blur(s));
        }
        if (a.jpeg) {
            for (const auto& q : quals) specs.push_back(sfld::DegradeSpec::jpeg(std::stoi(q)));
        } else {
            for (int q : cfg.degrade.jpeg_qualities) specs.push_back(sfld::DegradeSpec::jpeg(q));
        }
    } catch (const std::exception& e) {
        throw UsageError(std::string("bad degradation grid: ") + e.what());
    }
    if (specs.empty()) {
        std::cout << "empty degradation grid; nothing to do\n";
        return 0;
    }
    json grid = json::array();
    for (const auto& s : specs) grid.push_back(s.tag());
    json inputs{{"manifest", input_ref(a.manifest)}, {"grid", grid}};
    if (!a.bundle.empty()) inputs["bundle"] = input_ref(a.bundle);
    auto run = start_run(g, "degrade", inputs);
    auto manifest = sfld::load_manifest(a.manifest);
    manifest.meta["config_digest"] = run.digest;
    const auto res = sfld::apply_degradation_sweep(manifest, fs::path(a.manifest).stem().string(), specs, run.dir);
    for (const auto& e : res.errors) std::cerr << "warning: " << e << "\n";
    json summary{{"config_digest", run.digest},
                 {"files_written", res.files_written},
                 {"files_unchanged", res.files_unchanged},
                 {"errors", res.errors},
                 {"manifests", json::array()}};
    for (const auto& m : res.manifests) summary["manifests"].push_back(m.filename().string());
    std::cout << "wrote " << res.files_written << " image(s), " << res.files_unchanged << " unchanged, "
              << res.errors.size() << " error(s)\n";

    if (!a.bundle.empty()) {
        // Robustness curves: mAP per degradation level, plus the clean set.
        const auto backend = sfld::load_backend(cfg.backend);
        const auto bundle = sfld::load_bundle(a.bundle);
        bundle.validate(*backend);
        const sfld::ScoreOptions opt{cfg.seed, g.workers, false};
        auto map_of = [&](const sfld::Manifest& m) {
            return sfld::build_report(sfld::score_dataset(bundle, *backend, m, opt), cfg.threshold).mean_ap;
        };
        const double clean = map_of(manifest);
        sfld::Series blur{"blur", {0.0}, {clean}}, jpeg{"jpeg", {}, {}};
        std::ofstream tsv(run.dir / "robustness.tsv", std::ios::trunc);
        tsv << "# config_digest=" << run.digest << "\ndegradation\tmAP\n" << std::setprecision(10);
        tsv << "clean\t" << clean << "\n";
        for (std::size_t i = 0; i < specs.size(); ++i) {
            const double ap = map_of(sfld::load_manifest(res.manifests[i]));
            tsv << specs[i].tag() << "\t" << ap << "\n";
            std::cout << specs[i].tag() << "  mAP=" << ap << "\n";
            if (specs[i].kind == sfld::DegradeSpec::Kind::GaussianBlur) {
                blur.x.push_back(specs[i].sigma);
                blur.y.push_back(ap);
            } else {
                jpeg.x.push_back(specs[i].quality);
                jpeg.y.push_back(ap);
            }
            summary["map"][specs[i].tag()] = ap;
        }
        summary["map"]["clean"] = clean;
        if (blur.x.size() > 1) sfld::render_line_plot({blur}, run.dir / "robustness-blur.png");
        if (!jpeg.x.empty()) {
            jpeg.x.push_back(101.0);  // clean drawn just past q=100
            jpeg.y.push_back(clean);
            sfld::render_line_plot({jpeg}, run.dir / "robustness-jpeg.png");
        }
    }
    write_json(run.dir / "degrade.json", summary);
    std::cout << "manifests: " << run.dir.string() << "\n";
    return 0;
}

// ------------------------------------------------------------ twins

struct TwinsArgs {
    std::string manifest;
    std::string method;
    int steps = 0;
    int limit = 0;
};

int cmd_twins(const Globals& g, const TwinsArgs& a) {
    auto run = start_run(g, "twins",
                         {{"manifest", input_ref(a.manifest)}, {"method", a.method}, {"steps", a.steps}, {"limit", a.limit}});
    auto tc = run.cfg.twins;
    if (!a.method.empty()) {
        if (a.method != "gan" && a.method != "dm") throw UsageError("--method must be gan or dm");
        tc.method = a.method;
    }
    if (a.steps > 0) (tc.method == "gan" ? tc.gan.steps : tc.dm.steps) = a.steps;
    if (tc.method == "gan") tc.gan.validate();

    const auto all = sfld::load_manifest(a.manifest);
    sfld::Manifest reals{all.schema_version, all.root, all.meta, {}};
    for (const auto& r : all.rows) {
        if (r.label == 0 && (a.limit <= 0 || static_cast<int>(reals.rows.size()) < a.limit)) reals.rows.push_back(r);
    }
    sfld::TwinBuildOptions opt;
    opt.method = tc.method == "gan" ? sfld::TwinMethod::Gan : sfld::TwinMethod::Dm;
    opt.gan = tc.gan;
    opt.gan.seed = sfld::derive_seed(run.cfg.seed, "twins/" + std::to_string(tc.gan.seed));
    opt.dm = tc.dm;
    opt.workers = g.workers;

    std::optional<sfld::AffineNoisePredictor> affine;
    if (opt.method == sfld::TwinMethod::Dm && tc.predictor == "affine-toy") {
        // Fit on pixel values of the reals, mapped to [-1, 1].
        std::vector<double> data;
        for (const auto& r : reals.rows) {
            const auto img = sfld::to_float(sfld::read_image(reals.resolve(r)));
            for (std::size_t i = 0; i < img.pixels().size(); i += 97) data.push_back(2.0 * img.pixels()[i] - 1.0);
        }
        if (data.empty()) throw UsageError("no real images to fit the affine-toy predictor on");
        sfld::Rng rng(sfld::derive_seed(run.cfg.seed, "twins/predictor"));
        affine = sfld::AffineNoisePredictor::fit(data, sfld::DdimSchedule::scaled_linear(tc.dm.steps), 4000, rng);
        opt.predictor = &*affine;
    }
    std::cout << "building " << reals.rows.size() << " " << tc.method << " twin(s)\n";
    const auto pairs = sfld::build_twinsynths(reals, opt, run.dir);
    const std::map<std::string, std::string> meta{{"config_digest", run.digest}};
    sfld::save_twin_manifest(pairs, run.dir / "twins.tsv", meta);
    auto detection = sfld::twin_pairs_to_manifest(pairs, run.dir);
    detection.meta = meta;
    detection.meta["codec"] = sfld::codec_version();
    sfld::save_manifest(detection, run.dir / "twins.manifest");

    std::map<std::string, int> statuses;
    json traces = json::object();
    for (const auto& p : pairs) {
        ++statuses[p.status.rfind("error", 0) == 0 ? "error" : p.status];
        if (p.status.rfind("error", 0) == 0) std::cerr << "warning: " << p.real_path << ": " << p.status << "\n";
        if (!p.loss_trace.empty()) traces[p.real_path] = sfld::window_means(p.loss_trace, 50);
    }
    if (!traces.empty()) write_json(run.dir / "loss-traces.json", {{"config_digest", run.digest}, {"window", 50}, {"traces", traces}});
    for (const auto& [k, v] : statuses) std::cout << "  " << k << ": " << v << "\n";
    std::cout << "pairs: " << (run.dir / "twins.tsv").string() << "\n";
    return 0;
}

// ------------------------------------------------------------ toy-corpus

struct ToyArgs {
    std::string preset = "planted";
    int image_size = 0;
    int train_per_label = -1;
    int val_per_label = -1;
    int test_per_label = -1;
    double amplitude = -1.0;
};

int cmd_toy(const Globals& g, const ToyArgs& a) {
    sfld::ToyCorpusSpec spec;
    try {
        spec = sfld::toy_preset(a.preset);
    } catch (const sfld::Error& e) {
        throw UsageError(e.what());
    }
    if (a.image_size > 0) spec.image_size = a.image_size;
    if (a.train_per_label >= 0) spec.train_per_label = a.train_per_label;
    if (a.val_per_label >= 0) spec.val_per_label = a.val_per_label;
    if (a.test_per_label >= 0) spec.test_per_label = spec.novel_test_per_label = a.test_per_label;
    if (a.amplitude >= 0) spec.artifact_amplitude = a.amplitude;
    auto run = start_run(g, "toy-corpus",
                         {{"preset", a.preset}, {"image_size", spec.image_size}, {"train_per_label", spec.train_per_label},
                          {"val_per_label", spec.val_per_label}, {"test_per_label", spec.test_per_label},
                          {"amplitude", spec.artifact_amplitude}});
    auto m = sfld::synth_toy_corpus(spec, run.cfg.seed, run.dir);
    m.meta["config_digest"] = run.digest;
    m.meta["preset"] = a.preset;
    sfld::save_manifest(m, run.dir / "toy.manifest");
    std::cout << "wrote " << m.rows.size() << " images\nmanifest: " << (run.dir / "toy.manifest").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Patch-shuffle fake-image detector toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("-c,--config", g.config_path, "Project config (JSON)")->envname("SFLD_CONFIG")->check(CLI::ExistingFile);
    app.add_option("-o,--out", g.out_root, "Root for run directories")->envname("SFLD_OUT")->capture_default_str();
    app.add_option("-j,--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--seed", g.seed, "Override the config's master seed");

    std::function<int()> action;

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train one linear head per patch size and write a bundle");
    t->add_option("-m,--manifest", train.manifest, "Manifest with train (and optionally val) rows")
        ->required()
        ->check(CLI::ExistingFile);
    t->add_option("--val-manifest", train.val_manifest, "Separate validation manifest")->check(CLI::ExistingFile);
    t->add_option("-s,--patch-size", train.patch_sizes, "Patch sizes (default: config patch_sizes)")->delimiter(',');
    t->callback([&] { action = [&] { return cmd_train(g, train); }; });

    ScoreArgs score;
    auto* s = app.add_subcommand("score", "Score every manifest row with a bundle or a single linear probe");
    s->add_option("-b,--bundle", score.bundle, "Bundle file")->check(CLI::ExistingFile);
    s->add_option("--linear-probe", score.linear_probe, "Single head checkpoint, center-crop baseline")
        ->check(CLI::ExistingFile);
    s->add_option("-m,--manifest", score.manifest, "Manifest to score")->required()->check(CLI::ExistingFile);
    s->add_option("--split", score.split, "train | val | test | all")->capture_default_str();
    s->add_option("--n-views", score.n_views, "Override the bundle's view count")->check(CLI::PositiveNumber);
    s->add_flag("--strict", score.strict, "Fail on the first unreadable image instead of recording it");
    s->callback([&] { action = [&] { return cmd_score(g, score); }; });

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "AP / accuracy reports from score files; optional scatter export");
    e->add_option("scores", ev.score_files, "Score files")->required()->check(CLI::ExistingFile);
    e->add_option("--classes", ev.classes, "Comma-separated content classes for per-class accuracy");
    e->add_option("--threshold", ev.threshold, "Decision threshold (default: config)");
    e->add_flag("--scatter", ev.scatter, "Join two score files on image id and plot logit vs logit");
    e->callback([&] { action = [&] { return cmd_eval(g, ev); }; });

    SweepArgs sw;
    auto* w = app.add_subcommand("sweep", "mAP and time per image over n_views or patch size");
    w->add_option("-b,--bundle", sw.bundle, "Bundle file")->required()->check(CLI::ExistingFile);
    w->add_option("-m,--manifest", sw.manifest, "Manifest to score")->required()->check(CLI::ExistingFile);
    w->add_option("--axis", sw.axis, "n_views | patch_size")->capture_default_str();
    w->add_option("--values", sw.values, "Grid values, comma-separated")->required()->delimiter(',');
    w->callback([&] { action = [&] { return cmd_sweep(g, sw); }; });

    DegradeArgs dg;
    auto* d = app.add_subcommand("degrade", "Write blurred / JPEG-compressed copies and derived manifests");
    d->add_option("-m,--manifest", dg.manifest, "Source manifest")->required()->check(CLI::ExistingFile);
    d->add_option("--blur", dg.blur, "Blur sigmas, comma-separated; empty string for none (default: config)");
    d->add_option("--jpeg", dg.jpeg, "JPEG qualities, comma-separated; empty string for none (default: config)");
    d->add_option("-b,--bundle", dg.bundle, "Also score every level and plot robustness curves")
        ->check(CLI::ExistingFile);
    d->callback([&] { action = [&] { return cmd_degrade(g, dg); }; });

    TwinsArgs tw;
    auto* k = app.add_subcommand("twins", "Build real/fake twin pairs from the real rows of a manifest");
    k->add_option("-m,--manifest", tw.manifest, "Manifest of real images")->required()->check(CLI::ExistingFile);
    k->add_option("--method", tw.method, "gan | dm (default: config)");
    k->add_option("--steps", tw.steps, "GAN fit steps or DDIM steps (default: config)")->check(CLI::PositiveNumber);
    k->add_option("--limit", tw.limit, "Use at most this many real images")->check(CLI::NonNegativeNumber);
    k->callback([&] { action = [&] { return cmd_twins(g, tw); }; });

    ToyArgs toy;
    auto* y = app.add_subcommand("toy-corpus", "Generate a seeded synthetic corpus with planted fake artifacts");
    y->add_option("--preset", toy.preset, "planted | confound | blur")->capture_default_str();
    y->add_option("--image-size", toy.image_size, "Image side in pixels")->check(CLI::PositiveNumber);
    y->add_option("--train-per-label", toy.train_per_label, "Train images per label")->check(CLI::NonNegativeNumber);
    y->add_option("--val-per-label", toy.val_per_label, "Validation images per label")->check(CLI::NonNegativeNumber);
    y->add_option("--test-per-label", toy.test_per_label, "Test images per label and class group")
        ->check(CLI::NonNegativeNumber);
    y->add_option("--amplitude", toy.amplitude, "Planted artifact amplitude")->check(CLI::NonNegativeNumber);
    y->callback([&] { action = [&] { return cmd_toy(g, toy); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err) == 0 ? 0 : 2;
    }
    try {
        return action();
    } catch (const UsageError& err) {
        std::cerr << "usage error: " << err.what() << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
}
