// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "sfld/digest.hpp"
#include "sfld/twinsynths.hpp"
#include "test_util.hpp"

namespace sfld {
namespace {

using testing::error_code_of;
using testing::natural_fixture;
using testing::random_image;
using testing::scratch_dir;

std::vector<double> random_values(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

class WrongShapePredictor final : public NoisePredictor {
public:
    std::string name() const override { return "wrong"; }
    std::vector<double> predict(const std::vector<double>& x, int, const std::string&) const override {
        return std::vector<double>(x.size() + 1, 0.0);
    }
};

TEST(Schedule, ScaledLinearIsValid) {
    const auto s = DdimSchedule::scaled_linear(50, make_prompt("goldfish"));
    EXPECT_EQ(s.steps(), 50);
    EXPECT_EQ(s.prompt, "a photo of goldfish");
    EXPECT_EQ(s.abar(0), 1.0);
    EXPECT_LT(s.abar(50), 0.01);
    EXPECT_GT(s.abar(1), 0.9);
    EXPECT_NO_THROW(s.validate());
    EXPECT_EQ(DdimSchedule::scaled_linear(0).steps(), 0);
    EXPECT_EQ(error_code_of([] { DdimSchedule::scaled_linear(1001); }), Errc::InvalidConfig);
    DdimSchedule bad{{0.9, 0.95}, ""};
    EXPECT_EQ(error_code_of([&] { bad.validate(); }), Errc::InvalidConfig);
    bad.alphas_bar = {1.0};
    EXPECT_EQ(error_code_of([&] { bad.validate(); }), Errc::InvalidConfig);
}

TEST(Ddim, ZeroNoiseForwardClosedForm) {
    Rng rng(61);
    const ZeroNoisePredictor zero;
    const auto x0 = random_values(64, rng);
    const auto full = DdimSchedule::scaled_linear(50);
    for (int t : {1, 7, 50}) {
        DdimSchedule prefix{std::vector<double>(full.alphas_bar.begin(), full.alphas_bar.begin() + t), ""};
        const auto xt = ddim_forward(x0, prefix, zero);
        const double k = std::sqrt(full.abar(t));
        for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(xt[i], k * x0[i], 1e-12);
    }
}

TEST(Ddim, ZeroStepsIsIdentity) {
    Rng rng(62);
    const auto x = random_values(10, rng);
    const LinearNoisePredictor lin(0.3);
    const DdimSchedule empty;
    EXPECT_EQ(ddim_forward(x, empty, lin), x);
    EXPECT_EQ(ddim_reverse(x, empty, lin), x);
}

TEST(Ddim, LinearPredictorMatchesScalarRecurrence) {
    const double c = 0.4;
    const LinearNoisePredictor lin(c);
    for (int steps : {1, 10, 50}) {
        const auto s = DdimSchedule::scaled_linear(steps);
        const double x0 = 0.37;
        // Per step the update is multiplication by a constant gain.
        double fwd = x0;
        for (int t = 1; t <= steps; ++t) {
            const double ap = s.abar(t - 1), a = s.abar(t);
            fwd *= std::sqrt(a / ap) * (1.0 - c * std::sqrt(1.0 - ap)) + c * std::sqrt(1.0 - a);
        }
        EXPECT_NEAR(ddim_forward(std::vector<double>{x0}, s, lin)[0], fwd, 1e-12);
        double rev = fwd;
        for (int t = steps; t >= 1; --t) {
            const double a = s.abar(t), ap = s.abar(t - 1);
            rev *= std::sqrt(ap / a) * (1.0 - c * std::sqrt(1.0 - a)) + c * std::sqrt(1.0 - ap);
        }
        EXPECT_NEAR(ddim_reverse(std::vector<double>{fwd}, s, lin)[0], rev, 1e-12);
    }
}

TEST(Ddim, ZeroNoiseRoundTrip) {
    Rng rng(63);
    const ZeroNoisePredictor zero;
    const auto img = random_image(16, 16, rng);
    for (int steps : {1, 10, 50}) {
        const auto s = DdimSchedule::scaled_linear(steps, make_prompt("cat"));
        const auto back = ddim_reverse(ddim_forward(img, s, zero), s, zero);
        double m = 0.0;
        for (std::size_t i = 0; i < img.pixels().size(); ++i) {
            m = std::max(m, std::abs(static_cast<double>(img.pixels()[i]) - back.pixels()[i]));
        }
        EXPECT_LT(m, 1e-5);
        const auto v = random_values(100, rng);
        EXPECT_LT(max_abs_diff(ddim_reverse(ddim_forward(v, s, zero), s, zero), v), 1e-12);
    }
}

TEST(Ddim, ShapeMismatchFromPredictor) {
    const WrongShapePredictor wrong;
    const auto s = DdimSchedule::scaled_linear(3);
    EXPECT_EQ(error_code_of([&] { ddim_forward(std::vector<double>{1.0}, s, wrong); }), Errc::ShapeMismatch);
    EXPECT_EQ(error_code_of([&] { ddim_reverse(std::vector<double>{1.0}, s, wrong); }), Errc::ShapeMismatch);
}

TEST(Ddim, ToyPredictorRoundTripImprovesWithSteps) {
    // 1-D data from a two-point mixture; the fitted affine predictor only
    // approximates the true noise, so reconstruction error shrinks as T grows.
    Rng data_rng(64);
    std::vector<double> data(2000);
    for (auto& v : data) v = (data_rng.uniform() < 0.5 ? -0.5 : 0.5) + 0.1 * data_rng.normal();
    std::vector<double> psnrs;
    for (int steps : {1, 10, 50, 200}) {
        const auto s = DdimSchedule::scaled_linear(steps);
        Rng fit_rng(65);
        const auto pred = AffineNoisePredictor::fit(data, s, 4000, fit_rng);
        EXPECT_EQ(pred.name(), "affine-toy");
        const auto x = std::vector<double>(data.begin(), data.begin() + 200);
        const auto back = ddim_reverse(ddim_forward(x, s, pred), s, pred);
        double se = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) se += (x[i] - back[i]) * (x[i] - back[i]);
        const double mse = se / x.size();
        psnrs.push_back(10.0 * std::log10(4.0 / mse));  // peak-to-peak 2 on [-1,1]
        EXPECT_TRUE(std::isfinite(psnrs.back()));
    }
    EXPECT_LT(psnrs.front(), psnrs.back());
    EXPECT_LT(psnrs[1], psnrs[3]);
}

TEST(GanFit, DegenerateLinearCaseConverges) {
    // No hidden layers, no normalization, no output squashing: a single
    // transposed convolution from a fixed latent, i.e. linear least squares.
    Rng rng(66);
    const auto target = random_image(4, 4, rng);
    GanFitConfig cfg;
    cfg.widths = {};
    cfg.target_size = 4;
    cfg.batchnorm = false;
    cfg.tanh_output = false;
    cfg.steps = 2000;
    cfg.learning_rate = 0.01;
    const auto res = fit_gan_twin(target, cfg);
    EXPECT_LT(res.final_mse, 1e-6);
    EXPECT_EQ(res.loss_trace.size(), 2000u);
}

TEST(GanFit, DeterministicAndDescending) {
    const auto crop = center_crop(to_float(natural_fixture()), 16);
    GanFitConfig cfg;
    cfg.widths = {32, 16};
    cfg.target_size = 16;
    cfg.steps = 150;
    cfg.learning_rate = 2e-3;
    cfg.seed = 5;
    const auto a = fit_gan_twin(crop, cfg);
    const auto b = fit_gan_twin(crop, cfg);
    EXPECT_EQ(encode_png(to_u8(a.fake)), encode_png(to_u8(b.fake)));
    EXPECT_EQ(a.loss_trace, b.loss_trace);
    EXPECT_LT(a.final_mse, 0.5 * a.loss_trace.front());
    cfg.seed = 6;
    EXPECT_NE(fit_gan_twin(crop, cfg).loss_trace, a.loss_trace);
}

TEST(GanFit, ConfigErrors) {
    GanFitConfig cfg;
    cfg.target_size = 32;
    EXPECT_EQ(error_code_of([&] { cfg.validate(); }), Errc::InvalidConfig);
    cfg = {};
    EXPECT_EQ(error_code_of([&] { fit_gan_twin(Image(32, 32), cfg); }), Errc::SizeMismatch);
    cfg.widths = {8, 0, 4, 2};
    EXPECT_EQ(error_code_of([&] { cfg.validate(); }), Errc::InvalidConfig);
}

TEST(GanFit, WindowMeans) {
    const std::vector<double> trace{4, 2, 3, 1, 1, 1, 9};
    EXPECT_EQ(window_means(trace, 2), (std::vector<double>{3, 2, 1}));
    EXPECT_TRUE(is_non_increasing({3, 2, 2, 1}));
    EXPECT_FALSE(is_non_increasing({3, 2, 2.5}));
}

Manifest three_reals(const std::filesystem::path& dir) {
    const auto nat = natural_fixture();
    Manifest m;
    m.root = dir;
    const char* classes[] = {"cat", "dog", "owl"};
    for (int i = 0; i < 3; ++i) {
        const std::string rel = std::string(classes[i]) + "/img.png";
        write_image(dir / rel, crop(nat, 20 * i, 30 * i, 64, 64));
        m.rows.push_back({rel, 0, "", classes[i], Split::Test});
    }
    return m;
}

TEST(Build, GanMethodThreePairs) {
    const auto dir = scratch_dir("twins-gan");
    auto reals = three_reals(dir / "src");
    reals.rows.push_back({"absent.png", 0, "", "cat", Split::Test});
    TwinBuildOptions opt;
    opt.gan.widths = {16, 8};
    opt.gan.target_size = 16;
    opt.gan.steps = 60;
    opt.gan.learning_rate = 2e-3;
    opt.workers = 2;
    const auto pairs = build_twinsynths(reals, opt, dir / "out");
    ASSERT_EQ(pairs.size(), 4u);
    for (int i = 0; i < 3; ++i) {
        const auto& p = pairs[i];
        EXPECT_TRUE(p.status == "ok" || p.status == "below-gate") << p.status;
        EXPECT_EQ(p.loss_trace.size(), 60u);
        EXPECT_EQ(p.class_name, reals.rows[i].content_class);
        const auto real = read_image(dir / "out" / p.real_path);
        const auto fake = read_image(dir / "out" / p.fake_path);
        EXPECT_EQ(real.height(), 16);
        EXPECT_EQ(fake.width(), 16);
        EXPECT_EQ(p.seed, derive_seed(0, reals.rows[i].image_path));
    }
    EXPECT_EQ(pairs[3].status.rfind("error: ", 0), 0u);

    save_twin_manifest(pairs, dir / "out" / "twins.tsv");
    std::ifstream in(dir / "out" / "twins.tsv");
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 3u + 1 + 4);
    EXPECT_EQ(lines[3], "real_path\tfake_path\tclass_name\tmethod\tstatus\tpsnr\tfinal_mse\tseed");
    EXPECT_EQ(split_tabs(lines[4]).size(), 8u);
    EXPECT_EQ(split_tabs(lines[7]).size(), 8u);

    // Same inputs, same bytes.
    const auto again = build_twinsynths(reals, opt, dir / "out2");
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(sha256_file(dir / "out" / pairs[i].fake_path), sha256_file(dir / "out2" / again[i].fake_path));
    }
}

TEST(Build, DmWithZeroPredictorIsDegenerate) {
    const auto dir = scratch_dir("twins-dm");
    const auto reals = three_reals(dir / "src");
    TwinBuildOptions opt;
    opt.method = TwinMethod::Dm;
    opt.dm.steps = 10;
    const auto pairs = build_twinsynths(reals, opt, dir / "out");
    ASSERT_EQ(pairs.size(), 3u);
    for (const auto& p : pairs) {
        EXPECT_EQ(p.status, "degenerate-predictor");
        EXPECT_GT(p.psnr, 50.0);
        EXPECT_EQ(p.method, TwinMethod::Dm);
    }
    const auto m = twin_pairs_to_manifest(pairs, dir / "out");
    ASSERT_EQ(m.rows.size(), 6u);
    EXPECT_EQ(m.rows[0].label, 0);
    EXPECT_EQ(m.rows[1].label, 1);
    EXPECT_EQ(m.rows[1].generator, "twinsynths-dm");
    EXPECT_TRUE(std::filesystem::exists(m.resolve(m.rows[5])));
}

TEST(Build, DmWithLinearPredictorReportsPsnr) {
    const auto dir = scratch_dir("twins-dm-lin");
    const auto reals = three_reals(dir / "src");
    const LinearNoisePredictor lin(0.05);
    TwinBuildOptions opt;
    opt.method = TwinMethod::Dm;
    opt.dm.steps = 5;
    opt.dm.crop_size = 32;
    opt.predictor = &lin;
    const auto pairs = build_twinsynths(reals, opt, dir / "out");
    for (const auto& p : pairs) {
        EXPECT_EQ(p.status, "ok");
        EXPECT_TRUE(std::isfinite(p.psnr));
        EXPECT_EQ(read_image(dir / "out" / p.fake_path).height(), 32);
    }
}

}  // namespace
}  // namespace sfld
