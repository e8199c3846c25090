// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "sfld/digest.hpp"
#include "sfld/encoders.hpp"
#include "sfld/patchcore.hpp"
#include "test_util.hpp"

namespace sfld {
namespace {

using testing::error_code_of;
using testing::random_image;
using testing::scratch_dir;

TEST(AvgPool, FeatureDimension) {
    EXPECT_EQ(AvgPoolBackend().feature_dim(), 768u);
    EXPECT_EQ(AvgPoolBackend(28).feature_dim(), 192u);
    EXPECT_EQ(AvgPoolBackend(8, 64).feature_dim(), 192u);
    EXPECT_EQ(error_code_of([] { AvgPoolBackend(15); }), Errc::InvalidConfig);
}

TEST(AvgPool, ZerosMapToZeros) {
    const AvgPoolBackend enc;
    const auto f = enc.encode(Image(224, 224, 0.0f));
    for (double v : f) EXPECT_EQ(v, 0.0);
}

TEST(AvgPool, MatchesNaiveBlockMeans) {
    Rng rng(3);
    const Preprocessing pre{{0.1, 0.2, 0.3}, {0.5, 2.0, 0.25}};
    const AvgPoolBackend enc(14, 224, pre);
    const auto img = random_image(224, 224, rng);
    const auto f = enc.encode(img);
    for (int ty = 0; ty < 16; ty += 5) {
        for (int tx = 0; tx < 16; tx += 3) {
            for (int c = 0; c < 3; ++c) {
                double sum = 0.0;
                for (int y = 0; y < 14; ++y)
                    for (int x = 0; x < 14; ++x) sum += img.at(ty * 14 + y, tx * 14 + x, c);
                const double expected = (sum / 196.0 - pre.mean[c]) / pre.stdev[c];
                EXPECT_NEAR(f[(ty * 16 + tx) * 3 + c], expected, 1e-12);
            }
        }
    }
}

TEST(AvgPool, IdentityShuffleIsBitExact) {
    Rng rng(4);
    const AvgPoolBackend enc(14, 224, kToyPreprocessing);
    const auto img = random_image(224, 224, rng);
    const auto grid = partition(img, 28);
    const auto same = assemble(permute(grid, Permutation::identity(grid.size())));
    EXPECT_EQ(enc.encode(same), enc.encode(img));
}

TEST(AvgPool, LinearInPixels) {
    Rng rng(5);
    for (const auto& pre : {Preprocessing{}, kToyPreprocessing}) {
        const AvgPoolBackend enc(14, 224, pre);
        std::vector<Image> imgs;
        for (int i = 0; i < 4; ++i) imgs.push_back(random_image(224, 224, rng));
        const auto f_mean = enc.encode(mean_image(imgs));
        const auto feats = enc.encode_batch(imgs);
        for (std::size_t k = 0; k < f_mean.size(); ++k) {
            double m = 0.0;
            for (const auto& f : feats) m += f[k];
            EXPECT_NEAR(f_mean[k], m / 4.0, 1e-6);
        }
    }
}

TEST(AvgPool, BatchEqualsSingle) {
    Rng rng(6);
    const AvgPoolBackend enc;
    std::vector<Image> imgs{random_image(224, 224, rng), random_image(224, 224, rng)};
    const auto batch = enc.encode_batch(imgs);
    EXPECT_EQ(batch[0], enc.encode(imgs[0]));
    EXPECT_EQ(batch[1], enc.encode(imgs[1]));
    EXPECT_TRUE(enc.encode_batch(std::span<const Image>{}).empty());
}

TEST(AvgPool, RejectsWrongSizeAndRange) {
    const AvgPoolBackend enc;
    EXPECT_EQ(error_code_of([&] { enc.encode(Image(256, 256)); }), Errc::SizeMismatch);
    Image bad(224, 224, 0.5f);
    bad.at(3, 3, 1) = 1.5f;
    EXPECT_EQ(error_code_of([&] { enc.encode(bad); }), Errc::RangeViolation);
}

TEST(LoadBackend, ToyAndUnknown) {
    BackendSpec spec;
    spec.preprocessing = kToyPreprocessing;
    const auto b = load_backend(spec);
    EXPECT_EQ(b->name(), "avgpool-flatten");
    EXPECT_EQ(b->preprocessing().stdev[0], 0.05);
    spec.name = "resnet-9000";
    EXPECT_EQ(error_code_of([&] { load_backend(spec); }), Errc::WeightsNotFound);
}

TEST(LoadBackend, ProductionWeightsChecks) {
    const auto dir = scratch_dir("weights");
    BackendSpec spec;
    spec.name = "vit-large-14";
    spec.command = "true";
    spec.weights = (dir / "missing.bin").string();
    EXPECT_EQ(error_code_of([&] { load_backend(spec); }), Errc::WeightsNotFound);

    spec.weights = (dir / "w.bin").string();
    std::ofstream(spec.weights) << "weights";
    spec.sha256 = std::string(64, '0');
    EXPECT_EQ(error_code_of([&] { load_backend(spec); }), Errc::ChecksumMismatch);

    spec.sha256 = sha256_hex(std::string_view("weights"));
    const auto b = load_backend(spec);
    EXPECT_EQ(b->feature_dim(), 768u);
    EXPECT_EQ(b->token_size(), 14);
}

// Stand-in feature command: per-channel mean of the normalized input.
constexpr const char* kStubScript = R"(import struct, sys
a = dict(zip(sys.argv[1::2], sys.argv[2::2]))
d = open(a['--input'], 'rb').read()
assert d[:8] == b'SFLDIMG1'
n, h, w = struct.unpack('<3I', d[8:20])
v = struct.unpack('<%df' % (n * h * w * 3), d[20:])
out = [b'SFLDFEA1', struct.pack('<2I', n, 3)]
for i in range(n):
    px = v[i * h * w * 3:(i + 1) * h * w * 3]
    out.append(struct.pack('<3f', *[sum(px[c::3]) / (h * w) for c in range(3)]))
open(a['--output'], 'wb').write(b''.join(out))
)";

TEST(ExternalCommand, RoundTripsThroughStub) {
    const auto dir = scratch_dir("extcmd");
    const auto script = dir / "stub.py";
    std::ofstream(script) << kStubScript;
    const Preprocessing pre{{0.5, 0.25, 0.0}, {0.5, 0.25, 1.0}};
    ExternalCommandBackend enc({"stub", 28, 3, 14, pre}, "python3 " + script.string(), "none");
    Rng rng(8);
    std::vector<Image> imgs{random_image(28, 28, rng), Image(28, 28, 0.75f)};
    const auto feats = enc.encode_batch(imgs);
    ASSERT_EQ(feats.size(), 2u);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            double s = 0.0;
            for (int y = 0; y < 28; ++y)
                for (int x = 0; x < 28; ++x) s += (imgs[i].at(y, x, c) - pre.mean[c]) / pre.stdev[c];
            EXPECT_NEAR(feats[i][c], s / 784.0, 1e-5);
        }
    }
    EXPECT_EQ(feats[1][0], 0.5);
}

TEST(ExternalCommand, WrongDimensionAndFailure) {
    const auto dir = scratch_dir("extcmd-bad");
    const auto script = dir / "stub.py";
    std::ofstream(script) << kStubScript;
    ExternalCommandBackend wrong_dim({"stub", 28, 5, 14, {}}, "python3 " + script.string(), "none");
    EXPECT_EQ(error_code_of([&] { wrong_dim.encode(Image(28, 28)); }), Errc::DimensionMismatch);
    ExternalCommandBackend failing({"stub", 28, 3, 14, {}}, "false", "none");
    EXPECT_EQ(error_code_of([&] { failing.encode(Image(28, 28)); }), Errc::IoError);
}

}  // namespace
}  // namespace sfld
