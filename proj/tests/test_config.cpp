// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "sfld/config.hpp"
#include "test_util.hpp"

namespace sfld {
namespace {

using nlohmann::json;
using testing::error_code_of;
using testing::scratch_dir;

TEST(ProjectConfig, DefaultsAreValid) {
    const ProjectConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.patch_sizes, (std::vector<int>{28, 56, 224}));
    EXPECT_EQ(c.n_views, 10);
    EXPECT_EQ(c.threshold, 0.5);
    EXPECT_EQ(c.degrade.blur_sigmas, (std::vector<double>{0.5, 1.0, 2.0, 3.0}));
    EXPECT_EQ(c.degrade.jpeg_qualities, (std::vector<int>{30, 50, 70, 90, 100}));
}

TEST(ProjectConfig, JsonRoundTripKeepsDigest) {
    auto j = json::parse(R"({"patch_sizes": [56], "seed": 9, "train": {"epochs": 3},
                              "backend": {"preprocessing": {"mean": [0.5, 0.5, 0.5], "stdev": [0.1, 0.1, 0.1]}},
                              "twins": {"method": "dm", "predictor": "affine-toy", "dm": {"steps": 5}}})");
    const auto c = project_config_from_json(j);
    EXPECT_EQ(c.patch_sizes, std::vector<int>{56});
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.train.epochs, 3);
    EXPECT_EQ(c.twins.dm.steps, 5);
    EXPECT_EQ(c.backend.preprocessing.stdev[1], 0.1);
    const auto back = project_config_from_json(to_json(c));
    EXPECT_EQ(config_digest(back), config_digest(c));
    EXPECT_NE(config_digest(c), config_digest(ProjectConfig{}));
}

TEST(ProjectConfig, RejectsBadInput) {
    auto code = [](const char* text) { return error_code_of([&] { project_config_from_json(json::parse(text)); }); };
    EXPECT_EQ(code(R"({"n_view": 3})"), Errc::InvalidConfig);
    EXPECT_EQ(code(R"({"train": {"epoch": 3}})"), Errc::InvalidConfig);
    EXPECT_EQ(code(R"({"patch_sizes": [30]})"), Errc::InvalidConfig);
    EXPECT_EQ(code(R"({"patch_sizes": [28, 28]})"), Errc::InvalidConfig);
    EXPECT_EQ(code(R"({"threshold": 1.5})"), Errc::InvalidConfig);
    EXPECT_EQ(code(R"({"n_views": "ten"})"), Errc::InvalidConfig);
    EXPECT_EQ(code(R"({"twins": {"method": "vae"}})"), Errc::InvalidConfig);
    EXPECT_EQ(code(R"([1, 2])"), Errc::InvalidConfig);
    EXPECT_EQ(code(R"({"degrade": {"jpeg_qualities": [0]}})"), Errc::QualityOutOfRange);
}

TEST(ProjectConfig, LoadsFromFile) {
    const auto dir = scratch_dir("config");
    std::ofstream(dir / "ok.json") << R"({"n_views": 4})";
    std::ofstream(dir / "broken.json") << "{";
    EXPECT_EQ(load_project_config(dir / "ok.json").n_views, 4);
    EXPECT_EQ(error_code_of([&] { load_project_config(dir / "broken.json"); }), Errc::InvalidConfig);
    EXPECT_EQ(error_code_of([&] { load_project_config(dir / "absent.json"); }), Errc::InvalidConfig);
}

}  // namespace
}  // namespace sfld
