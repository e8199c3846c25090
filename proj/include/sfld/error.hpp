// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sfld {

enum class Errc {
    PatchTooLarge,
    NotEnoughPatches,
    IndivisibleTarget,
    LengthMismatch,
    InvalidImage,
    WeightsNotFound,
    ChecksumMismatch,
    SizeMismatch,
    RangeViolation,
    DimensionMismatch,
    EmptyBatch,
    SingleClassDataset,
    ImageTooSmall,
    BundleBackendMismatch,
    InvalidBundle,
    NonPositiveSigma,
    QualityOutOfRange,
    DegenerateLabels,
    EmptySet,
    IdMismatch,
    DivergedFit,
    ShapeMismatch,
    LayoutNotRecognized,
    ManifestError,
    DecodeError,
    IoError,
    InvalidConfig,
};

constexpr std::string_view errc_name(Errc code) {
    switch (code) {
        case Errc::PatchTooLarge: return "PatchTooLarge";
        case Errc::NotEnoughPatches: return "NotEnoughPatches";
        case Errc::IndivisibleTarget: return "IndivisibleTarget";
        case Errc::LengthMismatch: return "LengthMismatch";
        case Errc::InvalidImage: return "InvalidImage";
        case Errc::WeightsNotFound: return "WeightsNotFound";
        case Errc::ChecksumMismatch: return "ChecksumMismatch";
        case Errc::SizeMismatch: return "SizeMismatch";
        case Errc::RangeViolation: return "RangeViolation";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::EmptyBatch: return "EmptyBatch";
        case Errc::SingleClassDataset: return "SingleClassDataset";
        case Errc::ImageTooSmall: return "ImageTooSmall";
        case Errc::BundleBackendMismatch: return "BundleBackendMismatch";
        case Errc::InvalidBundle: return "InvalidBundle";
        case Errc::NonPositiveSigma: return "NonPositiveSigma";
        case Errc::QualityOutOfRange: return "QualityOutOfRange";
        case Errc::DegenerateLabels: return "DegenerateLabels";
        case Errc::EmptySet: return "EmptySet";
        case Errc::IdMismatch: return "IdMismatch";
        case Errc::DivergedFit: return "DivergedFit";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::LayoutNotRecognized: return "LayoutNotRecognized";
        case Errc::ManifestError: return "ManifestError";
        case Errc::DecodeError: return "DecodeError";
        case Errc::IoError: return "IoError";
        case Errc::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind rather than the message.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace sfld
