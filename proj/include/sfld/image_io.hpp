// Copyright (C) 2026 The SFLD Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// The single decode/encode pathway for the project: libpng's simplified API
// for PNG and libjpeg(-turbo) for JPEG. codec_version() is recorded in every
// derived manifest and report.

#include <jpeglib.h>
#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "sfld/error.hpp"
#include "sfld/image.hpp"

namespace sfld {

inline std::string codec_version() {
    std::string v = "libpng-" PNG_LIBPNG_VER_STRING;
#ifdef LIBJPEG_TURBO_VERSION
#define SFLD_STR2(x) #x
#define SFLD_STR(x) SFLD_STR2(x)
    v += "+libjpeg-turbo-" SFLD_STR(LIBJPEG_TURBO_VERSION);
#undef SFLD_STR
#undef SFLD_STR2
#else
    v += "+libjpeg-" + std::to_string(JPEG_LIB_VERSION);
#endif
    return v;
}

using Bytes = std::vector<std::uint8_t>;

inline Bytes read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::IoError, "cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path, const Bytes& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::IoError, "short write to " + path.string());
}

// ---------------------------------------------------------------- PNG

inline Bytes encode_png(const ImageU8& image) {
    png_image desc{};
    desc.version = PNG_IMAGE_VERSION;
    desc.width = static_cast<png_uint_32>(image.width());
    desc.height = static_cast<png_uint_32>(image.height());
    desc.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = PNG_IMAGE_PNG_SIZE_MAX(desc);
    Bytes out(size);
    if (!png_image_write_to_memory(&desc, out.data(), &size, 0, image.pixels().data(), 0, nullptr)) {
        fail(Errc::IoError, std::string("png encode failed: ") + desc.message);
    }
    out.resize(size);
    return out;
}

inline ImageU8 decode_png(const Bytes& bytes) {
    png_image desc{};
    desc.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size())) {
        fail(Errc::DecodeError, std::string("png header: ") + desc.message);
    }
    desc.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(desc));
    if (!png_image_finish_read(&desc, nullptr, px.data(), 0, nullptr)) {
        png_image_free(&desc);
        fail(Errc::DecodeError, std::string("png body: ") + desc.message);
    }
    return ImageU8(static_cast<int>(desc.height), static_cast<int>(desc.width), std::move(px));
}

// ---------------------------------------------------------------- JPEG

namespace detail {

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, mgr->message);
    std::longjmp(mgr->jump, 1);
}

}  // namespace detail

/// Baseline JPEG with the integer-exact DCT. Chroma subsampling is 4:2:0
/// below quality 96 and 4:4:4 at or above it.
inline Bytes encode_jpeg(const ImageU8& image, int quality) {
    if (quality < 1 || quality > 100) fail(Errc::QualityOutOfRange, "quality " + std::to_string(quality));
    jpeg_compress_struct cinfo{};
    detail::JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = detail::jpeg_error_exit;
    unsigned char* mem = nullptr;
    unsigned long mem_size = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        std::free(mem);
        fail(Errc::IoError, std::string("jpeg encode: ") + err.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &mem, &mem_size);
    cinfo.image_width = static_cast<JDIMENSION>(image.width());
    cinfo.image_height = static_cast<JDIMENSION>(image.height());
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    cinfo.dct_method = JDCT_ISLOW;
    const int h_factor = quality < 96 ? 2 : 1;
    cinfo.comp_info[0].h_samp_factor = h_factor;
    cinfo.comp_info[0].v_samp_factor = h_factor;
    for (int c = 1; c < 3; ++c) {
        cinfo.comp_info[c].h_samp_factor = 1;
        cinfo.comp_info[c].v_samp_factor = 1;
    }
    jpeg_start_compress(&cinfo, TRUE);
    const std::size_t stride = static_cast<std::size_t>(image.width()) * 3;
    while (cinfo.next_scanline < cinfo.image_height) {
        auto* row = const_cast<JSAMPLE*>(image.pixels().data() + cinfo.next_scanline * stride);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    Bytes out(mem, mem + mem_size);
    jpeg_destroy_compress(&cinfo);
    std::free(mem);
    return out;
}

inline ImageU8 decode_jpeg(const Bytes& bytes) {
    jpeg_decompress_struct cinfo{};
    detail::JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = detail::jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        fail(Errc::DecodeError, std::string("jpeg decode: ") + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    cinfo.dct_method = JDCT_ISLOW;
    jpeg_start_decompress(&cinfo);
    const int h = static_cast<int>(cinfo.output_height);
    const int w = static_cast<int>(cinfo.output_width);
    std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * w * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = px.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return ImageU8(h, w, std::move(px));
}

// ---------------------------------------------------------------- files

inline bool is_png(const Bytes& b) { return b.size() >= 8 && b[0] == 0x89 && b[1] == 'P' && b[2] == 'N' && b[3] == 'G'; }
inline bool is_jpeg(const Bytes& b) { return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF; }

/// Decodes by content signature, not extension.
inline ImageU8 decode_image(const Bytes& bytes) {
    if (is_png(bytes)) return decode_png(bytes);
    if (is_jpeg(bytes)) return decode_jpeg(bytes);
    fail(Errc::DecodeError, "unrecognized image signature");
}

inline ImageU8 read_image(const std::filesystem::path& path) {
    try {
        return decode_image(read_file_bytes(path));
    } catch (const Error& e) {
        fail(e.code(), path.string() + ": " + e.what());
    }
}

/// Writes PNG unless the extension is .jpg/.jpeg (quality 95 then).
inline void write_image(const std::filesystem::path& path, const ImageU8& image) {
    const auto ext = path.extension().string();
    if (ext == ".jpg" || ext == ".jpeg" || ext == ".JPG" || ext == ".JPEG") {
        write_file_bytes(path, encode_jpeg(image, 95));
    } else {
        write_file_bytes(path, encode_png(image));
    }
}

}  // namespace sfld
