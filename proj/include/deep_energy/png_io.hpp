#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "deep_energy/error.hpp"
#include "deep_energy/field.hpp"

namespace deep_energy {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct RawPng {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> bytes;
};

// libpng reports errors by longjmp; no object with a non-trivial destructor
// lives inside the frames below setjmp.
inline bool read_png_header(png_structp png, png_infop info, bool expand_palette, RawPng& out, std::string& err) {
    if (setjmp(png_jmpbuf(png))) {
        err = "corrupt PNG header";
        return false;
    }
    png_read_info(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (depth == 16) {
        err = "unsupported bit depth 16 (only 8-bit PNGs are accepted)";
        return false;
    }
    if (color == PNG_COLOR_TYPE_PALETTE) {
        if (expand_palette) {
            png_set_palette_to_rgb(png);
        } else {
            png_set_packing(png);
        }
    } else if (depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    out.height = png_get_image_height(png, info);
    out.width = png_get_image_width(png, info);
    out.channels = png_get_channels(png, info);
    if (png_get_rowbytes(png, info) != out.width * out.channels) {
        err = "unsupported PNG pixel layout";
        return false;
    }
    return true;
}

inline bool read_png_body(png_structp png, png_bytepp rows) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_read_image(png, rows);
    png_read_end(png, nullptr);
    return true;
}

inline RawPng read_png(const std::string& path, bool expand_palette) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw DataError("cannot open PNG '" + path + "'");
    png_byte sig[8] = {};
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw DataError("'" + path + "' is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("libpng initialization failed");
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);

    RawPng raw;
    std::string err;
    bool ok = read_png_header(png, info, expand_palette, raw, err);
    if (ok) {
        raw.bytes.resize(raw.height * raw.width * raw.channels);
        std::vector<png_bytep> rows(raw.height);
        for (std::size_t r = 0; r < raw.height; ++r) rows[r] = raw.bytes.data() + r * raw.width * raw.channels;
        ok = read_png_body(png, rows.data());
        if (!ok) err = "corrupt or truncated PNG data";
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (!ok) throw DataError("'" + path + "': " + err);
    return raw;
}

inline bool write_png_rows(png_structp png, png_infop info, std::size_t height, std::size_t width,
                           int color_type, const std::uint8_t* bytes, std::size_t channels) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t r = 0; r < height; ++r) {
        png_write_row(png, const_cast<png_bytep>(bytes + r * width * channels));
    }
    png_write_end(png, nullptr);
    return true;
}

inline void write_png(const std::string& path, std::size_t height, std::size_t width, std::size_t channels,
                      const std::vector<std::uint8_t>& bytes) {
    if (channels != 1 && channels != 3) throw DataError("PNG output needs 1 or 3 channels");
    if (height == 0 || width == 0) throw DataError("cannot write an empty PNG");
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw DataError("cannot create '" + path + "'");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("libpng initialization failed");
    }
    png_init_io(png, file.get());
    const int color = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    const bool ok = write_png_rows(png, info, height, width, color, bytes.data(), channels);
    png_destroy_write_struct(&png, &info);
    if (!ok) throw DataError("failed writing PNG '" + path + "'");
}

} // namespace detail

/// Loads an 8-bit gray, RGB or palette PNG into [0,1] intensities. Alpha is dropped.
inline Image load_image(const std::string& path) {
    const auto raw = detail::read_png(path, /*expand_palette=*/true);
    Image img(raw.height, raw.width, raw.channels);
    for (std::size_t i = 0; i < raw.bytes.size(); ++i) img.data()[i] = raw.bytes[i] / 255.0;
    return img;
}

/// Loads a single-plane 8-bit PNG without any value mapping. Palette PNGs
/// yield their raw palette indices (object-id annotations are stored that way).
inline Mask load_mask(const std::string& path) {
    auto raw = detail::read_png(path, /*expand_palette=*/false);
    if (raw.channels != 1) {
        throw DataError("'" + path + "' must be a single-channel PNG, got " + std::to_string(raw.channels) +
                        " channels");
    }
    return Mask(raw.height, raw.width, 1, std::move(raw.bytes));
}

/// Writes an image quantized to the nearest 1/255 step.
inline void save_image(const std::string& path, const Image& img) {
    std::vector<std::uint8_t> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.data()[i], 0.0, 1.0) * 255.0));
    }
    detail::write_png(path, img.height(), img.width(), img.depth(), bytes);
}

inline void save_mask(const std::string& path, const Mask& mask) {
    detail::write_png(path, mask.height(), mask.width(), 1, mask.values());
}

} // namespace deep_energy
