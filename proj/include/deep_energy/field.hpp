#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "deep_energy/error.hpp"

namespace deep_energy {

/**
 * Dense H x W x D grid stored row-major with the depth axis innermost:
 * element (r, c, k) lives at (r * width + c) * depth + k.
 *
 * The Tag parameter keeps images, seed maps, probability fields and mattes
 * from being passed for one another even when they share an element type.
 */
template <typename T, typename Tag>
class Field {
public:
    using value_type = T;

    Field() = default;

    Field(std::size_t height, std::size_t width, std::size_t depth, T fill = T{})
        : height_(height), width_(width), depth_(depth), data_(height * width * depth, fill) {}

    Field(std::size_t height, std::size_t width, std::size_t depth, std::vector<T> data)
        : height_(height), width_(width), depth_(depth), data_(std::move(data)) {
        if (data_.size() != height_ * width_ * depth_) {
            throw DataError("field data length " + std::to_string(data_.size()) +
                            " does not match shape " + std::to_string(height_) + "x" +
                            std::to_string(width_) + "x" + std::to_string(depth_));
        }
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t depth() const noexcept { return depth_; }
    std::size_t pixels() const noexcept { return height_ * width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t index(std::size_t r, std::size_t c) const noexcept { return r * width_ + c; }

    T& operator()(std::size_t r, std::size_t c, std::size_t k = 0) noexcept {
        return data_[(r * width_ + c) * depth_ + k];
    }
    const T& operator()(std::size_t r, std::size_t c, std::size_t k = 0) const noexcept {
        return data_[(r * width_ + c) * depth_ + k];
    }

    /// Element k of pixel p, where p is the row-major linear pixel index.
    T& at_pixel(std::size_t p, std::size_t k = 0) noexcept { return data_[p * depth_ + k]; }
    const T& at_pixel(std::size_t p, std::size_t k = 0) const noexcept { return data_[p * depth_ + k]; }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    template <typename OtherTag>
    bool same_grid(const Field<T, OtherTag>& other) const noexcept {
        return height_ == other.height() && width_ == other.width();
    }

    friend bool operator==(const Field& a, const Field& b) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t depth_ = 0;
    std::vector<T> data_;
};

struct ImageTag {};
struct SeedTag {};
struct ProbabilityTag {};
struct AlphaTag {};
struct MaskTag {};

/// Intensities in [0,1]; depth is the channel count (1 or 3).
using Image = Field<double, ImageTag>;
/// Per-pixel per-class seed indicators in {0,1}; depth is the class count.
using SeedMap = Field<std::uint8_t, SeedTag>;
/// Per-pixel per-class probabilities; depth is the class count.
using ProbabilityField = Field<double, ProbabilityTag>;
/// Per-pixel opacity, depth 1.
using AlphaMatte = Field<double, AlphaTag>;
/// 8-bit single-plane label data: binary masks, object-id maps, trimaps.
using Mask = Field<std::uint8_t, MaskTag>;

template <typename A, typename B>
void require_same_grid(const A& a, const B& b, const char* what) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw DataError(std::string(what) + ": shape mismatch (" + std::to_string(a.height()) + "x" +
                        std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                        std::to_string(b.width()) + ")");
    }
}

inline void validate(const Image& img) {
    if (img.depth() != 1 && img.depth() != 3) {
        throw DataError("image must have 1 or 3 channels, got " + std::to_string(img.depth()));
    }
    for (double v : img.data()) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw DataError("image intensity outside [0,1]");
        }
    }
}

inline void validate(const SeedMap& seeds) {
    if (seeds.depth() < 2) {
        throw DataError("seed map needs at least 2 classes");
    }
    for (std::size_t p = 0; p < seeds.pixels(); ++p) {
        int count = 0;
        for (std::size_t k = 0; k < seeds.depth(); ++k) {
            const auto v = seeds.at_pixel(p, k);
            if (v > 1) throw DataError("seed value outside {0,1}");
            count += v;
        }
        if (count > 1) {
            throw DataError("pixel " + std::to_string(p) + " seeds more than one class");
        }
    }
}

/// Number of seeded pixels (any class).
inline std::size_t seed_count(const SeedMap& seeds) {
    std::size_t n = 0;
    for (std::size_t p = 0; p < seeds.pixels(); ++p) {
        for (std::size_t k = 0; k < seeds.depth(); ++k) {
            if (seeds.at_pixel(p, k) != 0) {
                ++n;
                break;
            }
        }
    }
    return n;
}

/// ITU-R 601 luma for RGB; a 1-channel image is returned unchanged.
inline Image to_grayscale(const Image& img) {
    if (img.depth() == 1) return img;
    if (img.depth() != 3) {
        throw DataError("to_grayscale expects 1 or 3 channels, got " + std::to_string(img.depth()));
    }
    Image gray(img.height(), img.width(), 1);
    for (std::size_t p = 0; p < img.pixels(); ++p) {
        const double v = 0.299 * img.at_pixel(p, 0) + 0.587 * img.at_pixel(p, 1) + 0.114 * img.at_pixel(p, 2);
        gray.at_pixel(p) = std::clamp(v, 0.0, 1.0);
    }
    return gray;
}

enum class ResizeMode { bilinear, nearest };

namespace detail {

// Pixel-center aligned source coordinate for output index i.
inline double source_coord(std::size_t i, std::size_t in, std::size_t out) {
    return (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
}

} // namespace detail

/// Resamples every plane of a field. Nearest mode never invents new values,
/// so masks and seed maps keep their codes.
template <typename T, typename Tag>
Field<T, Tag> resize(const Field<T, Tag>& src, std::size_t height, std::size_t width, ResizeMode mode) {
    if (height == 0 || width == 0) throw DataError("resize target must be at least 1x1");
    if (src.empty()) throw DataError("cannot resize an empty field");
    if (height == src.height() && width == src.width()) return src;

    Field<T, Tag> out(height, width, src.depth());
    const auto max_r = static_cast<double>(src.height() - 1);
    const auto max_c = static_cast<double>(src.width() - 1);
    for (std::size_t r = 0; r < height; ++r) {
        const double sr = std::clamp(detail::source_coord(r, src.height(), height), 0.0, max_r);
        for (std::size_t c = 0; c < width; ++c) {
            const double sc = std::clamp(detail::source_coord(c, src.width(), width), 0.0, max_c);
            if (mode == ResizeMode::nearest) {
                const auto nr = static_cast<std::size_t>(std::floor(sr + 0.5));
                const auto nc = static_cast<std::size_t>(std::floor(sc + 0.5));
                for (std::size_t k = 0; k < src.depth(); ++k) out(r, c, k) = src(nr, nc, k);
                continue;
            }
            const auto r0 = static_cast<std::size_t>(std::floor(sr));
            const auto c0 = static_cast<std::size_t>(std::floor(sc));
            const std::size_t r1 = std::min(r0 + 1, src.height() - 1);
            const std::size_t c1 = std::min(c0 + 1, src.width() - 1);
            const double fr = sr - static_cast<double>(r0);
            const double fc = sc - static_cast<double>(c0);
            for (std::size_t k = 0; k < src.depth(); ++k) {
                const double top = (1.0 - fc) * static_cast<double>(src(r0, c0, k)) + fc * static_cast<double>(src(r0, c1, k));
                const double bot = (1.0 - fc) * static_cast<double>(src(r1, c0, k)) + fc * static_cast<double>(src(r1, c1, k));
                const double v = (1.0 - fr) * top + fr * bot;
                if constexpr (std::is_floating_point_v<T>) {
                    out(r, c, k) = static_cast<T>(v);
                } else {
                    out(r, c, k) = static_cast<T>(std::lround(v));
                }
            }
        }
    }
    return out;
}

} // namespace deep_energy
