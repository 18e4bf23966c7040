#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "deep_energy/error.hpp"
#include "deep_energy/field.hpp"
#include "deep_energy/matting_energy.hpp"
#include "deep_energy/rng.hpp"

namespace deep_energy {

// Class indices of binary seed maps and their codes in seed PNGs (code = class + 1).
inline constexpr std::size_t kBackground = 0;
inline constexpr std::size_t kForeground = 1;

inline constexpr std::uint8_t kTrimapBackground = 0;
inline constexpr std::uint8_t kTrimapUnknown = 128;
inline constexpr std::uint8_t kTrimapForeground = 255;

/// Object-id value treated as "void" (unlabelled boundary) in annotation maps.
inline constexpr std::uint8_t kVoidLabel = 255;

inline constexpr std::size_t kMaxPlacementAttempts = 1000;

struct TrimapTag {};
/// Per-pixel code in {0 = background, 128 = unknown, 255 = foreground}.
using Trimap = Field<std::uint8_t, TrimapTag>;

inline Trimap as_trimap(const Mask& codes) {
    for (auto v : codes.data()) {
        if (v != kTrimapBackground && v != kTrimapUnknown && v != kTrimapForeground) {
            throw DataError("unexpected trimap code " + std::to_string(v) + " (expected 0, 128 or 255)");
        }
    }
    return Trimap(codes.height(), codes.width(), 1, codes.values());
}

struct ObjectMask {
    std::uint8_t id = 0;
    Mask mask; // 1 on the object, 0 elsewhere
};

/**
 * One binary mask per object id of an annotation map (0 = background,
 * 255 = void, both skipped). Objects covering less than min_area_fraction of
 * the image are dropped. Masks come out in increasing id order.
 */
inline std::vector<ObjectMask> split_objects(const Mask& annotation, double min_area_fraction) {
    std::vector<std::size_t> area(256, 0);
    for (auto v : annotation.data()) ++area[v];
    std::vector<ObjectMask> out;
    const double n = static_cast<double>(annotation.pixels());
    for (std::size_t id = 1; id < kVoidLabel; ++id) {
        if (area[id] == 0 || static_cast<double>(area[id]) < min_area_fraction * n) continue;
        ObjectMask obj{static_cast<std::uint8_t>(id), Mask(annotation.height(), annotation.width(), 1)};
        for (std::size_t p = 0; p < annotation.pixels(); ++p) obj.mask.at_pixel(p) = annotation.at_pixel(p) == id;
        out.push_back(std::move(obj));
    }
    return out;
}

enum class MarkerKind { circle, line };

struct MarkerSpec {
    MarkerKind kind = MarkerKind::circle;
    /// Circle radius, or half-length of a horizontal line, in pixels.
    int radius = 3;

    /// Size rule: radius = max(2, round(min(H, W) / 21)).
    static MarkerSpec for_image(MarkerKind kind, std::size_t height, std::size_t width) {
        const double side = static_cast<double>(std::min(height, width));
        return {kind, std::max(2, static_cast<int>(std::lround(side / 21.0)))};
    }
};

/// Pixel offsets (dr, dc) covered by a marker of the given kind and radius.
inline std::vector<std::pair<int, int>> marker_footprint(MarkerKind kind, int radius) {
    std::vector<std::pair<int, int>> offsets;
    if (kind == MarkerKind::line) {
        for (int dc = -radius; dc <= radius; ++dc) offsets.emplace_back(0, dc);
        return offsets;
    }
    for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
            if (dr * dr + dc * dc <= radius * radius) offsets.emplace_back(dr, dc);
        }
    }
    return offsets;
}

namespace detail {

inline bool marker_fits(const Mask& region, const std::vector<std::pair<int, int>>& footprint, long r, long c) {
    const auto h = static_cast<long>(region.height());
    const auto w = static_cast<long>(region.width());
    for (const auto& [dr, dc] : footprint) {
        const long rr = r + dr;
        const long cc = c + dc;
        if (rr < 0 || cc < 0 || rr >= h || cc >= w || !region(rr, cc)) return false;
    }
    return true;
}

/**
 * Center for a marker inside `region`: the region's center of mass when the
 * marker fits there, else the first fitting pixel among up to 1000 uniform
 * draws from the region. When no full-size placement exists the radius is
 * reduced step by step, down to a single pixel.
 */
inline std::optional<std::pair<long, std::vector<std::pair<int, int>>>> place_marker(const Mask& region,
                                                                                     const MarkerSpec& spec,
                                                                                     Rng& rng) {
    std::vector<std::size_t> pixels;
    double sum_r = 0.0;
    double sum_c = 0.0;
    for (std::size_t p = 0; p < region.pixels(); ++p) {
        if (!region.at_pixel(p)) continue;
        pixels.push_back(p);
        sum_r += static_cast<double>(p / region.width());
        sum_c += static_cast<double>(p % region.width());
    }
    if (pixels.empty()) return std::nullopt;
    const auto count = static_cast<double>(pixels.size());
    const long com_r = std::lround(sum_r / count);
    const long com_c = std::lround(sum_c / count);
    const auto w = static_cast<long>(region.width());

    for (int radius = spec.radius; radius >= 0; --radius) {
        auto footprint = marker_footprint(spec.kind, radius);
        if (marker_fits(region, footprint, com_r, com_c)) return std::pair{com_r * w + com_c, std::move(footprint)};
        for (std::size_t attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
            const auto p = static_cast<long>(pixels[rng.uniform_index(pixels.size())]);
            if (marker_fits(region, footprint, p / w, p % w)) return std::pair{p, std::move(footprint)};
        }
    }
    return std::nullopt;
}

} // namespace detail

/**
 * Foreground marker inside the object and background marker inside its
 * complement, as a 2-class seed map (class 0 = background, 1 = foreground).
 * A mask covering the whole image gets no background marker.
 */
inline SeedMap generate_seeds(const Mask& object, const MarkerSpec& spec, Rng& rng,
                              const std::string& name = "object mask") {
    Mask inside(object.height(), object.width(), 1);
    Mask outside(object.height(), object.width(), 1);
    std::size_t area = 0;
    for (std::size_t p = 0; p < object.pixels(); ++p) {
        inside.at_pixel(p) = object.at_pixel(p) != 0;
        outside.at_pixel(p) = object.at_pixel(p) == 0;
        area += inside.at_pixel(p);
    }
    if (area == 0) throw DataError("generate_seeds: " + name + " is empty");

    SeedMap seeds(object.height(), object.width(), 2);
    const auto w = static_cast<long>(object.width());
    auto stamp = [&](const Mask& region, std::size_t cls, const char* which) {
        auto placed = detail::place_marker(region, spec, rng);
        if (!placed) {
            throw DataError("generate_seeds: no " + std::string(which) + " marker placement found in " + name +
                            " after " + std::to_string(kMaxPlacementAttempts) + " attempts");
        }
        const long r = placed->first / w;
        const long c = placed->first % w;
        for (const auto& [dr, dc] : placed->second) seeds(r + dr, c + dc, cls) = 1;
    };
    stamp(inside, kForeground, "foreground");
    if (area < object.pixels()) stamp(outside, kBackground, "background");
    return seeds;
}

template <typename T, typename Tag>
Field<T, Tag> flip_horizontal(const Field<T, Tag>& src) {
    Field<T, Tag> out(src.height(), src.width(), src.depth());
    for (std::size_t r = 0; r < src.height(); ++r) {
        for (std::size_t c = 0; c < src.width(); ++c) {
            for (std::size_t k = 0; k < src.depth(); ++k) out(r, c, k) = src(r, src.width() - 1 - c, k);
        }
    }
    return out;
}

/// Rotation by `degrees` (counter-clockwise on screen) about the image center.
/// Destination pixels whose source falls outside the grid are zero.
template <typename T, typename Tag>
Field<T, Tag> rotate(const Field<T, Tag>& src, double degrees, ResizeMode mode) {
    Field<T, Tag> out(src.height(), src.width(), src.depth());
    const double theta = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(theta);
    const double sn = std::sin(theta);
    const double cy = (static_cast<double>(src.height()) - 1.0) / 2.0;
    const double cx = (static_cast<double>(src.width()) - 1.0) / 2.0;
    const double max_r = static_cast<double>(src.height()) - 1.0;
    const double max_c = static_cast<double>(src.width()) - 1.0;
    constexpr double slack = 1e-9;
    for (std::size_t r = 0; r < src.height(); ++r) {
        for (std::size_t c = 0; c < src.width(); ++c) {
            const double y = static_cast<double>(r) - cy;
            const double x = static_cast<double>(c) - cx;
            const double sx = cx + cs * x - sn * y;
            const double sy = cy + sn * x + cs * y;
            if (mode == ResizeMode::nearest) {
                const double rr = std::round(sy);
                const double rc = std::round(sx);
                if (rr < 0.0 || rc < 0.0 || rr > max_r || rc > max_c) continue;
                for (std::size_t k = 0; k < src.depth(); ++k) {
                    out(r, c, k) = src(static_cast<std::size_t>(rr), static_cast<std::size_t>(rc), k);
                }
                continue;
            }
            if (sy < -slack || sx < -slack || sy > max_r + slack || sx > max_c + slack) continue;
            const double cy_s = std::clamp(sy, 0.0, max_r);
            const double cx_s = std::clamp(sx, 0.0, max_c);
            const auto r0 = static_cast<std::size_t>(std::floor(cy_s));
            const auto c0 = static_cast<std::size_t>(std::floor(cx_s));
            const std::size_t r1 = std::min(r0 + 1, src.height() - 1);
            const std::size_t c1 = std::min(c0 + 1, src.width() - 1);
            const double fr = cy_s - static_cast<double>(r0);
            const double fc = cx_s - static_cast<double>(c0);
            for (std::size_t k = 0; k < src.depth(); ++k) {
                const double top = (1.0 - fc) * src(r0, c0, k) + fc * src(r0, c1, k);
                const double bot = (1.0 - fc) * src(r1, c0, k) + fc * src(r1, c1, k);
                out(r, c, k) = static_cast<T>((1.0 - fr) * top + fr * bot);
            }
        }
    }
    return out;
}

struct AugmentedSample {
    Image image;
    SeedMap seeds;
};

/// Identity, horizontal flip, 45 and 135 degree rotations of a square sample.
inline std::vector<AugmentedSample> augment(const Image& img, const SeedMap& seeds) {
    if (img.height() != img.width()) throw DataError("augment needs a square image");
    require_same_grid(img, seeds, "augment");
    std::vector<AugmentedSample> out;
    out.push_back({img, seeds});
    out.push_back({flip_horizontal(img), flip_horizontal(seeds)});
    for (double deg : {45.0, 135.0}) {
        out.push_back({rotate(img, deg, ResizeMode::bilinear), rotate(seeds, deg, ResizeMode::nearest)});
    }
    return out;
}

inline MattingSeeds trimap_to_seeds(const Trimap& t) {
    MattingSeeds s{Mask(t.height(), t.width(), 1), Mask(t.height(), t.width(), 1)};
    for (std::size_t p = 0; p < t.pixels(); ++p) {
        const auto v = t.at_pixel(p);
        if (v != kTrimapBackground && v != kTrimapUnknown && v != kTrimapForeground) {
            throw DataError("unexpected trimap code " + std::to_string(v) + " at pixel " + std::to_string(p));
        }
        s.fg.at_pixel(p) = v == kTrimapForeground;
        s.bg.at_pixel(p) = v == kTrimapBackground;
    }
    return s;
}

// Seed PNG codes: 0 = no seed, k = seed of class k - 1.

inline Mask seeds_to_codes(const SeedMap& seeds) {
    if (seeds.depth() > 255) throw DataError("too many classes for an 8-bit seed image");
    Mask codes(seeds.height(), seeds.width(), 1);
    for (std::size_t p = 0; p < seeds.pixels(); ++p) {
        for (std::size_t k = 0; k < seeds.depth(); ++k) {
            if (seeds.at_pixel(p, k)) {
                codes.at_pixel(p) = static_cast<std::uint8_t>(k + 1);
                break;
            }
        }
    }
    return codes;
}

/// classes = 0 infers max(2, largest code).
inline SeedMap seeds_from_codes(const Mask& codes, std::size_t classes = 0) {
    std::size_t max_code = 0;
    for (auto v : codes.data()) max_code = std::max<std::size_t>(max_code, v);
    if (classes == 0) classes = std::max<std::size_t>(2, max_code);
    if (max_code > classes) {
        throw DataError("seed image code " + std::to_string(max_code) + " exceeds class count " +
                        std::to_string(classes));
    }
    SeedMap seeds(codes.height(), codes.width(), classes);
    for (std::size_t p = 0; p < codes.pixels(); ++p) {
        if (const auto v = codes.at_pixel(p)) seeds.at_pixel(p, v - 1u) = 1;
    }
    return seeds;
}

/// Foreground / background planes of a binary seed map.
inline MattingSeeds matting_seeds_from(const SeedMap& seeds) {
    if (seeds.depth() != 2) throw DataError("matting seeds need a 2-class seed map");
    MattingSeeds s{Mask(seeds.height(), seeds.width(), 1), Mask(seeds.height(), seeds.width(), 1)};
    for (std::size_t p = 0; p < seeds.pixels(); ++p) {
        s.fg.at_pixel(p) = seeds.at_pixel(p, kForeground);
        s.bg.at_pixel(p) = seeds.at_pixel(p, kBackground);
    }
    return s;
}

struct ManifestEntry {
    std::string id;
    std::string image;
    std::string seeds;
    std::optional<std::string> ground_truth;
};

/**
 * Tab-separated records: image path, seed path, optional ground-truth path.
 * Blank lines and lines starting with '#' are skipped. Relative paths are
 * resolved against the manifest's directory; the id is the seed file stem.
 */
inline std::vector<ManifestEntry> parse_manifest(std::istream& in, const std::filesystem::path& base = {}) {
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return (path.is_absolute() || base.empty() ? path : base / path).string();
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) fields.push_back(field);
        if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() || fields[1].empty()) {
            throw DataError("manifest line " + std::to_string(line_no) +
                            ": expected 2 or 3 tab-separated fields (image, seeds[, ground truth])");
        }
        ManifestEntry e;
        e.image = resolve(fields[0]);
        e.seeds = resolve(fields[1]);
        if (fields.size() == 3 && !fields[2].empty()) e.ground_truth = resolve(fields[2]);
        e.id = std::filesystem::path(fields[1]).stem().string();
        entries.push_back(std::move(e));
    }
    return entries;
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest '" + path + "'");
    return parse_manifest(in, std::filesystem::path(path).parent_path());
}

} // namespace deep_energy
