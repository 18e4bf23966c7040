#pragma once

#include <array>
#include <span>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "deep_energy/error.hpp"
#include "deep_energy/field.hpp"
#include "deep_energy/sparse.hpp"

namespace deep_energy {

inline constexpr double kDefaultBeta = 1000.0;
inline constexpr double kDefaultSegLambda = 10.0;

/// Neighbor slot order shared by weights and neighbor images.
enum Neighbor : std::size_t { up = 0, down = 1, left = 2, right = 3 };
inline constexpr std::size_t kNeighborCount = 4;

/// How smoothness terms count undirected edges. `once` is the canonical
/// graph-Laplacian quadratic form; `twice` sums all four shifted copies,
/// visiting every edge from both of its endpoints.
enum class EdgeCounting { once, twice };

/// Index of the neighbor of pixel (r, c) in `slot`, or nullopt off-grid.
inline std::optional<std::size_t> neighbor_of(std::size_t r, std::size_t c, std::size_t slot, std::size_t height,
                                              std::size_t width) {
    switch (slot) {
    case up:
        if (r == 0) return std::nullopt;
        return (r - 1) * width + c;
    case down:
        if (r + 1 >= height) return std::nullopt;
        return (r + 1) * width + c;
    case left:
        if (c == 0) return std::nullopt;
        return r * width + c - 1;
    case right:
        if (c + 1 >= width) return std::nullopt;
        return r * width + c + 1;
    default:
        return std::nullopt;
    }
}

/// Per-pixel weights to the 4-neighborhood; off-grid slots hold 0.
class NeighborWeights {
public:
    NeighborWeights() = default;
    NeighborWeights(std::size_t height, std::size_t width)
        : height_(height), width_(width), data_(height * width * kNeighborCount, 0.0) {}

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t pixels() const noexcept { return height_ * width_; }

    double& operator()(std::size_t pixel, std::size_t slot) noexcept { return data_[pixel * kNeighborCount + slot]; }
    double operator()(std::size_t pixel, std::size_t slot) const noexcept {
        return data_[pixel * kNeighborCount + slot];
    }

    std::span<const double> data() const noexcept { return data_; }

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

/// w_ij = exp(-beta (I_i - I_j)^2) over 4-neighbor edges of a gray image.
inline NeighborWeights edge_weights(const Image& gray, double beta = kDefaultBeta) {
    if (gray.depth() != 1) {
        throw DataError("edge_weights needs a 1-channel image, got " + std::to_string(gray.depth()) + " channels");
    }
    if (!(beta >= 0.0)) throw DataError("beta must be >= 0");
    const std::size_t h = gray.height();
    const std::size_t w = gray.width();
    NeighborWeights weights(h, w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t p = r * w + c;
            // Each edge is evaluated once and mirrored, so symmetry is exact.
            if (c + 1 < w) {
                const double d = gray.at_pixel(p) - gray.at_pixel(p + 1);
                const double wt = std::exp(-beta * d * d);
                weights(p, right) = wt;
                weights(p + 1, left) = wt;
            }
            if (r + 1 < h) {
                const double d = gray.at_pixel(p) - gray.at_pixel(p + w);
                const double wt = std::exp(-beta * d * d);
                weights(p, down) = wt;
                weights(p + w, up) = wt;
            }
        }
    }
    return weights;
}

/// L = D - W for the 4-connected grid graph.
inline CsrMatrix assemble_laplacian(const NeighborWeights& weights) {
    const std::size_t h = weights.height();
    const std::size_t w = weights.width();
    const std::size_t n = h * w;
    std::vector<std::size_t> offsets(n + 1, 0);
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;
    cols.reserve(5 * n);
    vals.reserve(5 * n);

    // Column order within a row: up, left, self, right, down (ascending index).
    constexpr std::array<std::size_t, 2> before = {up, left};
    constexpr std::array<std::size_t, 2> after = {right, down};
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t p = r * w + c;
            double degree = 0.0;
            for (std::size_t slot = 0; slot < kNeighborCount; ++slot) degree += weights(p, slot);
            for (auto slot : before) {
                if (auto q = neighbor_of(r, c, slot, h, w)) {
                    cols.push_back(static_cast<std::uint32_t>(*q));
                    vals.push_back(-weights(p, slot));
                }
            }
            cols.push_back(static_cast<std::uint32_t>(p));
            vals.push_back(degree);
            for (auto slot : after) {
                if (auto q = neighbor_of(r, c, slot, h, w)) {
                    cols.push_back(static_cast<std::uint32_t>(*q));
                    vals.push_back(-weights(p, slot));
                }
            }
            offsets[p + 1] = cols.size();
        }
    }
    return CsrMatrix(n, std::move(offsets), std::move(cols), std::move(vals));
}

/// Gray conversion, edge weights and Laplacian in one step.
inline CsrMatrix random_walker_laplacian(const Image& img, double beta = kDefaultBeta) {
    return assemble_laplacian(edge_weights(to_grayscale(img), beta));
}

namespace detail {

inline void check_seg_shapes(const SeedMap& seeds, const ProbabilityField& y, std::size_t height, std::size_t width,
                             const char* what) {
    require_same_grid(seeds, y, what);
    if (y.height() != height || y.width() != width) {
        throw DataError(std::string(what) + ": field shape does not match the graph");
    }
    if (seeds.depth() != y.depth()) {
        throw DataError(std::string(what) + ": seed map has " + std::to_string(seeds.depth()) +
                        " classes but the field has " + std::to_string(y.depth()));
    }
}

} // namespace detail

/// Smoothness part of the random-walker energy, evaluated with neighbor
/// images: for each class and each neighbor slot, W (.) (Y - Y_shifted)^2.
inline double rw_smoothness(const ProbabilityField& y, const NeighborWeights& weights,
                            EdgeCounting counting = EdgeCounting::once) {
    const std::size_t h = y.height();
    const std::size_t w = y.width();
    static constexpr std::array<std::size_t, 2> forward = {down, right};
    static constexpr std::array<std::size_t, 4> all = {up, down, left, right};
    const std::span<const std::size_t> slots =
        counting == EdgeCounting::once ? std::span<const std::size_t>(forward) : std::span<const std::size_t>(all);

    double total = 0.0;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t p = r * w + c;
            for (auto slot : slots) {
                const auto q = neighbor_of(r, c, slot, h, w);
                if (!q) continue;
                const double wt = weights(p, slot);
                for (std::size_t l = 0; l < y.depth(); ++l) {
                    const double d = y.at_pixel(p, l) - y.at_pixel(*q, l);
                    total += wt * d * d;
                }
            }
        }
    }
    return total;
}

/// lambda * sum_i (sum_l x_i^l) (sum_l (y_i^l - x_i^l)^2)
inline double rw_fidelity(const SeedMap& seeds, const ProbabilityField& y, double lambda) {
    double total = 0.0;
    for (std::size_t p = 0; p < y.pixels(); ++p) {
        double seeded = 0.0;
        double misfit = 0.0;
        for (std::size_t l = 0; l < y.depth(); ++l) {
            const double x = seeds.at_pixel(p, l);
            const double d = y.at_pixel(p, l) - x;
            seeded += x;
            misfit += d * d;
        }
        total += seeded * misfit;
    }
    return lambda * total;
}

/**
 * Random-walker energy
 *   sum_l sum_edges w_ij (y_i^l - y_j^l)^2 + lambda sum_i (sum_l x_i^l)(sum_l (y_i^l - x_i^l)^2).
 *
 * With EdgeCounting::once this equals sum_l y^T L y + lambda sum_l (y - x)^T Q (y - x).
 */
inline double rw_energy(const SeedMap& seeds, const ProbabilityField& y, const NeighborWeights& weights,
                        double lambda = kDefaultSegLambda, EdgeCounting counting = EdgeCounting::once) {
    detail::check_seg_shapes(seeds, y, weights.height(), weights.width(), "rw_energy");
    if (!(lambda >= 0.0)) throw DataError("lambda must be >= 0");
    return rw_smoothness(y, weights, counting) + rw_fidelity(seeds, y, lambda);
}

/// dE/dy^l = 2 L y^l + 2 lambda Q (y^l - x^l), laid out like y.
inline ProbabilityField rw_energy_gradient(const SeedMap& seeds, const ProbabilityField& y, const CsrMatrix& laplacian,
                                           double lambda = kDefaultSegLambda) {
    if (laplacian.order() != y.pixels()) throw DataError("rw_energy_gradient: Laplacian order does not match field");
    detail::check_seg_shapes(seeds, y, y.height(), y.width(), "rw_energy_gradient");
    const std::size_t n = y.pixels();
    const std::size_t classes = y.depth();
    ProbabilityField grad(y.height(), y.width(), classes);
    std::vector<double> plane(n);
    std::vector<double> lp(n);
    for (std::size_t l = 0; l < classes; ++l) {
        for (std::size_t p = 0; p < n; ++p) plane[p] = y.at_pixel(p, l);
        laplacian.multiply(plane, lp);
        for (std::size_t p = 0; p < n; ++p) {
            double q = 0.0;
            for (std::size_t k = 0; k < classes; ++k) q += seeds.at_pixel(p, k);
            grad.at_pixel(p, l) = 2.0 * lp[p] + 2.0 * lambda * q * (y.at_pixel(p, l) - seeds.at_pixel(p, l));
        }
    }
    return grad;
}

} // namespace deep_energy
