#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "deep_energy/error.hpp"
#include "deep_energy/field.hpp"
#include "deep_energy/sparse.hpp"
#include "deep_energy/tensor_io.hpp"

namespace deep_energy {

inline constexpr double kDefaultEpsilon = 1e-7;
inline constexpr double kDefaultMattingLambda = 1.0;

inline constexpr std::size_t kWindowSize = 9;
inline constexpr std::size_t kWindowPairs = kWindowSize * kWindowSize;

/// Offset of window position a (0..8, row-major over the 3x3 patch) from the window center.
inline constexpr int window_dr(std::size_t a) { return static_cast<int>(a / 3) - 1; }
inline constexpr int window_dc(std::size_t a) { return static_cast<int>(a % 3) - 1; }

/// Pair index k enumerates (i, j) as i = k / 9, j = k % 9: the first member
/// runs (1,...,1,2,...,2,...) and the second (1,2,...,9,1,2,...).
inline constexpr std::size_t pair_first(std::size_t k) { return k / kWindowSize; }
inline constexpr std::size_t pair_second(std::size_t k) { return k % kWindowSize; }

/// True when pixel (r, c) is the center of a full 3x3 window.
inline bool hosts_window(std::size_t r, std::size_t c, std::size_t height, std::size_t width) {
    return r >= 1 && c >= 1 && r + 1 < height && c + 1 < width;
}

/// Mean color and population covariance of every full 3x3 window, indexed by
/// the window's center pixel. Border pixels carry zeros and host no window.
struct PatchStats {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<Eigen::Vector3d> mean;
    std::vector<Eigen::Matrix3d> covariance;
};

/// 81 pair weights per window center, row-major pairs; zero rows at the border.
struct MattingWeights {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    std::size_t pixels() const noexcept { return height * width; }
    double operator()(std::size_t center, std::size_t k) const noexcept { return values[center * kWindowPairs + k]; }
    double operator()(std::size_t center, std::size_t i, std::size_t j) const noexcept {
        return values[center * kWindowPairs + i * kWindowSize + j];
    }
};

/// Foreground and background seed planes (values in {0,1}).
struct MattingSeeds {
    Mask fg;
    Mask bg;
};

namespace detail {

inline void check_matting_image(const Image& img) {
    if (img.depth() != 3) {
        throw DataError("matting needs a 3-channel image, got " + std::to_string(img.depth()) + " channels");
    }
    if (img.height() < 3 || img.width() < 3) {
        throw DataError("matting needs an image of at least 3x3 pixels, got " + std::to_string(img.height()) + "x" +
                        std::to_string(img.width()));
    }
}

inline Eigen::Vector3d color(const Image& img, std::size_t r, std::size_t c) {
    return {img(r, c, 0), img(r, c, 1), img(r, c, 2)};
}

// Window residuals I_j - mu for the window centered at (r, c); the mean is
// corrected once so the residuals sum to zero to rounding.
inline Eigen::Matrix<double, 3, 9> window_residuals(const Image& img, std::size_t r, std::size_t c,
                                                    Eigen::Vector3d& mean) {
    Eigen::Matrix<double, 3, 9> res;
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (std::size_t a = 0; a < kWindowSize; ++a) {
        res.col(a) = color(img, r + window_dr(a), c + window_dc(a));
        sum += res.col(a);
    }
    mean = sum / 9.0;
    res.colwise() -= mean;
    const Eigen::Vector3d drift = res.rowwise().sum() / 9.0;
    mean += drift;
    res.colwise() -= drift;
    return res;
}

} // namespace detail

inline PatchStats patch_stats(const Image& img) {
    detail::check_matting_image(img);
    PatchStats stats;
    stats.height = img.height();
    stats.width = img.width();
    stats.mean.assign(img.pixels(), Eigen::Vector3d::Zero());
    stats.covariance.assign(img.pixels(), Eigen::Matrix3d::Zero());
    for (std::size_t r = 1; r + 1 < img.height(); ++r) {
        for (std::size_t c = 1; c + 1 < img.width(); ++c) {
            const std::size_t n = r * img.width() + c;
            const auto res = detail::window_residuals(img, r, c, stats.mean[n]);
            Eigen::Matrix3d cov = res * res.transpose() / 9.0;
            stats.covariance[n] = (cov + cov.transpose()) / 2.0;
        }
    }
    return stats;
}

/**
 * Pairwise matting weights for every full 3x3 window:
 *   w_ij = (1 + (I_i - mu)^T (Sigma + eps/9 Id)^-1 (I_j - mu)) / 9.
 * Only i <= j is evaluated; the lower triangle is mirrored so each window's
 * table is exactly symmetric.
 */
inline MattingWeights matting_weights(const Image& img, double epsilon = kDefaultEpsilon) {
    detail::check_matting_image(img);
    if (!(epsilon > 0.0)) throw DataError("epsilon must be > 0");
    MattingWeights w;
    w.height = img.height();
    w.width = img.width();
    w.values.assign(img.pixels() * kWindowPairs, 0.0);
    for (std::size_t r = 1; r + 1 < img.height(); ++r) {
        for (std::size_t c = 1; c + 1 < img.width(); ++c) {
            const std::size_t n = r * img.width() + c;
            Eigen::Vector3d mean;
            const auto res = detail::window_residuals(img, r, c, mean);
            Eigen::Matrix3d cov = res * res.transpose() / 9.0;
            cov = (cov + cov.transpose()) / 2.0;
            cov.diagonal().array() += epsilon / 9.0;
            const Eigen::Matrix<double, 3, 9> solved = cov.llt().solve(res);
            double* table = w.values.data() + n * kWindowPairs;
            for (std::size_t i = 0; i < kWindowSize; ++i) {
                for (std::size_t j = i; j < kWindowSize; ++j) {
                    const double v = (1.0 + res.col(i).dot(solved.col(j))) / 9.0;
                    table[i * kWindowSize + j] = v;
                    table[j * kWindowSize + i] = v;
                }
            }
        }
    }
    return w;
}

/// L_ij = sum over windows n containing i and j of (delta_ij - w_ij^n).
inline CsrMatrix assemble_matting_laplacian(const MattingWeights& w) {
    const std::size_t h = w.height;
    const std::size_t wd = w.width;
    const std::size_t n_pix = h * wd;
    constexpr std::size_t kStencil = 25; // offsets within +-2 rows and columns
    std::vector<double> acc(n_pix * kStencil, 0.0);
    std::vector<std::uint8_t> touched(n_pix * kStencil, 0);

    for (std::size_t r = 1; r + 1 < h; ++r) {
        for (std::size_t c = 1; c + 1 < wd; ++c) {
            const std::size_t n = r * wd + c;
            for (std::size_t a = 0; a < kWindowSize; ++a) {
                const std::size_t i = (r + window_dr(a)) * wd + (c + window_dc(a));
                for (std::size_t b = 0; b < kWindowSize; ++b) {
                    const auto slot = static_cast<std::size_t>((window_dr(b) - window_dr(a) + 2) * 5 +
                                                               (window_dc(b) - window_dc(a) + 2));
                    acc[i * kStencil + slot] += (a == b ? 1.0 : 0.0) - w(n, a, b);
                    touched[i * kStencil + slot] = 1;
                }
            }
        }
    }

    std::vector<std::size_t> offsets(n_pix + 1, 0);
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;
    cols.reserve(n_pix * kStencil);
    vals.reserve(n_pix * kStencil);
    std::vector<std::pair<std::uint32_t, double>> row;
    for (std::size_t i = 0; i < n_pix; ++i) {
        row.clear();
        const auto ri = static_cast<long>(i / wd);
        const auto ci = static_cast<long>(i % wd);
        for (std::size_t slot = 0; slot < kStencil; ++slot) {
            if (!touched[i * kStencil + slot]) continue;
            const long rj = ri + static_cast<long>(slot / 5) - 2;
            const long cj = ci + static_cast<long>(slot % 5) - 2;
            row.emplace_back(static_cast<std::uint32_t>(rj * static_cast<long>(wd) + cj), acc[i * kStencil + slot]);
        }
        std::sort(row.begin(), row.end());
        for (const auto& [col, val] : row) {
            cols.push_back(col);
            vals.push_back(val);
        }
        offsets[i + 1] = cols.size();
    }
    return CsrMatrix(n_pix, std::move(offsets), std::move(cols), std::move(vals));
}

inline CsrMatrix assemble_matting_laplacian(const Image& img, double epsilon = kDefaultEpsilon) {
    return assemble_matting_laplacian(matting_weights(img, epsilon));
}

namespace detail {

inline void check_matting_seeds(const MattingSeeds& seeds, std::size_t height, std::size_t width) {
    if (seeds.fg.height() != height || seeds.fg.width() != width || seeds.bg.height() != height ||
        seeds.bg.width() != width) {
        throw DataError("matting seed planes do not match the image shape");
    }
    for (std::size_t p = 0; p < seeds.fg.pixels(); ++p) {
        const auto f = seeds.fg.at_pixel(p);
        const auto b = seeds.bg.at_pixel(p);
        if (f > 1 || b > 1) throw DataError("matting seed values must be 0 or 1");
        if (f && b) throw DataError("pixel " + std::to_string(p) + " is seeded both foreground and background");
    }
}

} // namespace detail

/// 1/2 sum_n sum_k w_k^n (alpha_i(k) - alpha_j(k))^2, which equals alpha^T L alpha.
inline double matting_smoothness(const AlphaMatte& alpha, const MattingWeights& w) {
    const std::size_t h = w.height;
    const std::size_t wd = w.width;
    double total = 0.0;
    std::array<double, kWindowSize> patch{};
    for (std::size_t r = 1; r + 1 < h; ++r) {
        for (std::size_t c = 1; c + 1 < wd; ++c) {
            const std::size_t n = r * wd + c;
            for (std::size_t a = 0; a < kWindowSize; ++a) patch[a] = alpha(r + window_dr(a), c + window_dc(a));
            for (std::size_t k = 0; k < kWindowPairs; ++k) {
                const double d = patch[pair_first(k)] - patch[pair_second(k)];
                total += w(n, k) * d * d;
            }
        }
    }
    return 0.5 * total;
}

/// lambda sum_i (x^F_i + x^B_i)(alpha_i - x^F_i)^2
inline double matting_fidelity(const MattingSeeds& seeds, const AlphaMatte& alpha, double lambda) {
    double total = 0.0;
    for (std::size_t p = 0; p < alpha.pixels(); ++p) {
        const double f = seeds.fg.at_pixel(p);
        const double q = f + seeds.bg.at_pixel(p);
        const double d = alpha.at_pixel(p) - f;
        total += q * d * d;
    }
    return lambda * total;
}

inline double matting_energy(const MattingSeeds& seeds, const AlphaMatte& alpha, const MattingWeights& w,
                             double lambda = kDefaultMattingLambda) {
    if (alpha.depth() != 1) throw DataError("alpha matte must have a single plane");
    if (alpha.height() != w.height || alpha.width() != w.width) {
        throw DataError("matting_energy: alpha shape does not match the weights");
    }
    detail::check_matting_seeds(seeds, alpha.height(), alpha.width());
    if (!(lambda >= 0.0)) throw DataError("lambda must be >= 0");
    return matting_smoothness(alpha, w) + matting_fidelity(seeds, alpha, lambda);
}

/// Weights as an [N, 81] f32 tensor; rows of border pixels are zero.
inline Tensor to_tensor(const MattingWeights& w) {
    std::vector<float> v(w.values.begin(), w.values.end());
    return {{w.pixels(), kWindowPairs}, std::move(v)};
}

} // namespace deep_energy
