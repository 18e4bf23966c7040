#pragma once

#include <algorithm>
#include <Eigen/CholmodSupport>
#include <Eigen/SparseCore>

#include <chrono>
#include <cmath>
#include <cstddef>
#include <exception>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "deep_energy/error.hpp"
#include "deep_energy/field.hpp"
#include "deep_energy/matting_energy.hpp"
#include "deep_energy/seg_energy.hpp"
#include "deep_energy/sparse.hpp"

namespace deep_energy {

inline constexpr double kDefaultTolerance = 1e-8;

struct SolveReport {
    std::size_t iterations = 0;
    double relative_residual = 0.0;
    double seconds = 0.0;
    /// Entries moved by post-solve clamping (matting only).
    std::size_t clamped = 0;
};

/// Linear-system backend of the analytic minimizers.
enum class SolverBackend {
    /// Supernodal sparse Cholesky with iterative refinement.
    cholesky,
    /// Jacobi-preconditioned conjugate gradient (solve_spd).
    cg,
};

struct SolverOptions {
    SolverBackend backend = SolverBackend::cholesky;
    double tol = kDefaultTolerance;
    /// 0 selects 10 x order.
    std::size_t max_iter = 0;
    /// Upper bound on concurrent right-hand sides; results do not depend on it.
    unsigned threads = 1;
};

struct SolveResult {
    std::vector<double> x;
    SolveReport report;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace detail

/**
 * Jacobi-preconditioned conjugate gradient for A x = b with A symmetric
 * positive definite. Converged when ||b - A x|| / ||b|| <= tol, checked on
 * the true residual (the recurrence residual is replaced when they drift).
 * A zero diagonal entry falls back to an identity preconditioner entry.
 *
 * Throws SolverError when max_iter is reached or the iteration breaks down.
 */
inline SolveResult solve_spd(const CsrMatrix& a, std::span<const double> b, double tol = kDefaultTolerance,
                             std::size_t max_iter = 0) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t n = a.order();
    if (b.size() != n) throw DataError("solve_spd: right-hand side length does not match matrix order");
    if (!(tol > 0.0)) throw DataError("solve_spd: tolerance must be > 0");
    if (max_iter == 0) max_iter = 10 * std::max<std::size_t>(n, 1);

    SolveResult result;
    result.x.assign(n, 0.0);
    const double b_norm = detail::norm(b);
    if (b_norm == 0.0) {
        result.report.seconds = detail::seconds_since(start);
        return result;
    }

    std::vector<double> inv_diag = a.diagonal();
    for (auto& d : inv_diag) d = d != 0.0 ? 1.0 / d : 1.0;

    std::vector<double> r(b.begin(), b.end());
    std::vector<double> z(n), p(n), ap(n);
    auto precondition = [&] {
        for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    };
    precondition();
    p = z;
    double rz = detail::dot(r, z);

    auto& x = result.x;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        a.multiply(p, ap);
        const double curvature = detail::dot(p, ap);
        if (!(curvature > 0.0)) {
            throw SolverError("conjugate gradient broke down at iteration " + std::to_string(it) +
                              " (matrix not positive definite on the search space)");
        }
        const double step = rz / curvature;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        double rel = detail::norm(r) / b_norm;
        if (rel <= tol) {
            a.multiply(x, ap);
            for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
            rel = detail::norm(r) / b_norm;
            if (rel <= tol) {
                result.report.iterations = it;
                result.report.relative_residual = rel;
                result.report.seconds = detail::seconds_since(start);
                return result;
            }
            // Recurrence drifted from the true residual: restart from it.
            precondition();
            p = z;
            rz = detail::dot(r, z);
            continue;
        }
        precondition();
        const double rz_next = detail::dot(r, z);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    throw SolverError("conjugate gradient did not reach relative residual " + std::to_string(tol) + " within " +
                      std::to_string(max_iter) + " iterations (residual " +
                      std::to_string(detail::norm(r) / b_norm) + ")");
}

namespace detail {

/// Cholesky factorization of a symmetric CsrMatrix, reusable across right-hand sides.
class CholeskyFactor {
public:
    explicit CholeskyFactor(const CsrMatrix& a) : a_(a) {
        using Sparse = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
        // Column c of the symmetric matrix is row c of the CSR storage; keep the lower triangle.
        const auto offsets = a.row_offsets();
        const auto cols = a.columns();
        const auto vals = a.values();
        Sparse lower(static_cast<int>(a.order()), static_cast<int>(a.order()));
        Eigen::VectorXi counts = Eigen::VectorXi::Zero(static_cast<int>(a.order()));
        for (std::size_t c = 0; c < a.order(); ++c) {
            for (std::size_t k = offsets[c]; k < offsets[c + 1]; ++k) counts[static_cast<int>(c)] += cols[k] >= c;
        }
        lower.reserve(counts);
        for (std::size_t c = 0; c < a.order(); ++c) {
            for (std::size_t k = offsets[c]; k < offsets[c + 1]; ++k) {
                if (cols[k] >= c) lower.insert(static_cast<int>(cols[k]), static_cast<int>(c)) = vals[k];
            }
        }
        lower.makeCompressed();
        llt_.compute(lower);
        if (llt_.info() != Eigen::Success) {
            throw SolverError("sparse Cholesky factorization failed (system matrix is not positive definite)");
        }
    }

    CholeskyFactor(const CholeskyFactor&) = delete;
    CholeskyFactor& operator=(const CholeskyFactor&) = delete;

    /// Solves A x = b, refining until ||b - A x|| / ||b|| <= tol.
    SolveResult solve(std::span<const double> b, double tol) {
        const auto start = std::chrono::steady_clock::now();
        const std::size_t n = a_.order();
        SolveResult result;
        result.x.assign(n, 0.0);
        const double b_norm = norm(b);
        if (b_norm == 0.0) {
            result.report.seconds = seconds_since(start);
            return result;
        }
        constexpr int kMaxRefinements = 3;
        std::vector<double> r(b.begin(), b.end());
        std::vector<double> ax(n);
        double rel = 1.0;
        for (int pass = 0; pass <= kMaxRefinements; ++pass) {
            const Eigen::Map<const Eigen::VectorXd> rhs(r.data(), static_cast<Eigen::Index>(n));
            const Eigen::VectorXd dx = llt_.solve(rhs);
            for (std::size_t i = 0; i < n; ++i) result.x[i] += dx[static_cast<Eigen::Index>(i)];
            a_.multiply(result.x, ax);
            for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ax[i];
            rel = norm(r) / b_norm;
            result.report.iterations = static_cast<std::size_t>(pass) + 1;
            if (rel <= tol) {
                result.report.relative_residual = rel;
                result.report.seconds = seconds_since(start);
                return result;
            }
        }
        throw SolverError("sparse Cholesky solve left relative residual " + std::to_string(rel) + " above " +
                          std::to_string(tol) + " after refinement");
    }

private:
    const CsrMatrix& a_;
    Eigen::CholmodSupernodalLLT<Eigen::SparseMatrix<double, Eigen::ColMajor, int>, Eigen::Lower> llt_;
};

} // namespace detail

namespace detail {

/// Smallest pixel of each connected component (through nonzero off-diagonal
/// couplings) that contains no seeded pixel.
inline std::vector<std::size_t> unseeded_components(const CsrMatrix& a, std::span<const double> seeded) {
    const std::size_t n = a.order();
    std::vector<std::size_t> unseeded;
    std::vector<std::uint8_t> visited(n, 0);
    std::vector<std::size_t> stack;
    const auto offsets = a.row_offsets();
    const auto cols = a.columns();
    const auto vals = a.values();
    for (std::size_t s = 0; s < n; ++s) {
        if (visited[s]) continue;
        bool has_seed = false;
        visited[s] = 1;
        stack.assign(1, s);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            has_seed = has_seed || seeded[i] != 0.0;
            for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
                const std::size_t j = cols[k];
                if (j != i && vals[k] != 0.0 && !visited[j]) {
                    visited[j] = 1;
                    stack.push_back(j);
                }
            }
        }
        if (!has_seed) unseeded.push_back(s);
    }
    return unseeded;
}

/// Runs fn(0..count-1) on up to `threads` workers; each index writes only its own output.
template <typename Fn>
void run_indexed(std::size_t count, unsigned threads, Fn&& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> workers;
    const std::size_t n_workers = std::min<std::size_t>(threads, count);
    for (std::size_t w = 0; w < n_workers; ++w) {
        workers.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += n_workers) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

} // namespace detail

struct RandomWalkerSolution {
    ProbabilityField probabilities;
    std::vector<SolveReport> reports; // one per class
};

/**
 * Closed-form random-walker minimizer: solves (L + lambda Q) y^l = lambda Q x^l
 * for every class, with Q = diag(sum_l x^l).
 */
inline RandomWalkerSolution analytic_rw(const SeedMap& seeds, const CsrMatrix& laplacian,
                                        double lambda = kDefaultSegLambda, const SolverOptions& opts = {}) {
    const std::size_t n = seeds.pixels();
    if (laplacian.order() != n) throw DataError("analytic_rw: Laplacian order does not match the seed map");
    if (!(lambda > 0.0)) throw DataError("analytic_rw: lambda must be > 0");
    validate(seeds);

    std::vector<double> q(n, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t l = 0; l < seeds.depth(); ++l) q[p] += seeds.at_pixel(p, l);
    }
    if (const auto bad = detail::unseeded_components(laplacian, q); !bad.empty()) {
        throw SolverError("analytic_rw: " + std::to_string(bad.size()) +
                          " connected component(s) of the pixel graph carry no seed (first one contains pixel " +
                          std::to_string(bad.front()) + "); every component needs at least one seed");
    }
    std::vector<double> shift(n);
    for (std::size_t p = 0; p < n; ++p) shift[p] = lambda * q[p];
    const CsrMatrix system = laplacian.plus_diagonal(shift);

    const std::size_t classes = seeds.depth();
    RandomWalkerSolution out{ProbabilityField(seeds.height(), seeds.width(), classes),
                             std::vector<SolveReport>(classes)};
    auto rhs_for = [&](std::size_t l) {
        std::vector<double> rhs(n);
        for (std::size_t p = 0; p < n; ++p) rhs[p] = lambda * q[p] * seeds.at_pixel(p, l);
        return rhs;
    };
    auto store = [&](std::size_t l, SolveResult& res) {
        for (std::size_t p = 0; p < n; ++p) out.probabilities.at_pixel(p, l) = res.x[p];
        out.reports[l] = res.report;
    };
    try {
        if (opts.backend == SolverBackend::cholesky) {
            const auto start = std::chrono::steady_clock::now();
            detail::CholeskyFactor factor(system);
            const double factor_seconds = detail::seconds_since(start);
            for (std::size_t l = 0; l < classes; ++l) {
                auto res = factor.solve(rhs_for(l), opts.tol);
                // The shared factorization is charged to the first class.
                if (l == 0) res.report.seconds += factor_seconds;
                store(l, res);
            }
        } else {
            detail::run_indexed(classes, opts.threads, [&](std::size_t l) {
                auto res = solve_spd(system, rhs_for(l), opts.tol, opts.max_iter);
                store(l, res);
            });
        }
    } catch (const SolverError& e) {
        throw SolverError(std::string("analytic_rw: ") + e.what() +
                          "; check that every connected region of the image is seeded");
    }
    return out;
}

struct MattingSolution {
    /// Clamped to [0,1].
    AlphaMatte alpha;
    /// Linear-solve result before clamping; the exact minimizer of the energy.
    AlphaMatte minimizer;
    SolveReport report;
};

/**
 * Closed-form matting minimizer: solves (L + lambda Q) alpha = lambda Q x^F with
 * Q = diag(x^F + x^B), then clamps alpha to [0,1]. Clamping can raise the
 * energy, so the unclamped solution is kept as well.
 */
inline MattingSolution analytic_matting(const MattingSeeds& seeds, const CsrMatrix& laplacian,
                                        double lambda = kDefaultMattingLambda, const SolverOptions& opts = {}) {
    const std::size_t h = seeds.fg.height();
    const std::size_t w = seeds.fg.width();
    const std::size_t n = h * w;
    if (laplacian.order() != n) throw DataError("analytic_matting: Laplacian order does not match the seeds");
    if (!(lambda > 0.0)) throw DataError("analytic_matting: lambda must be > 0");
    detail::check_matting_seeds(seeds, h, w);

    std::size_t seeded = 0;
    std::vector<double> shift(n), rhs(n);
    for (std::size_t p = 0; p < n; ++p) {
        const double f = seeds.fg.at_pixel(p);
        const double b = seeds.bg.at_pixel(p);
        seeded += seeds.fg.at_pixel(p) + seeds.bg.at_pixel(p);
        shift[p] = lambda * (f + b);
        rhs[p] = lambda * (f + b) * f;
    }
    if (seeded == 0) throw DataError("analytic_matting needs at least one seed");
    if (const auto bad = detail::unseeded_components(laplacian, shift); !bad.empty()) {
        throw SolverError("analytic_matting: " + std::to_string(bad.size()) +
                          " pixel group(s) share no 3x3 window with any seed (first one contains pixel " +
                          std::to_string(bad.front()) + ")");
    }
    const CsrMatrix system = laplacian.plus_diagonal(shift);
    SolveResult res;
    if (opts.backend == SolverBackend::cholesky) {
        const auto start = std::chrono::steady_clock::now();
        detail::CholeskyFactor factor(system);
        const double factor_seconds = detail::seconds_since(start);
        res = factor.solve(rhs, opts.tol);
        res.report.seconds += factor_seconds;
    } else {
        res = solve_spd(system, rhs, opts.tol, opts.max_iter);
    }

    MattingSolution out{AlphaMatte(h, w, 1, res.x), AlphaMatte(h, w, 1, std::move(res.x)), res.report};
    for (auto& v : out.alpha.data()) {
        const double c = std::clamp(v, 0.0, 1.0);
        if (c != v) ++out.report.clamped;
        v = c;
    }
    return out;
}

} // namespace deep_energy
