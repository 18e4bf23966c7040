#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace deep_energy;
using namespace test_util;

namespace {

CsrMatrix from_dense(const Eigen::MatrixXd& m) {
    std::vector<std::size_t> offsets{0};
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (m(r, c) != 0.0) {
                cols.push_back(static_cast<std::uint32_t>(c));
                vals.push_back(m(r, c));
            }
        }
        offsets.push_back(cols.size());
    }
    return CsrMatrix(static_cast<std::size_t>(m.rows()), offsets, cols, vals);
}

const SolverOptions kCholesky{};
const SolverOptions kCg{SolverBackend::cg, 1e-10, 0, 2};

} // namespace

TEST(SolveSpd, IdentityOneIteration) {
    const auto a = from_dense(Eigen::MatrixXd::Identity(5, 5));
    const std::vector<double> b = {1, -2, 3, 0.5, 7};
    const auto res = solve_spd(a, b);
    EXPECT_EQ(res.report.iterations, 1u);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(res.x[i], b[i], 1e-14);
}

TEST(SolveSpd, TwoByTwo) {
    Eigen::MatrixXd m(2, 2);
    m << 2, -1, -1, 2;
    const auto res = solve_spd(from_dense(m), std::vector<double>{1, 1});
    EXPECT_NEAR(res.x[0], 1.0, 1e-8);
    EXPECT_NEAR(res.x[1], 1.0, 1e-8);
}

TEST(SolveSpd, ZeroRhs) {
    const auto res = solve_spd(from_dense(Eigen::MatrixXd::Identity(3, 3) * 2), std::vector<double>(3, 0.0));
    for (double v : res.x) EXPECT_EQ(v, 0.0);
}

TEST(SolveSpd, RandomSystemsAgainstDenseLu) {
    Rng rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd g(50, 50);
        for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.uniform(-1, 1) * (rng.uniform() < 0.1);
        const Eigen::MatrixXd a = g * g.transpose() + Eigen::MatrixXd::Identity(50, 50);
        Eigen::VectorXd b(50);
        for (auto& v : b) v = rng.uniform(-1, 1);
        const Eigen::VectorXd oracle = a.fullPivLu().solve(b);
        const auto res = solve_spd(from_dense(a), std::span<const double>(b.data(), 50), 1e-12);
        EXPECT_LE(res.report.relative_residual, 1e-12);
        for (int i = 0; i < 50; ++i) EXPECT_NEAR(res.x[static_cast<std::size_t>(i)], oracle[i], 1e-9);
    }
}

TEST(SolveSpd, NonConvergenceIsSolverError) {
    Rng rng(2);
    Eigen::MatrixXd g(40, 40);
    for (auto i = 0; i < g.size(); ++i) g.data()[i] = rng.uniform(-1, 1);
    const Eigen::MatrixXd a = g * g.transpose() + 1e-6 * Eigen::MatrixXd::Identity(40, 40);
    EXPECT_THROW(solve_spd(from_dense(a), std::vector<double>(40, 1.0), 1e-14, 2), SolverError);
}

TEST(AnalyticRw, TwoPixelHandSolve) {
    SeedMap seeds(1, 2, 2);
    seeds(0, 0, kForeground) = 1;
    for (const auto& opts : {kCholesky, kCg}) {
        const auto sol = analytic_rw(seeds, random_walker_laplacian(Image(1, 2, 1, 0.5)), 10.0, opts);
        EXPECT_NEAR(sol.probabilities(0, 0, kForeground), 1.0, 1e-8);
        EXPECT_NEAR(sol.probabilities(0, 1, kForeground), 1.0, 1e-8);
        EXPECT_NEAR(sol.probabilities(0, 0, kBackground), 0.0, 1e-8);
        EXPECT_NEAR(sol.probabilities(0, 1, kBackground), 0.0, 1e-8);
    }
}

TEST(AnalyticRw, MatchesDenseOracleAndBackendsAgree) {
    Rng rng(3);
    for (int trial = 0; trial < 15; ++trial) {
        const std::size_t h = 2 + rng.uniform_index(8), w = 2 + rng.uniform_index(8), classes = 2 + rng.uniform_index(2);
        const auto img = smooth_image(rng, h, w, 3);
        const auto seeds = random_seeds(rng, h, w, classes);
        const double lambda = rng.uniform(1, 20);
        constexpr double beta = kDefaultBeta;
        const auto lap = random_walker_laplacian(img, beta);
        const auto chol = analytic_rw(seeds, lap, lambda, kCholesky);
        const auto cg = analytic_rw(seeds, lap, lambda, kCg);
        const Eigen::MatrixXd dl = dense_rw_laplacian(to_grayscale(img), beta);
        Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h * w));
        for (std::size_t l = 0; l < classes; ++l) q += plane(seeds, l);
        const Eigen::MatrixXd a = dl + lambda * Eigen::MatrixXd(q.asDiagonal());
        const auto lu = a.fullPivLu();
        for (std::size_t l = 0; l < classes; ++l) {
            const Eigen::VectorXd oracle = lu.solve(lambda * q.cwiseProduct(plane(seeds, l)));
            EXPECT_LE((plane(chol.probabilities, l) - oracle).cwiseAbs().maxCoeff(), 1e-7);
            EXPECT_LE((plane(cg.probabilities, l) - oracle).cwiseAbs().maxCoeff(), 1e-6);
            EXPECT_LE(chol.reports[l].relative_residual, 1e-6);
        }
    }
}

TEST(AnalyticRw, FirstOrderOptimality) {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const auto img = smooth_image(rng, 12, 9, 1);
        const auto seeds = random_seeds(rng, 12, 9, 2, 0.1);
        const auto lap = random_walker_laplacian(img);
        const auto sol = analytic_rw(seeds, lap, 10.0);
        const auto g = rw_energy_gradient(seeds, sol.probabilities, lap, 10.0);
        double gn = 0, yn = 0;
        for (double v : g.data()) gn += v * v;
        for (double v : sol.probabilities.data()) yn += v * v;
        EXPECT_LE(std::sqrt(gn), 1e-6 * (1 + std::sqrt(yn)));
    }
}

TEST(AnalyticRw, FullSeedingLargeLambda) {
    Rng rng(5);
    const auto img = smooth_image(rng, 8, 8, 3);
    SeedMap seeds(8, 8, 3);
    for (std::size_t p = 0; p < 64; ++p) seeds.at_pixel(p, rng.uniform_index(3)) = 1;
    const auto sol = analytic_rw(seeds, random_walker_laplacian(img), 1e6);
    for (std::size_t i = 0; i < seeds.size(); ++i) EXPECT_NEAR(sol.probabilities.data()[i], seeds.data()[i], 1e-3);
}

TEST(AnalyticRw, UnseededComponentReported) {
    // Two disconnected pairs: {0,1} and {2,3}.
    NeighborWeights w(1, 4);
    w(0, right) = w(1, left) = 1.0;
    w(2, right) = w(3, left) = 1.0;
    const auto lap = assemble_laplacian(w);
    SeedMap seeds(1, 4, 2);
    seeds(0, 0, 0) = 1;
    seeds(0, 1, 1) = 1;
    EXPECT_THROW(analytic_rw(seeds, lap, 10.0), SolverError);
    seeds(0, 3, 0) = 1;
    EXPECT_NO_THROW(analytic_rw(seeds, lap, 10.0));
}

TEST(AnalyticRw, DeterministicAcrossThreadCounts) {
    Rng rng(6);
    const auto img = smooth_image(rng, 20, 20, 3);
    const auto seeds = random_seeds(rng, 20, 20, 4, 0.05);
    const auto lap = random_walker_laplacian(img);
    const auto one = analytic_rw(seeds, lap, 10.0, {SolverBackend::cg, 1e-8, 0, 1});
    const auto four = analytic_rw(seeds, lap, 10.0, {SolverBackend::cg, 1e-8, 0, 4});
    EXPECT_EQ(one.probabilities, four.probabilities);
    EXPECT_EQ(analytic_rw(seeds, lap, 10.0).probabilities, analytic_rw(seeds, lap, 10.0).probabilities);
}

TEST(AnalyticMatting, AllForegroundGivesOne) {
    Rng rng(7);
    const auto img = smooth_image(rng, 6, 6, 3);
    const MattingSeeds seeds{Mask(6, 6, 1, 1), Mask(6, 6, 1)};
    const auto lap = assemble_matting_laplacian(img);
    for (const auto& opts : {kCholesky, kCg}) {
        const auto sol = analytic_matting(seeds, lap, 1.0, opts);
        EXPECT_LE(sol.report.relative_residual, 1e-6);
        for (double v : sol.alpha.data()) EXPECT_NEAR(v, 1.0, 1e-8);
    }
    EXPECT_THROW(analytic_matting(MattingSeeds{Mask(6, 6, 1), Mask(6, 6, 1)}, lap, 1.0), DataError);
}

TEST(AnalyticMatting, ConstantImageLargeLambda) {
    const Image img(7, 7, 3, 0.5);
    MattingSeeds seeds{Mask(7, 7, 1), Mask(7, 7, 1)};
    seeds.fg(1, 1) = 1;
    seeds.bg(5, 5) = 1;
    for (const auto& opts : {kCholesky, kCg}) {
        const auto sol = analytic_matting(seeds, assemble_matting_laplacian(img), 1e6, opts);
        EXPECT_NEAR(sol.alpha(1, 1), 1.0, 1e-3);
        EXPECT_NEAR(sol.alpha(5, 5), 0.0, 1e-3);
        for (double v : sol.alpha.data()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(AnalyticMatting, MatchesDenseOracleBeforeClamping) {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t h = 3 + rng.uniform_index(5), w = 3 + rng.uniform_index(5);
        const auto img = smooth_image(rng, h, w, 3);
        const auto seeds = random_matting_seeds(rng, h, w, 0.3);
        const double eps = 1e-4;
        const auto sol = analytic_matting(seeds, assemble_matting_laplacian(img, eps), 1.0);
        const Eigen::VectorXd f = vec(seeds.fg), q = f + vec(seeds.bg);
        const Eigen::MatrixXd a = dense_matting_laplacian(img, eps) + Eigen::MatrixXd(q.asDiagonal());
        const Eigen::VectorXd oracle = a.fullPivLu().solve(q.cwiseProduct(f));
        EXPECT_LE((vec(sol.minimizer) - oracle).cwiseAbs().maxCoeff(), 1e-5);
        EXPECT_LE((vec(sol.alpha) - oracle.cwiseMax(0.0).cwiseMin(1.0)).cwiseAbs().maxCoeff(), 1e-5);
    }
}
