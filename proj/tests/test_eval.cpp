#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace deep_energy;
using namespace test_util;

namespace {

ProbabilityField one_hot(const Mask& labels) {
    ProbabilityField y(labels.height(), labels.width(), 2);
    for (std::size_t p = 0; p < labels.pixels(); ++p) y.at_pixel(p, labels.at_pixel(p) ? 1 : 0) = 1.0;
    return y;
}

} // namespace

TEST(Miou, Examples) {
    const Mask gt(2, 2, 1, std::vector<std::uint8_t>{1, 1, 0, 0});
    EXPECT_DOUBLE_EQ(miou(one_hot(gt), gt), 1.0);
    const Mask pred(2, 2, 1, std::vector<std::uint8_t>{1, 0, 0, 0});
    // fg: 1 / 2, bg: 2 / 3.
    EXPECT_NEAR(miou(one_hot(pred), gt), (0.5 + 2.0 / 3.0) / 2.0, 1e-15);
    EXPECT_NEAR(miou(one_hot(pred), gt), 0.5833, 1e-4);
    const Mask comp(2, 2, 1, std::vector<std::uint8_t>{0, 0, 1, 1});
    EXPECT_EQ(miou(one_hot(comp), gt), 0.0);
}

TEST(Miou, AbsentClassScoresOne) {
    const Mask gt(2, 2, 1);
    EXPECT_EQ(miou(one_hot(gt), gt), 1.0);
}

TEST(Miou, TiesGoToLowerClass) {
    const ProbabilityField y(1, 1, 2, 0.5);
    EXPECT_EQ(argmax_labels(y)(0, 0), 0);
}

TEST(Miou, SymmetricUnderRelabeling) {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        Mask a(5, 5, 1), b(5, 5, 1), fa(5, 5, 1), fb(5, 5, 1);
        for (std::size_t p = 0; p < 25; ++p) {
            a.at_pixel(p) = rng.uniform_index(2);
            b.at_pixel(p) = rng.uniform_index(2);
            fa.at_pixel(p) = 1 - a.at_pixel(p);
            fb.at_pixel(p) = 1 - b.at_pixel(p);
        }
        EXPECT_DOUBLE_EQ(miou_labels(a, b), miou_labels(fa, fb));
        EXPECT_DOUBLE_EQ(miou_labels(a, b), miou_labels(b, a));
    }
}

TEST(Mse, Examples) {
    Rng rng(2);
    AlphaMatte gt(4, 4, 1);
    for (auto& v : gt.data()) v = rng.uniform(0, 0.9);
    EXPECT_EQ(mse_alpha(gt, gt), 0.0);
    AlphaMatte shifted = gt;
    for (auto& v : shifted.data()) v += 0.1;
    EXPECT_NEAR(mse_alpha(shifted, gt), 0.01, 1e-15);
    Trimap t(4, 4, 1, kTrimapForeground);
    t(0, 0) = kTrimapUnknown;
    shifted(1, 1) = 5.0;
    EXPECT_NEAR(mse_alpha(shifted, gt, &t), 0.01, 1e-15);
    EXPECT_EQ(mse_alpha(shifted, gt, nullptr) > 0.01, true);
}

TEST(ScoreCsv, Format) {
    std::ostringstream out;
    write_score_csv_row(out, {"x", Task::matting, 0.5, std::numeric_limits<double>::quiet_NaN(), 0.25});
    EXPECT_EQ(out.str(), "x,matting,0.5,,0.250000\n");
    EXPECT_STREQ(kScoreCsvHeader, "instance_id,task,energy,metric,seconds");
}

TEST(Score, AnalyticBeatsRandomCandidates) {
    Rng rng(3);
    const EnergyParams params;
    for (int trial = 0; trial < 5; ++trial) {
        SegInstance seg{"s", smooth_image(rng, 10, 10, 3), random_seeds(rng, 10, 10, 2, 0.1), std::nullopt};
        const auto sol = analytic_rw(seg.seeds, random_walker_laplacian(seg.image, params.beta), params.lambda_seg);
        const double best = score_seg(seg, sol.probabilities, params).energy;
        const ProbabilityField uniform(10, 10, 2, 0.5);
        EXPECT_GT(score_seg(seg, uniform, params).energy, best);
        for (int c = 0; c < 100; ++c) {
            auto cand = random_field(rng, 10, 10, 2);
            EXPECT_GE(score_seg(seg, cand, params).energy, best);
        }

        MattingInstance mat;
        mat.id = "m";
        mat.image = smooth_image(rng, 10, 10, 3);
        mat.seeds = random_matting_seeds(rng, 10, 10, 0.2);
        const auto msol = analytic_matting(mat.seeds, assemble_matting_laplacian(mat.image, params.epsilon),
                                           params.lambda_matting);
        const double mbest = score_matting(mat, msol.minimizer, params).energy;
        for (int c = 0; c < 100; ++c) {
            AlphaMatte cand(10, 10, 1);
            for (auto& v : cand.data()) v = rng.uniform();
            EXPECT_GE(score_matting(mat, cand, params).energy, mbest);
        }
        AlphaMatte seeds_as_alpha(10, 10, 1);
        for (std::size_t p = 0; p < 100; ++p) seeds_as_alpha.at_pixel(p) = mat.seeds.fg.at_pixel(p);
        const auto w = matting_weights(mat.image, params.epsilon);
        EXPECT_EQ(matting_fidelity(mat.seeds, seeds_as_alpha, 1.0), 0.0);
        EXPECT_GE(matting_smoothness(seeds_as_alpha, w), 0.0);
    }
}

TEST(Score, SolutionFromFiles) {
    Rng rng(4);
    const auto dir = scratch_dir("eval_files");
    const auto img = random_image(rng, 12, 12, 3);
    save_image((dir / "img.png").string(), img);
    const auto seeds = random_seeds(rng, 12, 12, 2, 0.1);
    save_mask((dir / "seeds.png").string(), seeds_to_codes(seeds));
    Mask gt(12, 12, 1);
    for (std::size_t p = 0; p < 72; ++p) gt.at_pixel(p) = 1;
    save_mask((dir / "gt.png").string(), gt);
    const ManifestEntry e{"seeds", (dir / "img.png").string(), (dir / "seeds.png").string(),
                          (dir / "gt.png").string()};
    const ProbabilityField y(12, 12, 2, 0.5);
    const auto rec = score_solution(e, to_tensor(y), Task::seg, EnergyParams{});
    EXPECT_EQ(rec.instance_id, "seeds");
    EXPECT_GE(rec.metric, 0.0);
    EXPECT_LE(rec.metric, 1.0);
    EXPECT_THROW(score_solution(e, to_tensor(ProbabilityField(12, 11, 2)), Task::seg, EnergyParams{}), DataError);
}

TEST(Bench, SmallSizes) {
    BenchOptions opts;
    opts.sizes = {16, 32};
    opts.instances = 3;
    for (auto task : {Task::seg, Task::matting}) {
        const auto rows = bench(task, opts);
        ASSERT_EQ(rows.size(), 2u);
        for (const auto& r : rows) {
            EXPECT_GT(r.mean_seconds, 0.0);
            EXPECT_EQ(r.instances, 3u);
        }
    }
}

TEST(Bench, SyntheticInstanceDeterministic) {
    Rng a(9), b(9);
    const auto x = synthetic_instance(40, a);
    const auto y = synthetic_instance(40, b);
    EXPECT_EQ(x.image, y.image);
    EXPECT_EQ(x.seeds, y.seeds);
    EXPECT_NO_THROW(validate(x.image));
}
