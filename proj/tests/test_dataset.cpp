#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace deep_energy;
using namespace test_util;

namespace {

// Random blob: union of a few disks.
Mask random_blob(Rng& rng, std::size_t size) {
    Mask m(size, size, 1);
    const std::size_t disks = 1 + rng.uniform_index(3);
    for (std::size_t d = 0; d < disks; ++d) {
        const double cr = rng.uniform(0, size), cc = rng.uniform(0, size), rad = rng.uniform(3, size / 3.0);
        for (std::size_t r = 0; r < size; ++r) {
            for (std::size_t c = 0; c < size; ++c) {
                if ((r - cr) * (r - cr) + (c - cc) * (c - cc) <= rad * rad) m(r, c) = 1;
            }
        }
    }
    return m;
}

} // namespace

TEST(SplitObjects, SingleObject) {
    Mask a(8, 8, 1);
    a(2, 3) = a(2, 4) = a(3, 3) = 5;
    const auto objs = split_objects(a, 0.0);
    ASSERT_EQ(objs.size(), 1u);
    EXPECT_EQ(objs[0].id, 5);
    for (std::size_t p = 0; p < 64; ++p) EXPECT_EQ(objs[0].mask.at_pixel(p), a.at_pixel(p) != 0);
}

TEST(SplitObjects, SmallObjectDropped) {
    Mask a(64, 64, 1);
    for (std::size_t r = 10; r < 30; ++r) {
        for (std::size_t c = 10; c < 30; ++c) a(r, c) = 1;
    }
    a(50, 50) = 2;
    const auto objs = split_objects(a, 0.01);
    ASSERT_EQ(objs.size(), 1u);
    EXPECT_EQ(objs[0].id, 1);
}

TEST(SplitObjects, BackgroundAndVoid) {
    Mask a(4, 4, 1);
    EXPECT_TRUE(split_objects(a, 0.0).empty());
    a(0, 0) = kVoidLabel;
    EXPECT_TRUE(split_objects(a, 0.0).empty());
}

TEST(Markers, SizeRuleAndFootprint) {
    EXPECT_EQ(MarkerSpec::for_image(MarkerKind::circle, 20, 20).radius, 2);
    EXPECT_EQ(MarkerSpec::for_image(MarkerKind::circle, 512, 300).radius, 14);
    EXPECT_EQ(marker_footprint(MarkerKind::line, 3).size(), 7u);
    // Lattice points in a disk of radius 2: 13.
    EXPECT_EQ(marker_footprint(MarkerKind::circle, 2).size(), 13u);
}

TEST(GenerateSeeds, FullImageMaskCentered) {
    Rng rng(1);
    const Mask full(9, 9, 1, 1);
    const auto s = generate_seeds(full, {MarkerKind::circle, 3}, rng);
    EXPECT_EQ(s.depth(), 2u);
    std::size_t fg = 0, bg = 0;
    for (std::size_t p = 0; p < 81; ++p) {
        fg += s.at_pixel(p, kForeground);
        bg += s.at_pixel(p, kBackground);
    }
    EXPECT_EQ(fg, marker_footprint(MarkerKind::circle, 3).size());
    EXPECT_EQ(bg, 0u);
    EXPECT_EQ(s(4, 4, kForeground), 1);
    EXPECT_EQ(s(1, 4, kForeground), 1);
    EXPECT_EQ(s(0, 4, kForeground), 0);
}

TEST(GenerateSeeds, DiagonalObjectDeterministic) {
    Mask diag(32, 32, 1);
    for (std::size_t i = 0; i < 32; ++i) diag(i, i) = 1;
    Rng a(17), b(17);
    const auto sa = generate_seeds(diag, {MarkerKind::circle, 3}, a);
    const auto sb = generate_seeds(diag, {MarkerKind::circle, 3}, b);
    EXPECT_EQ(sa, sb);
    EXPECT_GT(seed_count(sa), 0u);
    EXPECT_NO_THROW(validate(sa));
}

TEST(GenerateSeeds, ContainmentOverRandomBlobs) {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const auto blob = random_blob(rng, 48);
        std::size_t area = 0;
        for (auto v : blob.data()) area += v;
        if (area == 0 || area == blob.pixels()) continue;
        const auto kind = trial % 2 ? MarkerKind::line : MarkerKind::circle;
        const auto s = generate_seeds(blob, MarkerSpec::for_image(kind, 48, 48), rng);
        std::size_t fg = 0, bg = 0;
        for (std::size_t p = 0; p < blob.pixels(); ++p) {
            if (s.at_pixel(p, kForeground)) {
                EXPECT_EQ(blob.at_pixel(p), 1);
                ++fg;
            }
            if (s.at_pixel(p, kBackground)) {
                EXPECT_EQ(blob.at_pixel(p), 0);
                ++bg;
            }
        }
        EXPECT_GT(fg, 0u);
        EXPECT_GT(bg, 0u);
    }
}

TEST(GenerateSeeds, EmptyObjectRejected) {
    Rng rng(3);
    EXPECT_THROW(generate_seeds(Mask(5, 5, 1), {MarkerKind::circle, 2}, rng, "m.png"), DataError);
}

TEST(Augment, FourVariantsAndFlipInvolution) {
    Rng rng(4);
    const auto img = random_image(rng, 10, 10, 3);
    const auto seeds = random_seeds(rng, 10, 10, 2);
    const auto out = augment(img, seeds);
    ASSERT_EQ(out.size(), 4u);
    EXPECT_EQ(out[0].image, img);
    EXPECT_EQ(flip_horizontal(out[1].image), img);
    EXPECT_EQ(flip_horizontal(out[1].seeds), seeds);
    EXPECT_EQ(out[1].image(3, 0, 1), img(3, 9, 1));
    EXPECT_THROW(augment(random_image(rng, 4, 5, 1), random_seeds(rng, 4, 5, 2)), DataError);
}

TEST(Augment, RotationKeepsCircleSeedCount) {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const auto blob = random_blob(rng, 64);
        std::size_t area = 0;
        for (auto v : blob.data()) area += v;
        if (area == 0 || area == blob.pixels()) continue;
        const auto seeds = generate_seeds(blob, MarkerSpec::for_image(MarkerKind::circle, 64, 64), rng);
        const auto before = static_cast<double>(seed_count(seeds));
        for (double deg : {45.0, 135.0}) {
            const auto after = static_cast<double>(seed_count(rotate(seeds, deg, ResizeMode::nearest)));
            // Markers near the border may rotate out of the frame; allow that case.
            if (after < 0.8 * before) continue;
            EXPECT_LE(std::abs(after - before), 0.2 * before);
        }
    }
}

TEST(Augment, RotationSeedCountWithinTolerance) {
    // Markers kept away from the border rotate fully inside the frame.
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        SeedMap s(64, 64, 2);
        const auto spec = MarkerSpec::for_image(MarkerKind::circle, 64, 64);
        for (std::size_t cls = 0; cls < 2; ++cls) {
            const long r = 22 + static_cast<long>(rng.uniform_index(20));
            const long c = 22 + static_cast<long>(rng.uniform_index(20));
            for (const auto& [dr, dc] : marker_footprint(spec.kind, spec.radius)) s(r + dr, c + dc, cls) = 1;
        }
        for (std::size_t p = 0; p < s.pixels(); ++p) {
            if (s.at_pixel(p, 0) && s.at_pixel(p, 1)) s.at_pixel(p, 1) = 0;
        }
        const auto before = static_cast<double>(seed_count(s));
        for (double deg : {45.0, 135.0}) {
            const auto after = static_cast<double>(seed_count(rotate(s, deg, ResizeMode::nearest)));
            EXPECT_LE(std::abs(after - before), 0.2 * before);
        }
    }
}

TEST(Augment, ConstantImageStaysConstantInsideValidRegion) {
    const Image img(11, 11, 3, 0.7);
    const SeedMap seeds(11, 11, 2);
    for (const auto& v : augment(img, seeds)) {
        for (double x : v.image.data()) EXPECT_TRUE(std::abs(x - 0.7) < 1e-12 || x == 0.0);
        // The central disk always maps inside the frame.
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(v.image(5, 5, k), 0.7, 1e-12);
    }
}

TEST(Trimap, ToSeeds) {
    const auto all_fg = trimap_to_seeds(Trimap(3, 3, 1, kTrimapForeground));
    for (std::size_t p = 0; p < 9; ++p) {
        EXPECT_EQ(all_fg.fg.at_pixel(p), 1);
        EXPECT_EQ(all_fg.bg.at_pixel(p), 0);
    }
    const auto unknown = trimap_to_seeds(Trimap(3, 3, 1, kTrimapUnknown));
    for (std::size_t p = 0; p < 9; ++p) EXPECT_EQ(unknown.fg.at_pixel(p) + unknown.bg.at_pixel(p), 0);
    Trimap checker(4, 4, 1);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 4; ++c) checker(r, c) = (r + c) % 2 ? kTrimapForeground : kTrimapBackground;
    }
    const auto s = trimap_to_seeds(checker);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            EXPECT_EQ(s.fg(r, c), (r + c) % 2);
            EXPECT_EQ(s.bg(r, c), 1 - (r + c) % 2);
        }
    }
    EXPECT_THROW(trimap_to_seeds(Trimap(1, 1, 1, 7)), DataError);
    EXPECT_THROW(as_trimap(Mask(1, 1, 1, 64)), DataError);
}

TEST(SeedCodes, RoundTrip) {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t classes = 2 + rng.uniform_index(4);
        const auto s = random_seeds(rng, 6, 7, classes);
        EXPECT_EQ(seeds_from_codes(seeds_to_codes(s), classes), s);
    }
    Mask codes(1, 3, 1, std::vector<std::uint8_t>{0, 1, 2});
    const auto s = seeds_from_codes(codes);
    EXPECT_EQ(s.depth(), 2u);
    EXPECT_EQ(s(0, 1, kBackground), 1);
    EXPECT_EQ(s(0, 2, kForeground), 1);
    EXPECT_THROW(seeds_from_codes(Mask(1, 1, 1, 3), 2), DataError);
}

TEST(Manifest, ParseAndResolve) {
    std::istringstream in("# comment\n\nimg/a.png\tseeds/a_s.png\tgt/a.png\n/abs/b.png\tb.png\n");
    const auto entries = parse_manifest(in, "/data");
    ASSERT_EQ(entries.size(), 2u);
    EXPECT_EQ(entries[0].image, "/data/img/a.png");
    EXPECT_EQ(entries[0].id, "a_s");
    EXPECT_EQ(entries[0].ground_truth.value(), "/data/gt/a.png");
    EXPECT_EQ(entries[1].image, "/abs/b.png");
    EXPECT_FALSE(entries[1].ground_truth.has_value());
    std::istringstream bad("only_one_field\n");
    EXPECT_THROW(parse_manifest(bad), DataError);
}
