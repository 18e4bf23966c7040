#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "deep_energy/dataset.hpp"
#include "deep_energy/error.hpp"
#include "deep_energy/field.hpp"
#include "deep_energy/matting_energy.hpp"
#include "deep_energy/png_io.hpp"
#include "deep_energy/rng.hpp"
#include "deep_energy/seg_energy.hpp"
#include "deep_energy/solver.hpp"
#include "deep_energy/tensor_io.hpp"

namespace deep_energy {

enum class Task { seg, matting };

inline const char* task_name(Task t) { return t == Task::seg ? "seg" : "matting"; }

/// Per-pixel argmax labels; ties go to the lower class index.
inline Mask argmax_labels(const ProbabilityField& y) {
    Mask labels(y.height(), y.width(), 1);
    for (std::size_t p = 0; p < y.pixels(); ++p) {
        std::size_t best = 0;
        for (std::size_t l = 1; l < y.depth(); ++l) {
            if (y.at_pixel(p, l) > y.at_pixel(p, best)) best = l;
        }
        labels.at_pixel(p) = static_cast<std::uint8_t>(best);
    }
    return labels;
}

/// Mean IOU over classes {0, 1} between label maps; a class absent from both scores 1.
inline double miou_labels(const Mask& pred, const Mask& gt) {
    require_same_grid(pred, gt, "miou");
    double total = 0.0;
    for (std::uint8_t cls = 0; cls < 2; ++cls) {
        std::size_t inter = 0;
        std::size_t uni = 0;
        for (std::size_t p = 0; p < pred.pixels(); ++p) {
            const bool a = pred.at_pixel(p) == cls;
            const bool b = gt.at_pixel(p) == cls;
            inter += a && b;
            uni += a || b;
        }
        total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return total / 2.0;
}

/// Binary mIOU of a 2-class probability field against a mask (nonzero = foreground).
inline double miou(const ProbabilityField& pred, const Mask& gt) {
    if (pred.depth() != 2) throw DataError("miou expects a 2-class probability field");
    require_same_grid(pred, gt, "miou");
    Mask binary_gt(gt.height(), gt.width(), 1);
    for (std::size_t p = 0; p < gt.pixels(); ++p) binary_gt.at_pixel(p) = gt.at_pixel(p) != 0;
    return miou_labels(argmax_labels(pred), binary_gt);
}

/// Mean squared alpha error, over UNKNOWN trimap pixels when a trimap is given.
/// Returns 0 when the region is empty.
inline double mse_alpha(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap* region = nullptr) {
    require_same_grid(pred, gt, "mse_alpha");
    if (region) require_same_grid(pred, *region, "mse_alpha");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < pred.pixels(); ++p) {
        if (region && region->at_pixel(p) != kTrimapUnknown) continue;
        const double d = pred.at_pixel(p) - gt.at_pixel(p);
        total += d * d;
        ++count;
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

struct ScoreRecord {
    std::string instance_id;
    Task task = Task::seg;
    double energy = 0.0;
    /// mIOU (seg) or MSE (matting); NaN when no ground truth is available.
    double metric = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
};

inline constexpr const char* kScoreCsvHeader = "instance_id,task,energy,metric,seconds";

inline void write_score_csv_row(std::ostream& out, const ScoreRecord& rec) {
    char buf[128];
    out << rec.instance_id << ',' << task_name(rec.task) << ',';
    std::snprintf(buf, sizeof buf, "%.17g,", rec.energy);
    out << buf;
    if (std::isnan(rec.metric)) {
        out << ',';
    } else {
        std::snprintf(buf, sizeof buf, "%.17g,", rec.metric);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.6f", rec.seconds);
    out << buf << '\n';
}

enum class SeedFormat { codes, trimap };
enum class MseRegion { all, unknown };

struct EnergyParams {
    double beta = kDefaultBeta;
    double lambda_seg = kDefaultSegLambda;
    double lambda_matting = kDefaultMattingLambda;
    double epsilon = kDefaultEpsilon;
    EdgeCounting counting = EdgeCounting::once;
};

struct SegInstance {
    std::string id;
    Image image;
    SeedMap seeds;
    std::optional<Mask> ground_truth;
};

struct MattingInstance {
    std::string id;
    Image image; // 3 channels
    MattingSeeds seeds;
    std::optional<Trimap> trimap;
    std::optional<AlphaMatte> ground_truth;
};

/// Gray images are replicated to three channels for matting.
inline Image as_rgb(const Image& img) {
    if (img.depth() == 3) return img;
    if (img.depth() != 1) throw DataError("expected a 1- or 3-channel image");
    Image rgb(img.height(), img.width(), 3);
    for (std::size_t p = 0; p < img.pixels(); ++p) {
        for (std::size_t k = 0; k < 3; ++k) rgb.at_pixel(p, k) = img.at_pixel(p);
    }
    return rgb;
}

inline SegInstance load_seg_instance(const ManifestEntry& e, std::size_t classes = 0) {
    SegInstance inst{e.id, load_image(e.image), seeds_from_codes(load_mask(e.seeds), classes), std::nullopt};
    require_same_grid(inst.image, inst.seeds, e.id.c_str());
    validate(inst.seeds);
    if (e.ground_truth) {
        inst.ground_truth = load_mask(*e.ground_truth);
        require_same_grid(inst.image, *inst.ground_truth, e.id.c_str());
    }
    return inst;
}

inline MattingInstance load_matting_instance(const ManifestEntry& e, SeedFormat format) {
    MattingInstance inst;
    inst.id = e.id;
    inst.image = as_rgb(load_image(e.image));
    const Mask codes = load_mask(e.seeds);
    require_same_grid(inst.image, codes, e.id.c_str());
    if (format == SeedFormat::trimap) {
        inst.trimap = as_trimap(codes);
        inst.seeds = trimap_to_seeds(*inst.trimap);
    } else {
        inst.seeds = matting_seeds_from(seeds_from_codes(codes, 2));
    }
    if (e.ground_truth) {
        const Image gt = to_grayscale(load_image(*e.ground_truth));
        require_same_grid(inst.image, gt, e.id.c_str());
        inst.ground_truth = AlphaMatte(gt.height(), gt.width(), 1, gt.values());
    }
    return inst;
}

inline ScoreRecord score_seg(const SegInstance& inst, const ProbabilityField& candidate, const EnergyParams& params) {
    const auto start = std::chrono::steady_clock::now();
    require_same_grid(inst.image, candidate, "score_solution");
    if (candidate.depth() != inst.seeds.depth()) {
        throw DataError("candidate has " + std::to_string(candidate.depth()) + " classes, seeds have " +
                        std::to_string(inst.seeds.depth()));
    }
    ScoreRecord rec;
    rec.instance_id = inst.id;
    rec.task = Task::seg;
    const auto weights = edge_weights(to_grayscale(inst.image), params.beta);
    rec.energy = rw_energy(inst.seeds, candidate, weights, params.lambda_seg, params.counting);
    if (inst.ground_truth) rec.metric = miou(candidate, *inst.ground_truth);
    rec.seconds = detail::seconds_since(start);
    return rec;
}

inline ScoreRecord score_matting(const MattingInstance& inst, const AlphaMatte& candidate, const EnergyParams& params,
                                 MseRegion region = MseRegion::all) {
    const auto start = std::chrono::steady_clock::now();
    require_same_grid(inst.image, candidate, "score_solution");
    ScoreRecord rec;
    rec.instance_id = inst.id;
    rec.task = Task::matting;
    const auto weights = matting_weights(inst.image, params.epsilon);
    rec.energy = matting_energy(inst.seeds, candidate, weights, params.lambda_matting);
    if (inst.ground_truth) {
        const Trimap* t = region == MseRegion::unknown && inst.trimap ? &*inst.trimap : nullptr;
        if (region == MseRegion::unknown && !inst.trimap) {
            throw DataError("MSE over unknown pixels needs trimap seeds");
        }
        rec.metric = mse_alpha(candidate, *inst.ground_truth, t);
    }
    rec.seconds = detail::seconds_since(start);
    return rec;
}

/// Energy (and metric, when ground truth exists) of a candidate interchange tensor.
inline ScoreRecord score_solution(const ManifestEntry& entry, const Tensor& candidate, Task task,
                                  const EnergyParams& params, SeedFormat format = SeedFormat::codes,
                                  MseRegion region = MseRegion::all) {
    if (task == Task::seg) {
        const auto y = probability_field_from(candidate);
        return score_seg(load_seg_instance(entry, y.depth()), y, params);
    }
    return score_matting(load_matting_instance(entry, format), alpha_matte_from(candidate), params, region);
}

// ---------------------------------------------------------------------------
// Timing harness

struct BenchRow {
    Task task = Task::seg;
    std::size_t size = 0;
    std::size_t instances = 0;
    double mean_seconds = 0.0;
    double mean_iterations = 0.0;
};

inline constexpr const char* kBenchCsvHeader = "task,size,instances,mean_seconds,mean_iterations";

inline void write_bench_csv_row(std::ostream& out, const BenchRow& row) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.6f,%.1f\n", task_name(row.task), row.size, row.instances,
                  row.mean_seconds, row.mean_iterations);
    out << buf;
}

struct SyntheticInstance {
    Image image; // RGB
    Mask object;
    SeedMap seeds;
};

/**
 * Band-limited random scene: a disk-shaped object and a background, each a
 * base color modulated by smooth noise (a coarse random grid upsampled
 * bilinearly), with seeds generated from the object mask.
 */
inline SyntheticInstance synthetic_instance(std::size_t size, Rng& rng) {
    constexpr std::size_t kGrid = 6;
    Image noise(kGrid, kGrid, 3);
    for (auto& v : noise.data()) v = rng.uniform();
    noise = resize(noise, size, size, ResizeMode::bilinear);

    const double s = static_cast<double>(size);
    const double radius = s * rng.uniform(0.18, 0.3);
    const double cr = s * rng.uniform(0.4, 0.6);
    const double cc = s * rng.uniform(0.4, 0.6);
    double fg[3];
    double bg[3];
    for (int k = 0; k < 3; ++k) {
        fg[k] = rng.uniform(0.1, 0.9);
        bg[k] = rng.uniform(0.1, 0.9);
    }

    SyntheticInstance inst{Image(size, size, 3), Mask(size, size, 1), SeedMap()};
    for (std::size_t r = 0; r < size; ++r) {
        for (std::size_t c = 0; c < size; ++c) {
            const double dr = static_cast<double>(r) - cr;
            const double dc = static_cast<double>(c) - cc;
            const bool in = dr * dr + dc * dc <= radius * radius;
            inst.object(r, c) = in;
            for (std::size_t k = 0; k < 3; ++k) {
                const double base = in ? fg[k] : bg[k];
                inst.image(r, c, k) = std::clamp(0.7 * base + 0.3 * noise(r, c, k), 0.0, 1.0);
            }
        }
    }
    inst.seeds = generate_seeds(inst.object, MarkerSpec::for_image(MarkerKind::circle, size, size), rng);
    return inst;
}

struct BenchOptions {
    std::vector<std::size_t> sizes = {128, 256, 512};
    std::size_t reps = 1;
    std::size_t instances = 32;
    std::uint64_t seed = 0;
    EnergyParams params;
    SolverOptions solver;
};

/// Mean wall time of the full analytic pipeline (operator assembly and
/// solve) per size. Solves run one at a time and single-threaded.
inline std::vector<BenchRow> bench(Task task, const BenchOptions& opts) {
    if (opts.reps == 0) throw DataError("bench needs reps >= 1");
    std::vector<BenchRow> rows;
    SolverOptions solver = opts.solver;
    solver.threads = 1;
    for (std::size_t size : opts.sizes) {
        BenchRow row{task, size, opts.reps * opts.instances, 0.0, 0.0};
        for (std::size_t i = 0; i < row.instances; ++i) {
            Rng rng = Rng::split(opts.seed ^ (static_cast<std::uint64_t>(size) << 32), i % opts.instances);
            const auto inst = synthetic_instance(size, rng);
            const auto start = std::chrono::steady_clock::now();
            std::size_t iterations = 0;
            if (task == Task::seg) {
                const auto lap = random_walker_laplacian(inst.image, opts.params.beta);
                const auto sol = analytic_rw(inst.seeds, lap, opts.params.lambda_seg, solver);
                for (const auto& r : sol.reports) iterations += r.iterations;
            } else {
                const auto lap = assemble_matting_laplacian(inst.image, opts.params.epsilon);
                const auto sol =
                    analytic_matting(matting_seeds_from(inst.seeds), lap, opts.params.lambda_matting, solver);
                iterations = sol.report.iterations;
            }
            row.mean_seconds += detail::seconds_since(start);
            row.mean_iterations += static_cast<double>(iterations);
        }
        row.mean_seconds /= static_cast<double>(row.instances);
        row.mean_iterations /= static_cast<double>(row.instances);
        rows.push_back(row);
    }
    return rows;
}

} // namespace deep_energy
