#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "deep_energy/config.hpp"
#include "deep_energy/deep_energy.hpp"

namespace deep_energy::cli {

enum ExitCode : int { ok = 0, usage_error = 1, data_error = 2, solver_error = 3 };

namespace detail {

/// Flags shared by several subcommands; unset optionals fall back to the config.
struct CommonFlags {
    std::optional<std::string> config;
    std::optional<double> beta;
    std::optional<double> lambda;
    std::optional<double> epsilon;
    std::optional<double> tol;
    std::optional<std::size_t> max_iter;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> solver;
};

inline void add_config_flag(CLI::App* app, CommonFlags& f) {
    app->add_option("--config", f.config, "Config file of 'key = value' lines; flags override it")
        ->check(CLI::ExistingFile);
}

inline void add_solver_flags(CLI::App* app, CommonFlags& f) {
    app->add_option("--tol", f.tol, "Relative residual tolerance of the linear solve (default 1e-8)")
        ->check(CLI::PositiveNumber);
    app->add_option("--max-iter", f.max_iter, "Iteration cap for --solver cg (default 10 x pixels)");
    app->add_option("--solver", f.solver, "Linear solver backend")->check(CLI::IsMember({"cholesky", "cg"}));
    app->add_option("--threads", f.threads,
                    "Bound on internal parallelism (default: ENERGY_SEG_THREADS or machine parallelism)")
        ->check(CLI::PositiveNumber);
}

inline Config resolve(const CommonFlags& f) {
    Config cfg = f.config ? load_config(*f.config) : Config{};
    if (f.beta) cfg.beta = *f.beta;
    if (f.epsilon) cfg.epsilon = *f.epsilon;
    if (f.tol) cfg.tol = *f.tol;
    if (f.max_iter) cfg.max_iter = *f.max_iter;
    if (f.seed) cfg.seed = *f.seed;
    if (f.threads) cfg.threads = *f.threads;
    if (f.solver) cfg.solver = parse_backend(*f.solver);
    if (cfg.beta < 0.0) throw DataError("beta must be >= 0");
    if (!(cfg.epsilon > 0.0)) throw DataError("epsilon must be > 0");
    return cfg;
}

inline SolverOptions solver_options(const Config& cfg) {
    return {cfg.solver, cfg.tol, cfg.max_iter, resolve_threads(cfg.threads)};
}

inline std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

inline MattingSeeds load_matting_seeds(const std::optional<std::string>& seeds,
                                       const std::optional<std::string>& trimap) {
    if (seeds.has_value() == trimap.has_value()) {
        throw CLI::ValidationError("exactly one of --seeds or --trimap is required");
    }
    if (trimap) return trimap_to_seeds(as_trimap(load_mask(*trimap)));
    return matting_seeds_from(seeds_from_codes(load_mask(*seeds), 2));
}

inline Mask object_region(const Mask& annotation, std::optional<int> object, double min_area) {
    if (object) {
        for (auto& obj : split_objects(annotation, min_area)) {
            if (obj.id == *object) return std::move(obj.mask);
        }
        throw DataError("object id " + std::to_string(*object) + " is absent or smaller than the minimum area");
    }
    // 255 is void in an object-id annotation but foreground in a 0/255 binary mask.
    bool has_ids = false;
    for (auto v : annotation.data()) has_ids = has_ids || (v != 0 && v != kVoidLabel);
    Mask region(annotation.height(), annotation.width(), 1);
    for (std::size_t p = 0; p < annotation.pixels(); ++p) {
        const auto v = annotation.at_pixel(p);
        region.at_pixel(p) = v != 0 && (!has_ids || v != kVoidLabel);
    }
    return region;
}

} // namespace detail

/// Entry point of the command-line tool; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Random-walker segmentation and closed-form matting: energies, analytic solutions, metrics.",
                 "deep-energy"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    detail::CommonFlags common;
    std::optional<std::string> image, seeds, trimap, mask, out_path, candidate, gt, manifest, candidates_dir;
    std::optional<int> object;
    double min_area = 0.0;
    std::string marker = "circle";
    std::string task = "seg";
    std::string mse_region = "all";
    bool double_count = false;
    std::vector<std::size_t> sizes;
    std::size_t reps = 1;
    std::size_t instances = 32;
    std::optional<std::size_t> resize_to;

    // seeds
    auto* seeds_cmd = app.add_subcommand("seeds", "Generate a foreground/background marker seed image from a mask");
    seeds_cmd->add_option("--mask", mask, "Object mask or object-id annotation PNG (8-bit)")->required();
    seeds_cmd->add_option("--out", out_path, "Output seed PNG (0 = none, 1 = background, 2 = foreground)")
        ->required();
    seeds_cmd->add_option("--seed", common.seed, "RNG seed for fallback marker placement (default 0)");
    seeds_cmd->add_option("--marker", marker, "Marker shape")->check(CLI::IsMember({"circle", "line"}));
    seeds_cmd->add_option("--object", object, "Object id to seed (default: every nonzero pixel; 255 is void when other ids are present)")
        ->check(CLI::Range(1, 254));
    seeds_cmd->add_option("--min-area", min_area, "Minimum object area as a fraction of the image (with --object)")
        ->check(CLI::Range(0.0, 1.0));
    seeds_cmd->add_option("--size", resize_to, "Resize the mask (nearest) to size x size before seeding")
        ->check(CLI::PositiveNumber);
    detail::add_config_flag(seeds_cmd, common);

    // solve seg / solve matting
    auto* solve_cmd = app.add_subcommand("solve", "Analytic minimizer of an energy");
    solve_cmd->require_subcommand(1);
    auto* solve_seg = solve_cmd->add_subcommand("seg", "Random-walker probabilities");
    solve_seg->add_option("--image", image, "Input PNG")->required()->check(CLI::ExistingFile);
    solve_seg->add_option("--seeds", seeds, "Seed PNG (code k = class k-1)")->required()->check(CLI::ExistingFile);
    solve_seg->add_option("--out", out_path, "Output probability tensor [H, W, L] (DETF)")->required();
    solve_seg->add_option("--beta", common.beta, "Edge weight scale (default 1000)");
    solve_seg->add_option("--lambda", common.lambda, "Seed fidelity weight (default 10)")->check(CLI::PositiveNumber);
    detail::add_solver_flags(solve_seg, common);
    detail::add_config_flag(solve_seg, common);

    auto* solve_mat = solve_cmd->add_subcommand("matting", "Closed-form alpha matte");
    solve_mat->add_option("--image", image, "Input PNG (gray is replicated to RGB)")
        ->required()
        ->check(CLI::ExistingFile);
    solve_mat->add_option("--seeds", seeds, "Seed PNG (1 = background, 2 = foreground)")->check(CLI::ExistingFile);
    solve_mat->add_option("--trimap", trimap, "Trimap PNG (0 / 128 / 255)")->check(CLI::ExistingFile);
    solve_mat->add_option("--out", out_path, "Output alpha tensor [H, W] (DETF)")->required();
    solve_mat->add_option("--lambda", common.lambda, "Seed fidelity weight (default 1)")->check(CLI::PositiveNumber);
    solve_mat->add_option("--epsilon", common.epsilon, "Covariance regularizer (default 1e-7)")
        ->check(CLI::PositiveNumber);
    detail::add_solver_flags(solve_mat, common);
    detail::add_config_flag(solve_mat, common);

    // trimap2seeds
    auto* t2s = app.add_subcommand("trimap2seeds", "Convert a trimap into a seed PNG");
    t2s->add_option("--trimap", trimap, "Trimap PNG (0 / 128 / 255)")->required()->check(CLI::ExistingFile);
    t2s->add_option("--out", out_path, "Output seed PNG (1 = background, 2 = foreground)")->required();

    // score
    auto* score_cmd = app.add_subcommand("score", "Energy and metric of candidate solutions, as CSV");
    score_cmd->add_option("--task", task, "Energy to evaluate")->check(CLI::IsMember({"seg", "matting"}));
    score_cmd->add_option("--image", image, "Input PNG")->check(CLI::ExistingFile);
    score_cmd->add_option("--seeds", seeds, "Seed PNG")->check(CLI::ExistingFile);
    score_cmd->add_option("--trimap", trimap, "Trimap PNG used as matting seeds")->check(CLI::ExistingFile);
    score_cmd->add_option("--candidate", candidate, "Candidate tensor (DETF)")->check(CLI::ExistingFile);
    score_cmd->add_option("--gt", gt, "Ground truth: binary mask (seg) or alpha PNG (matting)")
        ->check(CLI::ExistingFile);
    score_cmd->add_option("--manifest", manifest, "Score every manifest record instead of a single instance")
        ->check(CLI::ExistingFile);
    score_cmd->add_option("--candidates", candidates_dir, "Directory of <id>.detf candidates (with --manifest)")
        ->check(CLI::ExistingDirectory);
    score_cmd->add_flag("--trimap-seeds", "Manifest seed column holds trimaps (matting)");
    score_cmd->add_option("--mse-region", mse_region, "Matting MSE over all pixels or trimap UNKNOWN pixels")
        ->check(CLI::IsMember({"all", "unknown"}));
    score_cmd->add_flag("--double-count-edges", double_count,
                        "Report the segmentation smoothness with every edge counted from both endpoints");
    score_cmd->add_option("--beta", common.beta, "Edge weight scale (default 1000)");
    score_cmd->add_option("--lambda", common.lambda, "Seed fidelity weight (default 10 seg, 1 matting)")
        ->check(CLI::PositiveNumber);
    score_cmd->add_option("--epsilon", common.epsilon, "Covariance regularizer (default 1e-7)")
        ->check(CLI::PositiveNumber);
    score_cmd->add_option("--out", out_path, "CSV output file (default standard output)");
    detail::add_config_flag(score_cmd, common);

    // miou
    auto* miou_cmd = app.add_subcommand("miou", "Binary mIOU of a probability tensor against a mask");
    miou_cmd->add_option("--candidate", candidate, "Probability tensor [H, W, 2] (DETF)")
        ->required()
        ->check(CLI::ExistingFile);
    miou_cmd->add_option("--gt", gt, "Ground-truth mask PNG (nonzero = foreground)")
        ->required()
        ->check(CLI::ExistingFile);

    // mse
    auto* mse_cmd = app.add_subcommand("mse", "Mean squared error of an alpha tensor against a ground-truth matte");
    mse_cmd->add_option("--candidate", candidate, "Alpha tensor [H, W] (DETF)")->required()->check(CLI::ExistingFile);
    mse_cmd->add_option("--gt", gt, "Ground-truth alpha PNG")->required()->check(CLI::ExistingFile);
    mse_cmd->add_option("--trimap", trimap, "Restrict the error to UNKNOWN pixels of this trimap")
        ->check(CLI::ExistingFile);

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Time analytic solves on synthetic images, as CSV");
    bench_cmd->add_option("--size", sizes, "Image side in pixels (repeatable; default 128 256 512)")
        ->check(CLI::Range(3, 8192));
    bench_cmd->add_option("--reps", reps, "Repetitions of the instance set")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--instances", instances, "Synthetic instances per size")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--task", task, "Which energy to time")->check(CLI::IsMember({"seg", "matting", "both"}));
    bench_cmd->add_option("--seed", common.seed, "RNG seed for the synthetic instances (default 0)");
    bench_cmd->add_option("--out", out_path, "CSV output file (default standard output)");
    detail::add_solver_flags(bench_cmd, common);
    detail::add_config_flag(bench_cmd, common);

    // export-weights
    auto* export_cmd = app.add_subcommand("export-weights", "Write the matting pair weights as an [N, 81] tensor");
    export_cmd->add_option("--image", image, "Input PNG (gray is replicated to RGB)")
        ->required()
        ->check(CLI::ExistingFile);
    export_cmd->add_option("--out", out_path, "Output tensor (DETF)")->required();
    export_cmd->add_option("--epsilon", common.epsilon, "Covariance regularizer (default 1e-7)")
        ->check(CLI::PositiveNumber);
    detail::add_config_flag(export_cmd, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? ok : usage_error;
    }

    try {
        const Config cfg = detail::resolve(common);

        if (*seeds_cmd) {
            Mask annotation = load_mask(*mask);
            if (resize_to) annotation = resize(annotation, *resize_to, *resize_to, ResizeMode::nearest);
            const Mask region = detail::object_region(annotation, object, min_area);
            const auto kind = marker == "line" ? MarkerKind::line : MarkerKind::circle;
            Rng rng(cfg.seed);
            const auto seed_map = generate_seeds(region, MarkerSpec::for_image(kind, region.height(), region.width()),
                                                 rng, *mask);
            save_mask(*out_path, seeds_to_codes(seed_map));
            out << detail::fmt("seeds: %zu seeded pixels written to %s\n", seed_count(seed_map), out_path->c_str());
            return ok;
        }

        if (*solve_seg) {
            const Image img = load_image(*image);
            const SeedMap seed_map = seeds_from_codes(load_mask(*seeds));
            require_same_grid(img, seed_map, "solve seg");
            const double lambda = common.lambda.value_or(cfg.lambda_seg);
            const auto weights = edge_weights(to_grayscale(img), cfg.beta);
            const auto sol = analytic_rw(seed_map, assemble_laplacian(weights), lambda, detail::solver_options(cfg));
            const Tensor t = to_tensor(sol.probabilities);
            write_tensor(*out_path, t);
            // Energy of the field exactly as written.
            const double energy = rw_energy(seed_map, probability_field_from(t), weights, lambda);
            std::size_t iterations = 0;
            double residual = 0.0;
            double seconds = 0.0;
            for (const auto& r : sol.reports) {
                iterations += r.iterations;
                residual = std::max(residual, r.relative_residual);
                seconds += r.seconds;
            }
            out << detail::fmt("solve seg: energy=%.17g classes=%zu iterations=%zu residual=%.3e seconds=%.3f\n",
                               energy, seed_map.depth(), iterations, residual, seconds);
            return ok;
        }

        if (*solve_mat) {
            const Image img = as_rgb(load_image(*image));
            const MattingSeeds ms = detail::load_matting_seeds(seeds, trimap);
            require_same_grid(img, ms.fg, "solve matting");
            const double lambda = common.lambda.value_or(cfg.lambda_matting);
            const auto weights = matting_weights(img, cfg.epsilon);
            const auto sol =
                analytic_matting(ms, assemble_matting_laplacian(weights), lambda, detail::solver_options(cfg));
            const Tensor t = to_tensor(sol.alpha);
            write_tensor(*out_path, t);
            const double energy = matting_energy(ms, alpha_matte_from(t), weights, lambda);
            out << detail::fmt("solve matting: energy=%.17g iterations=%zu residual=%.3e clamped=%zu seconds=%.3f\n",
                               energy, sol.report.iterations, sol.report.relative_residual, sol.report.clamped,
                               sol.report.seconds);
            return ok;
        }

        if (*t2s) {
            const auto ms = trimap_to_seeds(as_trimap(load_mask(*trimap)));
            SeedMap seed_map(ms.fg.height(), ms.fg.width(), 2);
            for (std::size_t p = 0; p < ms.fg.pixels(); ++p) {
                seed_map.at_pixel(p, kForeground) = ms.fg.at_pixel(p);
                seed_map.at_pixel(p, kBackground) = ms.bg.at_pixel(p);
            }
            save_mask(*out_path, seeds_to_codes(seed_map));
            out << detail::fmt("trimap2seeds: %zu seeded pixels written to %s\n", seed_count(seed_map),
                               out_path->c_str());
            return ok;
        }

        if (*score_cmd) {
            const Task which = task == "seg" ? Task::seg : Task::matting;
            EnergyParams params;
            params.beta = cfg.beta;
            params.epsilon = cfg.epsilon;
            params.lambda_seg = common.lambda.value_or(cfg.lambda_seg);
            params.lambda_matting = common.lambda.value_or(cfg.lambda_matting);
            params.counting = double_count ? EdgeCounting::twice : EdgeCounting::once;
            const MseRegion region = mse_region == "unknown" ? MseRegion::unknown : MseRegion::all;

            std::vector<std::pair<ManifestEntry, std::string>> jobs;
            SeedFormat format = SeedFormat::codes;
            if (manifest) {
                if (!candidates_dir) throw CLI::ValidationError("--manifest needs --candidates");
                if (score_cmd->count("--trimap-seeds") > 0) format = SeedFormat::trimap;
                for (auto& e : read_manifest(*manifest)) {
                    auto path = (std::filesystem::path(*candidates_dir) / (e.id + ".detf")).string();
                    jobs.emplace_back(std::move(e), std::move(path));
                }
            } else {
                if (!image || !candidate) throw CLI::ValidationError("score needs --image and --candidate");
                if (seeds.has_value() == trimap.has_value()) {
                    throw CLI::ValidationError("exactly one of --seeds or --trimap is required");
                }
                if (trimap && which == Task::seg) throw CLI::ValidationError("--trimap applies to matting only");
                format = trimap ? SeedFormat::trimap : SeedFormat::codes;
                ManifestEntry e{std::filesystem::path(*candidate).stem().string(), *image, trimap ? *trimap : *seeds,
                                gt};
                jobs.emplace_back(std::move(e), *candidate);
            }

            std::ofstream file;
            if (out_path) {
                file.open(*out_path, std::ios::trunc);
                if (!file) throw DataError("cannot create '" + *out_path + "'");
            }
            std::ostream& sink = out_path ? static_cast<std::ostream&>(file) : out;
            sink << kScoreCsvHeader << '\n';
            for (const auto& [entry, path] : jobs) {
                write_score_csv_row(sink, score_solution(entry, read_tensor(path), which, params, format, region));
            }
            return ok;
        }

        if (*miou_cmd) {
            const auto y = probability_field_from(read_tensor(*candidate));
            out << detail::fmt("%.17g\n", miou(y, load_mask(*gt)));
            return ok;
        }

        if (*mse_cmd) {
            const auto a = alpha_matte_from(read_tensor(*candidate));
            const Image g = to_grayscale(load_image(*gt));
            const AlphaMatte truth(g.height(), g.width(), 1, g.values());
            std::optional<Trimap> t;
            if (trimap) t = as_trimap(load_mask(*trimap));
            out << detail::fmt("%.17g\n", mse_alpha(a, truth, t ? &*t : nullptr));
            return ok;
        }

        if (*bench_cmd) {
            BenchOptions opts;
            if (!sizes.empty()) opts.sizes = sizes;
            opts.reps = reps;
            opts.instances = instances;
            opts.seed = cfg.seed;
            opts.params.beta = cfg.beta;
            opts.params.epsilon = cfg.epsilon;
            opts.params.lambda_seg = cfg.lambda_seg;
            opts.params.lambda_matting = cfg.lambda_matting;
            opts.solver = detail::solver_options(cfg);
            std::ofstream file;
            if (out_path) {
                file.open(*out_path, std::ios::trunc);
                if (!file) throw DataError("cannot create '" + *out_path + "'");
            }
            std::ostream& sink = out_path ? static_cast<std::ostream&>(file) : out;
            sink << kBenchCsvHeader << '\n';
            std::vector<Task> tasks;
            if (task != "matting") tasks.push_back(Task::seg);
            if (task != "seg") tasks.push_back(Task::matting);
            for (Task t : tasks) {
                for (const auto& row : bench(t, opts)) {
                    write_bench_csv_row(sink, row);
                    sink.flush();
                }
            }
            return ok;
        }

        if (*export_cmd) {
            const Image img = as_rgb(load_image(*image));
            const auto weights = matting_weights(img, cfg.epsilon);
            write_tensor(*out_path, to_tensor(weights));
            out << detail::fmt("export-weights: %zu x %zu tensor written to %s\n", weights.pixels(), kWindowPairs,
                               out_path->c_str());
            return ok;
        }
    } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return usage_error;
    } catch (const SolverError& e) {
        err << "solver error: " << e.what() << '\n';
        return solver_error;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return data_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return data_error;
    }
    return usage_error;
}

} // namespace deep_energy::cli
