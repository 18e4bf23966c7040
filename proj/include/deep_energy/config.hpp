#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>

#include "deep_energy/error.hpp"
#include "deep_energy/matting_energy.hpp"
#include "deep_energy/seg_energy.hpp"
#include "deep_energy/solver.hpp"

namespace deep_energy {

struct Config {
    double beta = kDefaultBeta;
    double lambda_seg = kDefaultSegLambda;
    double lambda_matting = kDefaultMattingLambda;
    double epsilon = kDefaultEpsilon;
    double tol = kDefaultTolerance;
    std::size_t max_iter = 0; // 0 = 10 x pixel count
    std::uint64_t seed = 0;
    unsigned threads = 0; // 0 = machine parallelism
    SolverBackend solver = SolverBackend::cholesky;
};

inline SolverBackend parse_backend(const std::string& s) {
    if (s == "cholesky") return SolverBackend::cholesky;
    if (s == "cg") return SolverBackend::cg;
    throw DataError("unknown solver '" + s + "' (expected cholesky or cg)");
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    if constexpr (std::is_unsigned_v<T>) {
        if (!text.empty() && text.front() == '-') throw DataError("config key '" + key + "' must be non-negative");
    }
    std::istringstream in(text);
    T value{};
    in >> value;
    if (in.fail() || !in.eof()) throw DataError("config key '" + key + "': cannot parse '" + text + "'");
    return value;
}

inline double parse_positive(const std::string& key, const std::string& text) {
    const auto v = parse_number<double>(key, text);
    if (!(v > 0.0)) throw DataError("config key '" + key + "' must be positive");
    return v;
}

} // namespace detail

/**
 * Reads `key = value` lines; '#' starts a comment. Keys: beta, lambda_seg,
 * lambda_matting, epsilon, tol, max_iter, seed, threads, solver. Unknown keys
 * and malformed values are rejected.
 */
inline Config parse_config(std::istream& in, Config cfg = {}) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw DataError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key == "beta") {
            cfg.beta = detail::parse_number<double>(key, value);
            if (cfg.beta < 0.0) throw DataError("config key 'beta' must be >= 0");
        } else if (key == "lambda_seg") {
            cfg.lambda_seg = detail::parse_positive(key, value);
        } else if (key == "lambda_matting") {
            cfg.lambda_matting = detail::parse_positive(key, value);
        } else if (key == "epsilon") {
            cfg.epsilon = detail::parse_positive(key, value);
        } else if (key == "tol") {
            cfg.tol = detail::parse_positive(key, value);
        } else if (key == "max_iter") {
            cfg.max_iter = detail::parse_number<std::size_t>(key, value);
        } else if (key == "seed") {
            cfg.seed = detail::parse_number<std::uint64_t>(key, value);
        } else if (key == "threads") {
            cfg.threads = detail::parse_number<unsigned>(key, value);
        } else if (key == "solver") {
            cfg.solver = parse_backend(value);
        } else {
            throw DataError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    return cfg;
}

inline Config load_config(const std::string& path, Config cfg = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config '" + path + "'");
    return parse_config(in, cfg);
}

/// Explicit value, else ENERGY_SEG_THREADS, else hardware concurrency.
inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("ENERGY_SEG_THREADS")) {
        try {
            const auto v = std::stoul(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

} // namespace deep_energy
