#pragma once

#include "epal/design.hpp"
#include "epal/pal.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace epal::bench {

/// Standard Binh-Korn pair (both minimized): f1 = 4x^2 + 4y^2, f2 = (x-5)^2 + (y-5)^2 on
/// 0 <= x <= 5, 0 <= y <= 3 subject to (x-5)^2 + y^2 <= 25 and (x-8)^2 + (y+3)^2 >= 7.7.
/// Throws DomainError outside the bounds or the feasible set.
std::pair<double, double> binh_korn(double x, double y);
bool binh_korn_feasible(double x, double y);

struct SurrogateOutput {
    double hardness = 0.0;            // GPa
    double inverse_elasticity = 0.0;  // 1/GPa
};

/// Documented output bounds of the spin-coating surrogate (noise included, clamped).
inline constexpr double kHardnessMin = 0.05;
inline constexpr double kHardnessMax = 1.5;
inline constexpr double kInverseElasticityMin = 0.02;
inline constexpr double kInverseElasticityMax = 0.6;
/// Nominal objective spans used for the noise level (2% of span).
inline constexpr double kHardnessSpan = 0.92;
inline constexpr double kInverseElasticitySpan = 0.325;

/// Closed-form, noise-free surrogate response (see README for the formula).
SurrogateOutput surrogate_mean(const campaign::DesignPoint& point);
bool in_thin_film_region(const campaign::DesignPoint& point);

/// Surrogate measurement: closed form plus seeded Gaussian noise (sigma = noise_scale * 2%
/// of the span, tripled in the thin-film region), clamped to the documented bounds.
/// Identical (point, seed, noise_scale) always produce identical output.
SurrogateOutput surrogate_spincoat(const campaign::DesignPoint& point, std::uint64_t seed,
                                   double noise_scale = 1.0);

/// A discrete benchmark problem converted to maximization.
struct GridProblem {
    std::string name;
    std::vector<std::vector<double>> designs;  // raw design coordinates
    Eigen::MatrixXd features;                  // normalized to [0, 1]
    std::size_t objectives = 2;
    std::vector<std::vector<double>> true_values;  // noise-free, maximization convention
    std::function<std::vector<double>(std::size_t)> evaluate;

    pal::EvaluableGrid evaluable() const { return {features, objectives, evaluate}; }
};

/// Feasible points of the Binh-Korn lattice with spacing `step` (21 x 13 candidates at 0.25).
/// Both objectives are negated.
GridProblem binh_korn_problem(double step = 0.25);

/// Spin-coating surrogate over the campaign grid; evaluation draws noisy measurements,
/// `true_values` holds the noise-free closed form.
GridProblem spincoat_problem(const campaign::GridConfig& config, std::uint64_t seed, double noise_scale = 1.0);

/// Exact Pareto front with an epsilon-coverage checker.
struct EParetoOracle {
    std::vector<std::vector<double>> values;
    std::vector<double> slack;  // absolute, epsilon_i * range_i
    std::vector<std::size_t> front;

    /// True iff every front point y* has a candidate y with y + slack >= y* componentwise.
    bool covers(std::span<const std::size_t> candidates) const;
};

EParetoOracle brute_force_epareto(const std::vector<std::vector<double>>& values, const std::vector<double>& epsilon,
                                  const std::vector<double>& ranges);

/// Per-objective (max - min) over a value table.
std::vector<double> value_ranges(const std::vector<std::vector<double>>& values);

/// Area dominated by the selected 2-D points relative to `reference` (maximization).
double hypervolume_2d(const std::vector<std::vector<double>>& values, std::span<const std::size_t> subset,
                      std::array<double, 2> reference);

struct BenchRecord {
    std::uint64_t seed = 0;
    std::size_t samples = 0;
    std::size_t iterations = 0;
    bool converged = false;
    bool coverage = false;
    double hypervolume = 0.0;
    double seconds = 0.0;
};

std::string bench_header();
std::string to_tsv(const BenchRecord& record);

/// One seeded epsilon-PAL run on a problem, scored against the noise-free brute-force front.
BenchRecord run_benchmark(const GridProblem& problem, const pal::PalConfig& config);

}  // namespace epal::bench
