#include "epal/bench.hpp"

#include "epal/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace epal::bench {

bool binh_korn_feasible(double x, double y) {
    if (!(x >= 0.0 && x <= 5.0 && y >= 0.0 && y <= 3.0)) return false;
    const double g1 = (x - 5.0) * (x - 5.0) + y * y;
    const double g2 = (x - 8.0) * (x - 8.0) + (y + 3.0) * (y + 3.0);
    return g1 <= 25.0 && g2 >= 7.7;
}

std::pair<double, double> binh_korn(double x, double y) {
    if (!(x >= 0.0 && x <= 5.0 && y >= 0.0 && y <= 3.0)) throw DomainError("binh_korn: input out of bounds");
    if (!binh_korn_feasible(x, y)) throw DomainError("binh_korn: input violates constraints");
    return {4.0 * x * x + 4.0 * y * y, (x - 5.0) * (x - 5.0) + (y - 5.0) * (y - 5.0)};
}

namespace {

constexpr double kSpeedMin = 1000.0;
constexpr double kSpeedMax = 8000.0;

double normalized_speed(double rpm) { return std::clamp((rpm - kSpeedMin) / (kSpeedMax - kSpeedMin), 0.0, 1.0); }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

bool in_thin_film_region(const campaign::DesignPoint& p) {
    return normalized_speed(p.spin_speed) > 0.8 && p.dilution < 0.2;
}

SurrogateOutput surrogate_mean(const campaign::DesignPoint& p) {
    const double c40 = p.c_pvp40;
    const double c360 = p.c_pvp360;
    const double u = normalized_speed(p.spin_speed);
    const double d = p.dilution;

    const double s = c360 + 0.5 * c40;

    double h = 0.50 + 0.30 * s + 0.20 * (1.0 - u) - 0.12 * d - 0.45 * c40;
    double e = 0.18 + 0.12 * (1.0 - 0.5 * s - 0.5 * s * s) + 0.08 * (1.0 - u) - 0.05 * d - 0.15 * c40;
    if (in_thin_film_region(p)) {
        h *= 0.6;
        e *= 0.6;
    }
    return {h, e};
}

SurrogateOutput surrogate_spincoat(const campaign::DesignPoint& point, std::uint64_t seed, double noise_scale) {
    SurrogateOutput out = surrogate_mean(point);
    if (noise_scale > 0.0) {
        std::mt19937_64 rng(splitmix64(seed ^ splitmix64(point.id + 1)));
        std::normal_distribution<double> normal(0.0, 1.0);
        const double boost = in_thin_film_region(point) ? 3.0 : 1.0;
        out.hardness += noise_scale * boost * 0.02 * kHardnessSpan * normal(rng);
        out.inverse_elasticity += noise_scale * boost * 0.02 * kInverseElasticitySpan * normal(rng);
    }
    out.hardness = std::clamp(out.hardness, kHardnessMin, kHardnessMax);
    out.inverse_elasticity = std::clamp(out.inverse_elasticity, kInverseElasticityMin, kInverseElasticityMax);
    return out;
}

GridProblem binh_korn_problem(double step) {
    if (!(step > 0.0)) throw InvalidArgument("binh_korn_problem: step must be positive");
    GridProblem problem;
    problem.name = "binh-korn";
    const int nx = static_cast<int>(std::round(5.0 / step));
    const int ny = static_cast<int>(std::round(3.0 / step));
    for (int i = 0; i <= nx; ++i) {
        for (int j = 0; j <= ny; ++j) {
            const double x = i * step;
            const double y = j * step;
            if (!binh_korn_feasible(x, y)) continue;
            const auto [f1, f2] = binh_korn(x, y);
            problem.designs.push_back({x, y});
            problem.true_values.push_back({-f1, -f2});
        }
    }
    problem.features.resize(static_cast<Eigen::Index>(problem.designs.size()), 2);
    for (std::size_t i = 0; i < problem.designs.size(); ++i) {
        problem.features(static_cast<Eigen::Index>(i), 0) = problem.designs[i][0] / 5.0;
        problem.features(static_cast<Eigen::Index>(i), 1) = problem.designs[i][1] / 3.0;
    }
    problem.objectives = 2;
    problem.evaluate = [values = problem.true_values](std::size_t i) { return values.at(i); };
    return problem;
}

GridProblem spincoat_problem(const campaign::GridConfig& config, std::uint64_t seed, double noise_scale) {
    GridProblem problem;
    problem.name = "spincoat-surrogate";
    auto points = campaign::build_grid(config);
    problem.features = campaign::design_features(points, config);
    problem.objectives = 2;
    for (const auto& p : points) {
        problem.designs.push_back({p.c_pvp10, p.c_pvp40, p.c_pvp360, p.spin_speed, p.dilution});
        const auto mean = surrogate_mean(p);
        problem.true_values.push_back({mean.hardness, mean.inverse_elasticity});
    }
    problem.evaluate = [points = std::move(points), seed, noise_scale](std::size_t i) {
        const auto out = surrogate_spincoat(points.at(i), seed, noise_scale);
        return std::vector<double>{out.hardness, out.inverse_elasticity};
    };
    return problem;
}

bool EParetoOracle::covers(std::span<const std::size_t> candidates) const {
    for (std::size_t f : front) {
        bool covered = false;
        for (std::size_t c : candidates) {
            bool ok = true;
            for (std::size_t j = 0; j < slack.size() && ok; ++j) ok = values[c][j] + slack[j] >= values[f][j];
            if (ok) {
                covered = true;
                break;
            }
        }
        if (!covered) return false;
    }
    return true;
}

EParetoOracle brute_force_epareto(const std::vector<std::vector<double>>& values, const std::vector<double>& epsilon,
                                  const std::vector<double>& ranges) {
    EParetoOracle oracle;
    oracle.values = values;
    const std::size_t m = values.empty() ? epsilon.size() : values.front().size();
    if (epsilon.size() != m || ranges.size() != m) throw InvalidArgument("brute_force_epareto: objective mismatch");
    oracle.slack.resize(m);
    for (std::size_t j = 0; j < m; ++j) oracle.slack[j] = epsilon[j] * ranges[j];
    for (std::size_t i = 0; i < values.size(); ++i) {
        bool dominated = false;
        for (std::size_t k = 0; k < values.size() && !dominated; ++k) {
            if (k == i) continue;
            bool geq = true;
            bool strict = false;
            for (std::size_t j = 0; j < m; ++j) {
                if (values[k][j] < values[i][j]) {
                    geq = false;
                    break;
                }
                strict = strict || values[k][j] > values[i][j];
            }
            dominated = geq && strict;
        }
        if (!dominated) oracle.front.push_back(i);
    }
    return oracle;
}

std::vector<double> value_ranges(const std::vector<std::vector<double>>& values) {
    if (values.empty()) return {};
    std::vector<double> lo = values.front();
    std::vector<double> hi = values.front();
    for (const auto& v : values) {
        for (std::size_t j = 0; j < v.size(); ++j) {
            lo[j] = std::min(lo[j], v[j]);
            hi[j] = std::max(hi[j], v[j]);
        }
    }
    for (std::size_t j = 0; j < lo.size(); ++j) hi[j] -= lo[j];
    return hi;
}

double hypervolume_2d(const std::vector<std::vector<double>>& values, std::span<const std::size_t> subset,
                      std::array<double, 2> reference) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i : subset) {
        if (values[i].size() != 2) throw InvalidArgument("hypervolume_2d: values must be two-dimensional");
        if (values[i][0] > reference[0] && values[i][1] > reference[1]) pts.emplace_back(values[i][0], values[i][1]);
    }
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    double area = 0.0;
    double best_y = reference[1];
    for (const auto& [x, y] : pts) {
        if (y > best_y) {
            area += (x - reference[0]) * (y - best_y);
            best_y = y;
        }
    }
    return area;
}

std::string bench_header() { return "seed\tsamples\titerations\tconverged\tcoverage\thypervolume\tseconds"; }

std::string to_tsv(const BenchRecord& r) {
    std::ostringstream os;
    os << r.seed << '\t' << r.samples << '\t' << r.iterations << '\t' << (r.converged ? "true" : "false") << '\t'
       << (r.coverage ? "pass" : "fail") << '\t' << r.hypervolume << '\t' << r.seconds;
    return os.str();
}

BenchRecord run_benchmark(const GridProblem& problem, const pal::PalConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    const auto result = pal::run_epal(problem.evaluable(), config);
    const auto stop = std::chrono::steady_clock::now();

    BenchRecord rec;
    rec.seed = config.seed;
    rec.samples = result.state.sampled_ids.size();
    rec.iterations = result.state.iteration;
    rec.converged = result.state.converged();
    rec.seconds = std::chrono::duration<double>(stop - start).count();

    std::vector<std::size_t> returned;
    for (std::size_t i = 0; i < result.state.classes.size(); ++i) {
        if (result.state.classes[i].cls == pal::Class::ParetoOptimal) returned.push_back(i);
    }
    const auto ranges = value_ranges(problem.true_values);
    const auto oracle = brute_force_epareto(problem.true_values, config.epsilon_for(problem.objectives), ranges);
    rec.coverage = oracle.covers(returned);
    if (problem.objectives == 2) {
        std::array<double, 2> ref{problem.true_values.front()[0], problem.true_values.front()[1]};
        for (const auto& v : problem.true_values) {
            ref[0] = std::min(ref[0], v[0]);
            ref[1] = std::min(ref[1], v[1]);
        }
        rec.hypervolume = hypervolume_2d(problem.true_values, returned, ref);
    }
    return rec;
}

}  // namespace epal::bench
