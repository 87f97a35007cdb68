#pragma once

#include "epal/gp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace epal::pal {

// All objectives are maximized. Minimization objectives are negated by the caller.

enum class Class : std::uint8_t { Undecided, ParetoOptimal, Discarded };

std::string_view to_string(Class c);
Class class_from_string(std::string_view name);

struct Classification {
    Class cls = Class::Undecided;
    bool sampled = false;

    bool operator==(const Classification&) const = default;
};

/// Per-objective confidence box [low, high] around the GP prediction of one design point.
struct ObjectiveRegion {
    std::vector<double> low;
    std::vector<double> high;

    bool operator==(const ObjectiveRegion&) const = default;
};

struct ObjectiveRange {
    double min = 0.0;
    double max = 0.0;

    double width() const { return max - min; }
    bool operator==(const ObjectiveRange&) const = default;
};

struct PalConfig {
    std::vector<double> epsilon{0.01};  // one value, or one per objective; relative to objective range
    double delta = 0.05;
    double beta_scale = 1.0 / 9.0;
    int batch_size = 1;
    int max_evaluations = 100;  // total budget including the initial samples
    int initial_samples = 10;
    std::uint64_t seed = 0;
    gp::FitConfig gp;

    void validate() const;
    /// Per-objective epsilon, broadcasting a single value.
    std::vector<double> epsilon_for(std::size_t objectives) const;

    bool operator==(const PalConfig&) const = default;
};

struct ClassCounts {
    std::size_t pareto = 0;
    std::size_t discarded = 0;
    std::size_t undecided = 0;

    bool operator==(const ClassCounts&) const = default;
};

struct PalState {
    std::vector<ObjectiveRegion> regions;
    std::vector<Classification> classes;
    std::size_t iteration = 0;
    std::vector<std::size_t> sampled_ids;
    std::vector<ObjectiveRange> objective_ranges;
    std::vector<gp::KernelParams> hyperparameters;  // last fitted model per objective
    std::size_t region_updates = 0;
    std::size_t region_fallbacks = 0;

    ClassCounts counts() const;
    bool converged() const { return !classes.empty() && counts().undecided == 0; }

    bool operator==(const PalState&) const = default;
};

/// Confidence multiplier schedule: scale * 2 * ln(m * n * pi^2 * t^2 / (6 * delta)).
double beta_t(std::size_t iteration, std::size_t n_designs, std::size_t n_objectives, double delta, double scale);

/// predictions[i][j] is the GP prediction for point i, objective j.
using PredictionTable = std::vector<std::vector<gp::Prediction>>;

struct RegionUpdate {
    std::vector<ObjectiveRegion> regions;
    std::size_t fallbacks = 0;  // objective intervals where the intersection was empty
};

/// Intersects [mu - sqrt(beta) sigma, mu + sqrt(beta) sigma] with the previous region.
/// An empty intersection keeps the fresh interval for that objective and is counted.
RegionUpdate update_regions(const PredictionTable& predictions, double beta,
                            const std::vector<ObjectiveRegion>* previous);

std::vector<ObjectiveRange> ranges_of_means(const PredictionTable& predictions);

/// a dominates b: a >= b componentwise with at least one strict inequality.
bool dominates(std::span<const double> a, std::span<const double> b);

std::vector<Classification> classify(const std::vector<ObjectiveRegion>& regions,
                                     const std::vector<double>& epsilon,
                                     const std::vector<ObjectiveRange>& ranges,
                                     const std::vector<Classification>& classes);

struct Selection {
    std::optional<std::size_t> index;
    bool converged = false;
};

/// Largest range-normalized region diagonal among unsampled, non-discarded points.
Selection select_next(const PalState& state);

/// Euclidean length of high - low with each objective divided by its range width.
double normalized_diagonal(const ObjectiveRegion& region, const std::vector<ObjectiveRange>& ranges);

/// Greedy fantasy batch: after each pick the chosen region collapses onto the GP mean,
/// the grid is reclassified and the next pick is made. Stops early at convergence.
std::vector<std::size_t> select_batch(const PalState& state, const PredictionTable& predictions,
                                      const std::vector<double>& epsilon, std::size_t batch_size);

/// Indices of points not dominated by any other point. Brute force, O(n^2).
std::vector<std::size_t> pareto_front(const std::vector<std::vector<double>>& values);

/// Maximin design: a seeded random first point, then repeatedly the point farthest from
/// the chosen set (ties by lowest index).
std::vector<std::size_t> maximin_seeds(const Eigen::MatrixXd& features, std::size_t count, std::uint64_t seed);

/// A discrete design space with an evaluation callback. `features` holds one normalized
/// design vector per row; `evaluate(i)` returns the m (maximized) objective values of row i.
struct EvaluableGrid {
    Eigen::MatrixXd features;
    std::size_t objectives = 2;
    std::function<std::vector<double>(std::size_t)> evaluate;
};

struct HistoryRecord {
    std::size_t iteration = 0;
    std::vector<std::size_t> sampled;  // ids evaluated after this iteration's classification
    ClassCounts counts;
    std::size_t total_sampled = 0;
    double beta = 0.0;

    bool operator==(const HistoryRecord&) const = default;
};

/// One JSON object per line: iteration, sampled ids, counts.
std::string history_to_jsonl(const std::vector<HistoryRecord>& history);

/// Fits the per-objective surrogates on the observations, using the state's previous
/// hyperparameters as a warm start.
std::vector<gp::GpModel> fit_models(const Eigen::MatrixXd& features, const std::vector<std::size_t>& ids,
                                    const std::vector<std::vector<double>>& values, std::size_t objectives,
                                    const PalConfig& config, const PalState& state);

PredictionTable predict_grid(const std::vector<gp::GpModel>& models, const Eigen::MatrixXd& features);

struct RoundResult {
    PredictionTable predictions;
    double beta = 0.0;
    std::vector<double> epsilon;
};

/// One refit-predict-intersect-classify pass over the grid. `observations` align with
/// state.sampled_ids. Increments state.iteration.
RoundResult classification_round(const Eigen::MatrixXd& features, const std::vector<std::vector<double>>& observations,
                                 std::size_t objectives, const PalConfig& config, PalState& state);

/// Resumable epsilon-PAL loop. A throwing evaluation callback propagates as EvaluationError,
/// leaving the run at the last consistent state; calling run() again resumes.
class EpalRun {
public:
    EpalRun(EvaluableGrid problem, PalConfig config);

    /// Runs until convergence, budget exhaustion or an evaluation failure.
    void run();
    bool finished() const noexcept { return finished_; }

    const PalState& state() const noexcept { return state_; }
    const std::vector<HistoryRecord>& history() const noexcept { return history_; }
    const std::vector<std::vector<double>>& observations() const noexcept { return observed_; }
    const PalConfig& config() const noexcept { return config_; }

private:
    void evaluate_pending();
    void iterate();

    EvaluableGrid problem_;
    PalConfig config_;
    PalState state_;
    std::vector<HistoryRecord> history_;
    std::vector<std::vector<double>> observed_;  // aligned with state_.sampled_ids
    std::vector<std::size_t> pending_;
    bool seeded_ = false;
    bool finished_ = false;
};

struct RunResult {
    PalState state;
    std::vector<HistoryRecord> history;
    std::vector<std::vector<double>> observations;
};

RunResult run_epal(EvaluableGrid problem, const PalConfig& config);

}  // namespace epal::pal
