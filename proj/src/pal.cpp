#include "epal/pal.hpp"

#include "epal/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace epal::pal {

std::string_view to_string(Class c) {
    switch (c) {
        case Class::Undecided: return "undecided";
        case Class::ParetoOptimal: return "pareto_optimal";
        case Class::Discarded: return "discarded";
    }
    return "undecided";
}

Class class_from_string(std::string_view name) {
    if (name == "undecided") return Class::Undecided;
    if (name == "pareto_optimal") return Class::ParetoOptimal;
    if (name == "discarded") return Class::Discarded;
    throw InvalidArgument("unknown classification '" + std::string(name) + "'");
}

void PalConfig::validate() const {
    if (epsilon.empty()) throw InvalidArgument("epsilon must not be empty");
    for (double e : epsilon) {
        if (!(e >= 0.0) || !std::isfinite(e)) throw InvalidArgument("epsilon must be nonnegative and finite");
    }
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
    if (!(beta_scale >= 0.0)) throw InvalidArgument("beta_scale must be nonnegative");
    if (batch_size < 1) throw InvalidArgument("batch_size must be positive");
    if (max_evaluations < 0) throw InvalidArgument("max_evaluations must be nonnegative");
    if (initial_samples < 1) throw InvalidArgument("initial_samples must be positive");
}

std::vector<double> PalConfig::epsilon_for(std::size_t objectives) const {
    if (epsilon.size() == 1) return std::vector<double>(objectives, epsilon.front());
    if (epsilon.size() != objectives) throw InvalidArgument("epsilon length does not match objective count");
    return epsilon;
}

ClassCounts PalState::counts() const {
    ClassCounts c;
    for (const auto& cl : classes) {
        switch (cl.cls) {
            case Class::ParetoOptimal: ++c.pareto; break;
            case Class::Discarded: ++c.discarded; break;
            case Class::Undecided: ++c.undecided; break;
        }
    }
    return c;
}

double beta_t(std::size_t iteration, std::size_t n_designs, std::size_t n_objectives, double delta, double scale) {
    if (iteration == 0 || n_designs == 0 || n_objectives == 0) {
        throw InvalidArgument("beta_t: iteration, design and objective counts must be positive");
    }
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("beta_t: delta must lie in (0, 1)");
    const double t = static_cast<double>(iteration);
    const double arg = static_cast<double>(n_objectives) * static_cast<double>(n_designs) *
                       std::numbers::pi * std::numbers::pi * t * t / (6.0 * delta);
    return scale * 2.0 * std::log(arg);
}

RegionUpdate update_regions(const PredictionTable& predictions, double beta,
                            const std::vector<ObjectiveRegion>* previous) {
    if (previous && previous->size() != predictions.size()) {
        throw InvalidArgument("update_regions: previous regions do not cover the grid");
    }
    const double root = std::sqrt(std::max(beta, 0.0));
    RegionUpdate out;
    out.regions.resize(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& p = predictions[i];
        auto& r = out.regions[i];
        r.low.resize(p.size());
        r.high.resize(p.size());
        for (std::size_t j = 0; j < p.size(); ++j) {
            double lo = p[j].mean - root * p[j].std;
            double hi = p[j].mean + root * p[j].std;
            if (previous) {
                const auto& prev = (*previous)[i];
                const double ilo = std::max(lo, prev.low[j]);
                const double ihi = std::min(hi, prev.high[j]);
                if (ilo <= ihi) {
                    lo = ilo;
                    hi = ihi;
                } else {
                    ++out.fallbacks;
                }
            }
            r.low[j] = lo;
            r.high[j] = hi;
        }
    }
    return out;
}

std::vector<ObjectiveRange> ranges_of_means(const PredictionTable& predictions) {
    if (predictions.empty()) return {};
    const std::size_t m = predictions.front().size();
    std::vector<ObjectiveRange> ranges(m, {std::numeric_limits<double>::infinity(),
                                           -std::numeric_limits<double>::infinity()});
    for (const auto& p : predictions) {
        for (std::size_t j = 0; j < m; ++j) {
            ranges[j].min = std::min(ranges[j].min, p[j].mean);
            ranges[j].max = std::max(ranges[j].max, p[j].mean);
        }
    }
    return ranges;
}

bool dominates(std::span<const double> a, std::span<const double> b) {
    bool strict = false;
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (a[j] < b[j]) return false;
        if (a[j] > b[j]) strict = true;
    }
    return strict;
}

std::vector<std::size_t> pareto_front(const std::vector<std::vector<double>>& values) {
    std::vector<std::size_t> front;
    for (std::size_t i = 0; i < values.size(); ++i) {
        bool dominated = false;
        for (std::size_t k = 0; k < values.size() && !dominated; ++k) {
            dominated = k != i && dominates(values[k], values[i]);
        }
        if (!dominated) front.push_back(i);
    }
    return front;
}

std::vector<Classification> classify(const std::vector<ObjectiveRegion>& regions,
                                     const std::vector<double>& epsilon,
                                     const std::vector<ObjectiveRange>& ranges,
                                     const std::vector<Classification>& classes) {
    if (regions.size() != classes.size()) throw InvalidArgument("classify: regions and classes differ in size");
    std::vector<Classification> out = classes;
    if (regions.empty()) return out;
    const std::size_t m = regions.front().low.size();
    if (epsilon.size() != m || ranges.size() != m) throw InvalidArgument("classify: objective count mismatch");

    std::vector<double> slack(m);
    for (std::size_t j = 0; j < m; ++j) slack[j] = epsilon[j] * std::max(ranges[j].width(), 0.0);

    std::vector<std::size_t> alive;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].cls != Class::Discarded) alive.push_back(i);
    }

    // Pessimistic Pareto set: alive points whose lower corner no other alive lower corner dominates.
    // Its members are never discarded, so mutually overlapping points cannot eliminate each other.
    std::vector<std::size_t> pessimistic;
    std::vector<char> in_pessimistic(out.size(), 0);
    for (std::size_t i : alive) {
        bool dominated = false;
        for (std::size_t k : alive) {
            if (k != i && dominates(regions[k].low, regions[i].low)) {
                dominated = true;
                break;
            }
        }
        if (!dominated) {
            pessimistic.push_back(i);
            in_pessimistic[i] = 1;
        }
    }

    std::vector<double> shifted(m);
    for (std::size_t i : alive) {
        if (out[i].cls != Class::Undecided || in_pessimistic[i]) continue;
        for (std::size_t k : pessimistic) {
            for (std::size_t j = 0; j < m; ++j) shifted[j] = regions[k].low[j] + slack[j];
            if (dominates(shifted, regions[i].high)) {
                out[i].cls = Class::Discarded;
                break;
            }
        }
    }

    std::vector<std::size_t> remaining;
    for (std::size_t i : alive) {
        if (out[i].cls != Class::Discarded) remaining.push_back(i);
    }
    for (std::size_t i : remaining) {
        if (out[i].cls != Class::Undecided) continue;
        for (std::size_t j = 0; j < m; ++j) shifted[j] = regions[i].low[j] + slack[j];
        bool challenged = false;
        for (std::size_t k : remaining) {
            if (k != i && dominates(regions[k].high, shifted)) {
                challenged = true;
                break;
            }
        }
        if (!challenged) out[i].cls = Class::ParetoOptimal;
    }
    return out;
}

double normalized_diagonal(const ObjectiveRegion& region, const std::vector<ObjectiveRange>& ranges) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < region.low.size(); ++j) {
        double w = region.high[j] - region.low[j];
        if (j < ranges.size() && ranges[j].width() > 0.0) w /= ranges[j].width();
        d2 += w * w;
    }
    return std::sqrt(d2);
}

Selection select_next(const PalState& state) {
    Selection sel;
    if (state.counts().undecided == 0) {
        sel.converged = true;
        return sel;
    }
    double best = -1.0;
    for (std::size_t i = 0; i < state.classes.size(); ++i) {
        const auto& c = state.classes[i];
        if (c.sampled || c.cls == Class::Discarded) continue;
        const double diag = normalized_diagonal(state.regions[i], state.objective_ranges);
        if (diag > best) {
            best = diag;
            sel.index = i;
        }
    }
    return sel;
}

std::vector<std::size_t> select_batch(const PalState& state, const PredictionTable& predictions,
                                      const std::vector<double>& epsilon, std::size_t batch_size) {
    std::vector<std::size_t> batch;
    PalState fantasy = state;
    while (batch.size() < batch_size) {
        const Selection sel = select_next(fantasy);
        if (!sel.index) break;
        const std::size_t pick = *sel.index;
        batch.push_back(pick);
        if (batch.size() == batch_size) break;
        auto& region = fantasy.regions[pick];
        for (std::size_t j = 0; j < region.low.size(); ++j) {
            const double mu = std::clamp(predictions[pick][j].mean, region.low[j], region.high[j]);
            region.low[j] = region.high[j] = mu;
        }
        fantasy.classes[pick].sampled = true;
        fantasy.classes = classify(fantasy.regions, epsilon, fantasy.objective_ranges, fantasy.classes);
    }
    return batch;
}

std::vector<std::size_t> maximin_seeds(const Eigen::MatrixXd& features, std::size_t count, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(features.rows());
    count = std::min(count, n);
    std::vector<std::size_t> chosen;
    if (count == 0) return chosen;
    std::mt19937_64 rng(seed);
    chosen.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    while (chosen.size() < count) {
        const auto last = static_cast<Eigen::Index>(chosen.back());
        std::size_t best = n;
        double best_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = (features.row(static_cast<Eigen::Index>(i)) - features.row(last)).squaredNorm();
            nearest[i] = std::min(nearest[i], d);
            if (nearest[i] > best_d) {
                best_d = nearest[i];
                best = i;
            }
        }
        chosen.push_back(best);
    }
    return chosen;
}

std::string history_to_jsonl(const std::vector<HistoryRecord>& history) {
    std::ostringstream os;
    for (const auto& h : history) {
        nlohmann::ordered_json j;
        j["iteration"] = h.iteration;
        j["sampled"] = h.sampled;
        j["pareto_optimal"] = h.counts.pareto;
        j["discarded"] = h.counts.discarded;
        j["undecided"] = h.counts.undecided;
        j["total_sampled"] = h.total_sampled;
        j["beta"] = h.beta;
        os << j.dump() << '\n';
    }
    return os.str();
}

std::vector<gp::GpModel> fit_models(const Eigen::MatrixXd& features, const std::vector<std::size_t>& ids,
                                    const std::vector<std::vector<double>>& values, std::size_t objectives,
                                    const PalConfig& config, const PalState& state) {
    if (ids.empty() || ids.size() != values.size()) throw InvalidArgument("fit_models: no observations");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(ids.size()), features.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(ids[r]));
    }
    std::vector<gp::GpModel> models;
    models.reserve(objectives);
    for (std::size_t j = 0; j < objectives; ++j) {
        Eigen::VectorXd y(static_cast<Eigen::Index>(ids.size()));
        for (std::size_t r = 0; r < ids.size(); ++r) y(static_cast<Eigen::Index>(r)) = values[r][j];
        gp::FitConfig fc = config.gp;
        fc.seed = config.seed * 0x9E3779B97F4A7C15ULL + state.iteration * 1000003ULL + j;
        if (j < state.hyperparameters.size()) fc.warm_start = state.hyperparameters[j];
        models.push_back(gp::fit(x, y, fc));
    }
    return models;
}

PredictionTable predict_grid(const std::vector<gp::GpModel>& models, const Eigen::MatrixXd& features) {
    PredictionTable table(static_cast<std::size_t>(features.rows()), std::vector<gp::Prediction>(models.size()));
    for (std::size_t j = 0; j < models.size(); ++j) {
        const auto preds = models[j].predict_all(features);
        for (std::size_t i = 0; i < preds.size(); ++i) table[i][j] = preds[i];
    }
    return table;
}

EpalRun::EpalRun(EvaluableGrid problem, PalConfig config) : problem_(std::move(problem)), config_(std::move(config)) {
    config_.validate();
    if (problem_.objectives < 1) throw InvalidArgument("problem must have at least one objective");
    if (!problem_.evaluate) throw InvalidArgument("problem has no evaluation callback");
    const auto n = static_cast<std::size_t>(problem_.features.rows());
    if (n == 0) throw InvalidArgument("problem grid is empty");
    state_.classes.assign(n, {});
}

void EpalRun::evaluate_pending() {
    while (!pending_.empty()) {
        const std::size_t id = pending_.front();
        std::vector<double> y;
        try {
            y = problem_.evaluate(id);
        } catch (const EvaluationError&) {
            throw;
        } catch (const std::exception& e) {
            throw EvaluationError("evaluation of point " + std::to_string(id) + " failed: " + e.what());
        }
        if (y.size() != problem_.objectives) throw EvaluationError("evaluation returned the wrong objective count");
        state_.sampled_ids.push_back(id);
        state_.classes[id].sampled = true;
        observed_.push_back(std::move(y));
        pending_.erase(pending_.begin());
    }
}

RoundResult classification_round(const Eigen::MatrixXd& features, const std::vector<std::vector<double>>& observations,
                                 std::size_t objectives, const PalConfig& config, PalState& state) {
    const auto n = static_cast<std::size_t>(features.rows());
    if (state.classes.size() != n) throw InvalidArgument("classification_round: state does not match the grid");
    const auto models = fit_models(features, state.sampled_ids, observations, objectives, config, state);

    RoundResult out;
    out.predictions = predict_grid(models, features);
    state.iteration += 1;
    state.hyperparameters.clear();
    for (const auto& model : models) state.hyperparameters.push_back(model.params());
    state.objective_ranges = ranges_of_means(out.predictions);

    out.beta = beta_t(state.iteration, n, objectives, config.delta, config.beta_scale);
    auto update = update_regions(out.predictions, out.beta, state.regions.empty() ? nullptr : &state.regions);
    state.regions = std::move(update.regions);
    state.region_updates += n * objectives;
    state.region_fallbacks += update.fallbacks;

    out.epsilon = config.epsilon_for(objectives);
    state.classes = classify(state.regions, out.epsilon, state.objective_ranges, state.classes);
    return out;
}

void EpalRun::iterate() {
    const auto round = classification_round(problem_.features, observed_, problem_.objectives, config_, state_);
    const auto& eps = round.epsilon;
    const double beta = round.beta;
    const auto& predictions = round.predictions;

    HistoryRecord rec;
    rec.iteration = state_.iteration;
    rec.counts = state_.counts();
    rec.beta = beta;

    const auto budget = static_cast<std::size_t>(config_.max_evaluations);
    const std::size_t used = state_.sampled_ids.size();
    if (state_.converged() || used >= budget) {
        finished_ = true;
    } else {
        const std::size_t room = std::min<std::size_t>(static_cast<std::size_t>(config_.batch_size), budget - used);
        pending_ = select_batch(state_, predictions, eps, room);
        if (pending_.empty()) finished_ = true;
    }
    rec.sampled = pending_;
    rec.total_sampled = used + pending_.size();
    history_.push_back(std::move(rec));
}

void EpalRun::run() {
    if (!seeded_) {
        if (pending_.empty() && state_.sampled_ids.empty()) {
            pending_ = maximin_seeds(problem_.features, static_cast<std::size_t>(config_.initial_samples), config_.seed);
        }
        evaluate_pending();
        seeded_ = true;
    }
    while (!finished_) {
        evaluate_pending();
        iterate();
    }
    evaluate_pending();
}

RunResult run_epal(EvaluableGrid problem, const PalConfig& config) {
    EpalRun run(std::move(problem), config);
    run.run();
    return {run.state(), run.history(), run.observations()};
}

}  // namespace epal::pal
