#include "epal/gp.hpp"

#include "epal/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace epal::gp {

void KernelParams::validate(std::optional<std::size_t> dims) const {
    if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
        throw InvalidArgument("signal_variance must be positive and finite");
    }
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
        throw InvalidArgument("noise_variance must be nonnegative and finite");
    }
    if (lengthscales.empty()) throw InvalidArgument("lengthscales must not be empty");
    for (double l : lengthscales) {
        if (!(l > 0.0)) throw InvalidArgument("lengthscales must be positive");
    }
    if (dims && *dims != lengthscales.size()) {
        throw InvalidArgument("lengthscale count " + std::to_string(lengthscales.size()) +
                              " does not match input dimensionality " + std::to_string(*dims));
    }
}

double kernel_eval(std::span<const double> x1, std::span<const double> x2, const KernelParams& params) {
    if (x1.size() != x2.size() || x1.size() != params.lengthscales.size()) {
        throw InvalidArgument("kernel_eval: dimension mismatch");
    }
    double r2 = 0.0;
    for (std::size_t d = 0; d < x1.size(); ++d) {
        const double z = (x1[d] - x2[d]) / params.lengthscales[d];
        r2 += z * z;
    }
    return params.signal_variance * std::exp(-0.5 * r2);
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& inputs, const KernelParams& params) {
    const Eigen::Index n = inputs.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = params.signal_variance;
        for (Eigen::Index j = 0; j < i; ++j) {
            double r2 = 0.0;
            for (Eigen::Index d = 0; d < inputs.cols(); ++d) {
                const double z = (inputs(i, d) - inputs(j, d)) / params.lengthscales[d];
                r2 += z * z;
            }
            k(i, j) = k(j, i) = params.signal_variance * std::exp(-0.5 * r2);
        }
    }
    return k;
}

std::pair<Eigen::MatrixXd, double> cholesky_with_jitter(const Eigen::MatrixXd& matrix) {
    const double n = static_cast<double>(matrix.rows());
    const double scale = std::max(matrix.trace() / n, std::numeric_limits<double>::min());
    double jitter = 0.0;
    for (;;) {
        Eigen::MatrixXd m = matrix;
        m.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        if (llt.info() == Eigen::Success) return {llt.matrixL(), jitter};
        jitter = (jitter == 0.0) ? 1e-10 * scale : jitter * 10.0;
        if (jitter > 1e-4 * scale * (1.0 + 1e-9)) {
            throw NumericError("Cholesky factorization failed after maximum jitter");
        }
    }
}

namespace {

// Solves (L L^T) x = b for lower-triangular L.
template <typename Rhs>
Rhs cholesky_solve(const Eigen::MatrixXd& lower, Rhs b) {
    lower.triangularView<Eigen::Lower>().solveInPlace(b);
    lower.transpose().triangularView<Eigen::Upper>().solveInPlace(b);
    return b;
}

void check_training_data(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets) {
    if (inputs.rows() < 1) throw InvalidArgument("at least one training sample is required");
    if (inputs.rows() != targets.size()) throw InvalidArgument("inputs and targets differ in length");
    if (!inputs.allFinite() || !targets.allFinite()) throw InvalidArgument("training data must be finite");
}

struct Standardized {
    Eigen::VectorXd values;
    double mean = 0.0;
    double scale = 1.0;
};

Standardized standardize(const Eigen::VectorXd& y) {
    Standardized s;
    s.mean = y.mean();
    const double var = (y.array() - s.mean).square().mean();
    const double sd = std::sqrt(var);
    s.scale = (sd > 1e-12 * std::max(1.0, std::abs(s.mean))) ? sd : 1.0;
    s.values = (y.array() - s.mean) / s.scale;
    return s;
}

std::vector<double> to_log(const KernelParams& p) {
    std::vector<double> theta;
    theta.reserve(p.lengthscales.size() + 2);
    theta.push_back(std::log(p.signal_variance));
    for (double l : p.lengthscales) theta.push_back(std::log(l));
    theta.push_back(std::log(p.noise_variance));
    return theta;
}

KernelParams from_log(const std::vector<double>& theta) {
    KernelParams p;
    p.signal_variance = std::exp(theta.front());
    p.lengthscales.reserve(theta.size() - 2);
    for (std::size_t i = 1; i + 1 < theta.size(); ++i) p.lengthscales.push_back(std::exp(theta[i]));
    p.noise_variance = std::exp(theta.back());
    return p;
}

struct Bounds {
    std::vector<double> lo, hi;

    void project(std::vector<double>& theta) const {
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = std::clamp(theta[i], lo[i], hi[i]);
    }
};

Bounds log_bounds(const FitConfig& c, std::size_t dims) {
    Bounds b;
    b.lo.push_back(std::log(c.min_signal));
    b.hi.push_back(std::log(c.max_signal));
    for (std::size_t d = 0; d < dims; ++d) {
        b.lo.push_back(std::log(c.min_lengthscale));
        b.hi.push_back(std::log(c.max_lengthscale));
    }
    b.lo.push_back(std::log(c.min_noise));
    b.hi.push_back(std::log(c.max_noise));
    return b;
}

// Returns -inf when the covariance cannot be factorized.
LogLikelihood safe_lml(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& theta) {
    try {
        return log_marginal_likelihood(x, y, from_log(theta));
    } catch (const NumericError&) {
        return {-std::numeric_limits<double>::infinity(), std::vector<double>(theta.size(), 0.0)};
    }
}

std::pair<std::vector<double>, double> ascend(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                              std::vector<double> theta, const Bounds& bounds,
                                              const FitConfig& config) {
    bounds.project(theta);
    LogLikelihood cur = safe_lml(x, y, theta);
    if (!std::isfinite(cur.value)) return {theta, cur.value};
    double step = 0.1;
    for (int it = 0; it < config.max_iterations; ++it) {
        bool accepted = false;
        for (int halving = 0; halving < 40; ++halving) {
            std::vector<double> trial = theta;
            for (std::size_t i = 0; i < trial.size(); ++i) trial[i] += step * cur.gradient[i];
            bounds.project(trial);
            double predicted = 0.0;
            double moved = 0.0;
            for (std::size_t i = 0; i < trial.size(); ++i) {
                predicted += cur.gradient[i] * (trial[i] - theta[i]);
                moved = std::max(moved, std::abs(trial[i] - theta[i]));
            }
            if (moved < 1e-12) break;
            LogLikelihood next = safe_lml(x, y, trial);
            if (std::isfinite(next.value) && next.value >= cur.value + 1e-4 * predicted) {
                const double gain = next.value - cur.value;
                theta = std::move(trial);
                cur = std::move(next);
                step *= 2.0;
                accepted = gain > config.tolerance * (1.0 + std::abs(cur.value));
                if (!accepted) return {theta, cur.value};
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
    }
    return {theta, cur.value};
}

}  // namespace

LogLikelihood log_marginal_likelihood(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                                      const KernelParams& params) {
    check_training_data(inputs, targets);
    params.validate(static_cast<std::size_t>(inputs.cols()));
    const Eigen::Index n = inputs.rows();
    const Eigen::Index dims = inputs.cols();

    const Eigen::MatrixXd kf = kernel_matrix(inputs, params);
    Eigen::MatrixXd k = kf;
    k.diagonal().array() += params.noise_variance;
    auto [factor, jitter] = cholesky_with_jitter(k);
    (void)jitter;

    const Eigen::VectorXd alpha = cholesky_solve(factor, Eigen::VectorXd(targets));

    LogLikelihood out;
    out.value = -0.5 * targets.dot(alpha) - factor.diagonal().array().log().sum() -
                0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

    const Eigen::MatrixXd kinv = cholesky_solve(factor, Eigen::MatrixXd(Eigen::MatrixXd::Identity(n, n)));
    const Eigen::MatrixXd w = alpha * alpha.transpose() - kinv;

    out.gradient.assign(static_cast<std::size_t>(dims) + 2, 0.0);
    out.gradient[0] = 0.5 * (w.array() * kf.array()).sum();
    for (Eigen::Index d = 0; d < dims; ++d) {
        const double l2 = params.lengthscales[d] * params.lengthscales[d];
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < i; ++j) {
                const double diff = inputs(i, d) - inputs(j, d);
                acc += 2.0 * w(i, j) * kf(i, j) * diff * diff / l2;
            }
        }
        out.gradient[static_cast<std::size_t>(d) + 1] = 0.5 * acc;
    }
    out.gradient.back() = 0.5 * params.noise_variance * w.trace();
    return out;
}

GpModel fit_fixed(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, const KernelParams& params) {
    check_training_data(inputs, targets);
    params.validate(static_cast<std::size_t>(inputs.cols()));

    GpModel model;
    const Standardized s = standardize(targets);
    model.params_ = params;
    model.inputs_ = inputs;
    model.targets_ = targets;
    model.target_mean_ = s.mean;
    model.target_scale_ = s.scale;

    Eigen::MatrixXd k = kernel_matrix(inputs, params);
    k.diagonal().array() += params.noise_variance;
    std::tie(model.factor_, model.jitter_) = cholesky_with_jitter(k);
    model.alpha_ = cholesky_solve(model.factor_, s.values);
    return model;
}

GpModel fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, const FitConfig& config) {
    check_training_data(inputs, targets);
    const auto dims = static_cast<std::size_t>(inputs.cols());
    if (dims == 0) throw InvalidArgument("inputs must have at least one dimension");
    const Standardized s = standardize(targets);
    const Bounds bounds = log_bounds(config, dims);

    std::vector<std::vector<double>> starts;
    if (config.warm_start) {
        config.warm_start->validate(dims);
        KernelParams warm = *config.warm_start;
        warm.noise_variance = std::max(warm.noise_variance, config.min_noise);
        starts.push_back(to_log(warm));
    } else {
        starts.push_back(to_log(KernelParams{1.0, std::vector<double>(dims, 0.5), 1e-2}));
    }
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto log_uniform = [&](double lo, double hi) { return std::log(lo) + unit(rng) * (std::log(hi) - std::log(lo)); };
    for (int r = 0; r < config.restarts; ++r) {
        std::vector<double> theta;
        theta.push_back(log_uniform(0.3, 3.0));
        for (std::size_t d = 0; d < dims; ++d) theta.push_back(log_uniform(0.05, 5.0));
        theta.push_back(log_uniform(1e-6, 1e-1));
        starts.push_back(std::move(theta));
    }

    std::vector<double> best;
    double best_value = -std::numeric_limits<double>::infinity();
    for (auto& start : starts) {
        auto [theta, value] = ascend(inputs, s.values, start, bounds, config);
        if (value > best_value) {
            best_value = value;
            best = std::move(theta);
        }
    }
    if (best.empty()) throw NumericError("hyperparameter search found no factorizable covariance");
    return fit_fixed(inputs, targets, from_log(best));
}

Prediction GpModel::predict(std::span<const double> query) const {
    if (query.size() != dims()) throw InvalidArgument("predict: query dimensionality mismatch");
    const Eigen::Index n = inputs_.rows();
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double r2 = 0.0;
        for (Eigen::Index d = 0; d < inputs_.cols(); ++d) {
            const double z = (query[static_cast<std::size_t>(d)] - inputs_(i, d)) / params_.lengthscales[d];
            r2 += z * z;
        }
        k(i) = params_.signal_variance * std::exp(-0.5 * r2);
    }
    const Eigen::VectorXd v = factor_.triangularView<Eigen::Lower>().solve(k);
    const double var = std::max(0.0, params_.signal_variance - v.squaredNorm());
    return {target_mean_ + target_scale_ * k.dot(alpha_), target_scale_ * std::sqrt(var)};
}

std::vector<Prediction> GpModel::predict_all(const Eigen::MatrixXd& queries) const {
    if (static_cast<std::size_t>(queries.cols()) != dims()) {
        throw InvalidArgument("predict_all: query dimensionality mismatch");
    }
    const Eigen::Index n = inputs_.rows();
    const Eigen::Index q = queries.rows();
    Eigen::MatrixXd kq(n, q);
    for (Eigen::Index j = 0; j < q; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double r2 = 0.0;
            for (Eigen::Index d = 0; d < inputs_.cols(); ++d) {
                const double z = (queries(j, d) - inputs_(i, d)) / params_.lengthscales[d];
                r2 += z * z;
            }
            kq(i, j) = params_.signal_variance * std::exp(-0.5 * r2);
        }
    }
    const Eigen::VectorXd means = kq.transpose() * alpha_;
    factor_.triangularView<Eigen::Lower>().solveInPlace(kq);
    const Eigen::VectorXd reduction = kq.colwise().squaredNorm().transpose();

    std::vector<Prediction> out(static_cast<std::size_t>(q));
    for (Eigen::Index j = 0; j < q; ++j) {
        const double var = std::max(0.0, params_.signal_variance - reduction(j));
        out[static_cast<std::size_t>(j)] = {target_mean_ + target_scale_ * means(j),
                                            target_scale_ * std::sqrt(var)};
    }
    return out;
}

}  // namespace epal::gp
