#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace epal::gp {

/// Squared-exponential ARD kernel hyperparameters. Targets are standardized before
/// fitting, so `signal_variance` and `noise_variance` live in standardized units.
struct KernelParams {
    double signal_variance = 1.0;
    std::vector<double> lengthscales;
    double noise_variance = 1e-6;

    /// Throws InvalidArgument unless every field is positive (noise may be zero)
    /// and, when `dims` is given, the lengthscale count matches it.
    void validate(std::optional<std::size_t> dims = std::nullopt) const;

    bool operator==(const KernelParams&) const = default;
};

struct Prediction {
    double mean = 0.0;
    double std = 0.0;

    bool operator==(const Prediction&) const = default;
};

/// k(x1, x2) = signal_variance * exp(-0.5 * sum_d ((x1_d - x2_d) / l_d)^2).
double kernel_eval(std::span<const double> x1, std::span<const double> x2, const KernelParams& params);

struct FitConfig {
    int restarts = 4;  // random starts in addition to the default/warm start
    int max_iterations = 80;
    double tolerance = 1e-7;
    std::uint64_t seed = 0;
    double min_lengthscale = 1e-3;
    double max_lengthscale = 1e3;
    double min_noise = 1e-8;
    double max_noise = 1.0;
    double min_signal = 1e-2;
    double max_signal = 1e2;
    std::optional<KernelParams> warm_start;

    bool operator==(const FitConfig&) const = default;
};

struct LogLikelihood {
    double value = 0.0;
    // d value / d log(theta), theta = (signal_variance, lengthscales..., noise_variance)
    std::vector<double> gradient;
};

/// Log marginal likelihood of `targets` (used as given, no standardization) and its
/// gradient with respect to the log hyperparameters.
LogLikelihood log_marginal_likelihood(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                                      const KernelParams& params);

class GpModel {
public:
    const KernelParams& params() const noexcept { return params_; }
    const Eigen::MatrixXd& train_inputs() const noexcept { return inputs_; }
    const Eigen::VectorXd& train_targets() const noexcept { return targets_; }
    const Eigen::MatrixXd& factor() const noexcept { return factor_; }
    const Eigen::VectorXd& alpha() const noexcept { return alpha_; }
    double target_mean() const noexcept { return target_mean_; }
    double target_scale() const noexcept { return target_scale_; }
    double jitter() const noexcept { return jitter_; }
    std::size_t dims() const noexcept { return static_cast<std::size_t>(inputs_.cols()); }
    std::size_t size() const noexcept { return static_cast<std::size_t>(inputs_.rows()); }

    Prediction predict(std::span<const double> query) const;
    std::vector<Prediction> predict_all(const Eigen::MatrixXd& queries) const;

private:
    friend GpModel fit_fixed(const Eigen::MatrixXd&, const Eigen::VectorXd&, const KernelParams&);

    KernelParams params_;
    Eigen::MatrixXd inputs_;
    Eigen::VectorXd targets_;
    Eigen::MatrixXd factor_;
    Eigen::VectorXd alpha_;
    double target_mean_ = 0.0;
    double target_scale_ = 1.0;
    double jitter_ = 0.0;
};

/// Conditions a model on the data with hyperparameters held fixed.
GpModel fit_fixed(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, const KernelParams& params);

/// Maximizes the log marginal likelihood over hyperparameters (projected gradient ascent in
/// log space with backtracking, several seeded starts) and conditions on the data.
GpModel fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, const FitConfig& config = {});

inline Prediction predict(const GpModel& model, std::span<const double> query) { return model.predict(query); }

/// Lower Cholesky factor of `matrix`, retrying with diagonal jitter 1e-10 * trace/n growing
/// tenfold up to 1e-4 * trace/n. Returns the factor and the jitter that was needed.
std::pair<Eigen::MatrixXd, double> cholesky_with_jitter(const Eigen::MatrixXd& matrix);

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& inputs, const KernelParams& params);

}  // namespace epal::gp
