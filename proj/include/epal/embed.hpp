#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace epal::embed {

/// Exact k nearest neighbors per point, ascending by distance, ties by lower index.
struct Neighbors {
    std::vector<std::vector<std::size_t>> indices;
    std::vector<std::vector<double>> distances;
};

/// Brute-force Euclidean k-NN over the rows of `points`. Throws InvalidArgument if k >= n or k == 0.
Neighbors knn(const Eigen::MatrixXd& points, std::size_t k);

struct LocalScale {
    double rho = 0.0;
    double sigma = 1.0;
};

/// rho is the smallest positive distance; sigma solves sum_j exp(-max(0, d_j - rho) / sigma) = log2(k)
/// by 64 bisection steps, clamped to [1e-6 * mean distance, 1e6].
LocalScale smooth_knn(std::span<const double> distances, std::size_t k);

/// Probabilistic t-conorm a + b - a * b.
double fuzzy_union(double a, double b);

struct Edge {
    std::size_t i = 0;  // i < j
    std::size_t j = 0;
    double weight = 0.0;
};

struct NeighborGraph {
    std::size_t size = 0;
    Neighbors neighbors;
    std::vector<LocalScale> scales;
    std::vector<Edge> edges;  // symmetrized, sorted by (i, j)
};

NeighborGraph build_graph(const Eigen::MatrixXd& points, std::size_t k);

struct CurveParams {
    double a = 0.0;
    double b = 0.0;

    bool operator==(const CurveParams&) const = default;
};

/// Least-squares fit of 1 / (1 + a x^(2b)) to the min_dist/spread target on [0, 3 spread].
/// Throws InvalidArgument unless 0 < min_dist < spread; NumericError if the fit diverges.
CurveParams fit_curve(double min_dist, double spread);

struct EmbedConfig {
    std::size_t k = 15;
    double min_dist = 0.1;
    double spread = 1.0;
    std::size_t epochs = 500;
    std::size_t negative_samples = 5;
    std::uint64_t seed = 0;
    std::optional<CurveParams> curve;  // fitted from min_dist/spread when absent

    void validate() const;

    bool operator==(const EmbedConfig&) const = default;
};

struct Embedding {
    Eigen::MatrixXd coordinates;     // n x 2, row i is grid point i
    std::size_t isolated_points = 0;  // points without edges; left at their initial position
};

Embedding embed(const NeighborGraph& graph, const EmbedConfig& config);

/// Graph construction followed by layout.
Embedding embed_points(const Eigen::MatrixXd& points, const EmbedConfig& config);

/// Rank-penalty trustworthiness in [0, 1]. Requires matching row counts and k < n / 2.
double trustworthiness(const Eigen::MatrixXd& original, const Eigen::MatrixXd& embedded, std::size_t k);

/// For every point, the fraction of its k nearest embedded neighbors carrying the same label.
std::vector<double> label_agreement(const Eigen::MatrixXd& embedded, std::span<const int> labels, std::size_t k);

double median(std::vector<double> values);

/// "id,x,y" rows with a header line.
std::string to_csv(const Embedding& embedding);

}  // namespace epal::embed
