#include "epal/embed.hpp"
#include "epal/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace epal;

namespace {

Eigen::MatrixXd uniform_points(std::uint64_t seed, Eigen::Index n, Eigen::Index d) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = u(rng);
    return x;
}

// Squared-error of 1 / (1 + a x^(2b)) against the target curve on the fitting grid.
double curve_residual(double a, double b, double min_dist, double spread) {
    double r = 0.0;
    for (int i = 0; i < 300; ++i) {
        const double x = 3.0 * spread * i / 299.0;
        const double target = x < min_dist ? 1.0 : std::exp(-(x - min_dist) / spread);
        const double model = 1.0 / (1.0 + a * std::pow(x, 2.0 * b));
        r += (model - target) * (model - target);
    }
    return r;
}

}  // namespace

TEST_CASE("knn matches an exhaustive sort with index tie-breaks") {
    const auto x = uniform_points(1, 80, 3);
    const auto nb = embed::knn(x, 7);
    for (Eigen::Index i = 0; i < 80; ++i) {
        std::vector<std::pair<double, std::size_t>> all;
        for (Eigen::Index j = 0; j < 80; ++j) {
            if (j != i) all.push_back({(x.row(i) - x.row(j)).norm(), static_cast<std::size_t>(j)});
        }
        std::sort(all.begin(), all.end());
        for (std::size_t s = 0; s < 7; ++s) {
            CHECK(nb.indices[static_cast<std::size_t>(i)][s] == all[s].second);
            CHECK(nb.distances[static_cast<std::size_t>(i)][s] == doctest::Approx(all[s].first).epsilon(1e-12));
        }
    }
    Eigen::MatrixXd ties(4, 1);
    ties << 0.0, 1.0, -1.0, 5.0;
    CHECK(embed::knn(ties, 2).indices[0] == std::vector<std::size_t>{1, 2});
    CHECK_THROWS_AS(embed::knn(ties, 4), InvalidArgument);
    CHECK_THROWS_AS(embed::knn(ties, 0), InvalidArgument);
}

TEST_CASE("smooth_knn solves the log2(k) equation") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> d(15);
        for (double& v : d) v = u(rng);
        std::sort(d.begin(), d.end());
        const auto s = embed::smooth_knn(d, 15);
        CHECK(s.rho == d.front());
        double total = 0.0;
        for (double v : d) total += std::exp(-std::max(0.0, v - s.rho) / s.sigma);
        CHECK(total == doctest::Approx(std::log2(15.0)).epsilon(1e-9));
    }
}

TEST_CASE("fuzzy union is the probabilistic t-conorm") {
    CHECK(embed::fuzzy_union(0.5, 0.5) == doctest::Approx(0.75));
    CHECK(embed::fuzzy_union(1.0, 0.3) == doctest::Approx(1.0));
    CHECK(embed::fuzzy_union(0.0, 0.3) == doctest::Approx(0.3));
}

TEST_CASE("graph edges are symmetric, sorted and weighted in (0, 1]") {
    const auto g = embed::build_graph(uniform_points(3, 60, 2), 5);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        CHECK(g.edges[e].i < g.edges[e].j);
        CHECK(g.edges[e].weight > 0.0);
        CHECK(g.edges[e].weight <= 1.0);
        if (e > 0) CHECK(std::pair(g.edges[e - 1].i, g.edges[e - 1].j) < std::pair(g.edges[e].i, g.edges[e].j));
    }
}

TEST_CASE("curve fit reproduces the frozen least-squares solution") {
    const auto c = embed::fit_curve(0.1, 1.0);
    CHECK(c.a == doctest::Approx(1.576943614).epsilon(1e-6));
    CHECK(c.b == doctest::Approx(0.8950607194).epsilon(1e-6));
    CHECK(1.0 / (1.0 + c.a * std::pow(0.0, 2.0 * c.b)) >= 0.99);
    // No point of a coarse grid around the solution fits better.
    const double best = curve_residual(c.a, c.b, 0.1, 1.0);
    for (double a = 1.3; a <= 1.9; a += 0.01)
        for (double b = 0.7; b <= 1.1; b += 0.005) CHECK(curve_residual(a, b, 0.1, 1.0) >= best - 1e-12);
    CHECK_THROWS_AS(embed::fit_curve(1.0, 1.0), InvalidArgument);
}

TEST_CASE("separated blobs stay separated and layouts repeat per seed") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd x(100, 3);
    for (Eigen::Index i = 0; i < 100; ++i)
        for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = n(rng) + (i < 50 && j == 0 ? 20.0 : 0.0);
    embed::EmbedConfig cfg;
    cfg.k = 10;
    cfg.epochs = 300;
    cfg.seed = 9;
    const auto e = embed::embed_points(x, cfg);
    CHECK(e.coordinates == embed::embed_points(x, cfg).coordinates);
    const Eigen::RowVector2d c0 = e.coordinates.topRows(50).colwise().mean();
    const Eigen::RowVector2d c1 = e.coordinates.bottomRows(50).colwise().mean();
    double radius = 0.0;
    for (Eigen::Index i = 0; i < 100; ++i) radius += (e.coordinates.row(i) - (i < 50 ? c0 : c1)).norm();
    radius /= 100.0;
    CHECK((c0 - c1).norm() > 3.0 * radius);
}

TEST_CASE("zero epochs leave the seeded initialization in place") {
    embed::EmbedConfig cfg;
    cfg.k = 5;
    cfg.epochs = 0;
    cfg.seed = 3;
    const auto a = embed::embed_points(uniform_points(7, 40, 3), cfg);
    const auto b = embed::embed_points(uniform_points(8, 40, 5), cfg);  // layout ignores the graph
    CHECK(a.coordinates == b.coordinates);
    CHECK(a.coordinates.cwiseAbs().maxCoeff() <= 10.0);
    cfg.epochs = 50;
    CHECK_FALSE(embed::embed_points(uniform_points(7, 40, 3), cfg).coordinates == a.coordinates);
}

TEST_CASE("a larger min_dist fits a smaller a") {
    CHECK(embed::fit_curve(0.5, 1.0).a < embed::fit_curve(0.1, 1.0).a);
}

TEST_CASE("trustworthiness is one for an isometric copy and drops for noise") {
    const auto x = uniform_points(5, 120, 2);
    CHECK(embed::trustworthiness(x, x * 3.0, 5) == doctest::Approx(1.0));
    CHECK(embed::trustworthiness(x, uniform_points(6, 120, 2), 5) < 0.8);
    CHECK_THROWS_AS(embed::trustworthiness(x, x, 60), InvalidArgument);
}

TEST_CASE("trustworthiness of a shuffled layout sits near the random baseline") {
    const auto x = uniform_points(9, 200, 2);
    std::vector<Eigen::Index> order(200);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(10);
    std::shuffle(order.begin(), order.end(), rng);
    Eigen::MatrixXd shuffled(200, 2);
    for (Eigen::Index i = 0; i < 200; ++i) shuffled.row(i) = x.row(order[static_cast<std::size_t>(i)]);
    const double t = embed::trustworthiness(x, shuffled, 15);
    CHECK(t >= 0.0);
    CHECK(t == doctest::Approx(0.5086).epsilon(0.01));
}

TEST_CASE("label agreement and median") {
    Eigen::MatrixXd e(6, 2);
    e << 0, 0, 0.1, 0, 0.2, 0, 10, 0, 10.1, 0, 10.2, 0;
    const std::vector<int> labels{1, 1, 1, 2, 2, 2};
    for (double v : embed::label_agreement(e, labels, 2)) CHECK(v == 1.0);
    CHECK(embed::median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(embed::median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK_THROWS_AS(embed::median({}), InvalidArgument);
}

TEST_CASE("config validation") {
    embed::EmbedConfig c;
    c.k = 1;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.min_dist = 2.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}
