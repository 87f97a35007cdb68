#include "epal/embed.hpp"

#include "epal/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace epal::embed {

namespace {

constexpr int kBisectionSteps = 64;
constexpr double kMaxSigma = 1e6;
constexpr double kGradientClip = 4.0;

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double clip(double v) { return std::clamp(v, -kGradientClip, kGradientClip); }

// Row indices of `points` other than i, ordered by (distance, index).
std::vector<std::size_t> ranked_neighbors(const Eigen::MatrixXd& points, std::size_t i, std::vector<double>& dist) {
    const auto n = static_cast<std::size_t>(points.rows());
    dist.resize(n);
    const auto row = points.row(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < n; ++j) dist[j] = (points.row(static_cast<Eigen::Index>(j)) - row).norm();
    std::vector<std::size_t> order;
    order.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
        if (j != i) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    return order;
}

}  // namespace

Neighbors knn(const Eigen::MatrixXd& points, std::size_t k) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (k == 0 || k >= n) throw InvalidArgument("knn: k must satisfy 0 < k < n");
    Neighbors out;
    out.indices.resize(n);
    out.distances.resize(n);
    std::vector<double> dist;
    for (std::size_t i = 0; i < n; ++i) {
        auto order = ranked_neighbors(points, i, dist);
        order.resize(k);
        out.indices[i] = order;
        out.distances[i].reserve(k);
        for (std::size_t j : order) out.distances[i].push_back(dist[j]);
    }
    return out;
}

LocalScale smooth_knn(std::span<const double> distances, std::size_t k) {
    LocalScale out;
    if (distances.empty()) return out;
    const auto positive = std::find_if(distances.begin(), distances.end(), [](double d) { return d > 0.0; });
    out.rho = positive == distances.end() ? 0.0 : *positive;

    const double mean = std::accumulate(distances.begin(), distances.end(), 0.0) / static_cast<double>(distances.size());
    const double lo_clamp = std::max(1e-6 * mean, std::numeric_limits<double>::min());
    const double target = std::log2(static_cast<double>(k));
    auto total = [&](double sigma) {
        double s = 0.0;
        for (double d : distances) s += std::exp(-std::max(0.0, d - out.rho) / sigma);
        return s;
    };

    double lo = lo_clamp;
    double hi = kMaxSigma;
    if (total(lo) >= target) {
        out.sigma = lo;
        return out;
    }
    if (total(hi) <= target) {
        out.sigma = hi;
        return out;
    }
    for (int it = 0; it < kBisectionSteps; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (total(mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    out.sigma = 0.5 * (lo + hi);
    return out;
}

double fuzzy_union(double a, double b) { return a + b - a * b; }

NeighborGraph build_graph(const Eigen::MatrixXd& points, std::size_t k) {
    NeighborGraph g;
    g.size = static_cast<std::size_t>(points.rows());
    g.neighbors = knn(points, k);
    g.scales.reserve(g.size);
    std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> directed;
    for (std::size_t i = 0; i < g.size; ++i) {
        const auto scale = smooth_knn(g.neighbors.distances[i], k);
        g.scales.push_back(scale);
        for (std::size_t slot = 0; slot < k; ++slot) {
            const std::size_t j = g.neighbors.indices[i][slot];
            const double w = std::exp(-std::max(0.0, g.neighbors.distances[i][slot] - scale.rho) / scale.sigma);
            auto& entry = directed[{std::min(i, j), std::max(i, j)}];
            (i < j ? entry.first : entry.second) = w;
        }
    }
    g.edges.reserve(directed.size());
    for (const auto& [key, w] : directed) {
        g.edges.push_back({key.first, key.second, std::clamp(fuzzy_union(w.first, w.second), 0.0, 1.0)});
    }
    return g;
}

CurveParams fit_curve(double min_dist, double spread) {
    if (!(min_dist > 0.0 && spread > min_dist)) throw InvalidArgument("fit_curve: requires 0 < min_dist < spread");
    constexpr int kSamples = 300;
    Eigen::VectorXd xs(kSamples);
    Eigen::VectorXd ys(kSamples);
    for (int i = 0; i < kSamples; ++i) {
        const double x = 3.0 * spread * i / (kSamples - 1);
        xs[i] = x;
        ys[i] = x < min_dist ? 1.0 : std::exp(-(x - min_dist) / spread);
    }

    auto residuals = [&](double a, double b, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(kSamples);
        if (jac) jac->resize(kSamples, 2);
        for (int i = 0; i < kSamples; ++i) {
            const double x = xs[i];
            const double p = x > 0.0 ? std::pow(x, 2.0 * b) : 0.0;
            const double den = 1.0 + a * p;
            r[i] = 1.0 / den - ys[i];
            if (jac) {
                (*jac)(i, 0) = -p / (den * den);
                (*jac)(i, 1) = x > 0.0 ? -a * p * 2.0 * std::log(x) / (den * den) : 0.0;
            }
        }
        return r.squaredNorm();
    };

    // Levenberg-Marquardt from (1, 1).
    double a = 1.0;
    double b = 1.0;
    double lambda = 1e-3;
    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    double cost = residuals(a, b, r, &jac);
    for (int it = 0; it < 500; ++it) {
        const Eigen::Matrix2d jtj = jac.transpose() * jac;
        const Eigen::Vector2d jtr = jac.transpose() * r;
        if (jtr.norm() < 1e-14) break;
        Eigen::Matrix2d damped = jtj;
        damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
        const Eigen::Vector2d delta = damped.ldlt().solve(-jtr);
        const double na = a + delta[0];
        const double nb = b + delta[1];
        Eigen::VectorXd trial;
        const double trial_cost = (na > 0.0 && nb > 0.0) ? residuals(na, nb, trial, nullptr)
                                                         : std::numeric_limits<double>::infinity();
        if (trial_cost < cost) {
            const bool done = cost - trial_cost < 1e-16 * std::max(1.0, cost) && delta.norm() < 1e-12;
            a = na;
            b = nb;
            cost = residuals(a, b, r, &jac);
            lambda = std::max(lambda / 10.0, 1e-12);
            if (done) break;
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) break;
        }
    }
    if (!std::isfinite(a) || !std::isfinite(b) || a <= 0.0 || b <= 0.0) {
        throw NumericError("fit_curve: least-squares fit diverged");
    }
    return {a, b};
}

void EmbedConfig::validate() const {
    if (k < 2) throw InvalidArgument("embed: k must be at least 2");
    if (!(min_dist > 0.0 && min_dist < spread)) throw InvalidArgument("embed: requires 0 < min_dist < spread");
    if (negative_samples == 0) throw InvalidArgument("embed: negative_samples must be positive");
    if (curve && !(curve->a > 0.0 && curve->b > 0.0)) throw InvalidArgument("embed: curve parameters must be positive");
}

Embedding embed(const NeighborGraph& graph, const EmbedConfig& config) {
    config.validate();
    const CurveParams curve = config.curve ? *config.curve : fit_curve(config.min_dist, config.spread);
    const double a = curve.a;
    const double b = curve.b;
    const std::size_t n = graph.size;

    std::mt19937_64 rng(config.seed);
    Embedding out;
    out.coordinates.resize(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) {
        out.coordinates(static_cast<Eigen::Index>(i), 0) = -10.0 + 20.0 * unit_uniform(rng);
        out.coordinates(static_cast<Eigen::Index>(i), 1) = -10.0 + 20.0 * unit_uniform(rng);
    }

    double max_w = 0.0;
    for (const auto& e : graph.edges) max_w = std::max(max_w, e.weight);

    // Each undirected edge is sampled in both directions, as the symmetric graph holds both entries.
    struct Directed {
        std::size_t head, tail;
        double period, next, neg_period, next_neg;
    };
    std::vector<Directed> schedule;
    std::vector<bool> connected(n, false);
    const double epochs = static_cast<double>(config.epochs);
    for (const auto& e : graph.edges) {
        if (!(max_w > 0.0) || e.weight < max_w / std::max(epochs, 1.0)) continue;
        const double period = max_w / e.weight;
        const double neg_period = period / static_cast<double>(config.negative_samples);
        schedule.push_back({e.i, e.j, period, period, neg_period, neg_period});
        schedule.push_back({e.j, e.i, period, period, neg_period, neg_period});
        connected[e.i] = connected[e.j] = true;
    }
    out.isolated_points = static_cast<std::size_t>(std::count(connected.begin(), connected.end(), false));

    auto& y = out.coordinates;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double alpha = 1.0 - static_cast<double>(epoch) / epochs;
        const double now = static_cast<double>(epoch);
        for (auto& s : schedule) {
            if (s.next > now) continue;
            const auto h = static_cast<Eigen::Index>(s.head);
            const auto t = static_cast<Eigen::Index>(s.tail);
            double dx = y(h, 0) - y(t, 0);
            double dy = y(h, 1) - y(t, 1);
            double d2 = dx * dx + dy * dy;
            if (d2 > 0.0) {
                const double coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
                const double gx = clip(coeff * dx) * alpha;
                const double gy = clip(coeff * dy) * alpha;
                y(h, 0) += gx;
                y(h, 1) += gy;
                y(t, 0) -= gx;
                y(t, 1) -= gy;
            }
            s.next += s.period;

            const auto negatives = static_cast<std::size_t>((now - s.next_neg) / s.neg_period);
            for (std::size_t p = 0; p < negatives; ++p) {
                const auto other = static_cast<Eigen::Index>(rng() % n);
                if (other == h) continue;
                dx = y(h, 0) - y(other, 0);
                dy = y(h, 1) - y(other, 1);
                d2 = dx * dx + dy * dy;
                if (d2 > 0.0) {
                    const double coeff = 2.0 * b / ((0.001 + d2) * (a * std::pow(d2, b) + 1.0));
                    y(h, 0) += clip(coeff * dx) * alpha;
                    y(h, 1) += clip(coeff * dy) * alpha;
                } else {
                    y(h, 0) += kGradientClip * alpha;
                    y(h, 1) += kGradientClip * alpha;
                }
            }
            s.next_neg += static_cast<double>(negatives) * s.neg_period;
        }
    }
    return out;
}

Embedding embed_points(const Eigen::MatrixXd& points, const EmbedConfig& config) {
    config.validate();
    return embed(build_graph(points, config.k), config);
}

double trustworthiness(const Eigen::MatrixXd& original, const Eigen::MatrixXd& embedded, std::size_t k) {
    const auto n = static_cast<std::size_t>(original.rows());
    if (static_cast<std::size_t>(embedded.rows()) != n) throw InvalidArgument("trustworthiness: row count mismatch");
    if (k == 0 || 2 * k >= n) throw InvalidArgument("trustworthiness: requires 0 < k < n / 2");

    std::vector<double> dist;
    std::vector<std::size_t> rank(n);
    double penalty = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto orig = ranked_neighbors(original, i, dist);
        for (std::size_t r = 0; r < orig.size(); ++r) rank[orig[r]] = r + 1;
        const auto emb = ranked_neighbors(embedded, i, dist);
        for (std::size_t r = 0; r < k; ++r) {
            const std::size_t j = emb[r];
            if (rank[j] > k) penalty += static_cast<double>(rank[j] - k);
        }
    }
    const double nd = static_cast<double>(n);
    const double kd = static_cast<double>(k);
    const double t = 1.0 - 2.0 / (nd * kd * (2.0 * nd - 3.0 * kd - 1.0)) * penalty;
    return std::clamp(t, 0.0, 1.0);
}

std::vector<double> label_agreement(const Eigen::MatrixXd& embedded, std::span<const int> labels, std::size_t k) {
    const auto n = static_cast<std::size_t>(embedded.rows());
    if (labels.size() != n) throw InvalidArgument("label_agreement: label count mismatch");
    const auto nb = knn(embedded, k);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t same = 0;
        for (std::size_t j : nb.indices[i]) same += labels[j] == labels[i] ? 1 : 0;
        out[i] = static_cast<double>(same) / static_cast<double>(k);
    }
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) throw InvalidArgument("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size() / 2;
    return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

std::string to_csv(const Embedding& embedding) {
    std::ostringstream os;
    os.precision(17);
    os << "id,x,y\n";
    for (Eigen::Index i = 0; i < embedding.coordinates.rows(); ++i) {
        os << i << ',' << embedding.coordinates(i, 0) << ',' << embedding.coordinates(i, 1) << '\n';
    }
    return os.str();
}

}  // namespace epal::embed
