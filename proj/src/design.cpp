#include "epal/design.hpp"

#include "epal/error.hpp"

#include <algorithm>
#include <cmath>

namespace epal::campaign {

int GridConfig::divisions() const {
    if (!(simplex_step > 0.0) || simplex_step > 1.0) throw InvalidArgument("simplex step must lie in (0, 1]");
    const double inv = 1.0 / simplex_step;
    const double rounded = std::round(inv);
    if (std::abs(rounded * simplex_step - 1.0) > 1e-9) {
        throw InvalidArgument("simplex step must divide 1 evenly");
    }
    return static_cast<int>(rounded);
}

void GridConfig::validate() const {
    (void)divisions();
    if (spin_speeds.empty()) throw InvalidArgument("spin speed level set is empty");
    if (dilutions.empty()) throw InvalidArgument("dilution level set is empty");
    for (double s : spin_speeds) {
        if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("spin speeds must be positive");
    }
    for (double d : dilutions) {
        if (!(d >= 0.0 && d <= 1.0)) throw InvalidArgument("dilutions must lie in [0, 1]");
    }
}

std::size_t composition_count(int divisions) {
    const auto n = static_cast<std::size_t>(divisions);
    return (n + 1) * (n + 2) / 2;
}

std::vector<DesignPoint> build_grid(const GridConfig& config) {
    config.validate();
    const int n = config.divisions();
    struct Mix {
        int a, b, c;
    };
    std::vector<Mix> mixes;
    for (int a = n; a >= 0; --a) {
        for (int b = n - a; b >= 0; --b) mixes.push_back({a, b, n - a - b});
    }

    std::vector<DesignPoint> points;
    points.reserve(mixes.size() * config.spin_speeds.size() * config.dilutions.size());
    const double dn = static_cast<double>(n);
    for (std::size_t s = 0; s < config.spin_speeds.size(); ++s) {
        for (std::size_t d = 0; d < config.dilutions.size(); ++d) {
            for (std::size_t c = 0; c < mixes.size(); ++c) {
                DesignPoint p;
                p.id = points.size();
                p.c_pvp10 = mixes[c].a / dn;
                p.c_pvp40 = mixes[c].b / dn;
                p.c_pvp360 = mixes[c].c / dn;
                p.spin_speed = config.spin_speeds[s];
                p.dilution = config.dilutions[d];
                p.composition_index = c;
                p.speed_index = s;
                p.dilution_index = d;
                points.push_back(p);
            }
        }
    }
    return points;
}

Eigen::MatrixXd design_features(const std::vector<DesignPoint>& points, const GridConfig& config) {
    auto unit = [](const std::vector<double>& levels) {
        const auto [lo, hi] = std::minmax_element(levels.begin(), levels.end());
        return std::pair{*lo, *hi - *lo};
    };
    const auto [s0, sw] = unit(config.spin_speeds);
    const auto [d0, dw] = unit(config.dilutions);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(points.size()), 5);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        const auto r = static_cast<Eigen::Index>(i);
        x(r, 0) = p.c_pvp10;
        x(r, 1) = p.c_pvp40;
        x(r, 2) = p.c_pvp360;
        x(r, 3) = sw > 0.0 ? (p.spin_speed - s0) / sw : 0.0;
        x(r, 4) = dw > 0.0 ? (p.dilution - d0) / dw : 0.0;
    }
    return x;
}

}  // namespace epal::campaign
