#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace epal::campaign {

/// Spin-coating design space: PVP10/PVP40/PVP360 mixture on a simplex lattice, crossed
/// with spin-speed and ethanol-dilution levels.
struct GridConfig {
    double simplex_step = 1.0 / 9.0;
    std::vector<double> spin_speeds{1000.0, 2000.0, 4000.0, 6000.0, 8000.0};  // rpm
    std::vector<double> dilutions{0.0, 0.25, 0.5, 0.75, 1.0};

    /// Number of lattice steps per unit; throws InvalidArgument unless the step divides 1.
    int divisions() const;
    void validate() const;

    bool operator==(const GridConfig&) const = default;
};

struct DesignPoint {
    std::size_t id = 0;
    double c_pvp10 = 0.0;
    double c_pvp40 = 0.0;
    double c_pvp360 = 0.0;
    double spin_speed = 0.0;
    double dilution = 0.0;
    std::size_t composition_index = 0;
    std::size_t speed_index = 0;
    std::size_t dilution_index = 0;

    bool operator==(const DesignPoint&) const = default;
};

/// Cartesian product of simplex compositions, speeds and dilutions. Ids run with the
/// composition fastest, then dilution, then speed, so each (speed, dilution) block is a
/// contiguous ternary triangle.
std::vector<DesignPoint> build_grid(const GridConfig& config);

std::size_t composition_count(int divisions);

/// Normalized design vectors: concentrations as-is, speed and dilution mapped to [0, 1]
/// over the configured level range.
Eigen::MatrixXd design_features(const std::vector<DesignPoint>& points, const GridConfig& config);

}  // namespace epal::campaign
