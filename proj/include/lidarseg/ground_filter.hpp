#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lidarseg/types.hpp"

namespace lidarseg::ground {

struct ClothParams {
    double cell_size = 0.5;          // m
    int rigidness = 3;               // constraint passes per iteration, 1..3
    double gravity_step = 0.065;     // m per iteration
    int iterations = 500;
    double convergence_eps = 0.005;  // m
    double class_threshold = 0.3;    // m

    /// Throws Error(Config) when a field is out of range.
    void validate() const;
};

/// Cloth particles over the inverted cloud, row-major (index = row * width + col).
/// Heights live in the inverted frame (z -> -z).
struct ClothGrid {
    std::size_t width = 0;   // cells along x
    std::size_t depth = 0;   // cells along y
    double origin_x = 0.0;
    double origin_y = 0.0;
    double cell_size = 0.0;
    std::vector<double> heights;
    std::vector<bool> movable;
    std::vector<double> hit_floor;  // -inf where no point falls in the cell
    int iterations_run = 0;

    std::size_t index(std::size_t col, std::size_t row) const { return row * width + col; }
    /// Bilinear cloth height (inverted frame) at an XY location; clamps to the grid.
    double surface_height(double x, double y) const;
};

struct GroundPartition {
    std::vector<std::size_t> ground_indices;     // sorted
    std::vector<std::size_t> nonground_indices;  // sorted
    std::size_t warnings = 0;

    /// Per-point flag view, true where ground.
    std::vector<bool> ground_mask(std::size_t num_points) const;
};

/// Drops a cloth on the inverted cloud and runs the particle simulation.
/// Requires a non-empty cloud.
ClothGrid simulate_cloth(const PointCloud& cloud, const ClothParams& params);

/// Cloth Simulation Filtering. Clouds with fewer than 3 points come back all
/// non-ground with a warning.
GroundPartition csf_filter(const PointCloud& cloud, const ClothParams& params);

/// Cloth as an ASCII PLY mesh in the original (non-inverted) frame.
std::string cloth_to_ply(const ClothGrid& grid);

/// a*x + b*y + c*z + d = 0 with (a, b, c) unit length.
struct Plane {
    double a = 0.0;
    double b = 0.0;
    double c = 1.0;
    double d = 0.0;

    double signed_distance(const Vec3& p) const { return a * p.x + b * p.y + c * p.z + d; }
};

struct RansacResult {
    Plane plane;
    std::vector<std::size_t> inliers;  // sorted
};

RansacResult ransac_plane(const PointCloud& cloud, int iterations, double inlier_threshold, std::uint64_t seed);

GroundPartition partition_by_plane(const PointCloud& cloud, const Plane& plane, double threshold);

/// Builds a partition from a per-point flag vector.
GroundPartition partition_from_mask(const std::vector<bool>& is_ground);

}  // namespace lidarseg::ground
