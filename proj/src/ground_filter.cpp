#include "lidarseg/ground_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "lidarseg/error.hpp"
#include "lidarseg/features.hpp"
#include "text_util.hpp"

namespace lidarseg::ground {

namespace {

constexpr double kNoFloor = -std::numeric_limits<double>::infinity();

// One internal constraint between particles a and b.
void satisfy_constraint(ClothGrid& g, std::size_t a, std::size_t b) {
    const bool ma = g.movable[a];
    const bool mb = g.movable[b];
    if (!ma && !mb) return;
    const double diff = g.heights[b] - g.heights[a];
    if (ma && mb) {
        g.heights[a] += 0.25 * diff;
        g.heights[b] -= 0.25 * diff;
    } else if (ma) {
        g.heights[a] += 0.5 * diff;
    } else {
        g.heights[b] -= 0.5 * diff;
    }
}

}  // namespace

void ClothParams::validate() const {
    if (!(cell_size > 0.0)) throw Error(ErrorCode::Config, "cloth cell_size must be > 0");
    if (rigidness < 1 || rigidness > 3) throw Error(ErrorCode::Config, "cloth rigidness must be 1, 2 or 3");
    if (!(gravity_step > 0.0)) throw Error(ErrorCode::Config, "cloth gravity_step must be > 0");
    if (iterations < 1) throw Error(ErrorCode::Config, "cloth iterations must be >= 1");
    if (!(convergence_eps >= 0.0)) throw Error(ErrorCode::Config, "cloth convergence_eps must be >= 0");
    if (!(class_threshold > 0.0)) throw Error(ErrorCode::Config, "cloth class_threshold must be > 0");
}

double ClothGrid::surface_height(double x, double y) const {
    const auto axis = [&](double coord, double origin, std::size_t count, std::size_t& i0, double& frac) {
        double u = (coord - origin) / cell_size;
        const double max_u = static_cast<double>(count - 1);
        u = std::clamp(u, 0.0, max_u);
        if (count == 1) {
            i0 = 0;
            frac = 0.0;
            return;
        }
        i0 = std::min(static_cast<std::size_t>(std::floor(u)), count - 2);
        frac = u - static_cast<double>(i0);
    };
    std::size_t c0 = 0, r0 = 0;
    double fx = 0.0, fy = 0.0;
    axis(x, origin_x, width, c0, fx);
    axis(y, origin_y, depth, r0, fy);
    const std::size_t c1 = width > 1 ? c0 + 1 : c0;
    const std::size_t r1 = depth > 1 ? r0 + 1 : r0;
    const double h00 = heights[index(c0, r0)];
    const double h10 = heights[index(c1, r0)];
    const double h01 = heights[index(c0, r1)];
    const double h11 = heights[index(c1, r1)];
    return (1.0 - fy) * ((1.0 - fx) * h00 + fx * h10) + fy * ((1.0 - fx) * h01 + fx * h11);
}

std::vector<bool> GroundPartition::ground_mask(std::size_t num_points) const {
    std::vector<bool> mask(num_points, false);
    for (std::size_t i : ground_indices) mask.at(i) = true;
    return mask;
}

GroundPartition partition_from_mask(const std::vector<bool>& is_ground) {
    GroundPartition out;
    for (std::size_t i = 0; i < is_ground.size(); ++i) {
        (is_ground[i] ? out.ground_indices : out.nonground_indices).push_back(i);
    }
    return out;
}

ClothGrid simulate_cloth(const PointCloud& cloud, const ClothParams& params) {
    params.validate();
    if (cloud.empty()) throw Error(ErrorCode::EmptyInput, "simulate_cloth: empty cloud");

    double min_x = std::numeric_limits<double>::infinity();
    double min_y = min_x;
    double max_x = -min_x;
    double max_y = -min_x;
    double max_inverted_z = -min_x;
    for (const Point& p : cloud.points) {
        min_x = std::min<double>(min_x, p.x);
        max_x = std::max<double>(max_x, p.x);
        min_y = std::min<double>(min_y, p.y);
        max_y = std::max<double>(max_y, p.y);
        max_inverted_z = std::max(max_inverted_z, -static_cast<double>(p.z));
    }

    ClothGrid g;
    g.cell_size = params.cell_size;
    g.origin_x = min_x;
    g.origin_y = min_y;
    g.width = static_cast<std::size_t>(std::llround((max_x - min_x) / params.cell_size)) + 1;
    g.depth = static_cast<std::size_t>(std::llround((max_y - min_y) / params.cell_size)) + 1;
    const std::size_t n = g.width * g.depth;
    g.hit_floor.assign(n, kNoFloor);
    g.movable.assign(n, true);
    g.heights.assign(n, max_inverted_z + params.gravity_step);

    // Nearest-cell rasterization: each particle's floor is the highest
    // inverted point in its cell.
    for (const Point& p : cloud.points) {
        const auto col = static_cast<std::size_t>(std::llround((p.x - min_x) / params.cell_size));
        const auto row = static_cast<std::size_t>(std::llround((p.y - min_y) / params.cell_size));
        double& floor = g.hit_floor[g.index(std::min(col, g.width - 1), std::min(row, g.depth - 1))];
        floor = std::max(floor, -static_cast<double>(p.z));
    }

    std::vector<double> previous(n);
    for (int it = 0; it < params.iterations; ++it) {
        previous = g.heights;
        for (std::size_t i = 0; i < n; ++i) {
            if (!g.movable[i]) continue;
            g.heights[i] -= params.gravity_step;
            if (g.heights[i] <= g.hit_floor[i]) {
                g.heights[i] = g.hit_floor[i];
                g.movable[i] = false;
            }
        }
        for (int pass = 0; pass < params.rigidness; ++pass) {
            for (std::size_t row = 0; row < g.depth; ++row) {
                for (std::size_t col = 0; col < g.width; ++col) {
                    const std::size_t i = g.index(col, row);
                    if (col + 1 < g.width) satisfy_constraint(g, i, i + 1);
                    if (row + 1 < g.depth) satisfy_constraint(g, i, i + g.width);
                }
            }
        }
        g.iterations_run = it + 1;
        double max_move = 0.0;
        for (std::size_t i = 0; i < n; ++i) max_move = std::max(max_move, std::abs(g.heights[i] - previous[i]));
        if (max_move < params.convergence_eps) break;
    }
    return g;
}

GroundPartition csf_filter(const PointCloud& cloud, const ClothParams& params) {
    params.validate();
    if (cloud.size() < 3) {
        GroundPartition out = partition_from_mask(std::vector<bool>(cloud.size(), false));
        if (!cloud.empty()) out.warnings = 1;
        return out;
    }
    const ClothGrid grid = simulate_cloth(cloud, params);
    std::vector<bool> mask(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point& p = cloud.points[i];
        const double cloth = grid.surface_height(p.x, p.y);
        mask[i] = std::abs(cloth - (-static_cast<double>(p.z))) <= params.class_threshold;
    }
    return partition_from_mask(mask);
}

std::string cloth_to_ply(const ClothGrid& grid) {
    std::ostringstream os;
    const std::size_t faces = grid.width > 1 && grid.depth > 1 ? (grid.width - 1) * (grid.depth - 1) : 0;
    os << "ply\nformat ascii 1.0\n"
       << "element vertex " << grid.heights.size() << '\n'
       << "property float x\nproperty float y\nproperty float z\n"
       << "element face " << faces << '\n'
       << "property list uchar int vertex_indices\n"
       << "end_header\n";
    for (std::size_t row = 0; row < grid.depth; ++row) {
        for (std::size_t col = 0; col < grid.width; ++col) {
            const double x = grid.origin_x + static_cast<double>(col) * grid.cell_size;
            const double y = grid.origin_y + static_cast<double>(row) * grid.cell_size;
            os << detail::format_float(static_cast<float>(x)) << ' ' << detail::format_float(static_cast<float>(y))
               << ' ' << detail::format_float(static_cast<float>(-grid.heights[grid.index(col, row)])) << '\n';
        }
    }
    for (std::size_t row = 0; row + 1 < grid.depth; ++row) {
        for (std::size_t col = 0; col + 1 < grid.width; ++col) {
            os << "4 " << grid.index(col, row) << ' ' << grid.index(col + 1, row) << ' '
               << grid.index(col + 1, row + 1) << ' ' << grid.index(col, row + 1) << '\n';
        }
    }
    return os.str();
}

RansacResult ransac_plane(const PointCloud& cloud, int iterations, double inlier_threshold, std::uint64_t seed) {
    const std::size_t n = cloud.size();
    if (n < 3) throw Error(ErrorCode::InsufficientPoints, "ransac_plane needs at least 3 points");
    if (iterations < 1) throw Error(ErrorCode::Argument, "ransac_plane: iterations must be >= 1");
    if (!(inlier_threshold >= 0.0)) throw Error(ErrorCode::Argument, "ransac_plane: negative inlier threshold");

    const std::vector<Vec3> pts = positions(cloud);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);

    std::size_t best_count = 0;
    Plane best;
    bool found = false;
    for (int trial = 0; trial < iterations; ++trial) {
        const std::size_t i0 = pick(rng);
        std::size_t i1 = pick(rng);
        while (i1 == i0) i1 = pick(rng);
        std::size_t i2 = pick(rng);
        while (i2 == i0 || i2 == i1) i2 = pick(rng);

        const Vec3 u = pts[i1] - pts[i0];
        const Vec3 v = pts[i2] - pts[i0];
        const Vec3 normal{u.y * v.z - u.z * v.y, u.z * v.x - u.x * v.z, u.x * v.y - u.y * v.x};
        const double len = normal.norm();
        if (!(len > 1e-12 * u.norm() * v.norm()) || len == 0.0) continue;  // collinear sample
        Plane candidate{normal.x / len, normal.y / len, normal.z / len, 0.0};
        candidate.d = -(candidate.a * pts[i0].x + candidate.b * pts[i0].y + candidate.c * pts[i0].z);

        std::size_t count = 0;
        for (const Vec3& p : pts)
            if (std::abs(candidate.signed_distance(p)) <= inlier_threshold) ++count;
        if (!found || count > best_count) {
            best = candidate;
            best_count = count;
            found = true;
        }
    }
    if (!found) throw Error(ErrorCode::DegenerateGeometry, "ransac_plane: every sample was collinear");

    // Total least squares refit over the winning inliers.
    std::vector<Point> inlier_points;
    inlier_points.reserve(best_count);
    Vec3 centroid;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(best.signed_distance(pts[i])) <= inlier_threshold) {
            inlier_points.push_back(cloud.points[i]);
            centroid = centroid + pts[i];
        }
    }
    centroid = (1.0 / static_cast<double>(inlier_points.size())) * centroid;
    const auto eig = features::eigen_decompose_sym3(features::covariance(inlier_points));
    Vec3 normal = eig.vectors[2];
    const double len = normal.norm();
    RansacResult result;
    if (len > 0.0 && std::isfinite(len)) {
        normal = (1.0 / len) * normal;
        result.plane = {normal.x, normal.y, normal.z, -normal.dot(centroid)};
    } else {
        result.plane = best;
    }
    // Orient the normal upward for a stable sign.
    Plane& pl = result.plane;
    if (pl.c < 0.0 || (pl.c == 0.0 && (pl.b < 0.0 || (pl.b == 0.0 && pl.a < 0.0)))) {
        pl = {-pl.a, -pl.b, -pl.c, -pl.d};
    }
    for (std::size_t i = 0; i < n; ++i)
        if (std::abs(pl.signed_distance(pts[i])) <= inlier_threshold) result.inliers.push_back(i);
    return result;
}

GroundPartition partition_by_plane(const PointCloud& cloud, const Plane& plane, double threshold) {
    std::vector<bool> mask(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        mask[i] = std::abs(plane.signed_distance(cloud.points[i].position())) <= threshold;
    }
    return partition_from_mask(mask);
}

}  // namespace lidarseg::ground
