#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lidarseg/types.hpp"

namespace lidarseg::clustering {

inline constexpr int kNoise = -1;

struct MeanShiftParams {
    double bandwidth = 1.0;          // Gaussian kernel scale h, m
    double shift_tolerance = 1e-3;   // m
    int max_iterations = 300;
    double mode_merge_radius = 0.5;  // m
    std::size_t min_cluster_size = 30;

    void validate() const;
};

struct ClusterAssignment {
    std::vector<int> labels;  // per point, cluster id or kNoise
    std::vector<Vec3> modes;  // per cluster

    std::size_t num_clusters() const { return modes.size(); }
    /// Member indices of each cluster, ascending.
    std::vector<std::vector<std::size_t>> members() const;
};

/// Gaussian kernel density estimate at `query`.
double kde_density(const Vec3& query, std::span<const Vec3> points, double bandwidth);

/// Gaussian-weighted mean of `points` around x; returns x unchanged when all
/// weights underflow.
Vec3 mean_shift_step(const Vec3& x, std::span<const Vec3> points, double bandwidth);

/// Mean-shift clustering. Every point climbs the density to a mode; modes
/// closer than mode_merge_radius are merged greedily in point order, small
/// clusters become noise and ids are ordered by descending size.
/// Kernel contributions below exp(-40) relative are skipped via a uniform grid;
/// `workers` threads share the per-point climbs.
ClusterAssignment mean_shift_cluster(std::span<const Vec3> points, const MeanShiftParams& params,
                                     unsigned workers = 1);
ClusterAssignment mean_shift_cluster(const PointCloud& cloud, const MeanShiftParams& params, unsigned workers = 1);

/// Reference mean shift with no neighborhood pruning. Quadratic per step.
ClusterAssignment mean_shift_cluster_naive(std::span<const Vec3> points, const MeanShiftParams& params);

/// DBSCAN with eps-neighborhoods counted inclusive of the point itself. Border
/// points reachable from several clusters join the cluster of their
/// lowest-index core neighbor. Modes are centroids.
ClusterAssignment dbscan(std::span<const Vec3> points, double eps, std::size_t min_samples);
ClusterAssignment dbscan(const PointCloud& cloud, double eps, std::size_t min_samples);

/// "point_index,cluster_id" CSV.
std::string write_cluster_csv(const ClusterAssignment& assignment);
std::vector<int> parse_cluster_csv(std::string_view text);

}  // namespace lidarseg::clustering
