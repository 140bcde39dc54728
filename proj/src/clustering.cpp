#include "lidarseg/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "lidarseg/error.hpp"
#include "parallel.hpp"
#include "text_util.hpp"
#include "uniform_grid.hpp"

namespace lidarseg::clustering {

namespace {

// Kernel weights below exp(-kCutoffExponent) are dropped by the grid search.
constexpr double kCutoffExponent = 40.0;

struct Accumulator {
    double wx = 0.0, wy = 0.0, wz = 0.0, w = 0.0;

    void add(const Vec3& p, double weight) {
        wx += weight * p.x;
        wy += weight * p.y;
        wz += weight * p.z;
        w += weight;
    }
};

Vec3 finish_step(const Vec3& x, const Accumulator& acc) {
    if (!(acc.w > 0.0)) return x;
    return {acc.wx / acc.w, acc.wy / acc.w, acc.wz / acc.w};
}

template <typename StepFn>
Vec3 climb(Vec3 x, const MeanShiftParams& params, StepFn&& step) {
    for (int it = 0; it < params.max_iterations; ++it) {
        const Vec3 next = step(x);
        const double moved = (next - x).norm();
        x = next;
        if (moved < params.shift_tolerance) break;
    }
    return x;
}

// Orders clusters by descending size (ties: lowest first member) and rewrites
// labels to 0..K-1. Clusters smaller than min_size become noise.
ClusterAssignment finalize(std::vector<int> raw_labels, std::size_t raw_count, std::size_t min_size,
                           std::span<const Vec3> mode_source) {
    std::vector<std::size_t> sizes(raw_count, 0);
    std::vector<std::size_t> first(raw_count, std::numeric_limits<std::size_t>::max());
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
        const int l = raw_labels[i];
        if (l < 0) continue;
        ++sizes[l];
        first[l] = std::min(first[l], i);
    }
    std::vector<std::size_t> order;
    for (std::size_t k = 0; k < raw_count; ++k)
        if (sizes[k] >= std::max<std::size_t>(min_size, 1)) order.push_back(k);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sizes[a] != sizes[b]) return sizes[a] > sizes[b];
        return first[a] < first[b];
    });
    std::vector<int> remap(raw_count, kNoise);
    for (std::size_t r = 0; r < order.size(); ++r) remap[order[r]] = static_cast<int>(r);

    ClusterAssignment out;
    out.labels.resize(raw_labels.size());
    std::vector<Vec3> sums(order.size());
    std::vector<std::size_t> counts(order.size(), 0);
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
        const int l = raw_labels[i] < 0 ? kNoise : remap[raw_labels[i]];
        out.labels[i] = l;
        if (l >= 0) {
            sums[l] = sums[l] + mode_source[i];
            ++counts[l];
        }
    }
    out.modes.resize(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) out.modes[k] = (1.0 / static_cast<double>(counts[k])) * sums[k];
    return out;
}

// Greedy agglomeration in point order: each converged position joins the
// nearest existing seed within the merge radius, or founds a new one.
ClusterAssignment agglomerate(std::span<const Vec3> converged, const MeanShiftParams& params) {
    std::vector<Vec3> seeds;
    std::vector<int> raw(converged.size(), kNoise);
    const double r2 = params.mode_merge_radius * params.mode_merge_radius;
    for (std::size_t i = 0; i < converged.size(); ++i) {
        int best = -1;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < seeds.size(); ++k) {
            const double d2 = (converged[i] - seeds[k]).squared_norm();
            if (d2 <= r2 && d2 < best_d2) {
                best_d2 = d2;
                best = static_cast<int>(k);
            }
        }
        if (best < 0) {
            best = static_cast<int>(seeds.size());
            seeds.push_back(converged[i]);
        }
        raw[i] = best;
    }
    return finalize(std::move(raw), seeds.size(), params.min_cluster_size, converged);
}

void check_bandwidth(double bandwidth) {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
        throw Error(ErrorCode::Argument, "bandwidth must be a positive finite number");
    }
}

}  // namespace

void MeanShiftParams::validate() const {
    if (!(bandwidth > 0.0)) throw Error(ErrorCode::Config, "mean shift bandwidth must be > 0");
    if (!(shift_tolerance > 0.0)) throw Error(ErrorCode::Config, "mean shift shift_tolerance must be > 0");
    if (!(mode_merge_radius > 0.0)) throw Error(ErrorCode::Config, "mean shift mode_merge_radius must be > 0");
    if (max_iterations < 1) throw Error(ErrorCode::Config, "mean shift max_iterations must be >= 1");
    if (min_cluster_size < 1) throw Error(ErrorCode::Config, "mean shift min_cluster_size must be >= 1");
}

std::vector<std::vector<std::size_t>> ClusterAssignment::members() const {
    std::vector<std::vector<std::size_t>> out(modes.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0) out.at(static_cast<std::size_t>(labels[i])).push_back(i);
    return out;
}

double kde_density(const Vec3& query, std::span<const Vec3> points, double bandwidth) {
    check_bandwidth(bandwidth);
    if (points.empty()) throw Error(ErrorCode::EmptyInput, "kde_density: no points");
    const double inv_two_h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    const double norm = std::pow(2.0 * std::numbers::pi * bandwidth * bandwidth, -1.5);
    double sum = 0.0;
    for (const Vec3& p : points) sum += std::exp(-(query - p).squared_norm() * inv_two_h2);
    return norm * sum / static_cast<double>(points.size());
}

Vec3 mean_shift_step(const Vec3& x, std::span<const Vec3> points, double bandwidth) {
    check_bandwidth(bandwidth);
    if (points.empty()) throw Error(ErrorCode::EmptyInput, "mean_shift_step: no points");
    const double inv_two_h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    Accumulator acc;
    for (const Vec3& p : points) acc.add(p, std::exp(-(x - p).squared_norm() * inv_two_h2));
    return finish_step(x, acc);
}

ClusterAssignment mean_shift_cluster(std::span<const Vec3> points, const MeanShiftParams& params, unsigned workers) {
    params.validate();
    if (points.empty()) return {};

    const double h = params.bandwidth;
    const double inv_two_h2 = 1.0 / (2.0 * h * h);
    const double cutoff = h * std::sqrt(2.0 * kCutoffExponent);
    const double cutoff2 = cutoff * cutoff;
    const detail::UniformGrid grid(points, cutoff);

    const auto step = [&](const Vec3& x) {
        Accumulator acc;
        grid.for_each_near(x, [&](std::size_t j) {
            const double d2 = (x - points[j]).squared_norm();
            if (d2 <= cutoff2) acc.add(points[j], std::exp(-d2 * inv_two_h2));
        });
        return finish_step(x, acc);
    };

    std::vector<Vec3> converged(points.size());
    detail::parallel_for(points.size(), workers, [&](std::size_t i) { converged[i] = climb(points[i], params, step); });
    return agglomerate(converged, params);
}

ClusterAssignment mean_shift_cluster(const PointCloud& cloud, const MeanShiftParams& params, unsigned workers) {
    const auto pts = positions(cloud);
    return mean_shift_cluster(std::span<const Vec3>(pts), params, workers);
}

ClusterAssignment mean_shift_cluster_naive(std::span<const Vec3> points, const MeanShiftParams& params) {
    params.validate();
    if (points.empty()) return {};
    std::vector<Vec3> converged(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        converged[i] = climb(points[i], params, [&](const Vec3& x) { return mean_shift_step(x, points, params.bandwidth); });
    }
    return agglomerate(converged, params);
}

ClusterAssignment dbscan(std::span<const Vec3> points, double eps, std::size_t min_samples) {
    if (!(eps > 0.0)) throw Error(ErrorCode::Argument, "dbscan: eps must be > 0");
    if (min_samples < 1) throw Error(ErrorCode::Argument, "dbscan: min_samples must be >= 1");
    const std::size_t n = points.size();
    if (n == 0) return {};

    const detail::UniformGrid grid(points, eps);
    const double eps2 = eps * eps;
    const auto neighbors = [&](std::size_t i) {
        std::vector<std::size_t> out;
        grid.for_each_near(points[i], [&](std::size_t j) {
            if ((points[i] - points[j]).squared_norm() <= eps2) out.push_back(j);
        });
        std::sort(out.begin(), out.end());
        return out;
    };

    std::vector<bool> core(n, false);
    for (std::size_t i = 0; i < n; ++i) core[i] = neighbors(i).size() >= min_samples;

    // Connected components over core points.
    std::vector<int> raw(n, kNoise);
    int next_id = 0;
    std::vector<std::size_t> stack;
    for (std::size_t seed = 0; seed < n; ++seed) {
        if (!core[seed] || raw[seed] != kNoise) continue;
        raw[seed] = next_id;
        stack.assign(1, seed);
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            for (std::size_t j : neighbors(cur)) {
                if (core[j] && raw[j] == kNoise) {
                    raw[j] = next_id;
                    stack.push_back(j);
                }
            }
        }
        ++next_id;
    }
    // Border points: neighbor lists are sorted, so the first core hit is the lowest index.
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) continue;
        for (std::size_t j : neighbors(i)) {
            if (core[j]) {
                raw[i] = raw[j];
                break;
            }
        }
    }
    return finalize(std::move(raw), static_cast<std::size_t>(next_id), 1, points);
}

ClusterAssignment dbscan(const PointCloud& cloud, double eps, std::size_t min_samples) {
    const auto pts = positions(cloud);
    return dbscan(std::span<const Vec3>(pts), eps, min_samples);
}

std::string write_cluster_csv(const ClusterAssignment& assignment) {
    std::ostringstream os;
    os << "point_index,cluster_id\n";
    for (std::size_t i = 0; i < assignment.labels.size(); ++i) os << i << ',' << assignment.labels[i] << '\n';
    return os.str();
}

std::vector<int> parse_cluster_csv(std::string_view text) {
    const auto lines = detail::split_lines(text);
    if (lines.empty() || detail::trim(lines[0]) != "point_index,cluster_id") {
        throw Error(ErrorCode::Format, "cluster csv: missing header");
    }
    std::vector<int> labels;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto line = detail::trim(lines[i]);
        if (line.empty()) continue;
        const auto cols = detail::split(line, ',');
        const auto idx = cols.size() == 2 ? detail::parse_int(cols[0]) : std::nullopt;
        const auto id = cols.size() == 2 ? detail::parse_int(cols[1]) : std::nullopt;
        if (!idx || !id || *idx != static_cast<long long>(labels.size()) || *id < kNoise) {
            throw Error(ErrorCode::Format, "cluster csv line " + std::to_string(i + 1) + " is malformed");
        }
        labels.push_back(static_cast<int>(*id));
    }
    return labels;
}

}  // namespace lidarseg::clustering
