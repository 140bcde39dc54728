#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "lidarseg/types.hpp"

namespace lidarseg::detail {

// Buckets points into cubic cells; `for_each_near` visits every point in the
// 27 cells around a query, which covers all points within `cell` of it.
class UniformGrid {
public:
    UniformGrid(std::span<const Vec3> points, double cell) : points_(points), cell_(cell) {
        for (std::size_t i = 0; i < points.size(); ++i) cells_[key(cell_of(points[i]))].push_back(i);
    }

    template <typename Fn>
    void for_each_near(const Vec3& q, Fn&& fn) const {
        const Cell c = cell_of(q);
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    const auto it = cells_.find(key({c.x + dx, c.y + dy, c.z + dz}));
                    if (it == cells_.end()) continue;
                    for (std::size_t i : it->second) fn(i);
                }
    }

private:
    struct Cell {
        std::int64_t x, y, z;
    };

    Cell cell_of(const Vec3& p) const {
        return {static_cast<std::int64_t>(std::floor(p.x / cell_)), static_cast<std::int64_t>(std::floor(p.y / cell_)),
                static_cast<std::int64_t>(std::floor(p.z / cell_))};
    }

    static std::uint64_t key(const Cell& c) {
        // 21 bits per axis; wraps for extreme coordinates, which only merges buckets.
        const auto mask = (std::uint64_t{1} << 21) - 1;
        return (static_cast<std::uint64_t>(c.x) & mask) | ((static_cast<std::uint64_t>(c.y) & mask) << 21) |
               ((static_cast<std::uint64_t>(c.z) & mask) << 42);
    }

    std::span<const Vec3> points_;
    double cell_;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace lidarseg::detail
