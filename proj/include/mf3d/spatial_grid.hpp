#pragma once

// Uniform hash grid over a point set for fixed-radius and k-nearest queries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mf3d/error.hpp"
#include "mf3d/geom.hpp"

namespace mf3d {

class SpatialGrid {
public:
    struct Cell {
        std::int64_t x, y, z;
    };

    /// Indexes `points` (which must outlive the grid). When `include` is
    /// non-empty only points with include[i] != 0 are indexed.
    SpatialGrid(std::span<const Vec3> points, double cell_size, std::span<const std::uint8_t> include = {})
        : points_(points), cell_(cell_size) {
        if (!(cell_size > 0)) throw InvariantError("grid cell size must be positive");
        std::vector<std::pair<std::uint64_t, std::int32_t>> keyed;
        keyed.reserve(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!include.empty() && !include[i]) continue;
            const Cell c = cell_of(points[i]);
            lo_ = {std::min(lo_.x, c.x), std::min(lo_.y, c.y), std::min(lo_.z, c.z)};
            hi_ = {std::max(hi_.x, c.x), std::max(hi_.y, c.y), std::max(hi_.z, c.z)};
            keyed.emplace_back(key(c), static_cast<std::int32_t>(i));
        }
        std::sort(keyed.begin(), keyed.end());
        order_.reserve(keyed.size());
        for (std::size_t i = 0; i < keyed.size(); ++i) {
            if (i == 0 || keyed[i].first != keyed[i - 1].first) ranges_[keyed[i].first] = {i, i};
            ranges_[keyed[i].first].second = i + 1;
            order_.push_back(keyed[i].second);
        }
    }

    Cell cell_of(const Vec3& p) const {
        return {static_cast<std::int64_t>(std::floor(p.x() / cell_)), static_cast<std::int64_t>(std::floor(p.y() / cell_)),
                static_cast<std::int64_t>(std::floor(p.z() / cell_))};
    }

    std::size_t indexed_count() const { return order_.size(); }

    /// Point indices stored in one cell, ascending.
    std::span<const std::int32_t> cell_points(const Cell& c) const {
        auto it = ranges_.find(key(c));
        if (it == ranges_.end()) return {};
        return std::span(order_).subspan(it->second.first, it->second.second - it->second.first);
    }

    /// Number of indexed points other than `self` with squared distance to q
    /// at most radius^2 (closed ball). Stops counting at `cap`.
    std::size_t count_within(const Vec3& q, double radius, std::int32_t self, std::size_t cap) const {
        const double r2 = radius * radius;
        const auto span = static_cast<std::int64_t>(std::ceil(radius / cell_));
        const Cell c = cell_of(q);
        std::size_t count = 0;
        for (std::int64_t dz = -span; dz <= span; ++dz)
            for (std::int64_t dy = -span; dy <= span; ++dy)
                for (std::int64_t dx = -span; dx <= span; ++dx)
                    for (auto j : cell_points({c.x + dx, c.y + dy, c.z + dz})) {
                        if (j == self) continue;
                        const Vec3& p = points_[static_cast<std::size_t>(j)];
                        const double ex = p.x() - q.x(), ey = p.y() - q.y(), ez = p.z() - q.z();
                        if (ex * ex + ey * ey + ez * ez <= r2 && ++count >= cap) return count;
                    }
        return count;
    }

    /// The k nearest indexed points to q (excluding `self`), nearest first;
    /// equal distances ordered by index.
    std::vector<std::int32_t> nearest(const Vec3& q, std::size_t k, std::int32_t self = -1) const {
        std::vector<std::pair<double, std::int32_t>> found;
        if (k == 0 || order_.empty()) return {};
        const Cell c = cell_of(q);
        const std::int64_t max_ring = std::max({std::abs(c.x - lo_.x), std::abs(c.x - hi_.x), std::abs(c.y - lo_.y),
                                                std::abs(c.y - hi_.y), std::abs(c.z - lo_.z), std::abs(c.z - hi_.z)});
        for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
            for (std::int64_t dz = -ring; dz <= ring; ++dz)
                for (std::int64_t dy = -ring; dy <= ring; ++dy)
                    for (std::int64_t dx = -ring; dx <= ring; ++dx) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
                        for (auto j : cell_points({c.x + dx, c.y + dy, c.z + dz})) {
                            if (j == self) continue;
                            found.emplace_back((points_[static_cast<std::size_t>(j)] - q).squaredNorm(), j);
                        }
                    }
            if (found.size() >= k) {
                std::partial_sort(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(k), found.end());
                const double reach = static_cast<double>(ring) * cell_;
                if (found[k - 1].first <= reach * reach) break;
            }
        }
        std::sort(found.begin(), found.end());
        std::vector<std::int32_t> out;
        for (std::size_t i = 0; i < std::min(k, found.size()); ++i) out.push_back(found[i].second);
        return out;
    }

private:
    static std::uint64_t key(const Cell& c) {
        // 21 bits per axis after offsetting into the positive range.
        constexpr std::int64_t kOffset = 1 << 20;
        auto part = [](std::int64_t v) { return static_cast<std::uint64_t>((v + kOffset) & 0x1FFFFF); };
        return (part(c.x) << 42) | (part(c.y) << 21) | part(c.z);
    }

    std::span<const Vec3> points_;
    double cell_;
    Cell lo_{std::numeric_limits<std::int64_t>::max(), std::numeric_limits<std::int64_t>::max(),
             std::numeric_limits<std::int64_t>::max()};
    Cell hi_{std::numeric_limits<std::int64_t>::min(), std::numeric_limits<std::int64_t>::min(),
             std::numeric_limits<std::int64_t>::min()};
    std::vector<std::int32_t> order_;
    std::unordered_map<std::uint64_t, std::pair<std::size_t, std::size_t>> ranges_;
};

} // namespace mf3d
