#pragma once

// Core 3D value types: point sets, triangle meshes and rigid transforms.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "mf3d/error.hpp"

namespace mf3d {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// RGB triple with channels in [0, 1].
using Color = Eigen::Vector3d;

/// 8-bit RGB, used at IO boundaries and for palettes.
using Rgb8 = std::array<std::uint8_t, 3>;

inline std::uint8_t to_byte(double channel) {
    const double scaled = std::floor(std::clamp(channel, 0.0, 1.0) * 255.0 + 0.5);
    return static_cast<std::uint8_t>(scaled);
}

inline double from_byte(std::uint8_t b) { return static_cast<double>(b) / 255.0; }

inline Rgb8 to_rgb8(const Color& c) { return {to_byte(c.x()), to_byte(c.y()), to_byte(c.z())}; }

inline Color from_rgb8(const Rgb8& c) { return {from_byte(c[0]), from_byte(c[1]), from_byte(c[2])}; }

/// The unit every segmentation is computed over. Meshes and Gaussian
/// checkpoints both reduce to one of these.
struct PointSet {
    std::vector<Vec3> positions;
    std::optional<std::vector<Color>> colors;
    std::optional<std::vector<Vec3>> normals;

    std::size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }

    /// Throws InvariantError if an attribute array is the wrong length, a
    /// position is non-finite, or a normal is not unit length.
    void validate() const {
        for (std::size_t i = 0; i < positions.size(); ++i)
            if (!positions[i].allFinite())
                throw InvariantError("point " + std::to_string(i) + " has a non-finite position");
        if (colors && colors->size() != positions.size())
            throw InvariantError("color count does not match point count");
        if (normals) {
            if (normals->size() != positions.size()) throw InvariantError("normal count does not match point count");
            for (std::size_t i = 0; i < normals->size(); ++i)
                if (std::abs((*normals)[i].norm() - 1.0) > 1e-4)
                    throw InvariantError("normal " + std::to_string(i) + " is not unit length");
        }
    }
};

using Face = std::array<std::int32_t, 3>;

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::optional<std::vector<Color>> vertex_colors;

    void validate() const {
        const auto n = static_cast<std::int64_t>(vertices.size());
        for (std::size_t f = 0; f < faces.size(); ++f) {
            const auto& face = faces[f];
            for (auto idx : face)
                if (idx < 0 || idx >= n)
                    throw InvariantError("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                                         " of " + std::to_string(n));
            if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
                throw InvariantError("face " + std::to_string(f) + " is degenerate");
        }
        if (vertex_colors && vertex_colors->size() != vertices.size())
            throw InvariantError("vertex color count does not match vertex count");
    }
};

using Model = std::variant<TriMesh, PointSet>;

/// p -> R p + t.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidTransform identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    Vec3 rotate(const Vec3& v) const { return rotation * v; }

    RigidTransform inverse() const {
        RigidTransform inv;
        inv.rotation = rotation.transpose();
        inv.translation = -(inv.rotation * translation);
        return inv;
    }

    bool is_valid(double tol = 1e-6) const {
        if (!rotation.allFinite() || !translation.allFinite()) return false;
        return (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
               std::abs(rotation.determinant() - 1.0) <= tol;
    }

    void validate(double tol = 1e-6) const {
        if (!is_valid(tol)) throw InvariantError("rotation is not orthonormal with determinant +1");
    }
};

/// outer ∘ inner: applies `inner` first.
inline RigidTransform compose(const RigidTransform& outer, const RigidTransform& inner) {
    RigidTransform out;
    out.rotation = outer.rotation * inner.rotation;
    out.translation = outer.rotation * inner.translation + outer.translation;
    return out;
}

inline RigidTransform rotation_about(const Vec3& axis, double radians) {
    RigidTransform xf;
    xf.rotation = Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix();
    return xf;
}

/// Positions map through R p + t; normals are rotated only.
inline PointSet apply_transform(const PointSet& points, const RigidTransform& xf) {
    PointSet out;
    out.positions.reserve(points.size());
    for (const auto& p : points.positions) out.positions.push_back(xf.apply(p));
    out.colors = points.colors;
    if (points.normals) {
        out.normals.emplace();
        out.normals->reserve(points.size());
        for (const auto& n : *points.normals) out.normals->push_back(xf.rotate(n));
    }
    return out;
}

inline PointSet mesh_vertices_as_points(const TriMesh& mesh) {
    PointSet out;
    out.positions = mesh.vertices;
    out.colors = mesh.vertex_colors;
    return out;
}

/// Points view of any model; meshes reduce to their vertex set.
inline PointSet as_points(const Model& model) {
    if (const auto* mesh = std::get_if<TriMesh>(&model)) return mesh_vertices_as_points(*mesh);
    return std::get<PointSet>(model);
}

struct Bounds {
    Vec3 min;
    Vec3 max;
    Vec3 center() const { return 0.5 * (min + max); }
    Vec3 extent() const { return max - min; }
};

inline Bounds bounds_of(const std::vector<Vec3>& pts) {
    if (pts.empty()) throw InvariantError("bounds of an empty point set");
    Bounds b{pts.front(), pts.front()};
    for (const auto& p : pts) {
        b.min = b.min.cwiseMin(p);
        b.max = b.max.cwiseMax(p);
    }
    return b;
}

} // namespace mf3d
