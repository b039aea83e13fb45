#pragma once

// Pinhole camera model and the multi-view rig placed around a model.
//
// Convention: camera space is +Z forward, +X right, +Y down; image origin is
// the top-left corner, u grows right and v grows down.

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "mf3d/error.hpp"
#include "mf3d/geom.hpp"

namespace mf3d {

inline constexpr double kZNear = 1e-4;

struct Intrinsics {
    double fx = 512.0;
    double fy = 512.0;
    double cx = 256.0;
    double cy = 256.0;
    int width = 512;
    int height = 512;

    /// Square pixels with the principal point at the image center.
    static Intrinsics centered(int width, int height, double focal) {
        return {focal, focal, width / 2.0, height / 2.0, width, height};
    }

    void validate() const {
        if (!(fx > 0 && fy > 0)) throw InvariantError("focal lengths must be positive");
        if (width <= 0 || height <= 0) throw InvariantError("image size must be positive");
        if (!(cx >= 0 && cx < width && cy >= 0 && cy < height))
            throw InvariantError("principal point lies outside the image");
    }

    bool operator==(const Intrinsics&) const = default;
};

struct CameraPose {
    Intrinsics intrinsics;
    RigidTransform world_to_cam;
    int view_index = 1; // 1-based

    /// Camera center in world coordinates.
    Vec3 center() const { return world_to_cam.inverse().translation; }
};

struct Projection {
    double u;
    double v;
    double z;
};

/// Returns nullopt when the point is at or behind the near plane.
inline std::optional<Projection> project(const Vec3& point, const CameraPose& pose) {
    const Vec3 cam = pose.world_to_cam.apply(point);
    if (!(cam.z() > kZNear)) return std::nullopt;
    const auto& k = pose.intrinsics;
    return Projection{k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy, cam.z()};
}

/// Camera-space point for pixel (u, v) at depth z.
inline Vec3 unproject_to_camera(double u, double v, double z, const Intrinsics& k) {
    if (!(z > 0)) throw InputError("unproject requires positive depth");
    return {(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z};
}

/// World point for pixel (u, v) at depth z.
inline Vec3 unproject(double u, double v, double z, const CameraPose& pose) {
    const Vec3 cam = unproject_to_camera(u, v, z, pose.intrinsics);
    return pose.world_to_cam.rotation.transpose() * (cam - pose.world_to_cam.translation);
}

/// Ring: every camera at +elevation. Zigzag: even-numbered cameras at
/// +elevation, odd-numbered at -elevation, which lets one ring see both poles.
enum class RigLayout { Ring, Zigzag };

/// World-to-camera transform of a camera at `eye` looking at `target`, with
/// image-up aligned to `up` as far as possible.
inline RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 up_perp = up - up.dot(forward) * forward;
    if (up_perp.norm() < 1e-9) throw InputError("look_at: up is parallel to the viewing direction");
    up_perp.normalize();
    const Vec3 down = -up_perp;
    const Vec3 right = down.cross(forward);
    RigidTransform xf;
    xf.rotation.row(0) = right.transpose();
    xf.rotation.row(1) = down.transpose();
    xf.rotation.row(2) = forward.transpose();
    xf.translation = -(xf.rotation * eye);
    return xf;
}

/// V cameras at azimuths 360°·k/V about `up` through `center`, all looking
/// at `center`. Azimuth 0 lies along world +Z projected off `up` (or +X if
/// `up` is parallel to Z).
inline std::vector<CameraPose> make_ring_rig(int views, const Vec3& center, double radius, const Vec3& up,
                                             const Intrinsics& intr, double elevation_deg,
                                             RigLayout layout = RigLayout::Ring) {
    if (views < 1) throw InputError("rig needs at least one view");
    if (!(radius > 0)) throw InputError("rig radius must be positive");
    if (up.norm() < 1e-12) throw InputError("rig up vector is zero");
    if (!(std::abs(elevation_deg) < 90.0)) throw InputError("rig elevation must lie strictly within (-90, 90)");
    intr.validate();

    const Vec3 axis = up.normalized();
    Vec3 ref = Vec3::UnitZ() - Vec3::UnitZ().dot(axis) * axis;
    if (ref.norm() < 1e-6) ref = Vec3::UnitX() - Vec3::UnitX().dot(axis) * axis;
    ref.normalize();
    const Vec3 side = axis.cross(ref);

    std::vector<CameraPose> rig;
    rig.reserve(static_cast<std::size_t>(views));
    for (int k = 0; k < views; ++k) {
        const double az = 2.0 * std::numbers::pi * k / views;
        double el = elevation_deg * std::numbers::pi / 180.0;
        if (layout == RigLayout::Zigzag && (k % 2 == 1)) el = -el;
        const Vec3 dir = std::cos(el) * (std::cos(az) * ref + std::sin(az) * side) + std::sin(el) * axis;
        const Vec3 eye = center + radius * dir;
        rig.push_back(CameraPose{intr, look_at(eye, center, axis), k + 1});
    }
    return rig;
}

/// Distance at which a sphere of `sphere_radius` fills 90% of the smaller
/// half-extent of the image.
inline double fit_distance(double sphere_radius, const Intrinsics& intr) {
    const double half_x = std::min(intr.cx, intr.width - intr.cx) / intr.fx;
    const double half_y = std::min(intr.cy, intr.height - intr.cy) / intr.fy;
    const double s = 0.9 * std::min(half_x, half_y); // tangent of the allowed half-angle
    return sphere_radius * std::sqrt(1.0 + s * s) / s;
}

/// Rig centered on the model's bounding box, up = +Y, at a distance where
/// the bounding sphere projects inside 90% of the image.
inline std::vector<CameraPose> fit_rig_to_model(const PointSet& points, int views, const Intrinsics& intr,
                                                double elevation_deg = 0.0, RigLayout layout = RigLayout::Ring) {
    if (points.empty()) throw InputError("cannot fit a rig to an empty point set");
    const Bounds b = bounds_of(points.positions);
    const double r = 0.5 * b.extent().norm();
    if (!(r > 1e-12)) throw InputError("degenerate extent: all points coincide");
    return make_ring_rig(views, b.center(), fit_distance(r, intr), Vec3::UnitY(), intr, elevation_deg, layout);
}

inline nlohmann::json rig_to_json(const std::vector<CameraPose>& rig) {
    nlohmann::json views = nlohmann::json::array();
    for (const auto& pose : rig) {
        const auto& k = pose.intrinsics;
        const auto& r = pose.world_to_cam.rotation;
        const auto& t = pose.world_to_cam.translation;
        nlohmann::json rot = nlohmann::json::array();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) rot.push_back(r(i, j));
        views.push_back({{"index", pose.view_index},
                         {"intrinsics",
                          {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}}},
                         {"rotation", rot},
                         {"translation", {t.x(), t.y(), t.z()}}});
    }
    return {{"views", views}};
}

inline Intrinsics intrinsics_from_json(const nlohmann::json& j) {
    Intrinsics k;
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
    return k;
}

inline nlohmann::json intrinsics_to_json(const Intrinsics& k) {
    return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

inline RigidTransform transform_from_json(const nlohmann::json& rotation, const nlohmann::json& translation) {
    if (rotation.size() != 9 || translation.size() != 3)
        throw FormatError("transform needs 9 rotation and 3 translation values");
    RigidTransform xf;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) xf.rotation(i, j) = rotation.at(static_cast<std::size_t>(i * 3 + j)).get<double>();
    for (int i = 0; i < 3; ++i) xf.translation(i) = translation.at(static_cast<std::size_t>(i)).get<double>();
    if (!xf.is_valid()) throw FormatError("rotation is not orthonormal with determinant +1");
    return xf;
}

inline std::vector<CameraPose> rig_from_json(const nlohmann::json& j) {
    std::vector<CameraPose> rig;
    try {
        for (const auto& v : j.at("views")) {
            CameraPose pose;
            pose.view_index = v.at("index").get<int>();
            pose.intrinsics = intrinsics_from_json(v.at("intrinsics"));
            pose.intrinsics.validate();
            pose.world_to_cam = transform_from_json(v.at("rotation"), v.at("translation"));
            rig.push_back(pose);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed rig JSON: ") + e.what());
    } catch (const InvariantError& e) {
        throw FormatError(std::string("invalid rig: ") + e.what());
    }
    if (rig.empty()) throw FormatError("rig JSON has no views");
    return rig;
}

} // namespace mf3d
