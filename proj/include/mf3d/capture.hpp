#pragma once

// Multi-camera RGB-D capture math: depth clipping, back-projection to
// colored clouds, chaining pairwise calibrations into a world frame,
// merging, and radius outlier removal.

#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mf3d/camera.hpp"
#include "mf3d/detail/binary_io.hpp"
#include "mf3d/error.hpp"
#include "mf3d/geom.hpp"
#include "mf3d/image_io.hpp"
#include "mf3d/parallel.hpp"
#include "mf3d/spatial_grid.hpp"

namespace mf3d {

struct DepthFrame {
    Intrinsics intrinsics;
    std::string camera_id;
    std::vector<float> depth;        // H*W meters, 0 = invalid
    std::vector<std::uint8_t> rgb;   // H*W*3, may be empty

    int width() const { return intrinsics.width; }
    int height() const { return intrinsics.height; }

    void validate() const {
        intrinsics.validate();
        const auto n = static_cast<std::size_t>(width()) * height();
        if (depth.size() != n) throw FormatError("depth map of " + camera_id + " does not match its intrinsics");
        if (!rgb.empty() && rgb.size() != n * 3) throw FormatError("rgb of " + camera_id + " does not match its depth map");
        for (float d : depth)
            if (d < 0) throw FormatError("depth map of " + camera_id + " has negative values");
    }
};

inline bool valid_depth(float d) { return std::isfinite(d) && d > 0; }

/// Zeroes every depth outside [min_m, max_m].
inline DepthFrame clip_depth_range(const DepthFrame& frame, double min_m, double max_m) {
    if (!(min_m >= 0 && min_m < max_m)) throw InputError("depth range must satisfy 0 <= min < max");
    DepthFrame out = frame;
    for (auto& d : out.depth)
        if (!(d >= min_m && d <= max_m)) d = 0.0f;
    return out;
}

/// One camera-frame point per valid pixel (u, v) sampled every `stride`
/// pixels, using X = (u - cx) Z / fx, Y = (v - cy) Z / fy.
inline PointSet depth_to_cloud(const DepthFrame& frame, int stride = 1) {
    if (stride < 1) throw InputError("stride must be at least 1");
    frame.intrinsics.validate();
    PointSet cloud;
    const bool with_rgb = !frame.rgb.empty();
    if (with_rgb) cloud.colors.emplace();
    for (int v = 0; v < frame.height(); v += stride) {
        for (int u = 0; u < frame.width(); u += stride) {
            const std::size_t px = static_cast<std::size_t>(v) * frame.width() + u;
            const float z = frame.depth[px];
            if (!valid_depth(z)) continue;
            cloud.positions.push_back(unproject_to_camera(u, v, z, frame.intrinsics));
            if (with_rgb)
                cloud.colors->push_back(
                    from_rgb8({frame.rgb[px * 3], frame.rgb[px * 3 + 1], frame.rgb[px * 3 + 2]}));
        }
    }
    return cloud;
}

struct CalibEdge {
    std::string a;
    std::string b;
    RigidTransform a_to_b; // maps points in a's frame into b's frame
};

struct CalibGraph {
    std::vector<CalibEdge> edges;
    std::string world_camera;
};

struct WorldTransforms {
    std::map<std::string, RigidTransform> camera_to_world;
    std::vector<std::string> warnings;
};

/// Breadth-first composition of edge transforms outward from the world
/// camera; each camera takes the transform along its shortest path. Edges
/// not on the tree are checked for consistency and produce warnings when
/// they disagree by more than `cycle_tol`.
inline WorldTransforms solve_world_transforms(const CalibGraph& graph, double cycle_tol = 1e-3) {
    WorldTransforms out;
    std::map<std::string, std::vector<std::size_t>> adjacency;
    adjacency[graph.world_camera];
    for (std::size_t i = 0; i < graph.edges.size(); ++i) {
        const auto& e = graph.edges[i];
        if (e.a == e.b) throw FormatError("calibration edge connects " + e.a + " to itself");
        e.a_to_b.validate();
        adjacency[e.a].push_back(i);
        adjacency[e.b].push_back(i);
    }

    out.camera_to_world[graph.world_camera] = RigidTransform::identity();
    std::deque<std::string> queue{graph.world_camera};
    while (!queue.empty()) {
        const std::string cam = queue.front();
        queue.pop_front();
        const RigidTransform& to_world = out.camera_to_world.at(cam);
        for (auto i : adjacency[cam]) {
            const auto& e = graph.edges[i];
            const bool forward = e.b == cam; // e.a -> cam is known, so e.a -> world = to_world ∘ a_to_b
            const std::string& other = forward ? e.a : e.b;
            if (out.camera_to_world.count(other)) continue;
            out.camera_to_world[other] = forward ? compose(to_world, e.a_to_b) : compose(to_world, e.a_to_b.inverse());
            queue.push_back(other);
        }
    }

    for (const auto& [cam, edges] : adjacency)
        if (!out.camera_to_world.count(cam))
            throw FormatError("camera '" + cam + "' is not connected to world camera '" + graph.world_camera + "'");

    for (const auto& e : graph.edges) {
        const RigidTransform via = compose(out.camera_to_world.at(e.b), e.a_to_b);
        const RigidTransform& direct = out.camera_to_world.at(e.a);
        const double dr = (via.rotation - direct.rotation).cwiseAbs().maxCoeff();
        const double dt = (via.translation - direct.translation).cwiseAbs().maxCoeff();
        if (dr > cycle_tol || dt > cycle_tol)
            out.warnings.push_back("calibration cycle through " + e.a + " -> " + e.b + " is inconsistent (rotation " +
                                   std::to_string(dr) + ", translation " + std::to_string(dt) + ")");
    }
    return out;
}

/// Concatenation of each cloud after its transform, in input order.
inline PointSet merge_clouds(const std::vector<std::pair<PointSet, RigidTransform>>& clouds) {
    if (clouds.empty()) throw InputError("merge_clouds needs at least one cloud");
    bool all_colored = true;
    for (const auto& [cloud, xf] : clouds) all_colored = all_colored && (cloud.colors.has_value() || cloud.empty());
    PointSet out;
    if (all_colored) out.colors.emplace();
    for (const auto& [cloud, xf] : clouds) {
        for (const auto& p : cloud.positions) out.positions.push_back(xf.apply(p));
        if (all_colored && cloud.colors) out.colors->insert(out.colors->end(), cloud.colors->begin(), cloud.colors->end());
    }
    return out;
}

struct OutlierResult {
    PointSet kept;
    std::vector<std::int32_t> removed; // ascending input indices
};

/// Keeps a point iff at least `min_neighbors` other points lie within the
/// closed ball of `radius_m` around it.
inline OutlierResult radius_outlier_removal(const PointSet& points, double radius_m, int min_neighbors) {
    if (!(radius_m > 0)) throw InputError("outlier radius must be positive");
    if (min_neighbors < 0) throw InputError("min_neighbors must be non-negative");
    OutlierResult out;
    std::vector<std::uint8_t> keep(points.size(), 1);
    if (min_neighbors > 0 && !points.empty()) {
        const SpatialGrid grid(points.positions, radius_m);
        const auto need = static_cast<std::size_t>(min_neighbors);
        parallel_for(0, points.size(), [&](std::size_t i) {
            keep[i] = grid.count_within(points.positions[i], radius_m, static_cast<std::int32_t>(i), need) >= need;
        });
    }
    if (points.colors) out.kept.colors.emplace();
    if (points.normals) out.kept.normals.emplace();
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!keep[i]) {
            out.removed.push_back(static_cast<std::int32_t>(i));
            continue;
        }
        out.kept.positions.push_back(points.positions[i]);
        if (points.colors) out.kept.colors->push_back((*points.colors)[i]);
        if (points.normals) out.kept.normals->push_back((*points.normals)[i]);
    }
    return out;
}

// ---------------------------------------------------------------- file IO
//
// A capture directory holds calib.json and one sub-directory per camera
// with depth.f32 (DPTH raster), rgb.png and intrinsics.json.

inline void write_depth_frame(const std::filesystem::path& dir, const DepthFrame& frame) {
    std::filesystem::create_directories(dir);
    write_depth_map(dir / "depth.f32", frame.width(), frame.height(), frame.depth);
    if (!frame.rgb.empty()) write_png(dir / "rgb.png", frame.width(), frame.height(), frame.rgb);
    detail::write_text_file(dir / "intrinsics.json", intrinsics_to_json(frame.intrinsics).dump(2) + "\n");
}

inline DepthFrame read_depth_frame(const std::filesystem::path& dir, const std::string& camera_id) {
    DepthFrame frame;
    frame.camera_id = camera_id;
    try {
        frame.intrinsics = intrinsics_from_json(nlohmann::json::parse(detail::read_text_file(dir / "intrinsics.json")));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError((dir / "intrinsics.json").string() + ": " + e.what());
    }
    int w = 0, h = 0;
    frame.depth = read_depth_map(dir / "depth.f32", w, h);
    if (w != frame.width() || h != frame.height())
        throw FormatError(camera_id + ": depth map is " + std::to_string(w) + "x" + std::to_string(h) +
                          " but intrinsics say " + std::to_string(frame.width()) + "x" + std::to_string(frame.height()));
    if (std::filesystem::exists(dir / "rgb.png")) {
        auto img = read_png(dir / "rgb.png");
        if (img.width != w || img.height != h) throw FormatError(camera_id + ": rgb.png does not match the depth map");
        frame.rgb = std::move(img.pixels);
    }
    frame.validate();
    return frame;
}

inline nlohmann::json calib_to_json(const CalibGraph& graph) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : graph.edges) {
        nlohmann::json rot = nlohmann::json::array();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) rot.push_back(e.a_to_b.rotation(i, j));
        const auto& t = e.a_to_b.translation;
        edges.push_back({{"a", e.a}, {"b", e.b}, {"rotation", rot}, {"translation", {t.x(), t.y(), t.z()}}});
    }
    return {{"edges", edges}, {"world", graph.world_camera}};
}

inline CalibGraph calib_from_json(const nlohmann::json& j) {
    CalibGraph g;
    try {
        g.world_camera = j.at("world").get<std::string>();
        for (const auto& e : j.at("edges"))
            g.edges.push_back({e.at("a").get<std::string>(), e.at("b").get<std::string>(),
                               transform_from_json(e.at("rotation"), e.at("translation"))});
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed calib.json: ") + e.what());
    }
    return g;
}

} // namespace mf3d
