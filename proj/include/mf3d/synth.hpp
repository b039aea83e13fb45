#pragma once

// Deterministic synthetic fixtures with ground truth, plus the oracle
// proposal source: one mask per visible ground-truth region per view, with a
// canonical one-hot embedding per region.
//
//   sphere2   sphere split into two halves by the sign of z
//   capsule5  capsule along +Y cut into five equal axial bands
//   occluder  sphere with an equatorial band, flanked by two plates that
//             hide the band from the views a 2-camera rig would use
//
// make_cube_capture builds a 4-camera RGB-D ring around a cube, with depth
// ray-cast exactly and a consistent calibration cycle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mf3d/camera.hpp"
#include "mf3d/capture.hpp"
#include "mf3d/error.hpp"
#include "mf3d/fusion.hpp"
#include "mf3d/geom.hpp"
#include "mf3d/ply.hpp"
#include "mf3d/proposal.hpp"
#include "mf3d/render.hpp"

namespace mf3d {

inline constexpr int kOracleEmbeddingDim = 16;

struct SynthFixture {
    std::string kind;
    TriMesh mesh;
    std::vector<std::int32_t> gt;
    std::vector<std::string> prompts;

    int class_count() const { return static_cast<int>(prompts.size()); }
};

namespace detail::synth {

struct ProfileSample {
    double radius;
    double height;
};

// Appends a closed surface of revolution about +Y. `profile` runs from the
// top pole to the bottom pole (both with radius 0); ring vertex counts adapt
// to circumference so vertex density stays near `spacing`.
inline void revolve(TriMesh& mesh, const std::vector<ProfileSample>& profile, double spacing) {
    const auto base = static_cast<std::int32_t>(mesh.vertices.size());
    std::vector<std::vector<std::int32_t>> rings;
    for (const auto& s : profile) {
        std::vector<std::int32_t> ring;
        const int n = s.radius < 1e-12 ? 1
                                        : std::max(3, static_cast<int>(std::lround(2.0 * std::numbers::pi * s.radius / spacing)));
        for (int j = 0; j < n; ++j) {
            const double theta = 2.0 * std::numbers::pi * j / n;
            ring.push_back(static_cast<std::int32_t>(mesh.vertices.size()));
            mesh.vertices.emplace_back(s.radius * std::cos(theta), s.height, s.radius * std::sin(theta));
        }
        rings.push_back(std::move(ring));
    }
    (void)base;
    for (std::size_t r = 0; r + 1 < rings.size(); ++r) {
        const auto& a = rings[r];
        const auto& b = rings[r + 1];
        const auto na = a.size(), nb = b.size();
        if (na == 1 || nb == 1) {
            const auto& ring = na == 1 ? b : a;
            const auto pole = na == 1 ? a[0] : b[0];
            for (std::size_t j = 0; j < ring.size(); ++j) mesh.faces.push_back({pole, ring[j], ring[(j + 1) % ring.size()]});
            continue;
        }
        // Zipper walk: advance whichever ring's next vertex comes first in angle.
        std::size_t i = 0, j = 0;
        while (i < na || j < nb) {
            const double next_a = static_cast<double>(i + 1) / static_cast<double>(na);
            const double next_b = static_cast<double>(j + 1) / static_cast<double>(nb);
            if (j >= nb || (i < na && next_a <= next_b)) {
                mesh.faces.push_back({a[i % na], a[(i + 1) % na], b[j % nb]});
                ++i;
            } else {
                mesh.faces.push_back({a[i % na], b[(j + 1) % nb], b[j % nb]});
                ++j;
            }
        }
    }
}

inline std::vector<ProfileSample> sphere_profile(double radius, double spacing) {
    const int segments = std::max(2, static_cast<int>(std::lround(std::numbers::pi * radius / spacing)));
    std::vector<ProfileSample> p;
    for (int i = 0; i <= segments; ++i) {
        const double phi = std::numbers::pi * i / segments;
        p.push_back({i == 0 || i == segments ? 0.0 : radius * std::sin(phi), radius * std::cos(phi)});
    }
    return p;
}

inline std::vector<ProfileSample> capsule_profile(double radius, double half_length, double spacing) {
    const double cap = std::numbers::pi * radius / 2.0;
    const double total = 2.0 * cap + 2.0 * half_length;
    const int segments = std::max(4, static_cast<int>(std::lround(total / spacing)));
    std::vector<ProfileSample> p;
    for (int i = 0; i <= segments; ++i) {
        const double t = total * i / segments;
        ProfileSample s{};
        if (t <= cap) {
            const double phi = t / radius;
            s = {radius * std::sin(phi), half_length + radius * std::cos(phi)};
        } else if (t <= cap + 2.0 * half_length) {
            s = {radius, half_length - (t - cap)};
        } else {
            const double phi = std::numbers::pi / 2.0 + (t - cap - 2.0 * half_length) / radius;
            s = {radius * std::sin(phi), -half_length + radius * std::cos(phi)};
        }
        if (i == 0 || i == segments) s.radius = 0.0;
        p.push_back(s);
    }
    return p;
}

// Axis-aligned plate in the XY plane at depth z, tessellated at `spacing`.
inline void add_plate(TriMesh& mesh, double half_w, double half_h, double z, double spacing) {
    const int nx = std::max(1, static_cast<int>(std::lround(2.0 * half_w / spacing)));
    const int ny = std::max(1, static_cast<int>(std::lround(2.0 * half_h / spacing)));
    const auto base = static_cast<std::int32_t>(mesh.vertices.size());
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            mesh.vertices.emplace_back(-half_w + 2.0 * half_w * i / nx, -half_h + 2.0 * half_h * j / ny, z);
    auto id = [&](int i, int j) { return base + static_cast<std::int32_t>(j * (nx + 1) + i); };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            mesh.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            mesh.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
}

inline double spacing_for(double area, std::size_t target_points) {
    // Rings and ring vertices are both about h apart: roughly area / h^2 vertices.
    return std::sqrt(area / static_cast<double>(std::max<std::size_t>(target_points, 16)));
}

inline void color_by_label(SynthFixture& f) {
    const auto palette = default_palette(f.prompts.size());
    f.mesh.vertex_colors.emplace();
    for (auto g : f.gt) f.mesh.vertex_colors->push_back(from_rgb8(palette[static_cast<std::size_t>(g)]));
}

} // namespace detail::synth

inline SynthFixture make_sphere2(std::size_t target_points = 10000) {
    using namespace detail::synth;
    SynthFixture f;
    f.kind = "sphere2";
    f.prompts = {"front half", "back half"};
    const double spacing = spacing_for(4.0 * std::numbers::pi, target_points);
    revolve(f.mesh, sphere_profile(1.0, spacing), spacing);
    for (const auto& v : f.mesh.vertices) f.gt.push_back(v.z() >= 0.0 ? 0 : 1);
    color_by_label(f);
    return f;
}

inline SynthFixture make_capsule5(std::size_t target_points = 10000) {
    using namespace detail::synth;
    SynthFixture f;
    f.kind = "capsule5";
    f.prompts = {"band 1", "band 2", "band 3", "band 4", "band 5"};
    const double radius = 0.5, half = 1.0;
    const double area = 4.0 * std::numbers::pi * radius * radius + 2.0 * std::numbers::pi * radius * 2.0 * half;
    const double spacing = spacing_for(area, target_points);
    revolve(f.mesh, capsule_profile(radius, half, spacing), spacing);
    const double top = half + radius, band = 2.0 * top / 5.0;
    for (const auto& v : f.mesh.vertices)
        f.gt.push_back(std::clamp(static_cast<std::int32_t>(std::floor((top - v.y()) / band)), 0, 4));
    color_by_label(f);
    return f;
}

inline SynthFixture make_occluder(std::size_t target_points = 10000) {
    using namespace detail::synth;
    SynthFixture f;
    f.kind = "occluder";
    f.prompts = {"sphere", "band", "plate"};
    const double plate_w = 1.3, plate_h = 0.9, plate_z = 1.6;
    const double area = 4.0 * std::numbers::pi + 2.0 * (2.0 * plate_w) * (2.0 * plate_h);
    const double spacing = spacing_for(area, target_points);
    revolve(f.mesh, sphere_profile(1.0, spacing), spacing);
    const std::size_t sphere_vertices = f.mesh.vertices.size();
    add_plate(f.mesh, plate_w, plate_h, plate_z, spacing);
    add_plate(f.mesh, plate_w, plate_h, -plate_z, spacing);
    for (std::size_t i = 0; i < f.mesh.vertices.size(); ++i) {
        if (i >= sphere_vertices) f.gt.push_back(2);
        else f.gt.push_back(std::abs(f.mesh.vertices[i].y()) < 0.35 ? 1 : 0);
    }
    color_by_label(f);
    return f;
}

inline SynthFixture make_fixture(const std::string& kind, std::size_t target_points = 10000) {
    if (kind == "sphere2") return make_sphere2(target_points);
    if (kind == "capsule5") return make_capsule5(target_points);
    if (kind == "occluder") return make_occluder(target_points);
    throw InputError("unknown fixture kind '" + kind + "' (expected sphere2, capsule5 or occluder)");
}

/// Canonical embedding e_k of class k in `dim` dimensions.
inline std::vector<float> canonical_embedding(int k, int dim = kOracleEmbeddingDim) {
    if (k < 0 || k >= dim) throw InputError("class " + std::to_string(k) + " has no canonical vector in C=" + std::to_string(dim));
    std::vector<float> e(static_cast<std::size_t>(dim), 0.0f);
    e[static_cast<std::size_t>(k)] = 1.0f;
    return e;
}

inline TextEmbeddingSet canonical_text_embeddings(const std::vector<std::string>& prompts, int dim = kOracleEmbeddingDim) {
    TextEmbeddingSet set;
    set.prompts = prompts;
    set.vectors = RowMatrix::Zero(static_cast<Eigen::Index>(prompts.size()), dim);
    for (std::size_t k = 0; k < prompts.size(); ++k) {
        const auto e = canonical_embedding(static_cast<int>(k), dim);
        for (int d = 0; d < dim; ++d) set.vectors(static_cast<Eigen::Index>(k), d) = e[static_cast<std::size_t>(d)];
    }
    return set;
}

/// Per view, one mask for each ground-truth region that wins at least one
/// pixel; mask id = region id, embedding = canonical vector of the region.
inline ProposalBundle oracle_bundle(const std::vector<RenderOutput>& renders, const std::vector<CameraPose>& rig,
                                    std::span<const std::int32_t> gt, int class_count, int dim = kOracleEmbeddingDim) {
    if (renders.size() != rig.size()) throw InvariantError("oracle bundle needs one render per camera");
    ProposalBundle bundle;
    bundle.cameras = rig;
    bundle.dim = dim;
    bundle.source = ProposalSource::Synthetic;
    for (const auto& r : renders) {
        for (int k = 0; k < class_count; ++k) {
            Mask2D m = Mask2D::empty(r.view_index, k, r.width, r.height);
            bool any = false;
            for (std::size_t px = 0; px < r.point_index.size(); ++px) {
                const auto idx = r.point_index[px];
                if (idx == kSentinel) continue;
                if (static_cast<std::size_t>(idx) >= gt.size()) throw InvariantError("render index outside ground truth");
                if (gt[static_cast<std::size_t>(idx)] == k) m.bits[px] = any = true;
            }
            if (!any) continue;
            bundle.refs.push_back({r.view_index, k});
            bundle.masks.push_back(std::move(m));
            const auto e = canonical_embedding(k, dim);
            bundle.embeddings.insert(bundle.embeddings.end(), e.begin(), e.end());
        }
    }
    if (bundle.refs.empty()) throw InvariantError("oracle bundle is empty: nothing visible");
    bundle.normalize();
    return bundle;
}

struct CaptureFixture {
    std::vector<DepthFrame> frames;
    CalibGraph calib;
    std::map<std::string, RigidTransform> camera_to_world; // generating poses, world = cam0
    RigidTransform scene_to_world;                          // cube frame -> cam0 frame
    double half_size = 0;
};

namespace detail::synth {

// Slab test against the axis-aligned cube [-h, h]^3; returns the entry t.
inline std::optional<double> ray_cube(const Vec3& origin, const Vec3& dir, double h) {
    double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (dir[a] == 0.0) {
            if (std::abs(origin[a]) > h) return std::nullopt;
            continue;
        }
        double lo = (-h - origin[a]) / dir[a], hi = (h - origin[a]) / dir[a];
        if (lo > hi) std::swap(lo, hi);
        t0 = std::max(t0, lo);
        t1 = std::min(t1, hi);
    }
    if (t0 > t1 || t0 <= 0) return std::nullopt;
    return t0;
}

inline Rgb8 cube_face_color(const Vec3& p, double h) {
    static constexpr Rgb8 kFaces[6] = {{220, 60, 60}, {60, 180, 75}, {60, 90, 220},
                                       {240, 200, 40}, {150, 60, 200}, {40, 200, 200}};
    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (std::abs(std::abs(p[a]) - h) < std::abs(std::abs(p[axis]) - h)) axis = a;
    return kFaces[axis * 2 + (p[axis] > 0 ? 0 : 1)];
}

} // namespace detail::synth

/// Four cameras at 90° steps around a cube of half size `half_size`, each
/// `distance` from its center, with depth ray-cast through integer pixel
/// coordinates. Calibration edges run cam0->cam1->cam2->cam3->cam0.
inline CaptureFixture make_cube_capture(double half_size = 0.15, double distance = 0.8,
                                        Intrinsics intr = {150, 150, 80, 60, 160, 120}) {
    CaptureFixture fx;
    fx.half_size = half_size;
    intr.validate();
    const auto rig = make_ring_rig(4, Vec3::Zero(), distance, Vec3::UnitY(), intr, 20.0);
    std::vector<RigidTransform> scene_to_cam;
    for (const auto& pose : rig) scene_to_cam.push_back(pose.world_to_cam);
    fx.scene_to_world = scene_to_cam[0];
    for (std::size_t i = 0; i < rig.size(); ++i) {
        const std::string id = "cam" + std::to_string(i);
        const RigidTransform cam_to_scene = scene_to_cam[i].inverse();
        fx.camera_to_world[id] = compose(scene_to_cam[0], cam_to_scene);

        DepthFrame frame;
        frame.camera_id = id;
        frame.intrinsics = intr;
        frame.depth.assign(static_cast<std::size_t>(intr.width) * intr.height, 0.0f);
        frame.rgb.assign(frame.depth.size() * 3, 0);
        const Vec3 origin = cam_to_scene.translation;
        for (int v = 0; v < intr.height; ++v)
            for (int u = 0; u < intr.width; ++u) {
                const Vec3 ray_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
                const auto t = detail::synth::ray_cube(origin, cam_to_scene.rotate(ray_cam), half_size);
                if (!t) continue;
                const std::size_t px = static_cast<std::size_t>(v) * intr.width + u;
                frame.depth[px] = static_cast<float>(*t);
                const Rgb8 c = detail::synth::cube_face_color(origin + *t * cam_to_scene.rotate(ray_cam), half_size);
                frame.rgb[px * 3] = c[0];
                frame.rgb[px * 3 + 1] = c[1];
                frame.rgb[px * 3 + 2] = c[2];
            }
        fx.frames.push_back(std::move(frame));
    }
    fx.calib.world_camera = "cam0";
    for (std::size_t i = 0; i < rig.size(); ++i) {
        const std::size_t j = (i + 1) % rig.size();
        fx.calib.edges.push_back({"cam" + std::to_string(i), "cam" + std::to_string(j),
                                  compose(scene_to_cam[j], scene_to_cam[i].inverse())});
    }
    return fx;
}

} // namespace mf3d
