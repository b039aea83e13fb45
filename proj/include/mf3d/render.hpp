#pragma once

// Software rasterizer. Each view yields an RGB image, a depth buffer and a
// per-pixel point-index map; the index map is what 2D masks are lifted
// through.
//
// Sampling is at pixel centers (x + 0.5, y + 0.5). Triangle coverage uses
// 8-bit sub-pixel fixed point with a top-left fill rule, so shared edges are
// covered exactly once. Depth and barycentrics come from intersecting the
// pixel ray with the camera-space triangle, which is perspective-correct by
// construction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <variant>
#include <vector>

#include "mf3d/camera.hpp"
#include "mf3d/error.hpp"
#include "mf3d/geom.hpp"
#include "mf3d/parallel.hpp"

namespace mf3d {

inline constexpr std::int32_t kSentinel = -1;

/// Depth differences below this are ties, won by the lower primitive index.
inline constexpr double kDepthTieEps = 1e-7;

inline constexpr Rgb8 kBackground{255, 255, 255};

struct RenderOutput {
    int width = 0;
    int height = 0;
    int view_index = 0;
    std::vector<std::uint8_t> rgb;         // H*W*3
    std::vector<float> depth;              // H*W, +inf for background
    std::vector<std::int32_t> point_index; // H*W, kSentinel for background

    std::size_t pixel(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    static RenderOutput blank(const CameraPose& pose) {
        RenderOutput out;
        out.width = pose.intrinsics.width;
        out.height = pose.intrinsics.height;
        out.view_index = pose.view_index;
        const auto n = out.pixel_count();
        out.rgb.resize(n * 3);
        for (std::size_t i = 0; i < n; ++i) std::copy(kBackground.begin(), kBackground.end(), out.rgb.begin() + i * 3);
        out.depth.assign(n, std::numeric_limits<float>::infinity());
        out.point_index.assign(n, kSentinel);
        return out;
    }
};

namespace detail::raster {

inline constexpr int kSubBits = 8;
inline constexpr std::int64_t kSub = std::int64_t{1} << kSubBits;
inline constexpr double kCoordLimit = 1099511627776.0; // 2^40 sub-pixel units
inline constexpr int kBandRows = 16;

struct FixedPoint {
    std::int64_t x;
    std::int64_t y;
};

inline FixedPoint snap(double u, double v) {
    auto s = [](double c) {
        return static_cast<std::int64_t>(std::llround(std::clamp(c * kSub, -kCoordLimit, kCoordLimit)));
    };
    return {s(u), s(v)};
}

inline __int128 edge(const FixedPoint& a, const FixedPoint& b, std::int64_t px, std::int64_t py) {
    return static_cast<__int128>(b.x - a.x) * (py - a.y) - static_cast<__int128>(b.y - a.y) * (px - a.x);
}

// Edge a->b of a positively oriented triangle owns its zero-distance pixels
// when it is a top edge (horizontal, interior below) or a left edge.
inline bool is_top_left(const FixedPoint& a, const FixedPoint& b) {
    const std::int64_t dx = b.x - a.x;
    const std::int64_t dy = b.y - a.y;
    return (dy == 0 && dx > 0) || dy < 0;
}

struct ScreenTriangle {
    std::array<FixedPoint, 3> v;
    std::array<bool, 3> top_left; // edge i is v[i+1] -> v[i+2]
    int x0, x1, y0, y1;          // inclusive pixel bounds, clamped to the image

    bool covers(int x, int y) const {
        const std::int64_t px = x * kSub + kSub / 2;
        const std::int64_t py = y * kSub + kSub / 2;
        for (int i = 0; i < 3; ++i) {
            const auto w = edge(v[(i + 1) % 3], v[(i + 2) % 3], px, py);
            if (w < 0 || (w == 0 && !top_left[i])) return false;
        }
        return true;
    }
};

struct MeshPrimitive {
    Vec3 a, b, c;         // camera space
    Vec3 e1, e2, normal;  // b - a, c - a, e1 x e2
    double normal_sq = 0;
    Face vertices{};
    std::vector<ScreenTriangle> screen;
};

inline std::vector<Vec3> clip_near(const std::array<Vec3, 3>& tri) {
    std::vector<Vec3> out;
    for (int i = 0; i < 3; ++i) {
        const Vec3& p = tri[static_cast<std::size_t>(i)];
        const Vec3& q = tri[static_cast<std::size_t>((i + 1) % 3)];
        const bool p_in = p.z() >= kZNear;
        const bool q_in = q.z() >= kZNear;
        if (p_in) out.push_back(p);
        if (p_in != q_in) {
            const double s = (kZNear - p.z()) / (q.z() - p.z());
            Vec3 r = p + s * (q - p);
            r.z() = kZNear;
            out.push_back(r);
        }
    }
    return out;
}

inline void append_screen_triangle(std::vector<ScreenTriangle>& out, FixedPoint p0, FixedPoint p1, FixedPoint p2,
                                   int width, int height) {
    const __int128 area = edge(p0, p1, p2.x, p2.y);
    if (area == 0) return;
    if (area < 0) std::swap(p1, p2);
    ScreenTriangle t;
    t.v = {p0, p1, p2};
    for (int i = 0; i < 3; ++i) t.top_left[static_cast<std::size_t>(i)] = is_top_left(t.v[static_cast<std::size_t>((i + 1) % 3)], t.v[static_cast<std::size_t>((i + 2) % 3)]);
    const auto minx = std::min({p0.x, p1.x, p2.x}), maxx = std::max({p0.x, p1.x, p2.x});
    const auto miny = std::min({p0.y, p1.y, p2.y}), maxy = std::max({p0.y, p1.y, p2.y});
    // Pixel x is sampled at x*kSub + kSub/2.
    auto lo = [](std::int64_t m) { return static_cast<std::int64_t>(std::floor(static_cast<double>(m - kSub / 2) / kSub)); };
    auto hi = [](std::int64_t m) { return static_cast<std::int64_t>(std::ceil(static_cast<double>(m - kSub / 2) / kSub)); };
    t.x0 = static_cast<int>(std::clamp<std::int64_t>(lo(minx), 0, width));
    t.x1 = static_cast<int>(std::clamp<std::int64_t>(hi(maxx), -1, width - 1));
    t.y0 = static_cast<int>(std::clamp<std::int64_t>(lo(miny), 0, height));
    t.y1 = static_cast<int>(std::clamp<std::int64_t>(hi(maxy), -1, height - 1));
    if (t.x0 > t.x1 || t.y0 > t.y1) return;
    out.push_back(t);
}

inline MeshPrimitive setup_triangle(const TriMesh& mesh, std::size_t face, const CameraPose& pose) {
    MeshPrimitive prim;
    prim.vertices = mesh.faces[face];
    const auto& xf = pose.world_to_cam;
    prim.a = xf.apply(mesh.vertices[static_cast<std::size_t>(prim.vertices[0])]);
    prim.b = xf.apply(mesh.vertices[static_cast<std::size_t>(prim.vertices[1])]);
    prim.c = xf.apply(mesh.vertices[static_cast<std::size_t>(prim.vertices[2])]);
    prim.e1 = prim.b - prim.a;
    prim.e2 = prim.c - prim.a;
    prim.normal = prim.e1.cross(prim.e2);
    prim.normal_sq = prim.normal.squaredNorm();
    if (!(prim.normal_sq > 0)) return prim;

    const auto poly = clip_near({prim.a, prim.b, prim.c});
    if (poly.size() < 3) return prim;
    const auto& k = pose.intrinsics;
    std::vector<FixedPoint> screen;
    screen.reserve(poly.size());
    for (const auto& p : poly) screen.push_back(snap(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy));
    for (std::size_t i = 1; i + 1 < screen.size(); ++i)
        append_screen_triangle(prim.screen, screen[0], screen[i], screen[i + 1], k.width, k.height);
    return prim;
}

struct Hit {
    double depth;
    std::array<double, 3> bary;
};

// Intersection of the pixel-center ray with the primitive's plane.
inline bool intersect(const MeshPrimitive& prim, const Vec3& ray, Hit& hit) {
    const double nd = prim.normal.dot(ray);
    if (std::abs(nd) < 1e-300) return false;
    const double t = prim.normal.dot(prim.a) / nd;
    if (!(t > kZNear)) return false;
    const Vec3 rel = t * ray - prim.a;
    const double beta = rel.cross(prim.e2).dot(prim.normal) / prim.normal_sq;
    const double gamma = prim.e1.cross(rel).dot(prim.normal) / prim.normal_sq;
    hit.depth = t;
    hit.bary = {1.0 - beta - gamma, beta, gamma};
    return true;
}

inline std::size_t argmax3(const std::array<double, 3>& w) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i)
        if (w[i] > w[best]) best = i;
    return best;
}

inline Vec3 pixel_ray(int x, int y, const Intrinsics& k) {
    return {(x + 0.5 - k.cx) / k.fx, (y + 0.5 - k.cy) / k.fy, 1.0};
}

inline std::size_t band_count(int height) { return static_cast<std::size_t>((height + kBandRows - 1) / kBandRows); }

} // namespace detail::raster

inline const Color kDefaultSurfaceColor{0.7, 0.7, 0.7};

/// Z-buffered rasterization of a triangle mesh. `points` must be the mesh's
/// vertex set; point_index holds, per pixel, the vertex of the front-most
/// face with the largest barycentric weight. Back faces are drawn.
inline RenderOutput rasterize_mesh(const TriMesh& mesh, const PointSet& points, const CameraPose& pose) {
    using namespace detail::raster;
    if (mesh.vertices.empty() || mesh.faces.empty()) throw InputError("cannot rasterize an empty mesh");
    if (points.size() != mesh.vertices.size())
        throw InvariantError("point set does not match the mesh vertex set");
    pose.intrinsics.validate();

    std::vector<MeshPrimitive> prims(mesh.faces.size());
    parallel_for(0, prims.size(), [&](std::size_t f) { prims[f] = setup_triangle(mesh, f, pose); });

    RenderOutput out = RenderOutput::blank(pose);
    const auto& k = pose.intrinsics;
    const auto& colors = mesh.vertex_colors;
    std::vector<double> zbuf(out.pixel_count(), std::numeric_limits<double>::infinity());

    parallel_for(0, band_count(k.height), [&](std::size_t band) {
        const int row0 = static_cast<int>(band) * kBandRows;
        const int row1 = std::min(k.height, row0 + kBandRows) - 1;
        for (std::size_t f = 0; f < prims.size(); ++f) {
            const auto& prim = prims[f];
            for (const auto& tri : prim.screen) {
                const int y0 = std::max(tri.y0, row0), y1 = std::min(tri.y1, row1);
                for (int y = y0; y <= y1; ++y) {
                    for (int x = tri.x0; x <= tri.x1; ++x) {
                        if (!tri.covers(x, y)) continue;
                        Hit hit;
                        if (!intersect(prim, pixel_ray(x, y, k), hit)) continue;
                        const std::size_t px = out.pixel(x, y);
                        if (!(hit.depth < zbuf[px] - kDepthTieEps)) continue;
                        zbuf[px] = hit.depth;
                        out.depth[px] = static_cast<float>(hit.depth);
                        out.point_index[px] = prim.vertices[argmax3(hit.bary)];
                        Color c = kDefaultSurfaceColor;
                        if (colors) {
                            std::array<double, 3> w{std::max(0.0, hit.bary[0]), std::max(0.0, hit.bary[1]),
                                                    std::max(0.0, hit.bary[2])};
                            const double sum = w[0] + w[1] + w[2];
                            c = Color::Zero();
                            for (std::size_t i = 0; i < 3; ++i)
                                c += (sum > 0 ? w[i] / sum : 1.0 / 3.0) *
                                     (*colors)[static_cast<std::size_t>(prim.vertices[i])];
                        }
                        const Rgb8 rgb = to_rgb8(c);
                        std::copy(rgb.begin(), rgb.end(), out.rgb.begin() + px * 3);
                    }
                }
            }
        }
    });
    return out;
}

/// Splat radius for a cloud of `count` points: 2 px at 50k points and
/// above, growing as the cloud thins, clamped to [1, 6].
inline double default_splat_radius(std::size_t count) {
    if (count >= 50000) return 2.0;
    return std::clamp(2.0 * std::sqrt(50000.0 / static_cast<double>(std::max<std::size_t>(count, 1))), 1.0, 6.0);
}

/// Renders each point as a filled disc of radius `splat_px` (plus the pixel
/// containing its projection). The nearest point wins each pixel.
inline RenderOutput rasterize_points(const PointSet& points, const CameraPose& pose, double splat_px) {
    using namespace detail::raster;
    if (points.empty()) throw InputError("cannot rasterize an empty point set");
    if (!(splat_px >= 0.5)) throw InputError("splat radius must be at least 0.5 px");
    pose.intrinsics.validate();

    struct Splat {
        bool visible = false;
        double u = 0, v = 0, z = 0;
    };
    std::vector<Splat> splats(points.size());
    parallel_for(0, points.size(), [&](std::size_t i) {
        if (auto p = project(points.positions[i], pose)) splats[i] = {true, p->u, p->v, p->z};
    });

    RenderOutput out = RenderOutput::blank(pose);
    const auto& k = pose.intrinsics;
    const double r2 = splat_px * splat_px;
    std::vector<double> zbuf(out.pixel_count(), std::numeric_limits<double>::infinity());

    parallel_for(0, band_count(k.height), [&](std::size_t band) {
        const int row0 = static_cast<int>(band) * kBandRows;
        const int row1 = std::min(k.height, row0 + kBandRows) - 1;
        for (std::size_t i = 0; i < splats.size(); ++i) {
            const auto& s = splats[i];
            if (!s.visible) continue;
            const double fy0 = std::floor(s.v - splat_px - 0.5), fy1 = std::ceil(s.v + splat_px - 0.5);
            if (fy1 < row0 || fy0 > row1) continue;
            const double fx0 = std::floor(s.u - splat_px - 0.5), fx1 = std::ceil(s.u + splat_px - 0.5);
            if (fx1 < 0 || fx0 > k.width - 1) continue;
            const int y0 = std::max(row0, static_cast<int>(fy0)), y1 = std::min(row1, static_cast<int>(fy1));
            const int x0 = std::max(0, static_cast<int>(fx0)), x1 = std::min(k.width - 1, static_cast<int>(fx1));
            const double home_x = std::floor(s.u), home_y = std::floor(s.v);
            const Rgb8 rgb = to_rgb8(points.colors ? (*points.colors)[i] : kDefaultSurfaceColor);
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const double dx = x + 0.5 - s.u, dy = y + 0.5 - s.v;
                    const bool home = x == home_x && y == home_y;
                    if (!home && dx * dx + dy * dy > r2) continue;
                    const std::size_t px = out.pixel(x, y);
                    if (!(s.z < zbuf[px] - kDepthTieEps)) continue;
                    zbuf[px] = s.z;
                    out.depth[px] = static_cast<float>(s.z);
                    out.point_index[px] = static_cast<std::int32_t>(i);
                    std::copy(rgb.begin(), rgb.end(), out.rgb.begin() + px * 3);
                }
            }
        }
    });
    return out;
}

/// Sorted, de-duplicated indices of all points that won at least one pixel.
inline std::vector<std::int32_t> visible_points(const RenderOutput& out) {
    std::vector<std::int32_t> ids;
    for (auto idx : out.point_index)
        if (idx != kSentinel) ids.push_back(idx);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

/// Renders every pose in the rig. Meshes are rasterized; point sets are
/// splatted with `splat_px` (<= 0 selects default_splat_radius).
inline std::vector<RenderOutput> render_views(const Model& model, const std::vector<CameraPose>& rig,
                                              double splat_px = 0.0) {
    std::vector<RenderOutput> renders;
    renders.reserve(rig.size());
    if (const auto* mesh = std::get_if<TriMesh>(&model)) {
        const PointSet points = mesh_vertices_as_points(*mesh);
        for (const auto& pose : rig) renders.push_back(rasterize_mesh(*mesh, points, pose));
    } else {
        const auto& points = std::get<PointSet>(model);
        const double r = splat_px > 0 ? splat_px : default_splat_radius(points.size());
        for (const auto& pose : rig) renders.push_back(rasterize_points(points, pose, r));
    }
    return renders;
}

} // namespace mf3d
