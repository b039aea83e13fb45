#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mf3d/capture.hpp"
#include "mf3d/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mf3d;

namespace {

DepthFrame random_frame(std::mt19937& rng, int w, int h, double invalid_fraction = 0.2) {
    std::uniform_real_distribution<double> depth(0.05, 2.0), unit(0, 1);
    DepthFrame f;
    f.camera_id = "cam";
    f.intrinsics = {0.9 * w, 0.9 * w, w / 2.0 - 0.3, h / 2.0 + 0.2, w, h};
    f.depth.resize(static_cast<std::size_t>(w) * h);
    for (auto& d : f.depth) d = unit(rng) < invalid_fraction ? 0.0f : static_cast<float>(depth(rng));
    f.rgb.resize(f.depth.size() * 3);
    for (auto& c : f.rgb) c = static_cast<std::uint8_t>(rng() & 0xff);
    return f;
}

PointSet random_cloud(std::mt19937& rng, std::size_t n, double extent) {
    std::uniform_real_distribution<double> u(0, extent);
    PointSet ps;
    for (std::size_t i = 0; i < n; ++i) ps.positions.push_back({u(rng), u(rng), u(rng)});
    return ps;
}

} // namespace

TEST(Clip, DropsExactlyOutOfRangePixels) {
    std::mt19937 rng(1);
    const auto f = random_frame(rng, 40, 30, 0.1);
    const auto clipped = clip_depth_range(f, 0.1, 1.5);
    for (std::size_t i = 0; i < f.depth.size(); ++i) {
        const float d = f.depth[i];
        if (d >= 0.1 && d <= 1.5) EXPECT_EQ(clipped.depth[i], d);
        else EXPECT_EQ(clipped.depth[i], 0.0f);
    }
    EXPECT_THROW(clip_depth_range(f, 1.5, 0.1), InputError);
    EXPECT_THROW(clip_depth_range(f, -1, 1), InputError);
}

TEST(DepthToCloud, MatchesPerPixelUnproject) {
    std::mt19937 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const auto f = random_frame(rng, 23 + trial, 17 + trial);
        const auto cloud = depth_to_cloud(f);
        const CameraPose pose{f.intrinsics, RigidTransform::identity(), 1};
        std::size_t i = 0;
        for (int v = 0; v < f.height(); ++v)
            for (int u = 0; u < f.width(); ++u) {
                const std::size_t px = static_cast<std::size_t>(v) * f.width() + u;
                if (f.depth[px] <= 0) continue;
                ASSERT_LT(i, cloud.size());
                EXPECT_LT((cloud.positions[i] - unproject(u, v, f.depth[px], pose)).norm(), 1e-12);
                EXPECT_EQ(to_rgb8((*cloud.colors)[i]), (Rgb8{f.rgb[px * 3], f.rgb[px * 3 + 1], f.rgb[px * 3 + 2]}));
                ++i;
            }
        EXPECT_EQ(i, cloud.size());
    }
}

TEST(DepthToCloud, CountEqualsValidPixelsAndStride) {
    std::mt19937 rng(3);
    auto f = random_frame(rng, 20, 10, 0.5);
    f.depth[3] = std::numeric_limits<float>::quiet_NaN();
    std::size_t valid = 0, strided = 0;
    for (int v = 0; v < 10; ++v)
        for (int u = 0; u < 20; ++u) {
            const bool ok = valid_depth(f.depth[static_cast<std::size_t>(v) * 20 + u]);
            valid += ok;
            strided += ok && u % 3 == 0 && v % 3 == 0;
        }
    EXPECT_EQ(depth_to_cloud(f).size(), valid);
    EXPECT_EQ(depth_to_cloud(f, 3).size(), strided);
    EXPECT_THROW(depth_to_cloud(f, 0), InputError);
    f.depth.assign(f.depth.size(), 0.0f);
    EXPECT_TRUE(depth_to_cloud(f).empty());
}

TEST(Solve, RingReproducesGeneratingPoses) {
    const auto fx = make_cube_capture();
    const auto solved = solve_world_transforms(fx.calib);
    EXPECT_TRUE(solved.warnings.empty());
    ASSERT_EQ(solved.camera_to_world.size(), 4u);
    for (const auto& [id, xf] : fx.camera_to_world) {
        const auto& got = solved.camera_to_world.at(id);
        EXPECT_LT((got.rotation - xf.rotation).cwiseAbs().maxCoeff(), 1e-9) << id;
        EXPECT_LT((got.translation - xf.translation).cwiseAbs().maxCoeff(), 1e-9) << id;
    }
}

TEST(Solve, RandomTreeProperty) {
    std::mt19937 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        // Random camera_to_world poses with cam0 = identity, and a random
        // spanning tree of edges in random directions.
        const int n = 2 + trial % 6;
        std::vector<RigidTransform> truth{RigidTransform::identity()};
        for (int i = 1; i < n; ++i) truth.push_back(oracle::random_transform(rng));
        CalibGraph g;
        g.world_camera = "c0";
        for (int i = 1; i < n; ++i) {
            const int parent = static_cast<int>(rng() % static_cast<unsigned>(i));
            int a = i, b = parent;
            if (rng() % 2) std::swap(a, b);
            // a_to_b = world_to_b o a_to_world
            g.edges.push_back({"c" + std::to_string(a), "c" + std::to_string(b),
                               compose(truth[static_cast<std::size_t>(b)].inverse(), truth[static_cast<std::size_t>(a)])});
        }
        const auto solved = solve_world_transforms(g);
        for (int i = 0; i < n; ++i) {
            const auto& got = solved.camera_to_world.at("c" + std::to_string(i));
            EXPECT_LT((got.apply({0.3, -0.2, 1.1}) - truth[static_cast<std::size_t>(i)].apply({0.3, -0.2, 1.1})).norm(), 1e-9);
        }
    }
}

TEST(Solve, InconsistentCycleWarns) {
    auto fx = make_cube_capture();
    fx.calib.edges[2].a_to_b.translation += Vec3(0.05, 0, 0);
    const auto solved = solve_world_transforms(fx.calib);
    EXPECT_FALSE(solved.warnings.empty());
}

TEST(Solve, Errors) {
    CalibGraph g;
    g.world_camera = "a";
    g.edges.push_back({"b", "c", RigidTransform::identity()});
    EXPECT_THROW(solve_world_transforms(g), FormatError);
    g.edges = {{"a", "a", RigidTransform::identity()}};
    EXPECT_THROW(solve_world_transforms(g), FormatError);
}

TEST(Merge, CountsAndTransforms) {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<std::pair<PointSet, RigidTransform>> clouds;
        std::size_t total = 0;
        for (int c = 0; c < 1 + trial % 4; ++c) {
            auto cloud = random_cloud(rng, rng() % 50, 1.0);
            total += cloud.size();
            clouds.emplace_back(std::move(cloud), oracle::random_transform(rng));
        }
        const auto merged = merge_clouds(clouds);
        EXPECT_EQ(merged.size(), total);
        std::size_t i = 0;
        for (const auto& [cloud, xf] : clouds)
            for (const auto& p : cloud.positions) EXPECT_EQ(merged.positions[i++], xf.apply(p));
    }
    EXPECT_THROW(merge_clouds({}), InputError);
}

TEST(Merge, ColorsKeptOnlyWhenAllColored) {
    PointSet a, b;
    a.positions = {{0, 0, 0}};
    a.colors = std::vector<Color>{{1, 0, 0}};
    b.positions = {{1, 0, 0}};
    EXPECT_TRUE(merge_clouds({{a, {}}, {a, {}}}).colors);
    EXPECT_FALSE(merge_clouds({{a, {}}, {b, {}}}).colors);
}

TEST(OutlierRemoval, MatchesAllPairsOracle) {
    std::mt19937 rng(6);
    std::uniform_real_distribution<double> radius(0.02, 0.15);
    std::uniform_int_distribution<int> neighbors(0, 8);
    for (int trial = 0; trial < 5; ++trial) {
        const auto cloud = random_cloud(rng, 2000, 1.0);
        const double r = radius(rng);
        const int k = neighbors(rng);
        const auto result = radius_outlier_removal(cloud, r, k);
        const auto kept = oracle::radius_filter(cloud.positions, r, k);
        ASSERT_EQ(result.kept.size(), kept.size()) << "trial " << trial;
        for (std::size_t i = 0; i < kept.size(); ++i)
            EXPECT_EQ(result.kept.positions[i], cloud.positions[static_cast<std::size_t>(kept[i])]);
        EXPECT_EQ(result.kept.size() + result.removed.size(), cloud.size());
    }
}

TEST(OutlierRemoval, BoundaryDistanceIsInclusive) {
    PointSet ps;
    ps.positions = {{0, 0, 0}, {0.5, 0, 0}, {5, 0, 0}};
    const auto r = radius_outlier_removal(ps, 0.5, 1);
    EXPECT_EQ(r.kept.size(), 2u);
    EXPECT_EQ(r.removed, std::vector<std::int32_t>{2});
}

TEST(OutlierRemoval, MonotoneInRadiusAndCount) {
    std::mt19937 rng(7);
    const auto cloud = random_cloud(rng, 800, 1.0);
    const auto small = radius_outlier_removal(cloud, 0.05, 3);
    const auto large = radius_outlier_removal(cloud, 0.1, 3);
    const auto strict = radius_outlier_removal(cloud, 0.1, 6);
    EXPECT_LE(small.kept.size(), large.kept.size());
    EXPECT_LE(strict.kept.size(), large.kept.size());
    // Every point removed at the larger radius is also removed at the smaller.
    EXPECT_TRUE(std::includes(small.removed.begin(), small.removed.end(), large.removed.begin(), large.removed.end()));
    EXPECT_EQ(radius_outlier_removal(cloud, 0.1, 0).kept.size(), cloud.size());
}

TEST(OutlierRemoval, Errors) {
    PointSet ps;
    ps.positions = {{0, 0, 0}};
    EXPECT_THROW(radius_outlier_removal(ps, 0, 1), InputError);
    EXPECT_THROW(radius_outlier_removal(ps, 1, -1), InputError);
    EXPECT_TRUE(radius_outlier_removal(PointSet{}, 1, 3).kept.empty());
}

TEST(CubeCapture, MergedCloudLiesOnCube) {
    const auto fx = make_cube_capture();
    const auto solved = solve_world_transforms(fx.calib);
    std::vector<std::pair<PointSet, RigidTransform>> clouds;
    for (const auto& f : fx.frames) clouds.emplace_back(depth_to_cloud(f), solved.camera_to_world.at(f.camera_id));
    const auto merged = merge_clouds(clouds);
    ASSERT_GT(merged.size(), 1000u);
    const auto world_to_scene = fx.scene_to_world.inverse();
    Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
    for (const auto& p : merged.positions) {
        const Vec3 s = world_to_scene.apply(p);
        EXPECT_NEAR(s.cwiseAbs().maxCoeff(), fx.half_size, 1e-6);
        lo = lo.cwiseMin(s);
        hi = hi.cwiseMax(s);
    }
    // Four views around the vertical axis see all four side faces.
    EXPECT_NEAR(lo.x(), -fx.half_size, 1e-6);
    EXPECT_NEAR(hi.x(), fx.half_size, 1e-6);
    EXPECT_NEAR(lo.z(), -fx.half_size, 1e-6);
    EXPECT_NEAR(hi.z(), fx.half_size, 1e-6);
}

TEST(CaptureIo, FrameRoundTrip) {
    testutil::TempDir dir;
    std::mt19937 rng(8);
    const auto f = random_frame(rng, 12, 9);
    write_depth_frame(dir / "cam", f);
    const auto back = read_depth_frame(dir / "cam", "cam");
    EXPECT_EQ(back.depth, f.depth);
    EXPECT_EQ(back.rgb, f.rgb);
    EXPECT_EQ(back.intrinsics, f.intrinsics);
}

TEST(CaptureIo, SizeMismatchIsRejected) {
    testutil::TempDir dir;
    std::mt19937 rng(9);
    auto f = random_frame(rng, 12, 9);
    write_depth_frame(dir / "cam", f);
    f.intrinsics.width = 13;
    detail::write_text_file(dir / "cam" / "intrinsics.json", intrinsics_to_json(f.intrinsics).dump());
    EXPECT_THROW(read_depth_frame(dir / "cam", "cam"), FormatError);
}

TEST(CaptureIo, CalibJsonRoundTrip) {
    const auto fx = make_cube_capture();
    const auto back = calib_from_json(nlohmann::json::parse(calib_to_json(fx.calib).dump()));
    EXPECT_EQ(back.world_camera, "cam0");
    ASSERT_EQ(back.edges.size(), fx.calib.edges.size());
    for (std::size_t i = 0; i < back.edges.size(); ++i) {
        EXPECT_EQ(back.edges[i].a, fx.calib.edges[i].a);
        EXPECT_EQ(back.edges[i].a_to_b.rotation, fx.calib.edges[i].a_to_b.rotation);
        EXPECT_EQ(back.edges[i].a_to_b.translation, fx.calib.edges[i].a_to_b.translation);
    }
    EXPECT_THROW(calib_from_json(nlohmann::json{{"edges", 3}}), FormatError);
}
