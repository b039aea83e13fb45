#include <random>
#include <set>

#include <gtest/gtest.h>

#include "mf3d/proposal.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mf3d;

namespace {

Mask2D random_mask(std::mt19937& rng, int view, int id, int w, int h, double density) {
    std::bernoulli_distribution bit(density);
    Mask2D m = Mask2D::empty(view, id, w, h);
    for (auto& b : m.bits) b = bit(rng);
    if (m.popcount() == 0) m.bits[0] = 1;
    return m;
}

ProposalBundle random_bundle(std::mt19937& rng, int masks, int dim) {
    ProposalBundle b;
    b.dim = dim;
    b.cameras = {CameraPose{Intrinsics::centered(24, 16, 20), oracle::random_transform(rng), 1},
                 CameraPose{Intrinsics::centered(24, 16, 20), oracle::random_transform(rng), 2},
                 CameraPose{Intrinsics::centered(24, 16, 20), oracle::random_transform(rng), 3}};
    std::normal_distribution<float> g(0, 1);
    for (int i = 0; i < masks; ++i) {
        const int view = i % 2 == 0 ? 1 : 3; // view 2 has no masks
        b.masks.push_back(random_mask(rng, view, i, 24, 16, 0.3));
        b.refs.push_back({view, i});
        for (int d = 0; d < dim; ++d) b.embeddings.push_back(g(rng));
    }
    // Manifest order groups masks by view.
    std::vector<std::size_t> order(b.refs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return b.refs[x].view_index < b.refs[y].view_index; });
    ProposalBundle sorted = b;
    for (std::size_t i = 0; i < order.size(); ++i) {
        sorted.refs[i] = b.refs[order[i]];
        sorted.masks[i] = b.masks[order[i]];
        std::copy_n(b.embeddings.begin() + static_cast<std::ptrdiff_t>(order[i] * dim), dim,
                    sorted.embeddings.begin() + static_cast<std::ptrdiff_t>(i * dim));
    }
    return sorted;
}

// Random point cloud in front of an identity camera, splatted to 48x40.
RenderOutput random_render(std::mt19937& rng, std::size_t points, PointSet* out_points = nullptr) {
    std::uniform_real_distribution<double> xy(-1, 1), z(2, 5);
    PointSet ps;
    for (std::size_t i = 0; i < points; ++i) ps.positions.push_back({xy(rng), xy(rng), z(rng)});
    if (out_points) *out_points = ps;
    return rasterize_points(ps, {Intrinsics::centered(48, 40, 40), RigidTransform::identity(), 1}, 1.5);
}

} // namespace

TEST(Rle, RoundTripProperty) {
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> density(0, 1);
    for (int trial = 0; trial < 100; ++trial) {
        const auto m = random_mask(rng, 2, trial, 1 + trial % 17, 1 + trial % 13, density(rng));
        const auto back = decode_rle(encode_rle(m), m.width, m.height, {2, trial}, "t");
        EXPECT_EQ(back.bits, m.bits);
        EXPECT_EQ(back.view_index, 2);
        EXPECT_EQ(back.mask_id, trial);
    }
}

TEST(Rle, KnownEncoding) {
    Mask2D m = Mask2D::empty(1, 0, 4, 2);
    m.bits = {0, 1, 1, 0, 0, 0, 1, 1};
    const auto enc = encode_rle(m);
    ASSERT_EQ(enc.size(), 4u + 2 * 8u);
    EXPECT_EQ(detail::get_le<std::uint32_t>(enc.data()), 2u);
    EXPECT_EQ(detail::get_le<std::uint32_t>(enc.data() + 4), 1u);  // skip
    EXPECT_EQ(detail::get_le<std::uint32_t>(enc.data() + 8), 2u);  // run
    EXPECT_EQ(detail::get_le<std::uint32_t>(enc.data() + 12), 3u); // skip
    EXPECT_EQ(detail::get_le<std::uint32_t>(enc.data() + 16), 2u); // run
}

TEST(Rle, OverrunIsRejected) {
    Mask2D m = Mask2D::empty(1, 0, 4, 2);
    m.bits.assign(8, 1);
    const auto enc = encode_rle(m);
    EXPECT_THROW(decode_rle(enc, 3, 2, {1, 0}, "t"), FormatError);
    auto truncated = enc;
    truncated.pop_back();
    EXPECT_THROW(decode_rle(truncated, 4, 2, {1, 0}, "t"), FormatError);
}

TEST(Bundle, RoundTripProperty) {
    std::mt19937 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        testutil::TempDir dir;
        const auto b = random_bundle(rng, 5, 8);
        write_bundle(b, dir.path());
        BundleReadReport report;
        const auto back = read_bundle(dir.path(), {}, &report);
        EXPECT_EQ(report.mask_files_read, 5u);
        ASSERT_EQ(back.mask_count(), 5u);
        EXPECT_EQ(back.dim, 8);
        EXPECT_EQ(back.source, ProposalSource::Synthetic);
        EXPECT_EQ(back.embeddings, b.embeddings);
        ASSERT_EQ(back.cameras.size(), 3u);
        for (std::size_t i = 0; i < 5; ++i) {
            EXPECT_EQ(back.refs[i], b.refs[i]);
            EXPECT_EQ(back.masks[i].bits, b.masks[i].bits);
        }
        for (Eigen::Index i = 0; i < back.unit_embeddings.rows(); ++i)
            EXPECT_NEAR(back.unit_embeddings.row(i).norm(), 1.0, 1e-12);
    }
}

TEST(Bundle, ReadWithoutMasksOpensNoMaskFiles) {
    std::mt19937 rng(3);
    testutil::TempDir dir;
    write_bundle(random_bundle(rng, 4, 6), dir.path());
    std::filesystem::remove_all(dir / "masks");
    BundleReadReport report;
    const auto b = read_bundle(dir.path(), {.load_masks = false}, &report);
    EXPECT_EQ(report.mask_files_read, 0u);
    EXPECT_EQ(b.mask_count(), 4u);
    EXPECT_TRUE(b.masks.empty());
    EXPECT_THROW(read_bundle(dir.path()), InputError);
}

TEST(Bundle, EmptyIsRejected) {
    testutil::TempDir dir;
    ProposalBundle b;
    b.dim = 4;
    try {
        write_bundle(b, dir.path());
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("empty bundle"), std::string::npos);
    }
    std::mt19937 rng(4);
    write_bundle(random_bundle(rng, 2, 4), dir.path());
    auto manifest = nlohmann::json::parse(detail::read_text_file(dir / "manifest.json"));
    for (auto& v : manifest["views"]) v["masks"] = nlohmann::json::array();
    manifest.erase("N");
    detail::write_text_file(dir / "manifest.json", manifest.dump());
    try {
        read_bundle(dir.path());
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("empty bundle"), std::string::npos);
    }
}

TEST(Bundle, EmbeddingSizeMismatchReportsSizes) {
    std::mt19937 rng(5);
    testutil::TempDir dir;
    write_bundle(random_bundle(rng, 3, 4), dir.path());
    auto emb = detail::read_file(dir / "embeddings.f32");
    emb.resize(emb.size() - 4);
    detail::write_file(dir / "embeddings.f32", emb);
    auto manifest = nlohmann::json::parse(detail::read_text_file(dir / "manifest.json"));
    manifest["embeddings"]["sha256"] = sha256_hex(emb);
    detail::write_text_file(dir / "manifest.json", manifest.dump());
    try {
        read_bundle(dir.path());
        FAIL();
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("44 bytes"), std::string::npos) << msg;
        EXPECT_NE(msg.find("expected 48"), std::string::npos) << msg;
    }
}

TEST(Bundle, ChecksumMismatchIsRejected) {
    std::mt19937 rng(6);
    testutil::TempDir dir;
    const auto b = random_bundle(rng, 3, 4);
    write_bundle(b, dir.path());
    auto emb = detail::read_file(dir / "embeddings.f32");
    emb[0] ^= 1;
    detail::write_file(dir / "embeddings.f32", emb);
    EXPECT_THROW(read_bundle(dir.path()), FormatError);

    write_bundle(b, dir.path());
    const auto mask_path = dir / mask_file_name(b.refs[0]);
    auto rle = detail::read_file(mask_path);
    rle.back() ^= 1;
    detail::write_file(mask_path, rle);
    EXPECT_THROW(read_bundle(dir.path()), FormatError);
}

TEST(Bundle, SchemaAndReferenceErrors) {
    std::mt19937 rng(7);
    testutil::TempDir dir;
    write_bundle(random_bundle(rng, 3, 4), dir.path());
    const auto original = nlohmann::json::parse(detail::read_text_file(dir / "manifest.json"));

    auto j = original;
    j["schema_version"] = 2;
    detail::write_text_file(dir / "manifest.json", j.dump());
    EXPECT_THROW(read_bundle(dir.path()), FormatError);

    j = original;
    j["views"][0]["index"] = 9;
    detail::write_text_file(dir / "manifest.json", j.dump());
    EXPECT_THROW(read_bundle(dir.path()), FormatError);

    j = original;
    j["views"][0]["masks"].push_back(j["views"][0]["masks"][0]);
    j.erase("N");
    detail::write_text_file(dir / "manifest.json", j.dump());
    EXPECT_THROW(read_bundle(dir.path()), FormatError);

    j = original;
    j["N"] = 7;
    detail::write_text_file(dir / "manifest.json", j.dump());
    EXPECT_THROW(read_bundle(dir.path()), FormatError);

    detail::write_text_file(dir / "manifest.json", "{not json");
    EXPECT_THROW(read_bundle(dir.path()), FormatError);

    EXPECT_THROW(read_bundle(dir / "absent"), InputError);
}

TEST(Bundle, ZeroNormEmbeddingIsRejected) {
    std::mt19937 rng(8);
    auto b = random_bundle(rng, 2, 3);
    std::fill_n(b.embeddings.begin(), 3, 0.0f);
    EXPECT_THROW(b.normalize(), FormatError);
}

TEST(Lift, AllBackgroundMaskIsRejected) {
    std::mt19937 rng(10);
    const auto r = random_render(rng, 10);
    Mask2D m = Mask2D::empty(1, 0, r.width, r.height);
    for (std::size_t px = 0; px < m.bits.size(); ++px) m.bits[px] = r.point_index[px] == kSentinel;
    EXPECT_FALSE(lift_mask(m, r, 10, 1));
}

TEST(Lift, FullMaskGivesVisiblePoints) {
    std::mt19937 rng(11);
    const auto r = random_render(rng, 200);
    Mask2D m = Mask2D::empty(1, 0, r.width, r.height);
    std::fill(m.bits.begin(), m.bits.end(), 1);
    const auto lifted = lift_mask(m, r, 200, 16);
    ASSERT_TRUE(lifted);
    EXPECT_EQ(lifted->members, visible_points(r));
}

TEST(Lift, MatchesPixelSetOracle) {
    std::mt19937 rng(12);
    std::uniform_real_distribution<double> density(0.01, 0.6);
    std::uniform_int_distribution<int> min_px(0, 40);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t p = 50 + static_cast<std::size_t>(trial) * 5;
        const auto r = random_render(rng, p);
        const auto m = random_mask(rng, 1, trial, r.width, r.height, density(rng));
        const int threshold = min_px(rng);
        const auto [expected, hits] = oracle::lift(m, r);
        const auto lifted = lift_mask(m, r, p, threshold);
        if (hits == 0 || hits < static_cast<std::size_t>(threshold)) {
            EXPECT_FALSE(lifted);
            continue;
        }
        ASSERT_TRUE(lifted);
        EXPECT_EQ(std::set<std::int32_t>(lifted->members.begin(), lifted->members.end()), expected);
        EXPECT_TRUE(std::is_sorted(lifted->members.begin(), lifted->members.end()));
        EXPECT_EQ(lifted->provenance, (MaskRef{1, trial}));
    }
}

TEST(Lift, MonotoneInMaskBits) {
    std::mt19937 rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        const auto r = random_render(rng, 300);
        const auto small = random_mask(rng, 1, 0, r.width, r.height, 0.2);
        Mask2D big = small;
        std::bernoulli_distribution extra(0.3);
        for (auto& b : big.bits) b = b || extra(rng);
        const auto a = lift_mask(small, r, 300, 1);
        const auto b = lift_mask(big, r, 300, 1);
        if (!a) continue;
        ASSERT_TRUE(b);
        EXPECT_TRUE(std::includes(b->members.begin(), b->members.end(), a->members.begin(), a->members.end()));
    }
}

TEST(Lift, OccludedPointsNeverAppear) {
    std::mt19937 rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        PointSet ps;
        const auto r = random_render(rng, 400, &ps);
        const auto visible = visible_points(r);
        Mask2D m = Mask2D::empty(1, 0, r.width, r.height);
        std::fill(m.bits.begin(), m.bits.end(), 1);
        const auto lifted = lift_mask(m, r, ps.size(), 0);
        ASSERT_TRUE(lifted);
        for (auto p : lifted->members) EXPECT_TRUE(std::binary_search(visible.begin(), visible.end(), p));
        EXPECT_LT(lifted->members.size(), ps.size()); // 400 points in 48x40 always hide some
    }
}

TEST(Lift, Errors) {
    std::mt19937 rng(15);
    const auto r = random_render(rng, 20);
    Mask2D wrong_view = Mask2D::empty(2, 0, r.width, r.height);
    EXPECT_THROW(lift_mask(wrong_view, r, 20, 0), InputError);
    Mask2D wrong_size = Mask2D::empty(1, 0, r.width + 1, r.height);
    EXPECT_THROW(lift_mask(wrong_size, r, 20, 0), FormatError);
    Mask2D full = Mask2D::empty(1, 0, r.width, r.height);
    std::fill(full.bits.begin(), full.bits.end(), 1);
    EXPECT_THROW(lift_mask(full, r, 5, 0), InvariantError); // P smaller than the rendered indices
}

TEST(Stack, AllOnesColumn) {
    Mask3D all{5, {0, 1, 2, 3, 4}, {1, 0}};
    const auto m = stack_masks({all}, 5);
    EXPECT_EQ(m.densify(), std::vector<std::uint8_t>(5, 1));
    for (std::size_t p = 0; p < 5; ++p) EXPECT_EQ(m.coverage(p), 1u);
}

TEST(Stack, DisjointSupports) {
    const auto m = stack_masks({{6, {0, 2}, {}}, {6, {1, 5}, {}}, {6, {3}, {}}}, 6);
    for (std::size_t p = 0; p < 6; ++p) EXPECT_LE(m.coverage(p), 1u);
    EXPECT_EQ(m.coverage(4), 0u);
    EXPECT_EQ(std::vector<std::int32_t>(m.row(5).begin(), m.row(5).end()), std::vector<std::int32_t>{1});
}

TEST(Stack, DensifyMatchesNaiveOracle) {
    std::mt19937 rng(16);
    std::bernoulli_distribution bit(0.3);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t p = 100, n = 20;
        std::vector<Mask3D> masks;
        std::vector<std::uint8_t> naive(p * n, 0);
        for (std::size_t c = 0; c < n; ++c) {
            Mask3D m;
            m.point_count = p;
            for (std::size_t r = 0; r < p; ++r)
                if (bit(rng)) {
                    m.members.push_back(static_cast<std::int32_t>(r));
                    naive[r * n + c] = 1;
                }
            masks.push_back(m);
        }
        const auto matrix = stack_masks(masks, p);
        EXPECT_EQ(matrix.densify(), naive);
        std::size_t nnz = 0;
        for (const auto& m : masks) nnz += m.members.size();
        EXPECT_EQ(matrix.nnz(), nnz);
        std::size_t row_total = 0;
        for (std::size_t r = 0; r < p; ++r) row_total += matrix.coverage(r);
        EXPECT_EQ(row_total, nnz);
    }
}

TEST(Stack, LengthMismatch) {
    EXPECT_THROW(stack_masks({{4, {0}, {}}, {5, {1}, {}}}, 4), InvariantError);
}

TEST(Stack, MalformedColumnArrays) {
    EXPECT_THROW(SparseMaskMatrix(3, {0, 2}, {1, 1}), InvariantError);
    EXPECT_THROW(SparseMaskMatrix(3, {0, 1}, {3}), InvariantError);
    EXPECT_THROW(SparseMaskMatrix(3, {0, 2}, {1}), InvariantError);
}

TEST(LiftBundle, KeepsSurvivorsInOrder) {
    std::mt19937 rng(17);
    const auto r = random_render(rng, 150);
    ProposalBundle b;
    b.dim = 2;
    b.cameras = {CameraPose{Intrinsics::centered(48, 40, 40), RigidTransform::identity(), 1}};
    Mask2D bg = Mask2D::empty(1, 1, r.width, r.height);
    for (std::size_t px = 0; px < bg.bits.size(); ++px) bg.bits[px] = r.point_index[px] == kSentinel;
    Mask2D full = Mask2D::empty(1, 2, r.width, r.height);
    std::fill(full.bits.begin(), full.bits.end(), 1);
    b.masks = {full, bg, full};
    b.masks[2].mask_id = 3;
    b.refs = {{1, 2}, {1, 1}, {1, 3}};
    const auto lifted = lift_bundle(b, {r}, 150, 16);
    EXPECT_EQ(lifted.rejected, 1u);
    EXPECT_EQ(lifted.bundle_rows, (std::vector<std::size_t>{0, 2}));

    auto other = r;
    other.view_index = 4;
    EXPECT_THROW(lift_bundle(b, {other}, 150, 16), InputError);
}
