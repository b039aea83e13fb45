#pragma once

// Proposal bundles: the interchange format between the mask/embedding models
// and the geometric core, and the lifting of 2D masks to 3D point sets.
//
// Bundle directory layout:
//   manifest.json              cameras, per-view mask lists, C, source,
//                              sha256 of every binary file
//   masks/view{i}_mask{j}.rle  u32 pair count, then (skip, run) u32 pairs
//                              over the row-major bitmap
//   embeddings.f32             N x C little-endian float32, manifest order

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "mf3d/camera.hpp"
#include "mf3d/detail/binary_io.hpp"
#include "mf3d/error.hpp"
#include "mf3d/hash.hpp"
#include "mf3d/parallel.hpp"
#include "mf3d/render.hpp"

namespace mf3d {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kBundleSchemaVersion = 1;

struct Mask2D {
    int view_index = 1;
    int mask_id = 0;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits; // H*W, 0 or 1

    std::size_t popcount() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

    static Mask2D empty(int view, int id, int width, int height) {
        return {view, id, width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
    }
};

struct MaskRef {
    int view_index = 1;
    int mask_id = 0;
    bool operator==(const MaskRef&) const = default;
};

enum class ProposalSource { Model, Synthetic };

inline const char* to_string(ProposalSource s) { return s == ProposalSource::Model ? "model" : "synthetic"; }

struct ProposalBundle {
    std::vector<CameraPose> cameras;
    std::vector<MaskRef> refs;     // one per mask, manifest order
    std::vector<Mask2D> masks;     // same order as refs; empty if loaded without masks
    std::vector<float> embeddings; // N*C, raw values as stored
    int dim = 0;                   // C
    ProposalSource source = ProposalSource::Synthetic;
    RowMatrix unit_embeddings;     // N x C, L2-normalized; filled by normalize()

    std::size_t mask_count() const { return refs.size(); }

    /// Validates the embedding rows and fills unit_embeddings.
    void normalize() {
        const std::size_t n = refs.size();
        const auto c = static_cast<std::size_t>(dim);
        unit_embeddings.resize(static_cast<Eigen::Index>(n), dim);
        for (std::size_t i = 0; i < n; ++i) {
            double sq = 0;
            for (std::size_t k = 0; k < c; ++k) {
                const double v = embeddings[i * c + k];
                if (!std::isfinite(v)) throw FormatError("embedding " + std::to_string(i) + " is not finite");
                sq += v * v;
            }
            if (!(sq > 0)) throw FormatError("embedding " + std::to_string(i) + " has zero norm");
            const double inv = 1.0 / std::sqrt(sq);
            for (std::size_t k = 0; k < c; ++k)
                unit_embeddings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = embeddings[i * c + k] * inv;
        }
    }
};

// ---------------------------------------------------------------- RLE

inline std::vector<std::uint8_t> encode_rle(const Mask2D& mask) {
    std::vector<std::uint32_t> pairs;
    const std::size_t n = mask.bits.size();
    std::size_t i = 0;
    while (i < n) {
        std::size_t skip = 0;
        while (i < n && !mask.bits[i]) ++skip, ++i;
        if (i == n) break;
        std::size_t run = 0;
        while (i < n && mask.bits[i]) ++run, ++i;
        pairs.push_back(static_cast<std::uint32_t>(skip));
        pairs.push_back(static_cast<std::uint32_t>(run));
    }
    std::vector<std::uint8_t> out;
    out.reserve(4 + pairs.size() * 4);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(pairs.size() / 2));
    for (auto v : pairs) detail::put_le(out, v);
    return out;
}

inline Mask2D decode_rle(std::span<const std::uint8_t> data, int width, int height, MaskRef ref,
                         const std::string& source) {
    Mask2D mask = Mask2D::empty(ref.view_index, ref.mask_id, width, height);
    detail::ByteReader in(data, source);
    const auto count = in.read<std::uint32_t>();
    if (in.remaining() != static_cast<std::size_t>(count) * 8)
        throw FormatError(source + ": RLE declares " + std::to_string(count) + " pairs but holds " +
                          std::to_string(in.remaining()) + " payload bytes");
    std::size_t pos = 0;
    for (std::uint32_t p = 0; p < count; ++p) {
        pos += in.read<std::uint32_t>();
        const std::size_t run = in.read<std::uint32_t>();
        if (pos + run > mask.bits.size()) throw FormatError(source + ": RLE runs past the end of the image");
        std::fill_n(mask.bits.begin() + static_cast<std::ptrdiff_t>(pos), run, std::uint8_t{1});
        pos += run;
    }
    return mask;
}

// ---------------------------------------------------------------- bundle IO

struct BundleReadOptions {
    bool load_masks = true;
};

struct BundleReadReport {
    std::size_t mask_files_read = 0;
};

inline std::string mask_file_name(const MaskRef& ref) {
    return "masks/view" + std::to_string(ref.view_index) + "_mask" + std::to_string(ref.mask_id) + ".rle";
}

inline void write_bundle(const ProposalBundle& bundle, const std::filesystem::path& dir) {
    const std::size_t n = bundle.mask_count();
    if (n == 0) throw FormatError("empty bundle: no masks");
    if (bundle.masks.size() != n) throw InvariantError("bundle masks and refs differ in count");
    if (bundle.dim <= 0) throw FormatError("embedding dimension must be positive");
    if (bundle.embeddings.size() != n * static_cast<std::size_t>(bundle.dim))
        throw FormatError("embedding count does not match mask count");

    std::filesystem::create_directories(dir / "masks");
    std::map<int, nlohmann::json> per_view;
    for (const auto& cam : bundle.cameras) per_view[cam.view_index] = nlohmann::json::array();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& m = bundle.masks[i];
        if (!(MaskRef{m.view_index, m.mask_id} == bundle.refs[i])) throw InvariantError("mask order differs from refs");
        if (!per_view.count(m.view_index))
            throw FormatError("mask references view " + std::to_string(m.view_index) + " absent from the rig");
        const auto rle = encode_rle(m);
        const std::string name = mask_file_name(bundle.refs[i]);
        detail::write_file(dir / name, rle);
        per_view[m.view_index].push_back({{"id", m.mask_id}, {"file", name}, {"sha256", sha256_hex(rle)}});
    }
    std::vector<std::uint8_t> emb;
    emb.reserve(bundle.embeddings.size() * 4);
    for (float v : bundle.embeddings) detail::put_le(emb, v);
    detail::write_file(dir / "embeddings.f32", emb);

    nlohmann::json views = nlohmann::json::array();
    for (auto& [view, masks] : per_view) views.push_back({{"index", view}, {"masks", masks}});
    nlohmann::json manifest = {
        {"schema_version", kBundleSchemaVersion},
        {"source", to_string(bundle.source)},
        {"C", bundle.dim},
        {"N", n},
        {"cameras", rig_to_json(bundle.cameras)},
        {"views", views},
        {"embeddings", {{"file", "embeddings.f32"}, {"sha256", sha256_hex(emb)}}},
    };
    detail::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

/// Reads and validates a bundle. Manifest order (views ascending as listed,
/// masks as listed) defines embedding row order. With load_masks = false the
/// RLE files are not opened; only refs, cameras and embeddings are loaded.
inline ProposalBundle read_bundle(const std::filesystem::path& dir, BundleReadOptions opts = {},
                                  BundleReadReport* report = nullptr) {
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) throw InputError("bundle manifest not found: " + manifest_path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(detail::read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }

    ProposalBundle bundle;
    std::vector<std::pair<std::string, std::string>> mask_files; // file, sha
    std::string emb_file, emb_sha;
    try {
        const int version = manifest.at("schema_version").get<int>();
        if (version != kBundleSchemaVersion)
            throw FormatError("unsupported bundle schema_version " + std::to_string(version));
        const auto source = manifest.at("source").get<std::string>();
        if (source == "model") bundle.source = ProposalSource::Model;
        else if (source == "synthetic") bundle.source = ProposalSource::Synthetic;
        else throw FormatError("unknown bundle source '" + source + "'");
        bundle.dim = manifest.at("C").get<int>();
        if (bundle.dim <= 0) throw FormatError("embedding dimension C must be positive");
        bundle.cameras = rig_from_json(manifest.at("cameras"));
        for (const auto& view : manifest.at("views")) {
            const int index = view.at("index").get<int>();
            for (const auto& m : view.at("masks")) {
                bundle.refs.push_back({index, m.at("id").get<int>()});
                mask_files.emplace_back(m.at("file").get<std::string>(), m.at("sha256").get<std::string>());
            }
        }
        emb_file = manifest.at("embeddings").at("file").get<std::string>();
        emb_sha = manifest.at("embeddings").at("sha256").get<std::string>();
        if (manifest.contains("N") && manifest.at("N").get<std::size_t>() != bundle.refs.size())
            throw FormatError("manifest N = " + std::to_string(manifest.at("N").get<std::size_t>()) + " but lists " +
                              std::to_string(bundle.refs.size()) + " masks");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }

    const std::size_t n = bundle.refs.size();
    if (n == 0) throw FormatError("empty bundle: no masks");

    std::map<int, const CameraPose*> cams;
    for (const auto& c : bundle.cameras) cams[c.view_index] = &c;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j)
            if (bundle.refs[j] == bundle.refs[i])
                throw FormatError("duplicate mask id " + std::to_string(bundle.refs[i].mask_id) + " in view " +
                                  std::to_string(bundle.refs[i].view_index));
        if (!cams.count(bundle.refs[i].view_index))
            throw FormatError("mask references view " + std::to_string(bundle.refs[i].view_index) + " absent from the rig");
    }

    const auto emb_bytes = detail::read_file(dir / emb_file);
    if (sha256_hex(emb_bytes) != emb_sha) throw FormatError("checksum mismatch for " + emb_file);
    const std::size_t expected = n * static_cast<std::size_t>(bundle.dim) * 4;
    if (emb_bytes.size() != expected)
        throw FormatError("embedding file is " + std::to_string(emb_bytes.size()) + " bytes, expected " +
                          std::to_string(expected) + " (N=" + std::to_string(n) + ", C=" + std::to_string(bundle.dim) + ")");
    bundle.embeddings.resize(n * static_cast<std::size_t>(bundle.dim));
    for (std::size_t i = 0; i < bundle.embeddings.size(); ++i)
        bundle.embeddings[i] = detail::get_le<float>(emb_bytes.data() + i * 4);
    bundle.normalize();

    if (opts.load_masks) {
        bundle.masks.resize(n);
        std::vector<std::exception_ptr> errors(n);
        parallel_for(0, n, [&](std::size_t i) {
            try {
                const auto& [file, sha] = mask_files[i];
                const auto bytes = detail::read_file(dir / file);
                if (sha256_hex(bytes) != sha) throw FormatError("checksum mismatch for " + file);
                const auto& k = cams.at(bundle.refs[i].view_index)->intrinsics;
                bundle.masks[i] = decode_rle(bytes, k.width, k.height, bundle.refs[i], file);
                if (bundle.masks[i].popcount() == 0) throw FormatError(file + ": mask has no set pixels");
            } catch (const Error&) {
                errors[i] = std::current_exception();
            }
        });
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
        if (report) report->mask_files_read = n;
    }
    return bundle;
}

// ---------------------------------------------------------------- lifting

struct Mask3D {
    std::size_t point_count = 0;        // P
    std::vector<std::int32_t> members;  // sorted, unique, each < P
    MaskRef provenance;

    bool contains(std::int32_t p) const { return std::binary_search(members.begin(), members.end(), p); }

    std::vector<std::uint8_t> dense() const {
        std::vector<std::uint8_t> d(point_count, 0);
        for (auto p : members) d[static_cast<std::size_t>(p)] = 1;
        return d;
    }
};

/// Lifts a 2D mask through the render's point-index map: point p is a member
/// iff some masked pixel is won by p. Returns nullopt when fewer than
/// `min_pixels` masked pixels land on geometry.
inline std::optional<Mask3D> lift_mask(const Mask2D& mask, const RenderOutput& render, std::size_t point_count,
                                       int min_pixels) {
    if (mask.view_index != render.view_index)
        throw InputError("mask of view " + std::to_string(mask.view_index) + " lifted through render of view " +
                         std::to_string(render.view_index));
    if (mask.width != render.width || mask.height != render.height ||
        mask.bits.size() != render.point_index.size())
        throw FormatError("mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) + " but render is " +
                          std::to_string(render.width) + "x" + std::to_string(render.height));
    Mask3D out;
    out.point_count = point_count;
    out.provenance = {mask.view_index, mask.mask_id};
    std::size_t hits = 0;
    for (std::size_t px = 0; px < mask.bits.size(); ++px) {
        if (!mask.bits[px]) continue;
        const auto idx = render.point_index[px];
        if (idx == kSentinel) continue;
        if (idx < 0 || static_cast<std::size_t>(idx) >= point_count)
            throw InvariantError("point index " + std::to_string(idx) + " out of range for P=" + std::to_string(point_count));
        ++hits;
        out.members.push_back(idx);
    }
    if (hits < static_cast<std::size_t>(std::max(min_pixels, 0)) || hits == 0) return std::nullopt;
    std::sort(out.members.begin(), out.members.end());
    out.members.erase(std::unique(out.members.begin(), out.members.end()), out.members.end());
    return out;
}

/// Binary P x N matrix stored by column, with a row-major mirror for
/// per-point traversal.
class SparseMaskMatrix {
public:
    SparseMaskMatrix() = default;

    /// Builds from column-compressed arrays. Row indices within each column
    /// must be sorted and unique.
    SparseMaskMatrix(std::size_t rows, std::vector<std::size_t> col_ptr, std::vector<std::int32_t> row_idx)
        : rows_(rows), col_ptr_(std::move(col_ptr)), row_idx_(std::move(row_idx)) {
        if (col_ptr_.empty() || col_ptr_.front() != 0 || col_ptr_.back() != row_idx_.size())
            throw InvariantError("malformed column pointers");
        for (std::size_t c = 0; c + 1 < col_ptr_.size(); ++c) {
            if (col_ptr_[c] > col_ptr_[c + 1]) throw InvariantError("column pointers decrease");
            for (std::size_t k = col_ptr_[c]; k < col_ptr_[c + 1]; ++k) {
                const auto r = row_idx_[k];
                if (r < 0 || static_cast<std::size_t>(r) >= rows_) throw InvariantError("row index out of range");
                if (k > col_ptr_[c] && row_idx_[k - 1] >= r) throw InvariantError("row indices not sorted");
            }
        }
        build_rows();
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return col_ptr_.empty() ? 0 : col_ptr_.size() - 1; }
    std::size_t nnz() const { return row_idx_.size(); }

    std::span<const std::int32_t> column(std::size_t c) const {
        return std::span(row_idx_).subspan(col_ptr_[c], col_ptr_[c + 1] - col_ptr_[c]);
    }
    /// Columns covering point p, ascending.
    std::span<const std::int32_t> row(std::size_t p) const {
        return std::span(col_idx_).subspan(row_ptr_[p], row_ptr_[p + 1] - row_ptr_[p]);
    }
    std::size_t coverage(std::size_t p) const { return row_ptr_[p + 1] - row_ptr_[p]; }

    const std::vector<std::size_t>& col_ptr() const { return col_ptr_; }
    const std::vector<std::int32_t>& row_idx() const { return row_idx_; }

    /// Row-major dense copy (P*N bytes).
    std::vector<std::uint8_t> densify() const {
        std::vector<std::uint8_t> d(rows_ * cols(), 0);
        for (std::size_t c = 0; c < cols(); ++c)
            for (auto r : column(c)) d[static_cast<std::size_t>(r) * cols() + c] = 1;
        return d;
    }

private:
    void build_rows() {
        row_ptr_.assign(rows_ + 1, 0);
        for (auto r : row_idx_) ++row_ptr_[static_cast<std::size_t>(r) + 1];
        for (std::size_t p = 0; p < rows_; ++p) row_ptr_[p + 1] += row_ptr_[p];
        col_idx_.resize(row_idx_.size());
        std::vector<std::size_t> fill(row_ptr_.begin(), row_ptr_.end() - 1);
        for (std::size_t c = 0; c < cols(); ++c)
            for (auto r : column(c)) col_idx_[fill[static_cast<std::size_t>(r)]++] = static_cast<std::int32_t>(c);
    }

    std::size_t rows_ = 0;
    std::vector<std::size_t> col_ptr_{0};
    std::vector<std::int32_t> row_idx_;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::int32_t> col_idx_;
};

inline SparseMaskMatrix stack_masks(const std::vector<Mask3D>& masks, std::size_t point_count) {
    std::vector<std::size_t> col_ptr{0};
    std::vector<std::int32_t> rows;
    for (std::size_t n = 0; n < masks.size(); ++n) {
        if (masks[n].point_count != point_count)
            throw InvariantError("mask " + std::to_string(n) + " has length " + std::to_string(masks[n].point_count) +
                                 ", expected " + std::to_string(point_count));
        rows.insert(rows.end(), masks[n].members.begin(), masks[n].members.end());
        col_ptr.push_back(rows.size());
    }
    return SparseMaskMatrix(point_count, std::move(col_ptr), std::move(rows));
}

struct LiftResult {
    std::vector<Mask3D> masks;          // surviving masks, bundle order
    std::vector<std::size_t> bundle_rows; // embedding row of each surviving mask
    std::size_t rejected = 0;
};

/// Lifts every mask of a bundle through the render of its view. Renders are
/// matched by view_index.
inline LiftResult lift_bundle(const ProposalBundle& bundle, const std::vector<RenderOutput>& renders,
                              std::size_t point_count, int min_pixels) {
    if (bundle.masks.size() != bundle.mask_count()) throw InvariantError("bundle was loaded without masks");
    std::map<int, const RenderOutput*> by_view;
    for (const auto& r : renders) by_view[r.view_index] = &r;
    for (const auto& ref : bundle.refs)
        if (!by_view.count(ref.view_index))
            throw InputError("no render for view " + std::to_string(ref.view_index));

    std::vector<std::optional<Mask3D>> lifted(bundle.mask_count());
    parallel_for(0, lifted.size(), [&](std::size_t i) {
        const auto& m = bundle.masks[i];
        lifted[i] = lift_mask(m, *by_view.at(m.view_index), point_count, min_pixels);
    });
    LiftResult out;
    for (std::size_t i = 0; i < lifted.size(); ++i) {
        if (!lifted[i]) {
            ++out.rejected;
            continue;
        }
        out.masks.push_back(std::move(*lifted[i]));
        out.bundle_rows.push_back(i);
    }
    return out;
}

} // namespace mf3d
