#pragma once

// Mask fusion: cosine classification of mask embeddings against prompt
// embeddings, aggregation of the logits onto points through the stacked
// mask matrix, and thresholding into labels with a trailing "other" class.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mf3d/detail/binary_io.hpp"
#include "mf3d/error.hpp"
#include "mf3d/geom.hpp"
#include "mf3d/parallel.hpp"
#include "mf3d/proposal.hpp"
#include "mf3d/render.hpp"
#include "mf3d/spatial_grid.hpp"

namespace mf3d {

struct TextEmbeddingSet {
    std::vector<std::string> prompts;
    RowMatrix vectors; // K x C

    std::size_t class_count() const { return prompts.size(); }
    int dim() const { return static_cast<int>(vectors.cols()); }

    void validate() const {
        if (prompts.empty()) throw FormatError("prompt set is empty");
        if (static_cast<std::size_t>(vectors.rows()) != prompts.size())
            throw FormatError("prompt count does not match embedding rows");
        std::set<std::string> seen;
        for (const auto& p : prompts)
            if (!seen.insert(p).second) throw FormatError("duplicate prompt '" + p + "'");
        for (Eigen::Index k = 0; k < vectors.rows(); ++k) {
            if (!vectors.row(k).allFinite()) throw FormatError("prompt embedding " + std::to_string(k) + " is not finite");
            if (!(vectors.row(k).squaredNorm() > 0))
                throw FormatError("prompt embedding " + std::to_string(k) + " has zero norm");
        }
    }
};

/// Reads prompts.json ({prompts, C}) and text_embeddings.f32 (K x C float32).
inline TextEmbeddingSet read_text_embeddings(const std::filesystem::path& dir) {
    const auto json_path = dir / "prompts.json";
    if (!std::filesystem::exists(json_path)) throw InputError("prompt file not found: " + json_path.string());
    TextEmbeddingSet set;
    int dim = 0;
    try {
        const auto j = nlohmann::json::parse(detail::read_text_file(json_path));
        set.prompts = j.at("prompts").get<std::vector<std::string>>();
        dim = j.at("C").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(json_path.string() + ": " + e.what());
    }
    if (dim <= 0) throw FormatError("prompt embedding dimension must be positive");
    const auto bytes = detail::read_file(dir / "text_embeddings.f32");
    const std::size_t k = set.prompts.size();
    const std::size_t expected = k * static_cast<std::size_t>(dim) * 4;
    if (bytes.size() != expected)
        throw FormatError("text_embeddings.f32 is " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(expected));
    set.vectors.resize(static_cast<Eigen::Index>(k), dim);
    for (std::size_t i = 0; i < k * static_cast<std::size_t>(dim); ++i)
        set.vectors.data()[i] = detail::get_le<float>(bytes.data() + i * 4);
    set.validate();
    return set;
}

inline void write_text_embeddings(const std::filesystem::path& dir, const TextEmbeddingSet& set) {
    set.validate();
    std::filesystem::create_directories(dir);
    detail::write_text_file(dir / "prompts.json",
                            nlohmann::json{{"prompts", set.prompts}, {"C", set.dim()}}.dump(2) + "\n");
    std::vector<std::uint8_t> out;
    out.reserve(static_cast<std::size_t>(set.vectors.size()) * 4);
    for (Eigen::Index i = 0; i < set.vectors.size(); ++i) detail::put_le(out, static_cast<float>(set.vectors.data()[i]));
    detail::write_file(dir / "text_embeddings.f32", out);
}

struct LogitMatrix {
    RowMatrix values; // N x K, cosine similarities
};

/// Cosine similarity of every mask embedding row against every prompt row.
inline LogitMatrix classify(const RowMatrix& masks, const TextEmbeddingSet& text) {
    if (masks.cols() != text.vectors.cols())
        throw FormatError("mask embeddings have C=" + std::to_string(masks.cols()) + " but prompts have C=" +
                          std::to_string(text.vectors.cols()));
    const auto n = static_cast<std::size_t>(masks.rows());
    const auto k = static_cast<std::size_t>(text.vectors.rows());
    const Eigen::Index c = masks.cols();

    std::vector<double> text_norm(k);
    for (std::size_t j = 0; j < k; ++j) {
        text_norm[j] = text.vectors.row(static_cast<Eigen::Index>(j)).norm();
        if (!(text_norm[j] > 0)) throw FormatError("prompt embedding " + std::to_string(j) + " has zero norm");
    }

    LogitMatrix out;
    out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    std::vector<std::string> errors(n);
    parallel_for(0, n, [&](std::size_t i) {
        const double* q = masks.data() + i * static_cast<std::size_t>(c);
        double qq = 0;
        for (Eigen::Index d = 0; d < c; ++d) qq += q[d] * q[d];
        const double qn = std::sqrt(qq);
        if (!(qn > 0)) {
            errors[i] = "mask embedding " + std::to_string(i) + " has zero norm";
            return;
        }
        for (std::size_t j = 0; j < k; ++j) {
            const double* w = text.vectors.data() + j * static_cast<std::size_t>(c);
            double dot = 0;
            for (Eigen::Index d = 0; d < c; ++d) dot += q[d] * w[d];
            out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                std::clamp(dot / (qn * text_norm[j]), -1.0, 1.0);
        }
    });
    for (const auto& e : errors)
        if (!e.empty()) throw FormatError(e);
    return out;
}

enum class Normalization { None, Coverage };

inline const char* to_string(Normalization n) { return n == Normalization::None ? "none" : "coverage"; }

inline Normalization normalization_from_string(const std::string& s) {
    if (s == "none") return Normalization::None;
    if (s == "coverage") return Normalization::Coverage;
    throw InputError("unknown normalization '" + s + "' (expected none or coverage)");
}

struct FusedScores {
    RowMatrix scores;                    // P x K
    std::vector<std::uint8_t> uncovered; // 1 where no mask covers the point
};

/// scores = M x logits, summed over masks in ascending order. With coverage
/// normalization each covered row is divided by its covering-mask count.
inline FusedScores fuse(const SparseMaskMatrix& masks, const LogitMatrix& logits, Normalization normalization) {
    if (static_cast<std::size_t>(logits.values.rows()) != masks.cols())
        throw FormatError("mask matrix has " + std::to_string(masks.cols()) + " columns but logits have " +
                          std::to_string(logits.values.rows()) + " rows");
    const std::size_t p_count = masks.rows();
    const auto k = static_cast<std::size_t>(logits.values.cols());
    FusedScores out;
    out.scores = RowMatrix::Zero(static_cast<Eigen::Index>(p_count), static_cast<Eigen::Index>(k));
    out.uncovered.assign(p_count, 0);
    parallel_for(0, p_count, [&](std::size_t p) {
        double* y = out.scores.data() + p * k;
        const auto cover = masks.row(p);
        for (auto n : cover) {
            const double* l = logits.values.data() + static_cast<std::size_t>(n) * k;
            for (std::size_t j = 0; j < k; ++j) y[j] += l[j];
        }
        if (cover.empty()) {
            out.uncovered[p] = 1;
        } else if (normalization == Normalization::Coverage) {
            const double c = static_cast<double>(cover.size());
            for (std::size_t j = 0; j < k; ++j) y[j] /= c;
        }
    });
    return out;
}

/// Per-point class scores and final labels; label == class_count is "other".
struct LabelField {
    RowMatrix scores;
    std::vector<std::int32_t> labels;
    std::vector<std::uint8_t> uncovered;
    double tau = 0.0;
    int class_count = 0;

    std::int32_t other() const { return class_count; }
    std::size_t covered_count() const {
        return uncovered.size() - static_cast<std::size_t>(std::count(uncovered.begin(), uncovered.end(), 1));
    }
};

/// Argmax per row (lowest index on ties); rows whose maximum is below tau,
/// or which are flagged uncovered, get the "other" label.
inline LabelField assign_labels(const RowMatrix& scores, double tau, std::span<const std::uint8_t> uncovered) {
    if (!std::isfinite(tau)) throw InputError("tau must be finite");
    const auto p_count = static_cast<std::size_t>(scores.rows());
    if (!uncovered.empty() && uncovered.size() != p_count) throw InvariantError("uncovered flags do not match score rows");
    LabelField out;
    out.scores = scores;
    out.tau = tau;
    out.class_count = static_cast<int>(scores.cols());
    out.uncovered.assign(uncovered.begin(), uncovered.end());
    if (out.uncovered.empty()) out.uncovered.assign(p_count, 0);
    out.labels.assign(p_count, out.other());
    parallel_for(0, p_count, [&](std::size_t p) {
        if (out.uncovered[p] || scores.cols() == 0) return;
        Eigen::Index best = 0;
        const auto row = scores.row(static_cast<Eigen::Index>(p));
        for (Eigen::Index j = 1; j < scores.cols(); ++j)
            if (row(j) > row(best)) best = j;
        if (row(best) >= tau) out.labels[p] = static_cast<std::int32_t>(best);
    });
    return out;
}

/// Relabels uncovered points by majority vote of their k nearest covered
/// points (ties to the lower label). Off by default in the pipeline.
inline void inpaint_knn(const PointSet& points, LabelField& field, int k = 3) {
    if (points.size() != field.labels.size()) throw InvariantError("point set does not match label field");
    std::vector<std::uint8_t> covered(field.uncovered.size());
    for (std::size_t i = 0; i < covered.size(); ++i) covered[i] = field.uncovered[i] ? 0 : 1;
    if (field.covered_count() == 0 || k <= 0) return;
    const Bounds b = bounds_of(points.positions);
    const double cell = std::max(b.extent().maxCoeff() / std::cbrt(static_cast<double>(points.size())), 1e-9);
    const SpatialGrid grid(points.positions, cell, covered);
    const auto original = field.labels;
    parallel_for(0, points.size(), [&](std::size_t i) {
        if (covered[i]) return;
        std::map<std::int32_t, int> votes;
        for (auto j : grid.nearest(points.positions[i], static_cast<std::size_t>(k)))
            ++votes[original[static_cast<std::size_t>(j)]];
        int best_votes = 0;
        for (const auto& [label, v] : votes)
            if (v > best_votes) {
                best_votes = v;
                field.labels[i] = label;
            }
    });
}

struct SegmentConfig {
    double tau = 0.2;
    Normalization normalization = Normalization::Coverage;
    int min_pixels = 16;
    bool inpaint = false;
    int inpaint_k = 3;
};

struct SegmentTimings {
    double lift_ms = 0;
    double classify_ms = 0;
    double fuse_ms = 0;
    double assign_ms = 0;
};

namespace detail {
inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}
} // namespace detail

/// Holds the prompt-independent half of the pipeline (the lifted mask matrix
/// and the matching unit embeddings) so that new prompt sets only pay for
/// classify + fuse + assign.
class Segmenter {
public:
    Segmenter(SparseMaskMatrix masks, RowMatrix embeddings) : masks_(std::move(masks)), embeddings_(std::move(embeddings)) {
        if (static_cast<std::size_t>(embeddings_.rows()) != masks_.cols())
            throw InvariantError("one embedding row is required per mask column");
    }

    /// Lifts every bundle mask and keeps the embeddings of the survivors.
    static Segmenter from_bundle(const ProposalBundle& bundle, const std::vector<RenderOutput>& renders,
                                 std::size_t point_count, int min_pixels, SegmentTimings* timings = nullptr) {
        const auto t0 = std::chrono::steady_clock::now();
        auto lifted = lift_bundle(bundle, renders, point_count, min_pixels);
        auto matrix = stack_masks(lifted.masks, point_count);
        Segmenter s(std::move(matrix), select_rows(bundle.unit_embeddings, lifted.bundle_rows));
        if (timings) timings->lift_ms = detail::elapsed_ms(t0);
        return s;
    }

    static RowMatrix select_rows(const RowMatrix& m, const std::vector<std::size_t>& rows) {
        RowMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i] >= static_cast<std::size_t>(m.rows())) throw InvariantError("embedding row out of range");
            out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
        }
        return out;
    }

    LabelField run(const TextEmbeddingSet& text, const SegmentConfig& config, SegmentTimings* timings = nullptr) const {
        text.validate();
        auto t = std::chrono::steady_clock::now();
        const LogitMatrix logits = classify(embeddings_, text);
        if (timings) timings->classify_ms = detail::elapsed_ms(t);
        t = std::chrono::steady_clock::now();
        const FusedScores fused = fuse(masks_, logits, config.normalization);
        if (timings) timings->fuse_ms = detail::elapsed_ms(t);
        t = std::chrono::steady_clock::now();
        LabelField field = assign_labels(fused.scores, config.tau, fused.uncovered);
        if (timings) timings->assign_ms = detail::elapsed_ms(t);
        return field;
    }

    const SparseMaskMatrix& masks() const { return masks_; }
    const RowMatrix& embeddings() const { return embeddings_; }

private:
    SparseMaskMatrix masks_;
    RowMatrix embeddings_;
};

/// Full pipeline over a bundle: lift, stack, classify, fuse, assign.
inline LabelField segment(const ProposalBundle& bundle, const std::vector<RenderOutput>& renders,
                          std::size_t point_count, const TextEmbeddingSet& text, const SegmentConfig& config = {}) {
    for (const auto& ref : bundle.refs) {
        const bool found = std::any_of(renders.begin(), renders.end(),
                                       [&](const RenderOutput& r) { return r.view_index == ref.view_index; });
        if (!found) throw InputError("bundle view " + std::to_string(ref.view_index) + " has no matching render");
    }
    return Segmenter::from_bundle(bundle, renders, point_count, config.min_pixels).run(text, config);
}

inline nlohmann::json labels_to_json(const LabelField& field, const std::vector<std::string>& prompts) {
    std::vector<int> covered(field.uncovered.size());
    for (std::size_t i = 0; i < covered.size(); ++i) covered[i] = field.uncovered[i] ? 0 : 1;
    return {{"tau", field.tau}, {"prompts", prompts}, {"labels", field.labels}, {"covered", covered}};
}

} // namespace mf3d
