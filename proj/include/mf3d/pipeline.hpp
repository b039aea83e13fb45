#pragma once

// Rig construction shared by the CLI and the view-count ablation, which runs
// render -> proposals -> segment -> metrics once per view count.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mf3d/camera.hpp"
#include "mf3d/error.hpp"
#include "mf3d/eval.hpp"
#include "mf3d/fusion.hpp"
#include "mf3d/geom.hpp"
#include "mf3d/proposal.hpp"
#include "mf3d/render.hpp"

namespace mf3d {

inline constexpr int kMaxViews = 64;

struct RigConfig {
    int views = 8;
    double elevation_deg = 30.0;
    RigLayout layout = RigLayout::Zigzag;
    Intrinsics intrinsics{};
    double splat_px = 0.0; // <= 0: default for the point count
};

inline RigLayout rig_layout_from_string(const std::string& s) {
    if (s == "ring") return RigLayout::Ring;
    if (s == "zigzag") return RigLayout::Zigzag;
    throw InputError("unknown rig layout '" + s + "' (expected ring or zigzag)");
}

inline const char* to_string(RigLayout l) { return l == RigLayout::Ring ? "ring" : "zigzag"; }

inline void check_view_count(int views) {
    if (views < 1 || views > kMaxViews)
        throw InputError("view count " + std::to_string(views) + " outside [1, " + std::to_string(kMaxViews) + "]");
}

inline std::vector<CameraPose> build_rig(const Model& model, const RigConfig& cfg) {
    check_view_count(cfg.views);
    return fit_rig_to_model(as_points(model), cfg.views, cfg.intrinsics, cfg.elevation_deg, cfg.layout);
}

/// Produces a proposal bundle for one rig and its renders.
using BundleSource = std::function<ProposalBundle(const std::vector<RenderOutput>&, const std::vector<CameraPose>&)>;

struct AblationRow {
    int views = 0;
    Metrics all;                  // uncovered points count as "other" predictions
    std::optional<Metrics> covered; // restricted to covered points; empty if none
    double covered_fraction = 0;
    double other_fraction = 0;
};

inline std::vector<AblationRow> views_ablation(const Model& model, const TextEmbeddingSet& prompts,
                                               std::span<const int> view_counts, const BundleSource& source,
                                               std::span<const std::int32_t> gt, RigConfig rig = {},
                                               const SegmentConfig& seg = {}) {
    const PointSet points = as_points(model);
    if (gt.size() != points.size())
        throw InputError("ground truth has " + std::to_string(gt.size()) + " labels for " + std::to_string(points.size()) +
                         " points");
    for (int v : view_counts) check_view_count(v);
    const int k = static_cast<int>(prompts.class_count());
    std::vector<AblationRow> rows;
    for (int v : view_counts) {
        rig.views = v;
        const auto cams = build_rig(model, rig);
        const auto renders = render_views(model, cams, rig.splat_px);
        const auto bundle = source(renders, cams);
        const LabelField field = segment(bundle, renders, points.size(), prompts, seg);

        AblationRow row;
        row.views = v;
        row.all = metrics(confusion(field.labels, gt, k));
        std::vector<std::uint8_t> covered(points.size());
        std::size_t covered_n = 0, other_n = 0;
        for (std::size_t i = 0; i < covered.size(); ++i) {
            covered[i] = field.uncovered[i] ? 0 : 1;
            covered_n += covered[i];
            other_n += field.labels[i] == k;
        }
        row.covered_fraction = static_cast<double>(covered_n) / static_cast<double>(points.size());
        row.other_fraction = static_cast<double>(other_n) / static_cast<double>(points.size());
        const auto cm = confusion(field.labels, gt, k, covered);
        if (cm.total() - cm.unlabeled_total() > 0) row.covered = metrics(cm);
        rows.push_back(row);
    }
    return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = std::string(kMetricsCsvHeader) + "\n";
    for (const auto& r : rows) out += metrics_csv_row(r.views, r.all) + "\n";
    return out;
}

inline nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json j = {{"views", r.views},
                            {"all", metrics_to_json(r.all)},
                            {"covered_fraction", r.covered_fraction},
                            {"other_fraction", r.other_fraction}};
        j["covered"] = r.covered ? metrics_to_json(*r.covered) : nlohmann::json(nullptr);
        out.push_back(j);
    }
    return out;
}

} // namespace mf3d
