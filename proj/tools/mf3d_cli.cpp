// mf3d command-line driver: render, segment, eval, ablate-views, capture,
// synth. Settings come from built-in defaults, then an optional TOML file
// (--config), then command-line flags.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#define TOML_EXCEPTIONS 1
#include <tomlplusplus/toml.hpp>

#include "mf3d/mf3d.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Settings {
    mf3d::RigConfig rig;
    int width = 512;
    int height = 512;
    double focal = 512.0;
    mf3d::SegmentConfig segment;
    std::string cache_dir;
    bool count_other_in_oa = false;
    double clip_min = 0.1;
    double clip_max = 1.5;
    double outlier_radius = 0.02;
    int min_neighbors = 5;
    int stride = 1;
    int threads = 0;
    std::int64_t synth_points = 10000;
};

// Flags shared by every subcommand; each is applied only when given.
struct Flags {
    std::string config;
    std::optional<int> threads;
    std::string out;
    std::optional<double> tau;
    std::optional<std::string> normalization;
    std::optional<int> views;
    std::optional<double> elevation;
    std::optional<std::string> layout;
    std::optional<int> width, height;
    std::optional<double> focal;
    std::optional<double> splat;
    std::optional<int> min_pixels;
    std::optional<bool> inpaint;
    std::optional<std::string> cache_dir;
    std::optional<bool> count_other_in_oa;
    std::optional<double> clip_min, clip_max, outlier_radius;
    std::optional<int> min_neighbors, stride;
    std::optional<std::int64_t> points;
};

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

template <typename T>
void take(const toml::table& t, std::string_view key, T& dst) {
    const auto* node = t.get(key);
    if (!node) return;
    if constexpr (std::is_same_v<T, bool>) {
        if (auto v = node->value<bool>()) return void(dst = *v);
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (auto v = node->value<std::string>()) return void(dst = *v);
    } else if constexpr (std::is_floating_point_v<T>) {
        if (auto v = node->value<double>()) return void(dst = *v);
    } else {
        if (auto v = node->value<std::int64_t>()) return void(dst = static_cast<T>(*v));
    }
    throw mf3d::InputError("config key '" + std::string(key) + "' has the wrong type");
}

void check_keys(const toml::table& t, const std::string& where, std::initializer_list<std::string_view> allowed) {
    for (const auto& [k, v] : t) {
        if (std::find(allowed.begin(), allowed.end(), k.str()) == allowed.end())
            throw mf3d::InputError("unknown config key '" + where + std::string(k.str()) + "'");
    }
}

const toml::table* section(const toml::table& root, std::string_view name) {
    const auto* node = root.get(name);
    if (!node) return nullptr;
    if (!node->is_table()) throw mf3d::InputError("config entry '" + std::string(name) + "' must be a table");
    return node->as_table();
}

void apply_config_file(const fs::path& path, Settings& s) {
    if (!fs::exists(path)) throw mf3d::InputError("config file not found: " + path.string());
    toml::table root;
    try {
        root = toml::parse_file(path.string());
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << path.string() << ":" << e.source().begin.line << ": " << e.description();
        throw mf3d::InputError(msg.str());
    }
    check_keys(root, "", {"threads", "rig", "segment", "eval", "capture", "synth"});
    take(root, "threads", s.threads);
    if (const auto* t = section(root, "rig")) {
        check_keys(*t, "rig.", {"views", "elevation", "layout", "width", "height", "focal", "splat_px"});
        take(*t, "views", s.rig.views);
        take(*t, "elevation", s.rig.elevation_deg);
        std::string layout = mf3d::to_string(s.rig.layout);
        take(*t, "layout", layout);
        s.rig.layout = mf3d::rig_layout_from_string(layout);
        take(*t, "width", s.width);
        take(*t, "height", s.height);
        take(*t, "focal", s.focal);
        take(*t, "splat_px", s.rig.splat_px);
    }
    if (const auto* t = section(root, "segment")) {
        check_keys(*t, "segment.", {"tau", "normalization", "min_pixels", "inpaint", "inpaint_k", "cache_dir"});
        take(*t, "tau", s.segment.tau);
        std::string norm = mf3d::to_string(s.segment.normalization);
        take(*t, "normalization", norm);
        s.segment.normalization = mf3d::normalization_from_string(norm);
        take(*t, "min_pixels", s.segment.min_pixels);
        take(*t, "inpaint", s.segment.inpaint);
        take(*t, "inpaint_k", s.segment.inpaint_k);
        take(*t, "cache_dir", s.cache_dir);
    }
    if (const auto* t = section(root, "eval")) {
        check_keys(*t, "eval.", {"count_other_in_oa"});
        take(*t, "count_other_in_oa", s.count_other_in_oa);
    }
    if (const auto* t = section(root, "capture")) {
        check_keys(*t, "capture.", {"clip_min", "clip_max", "radius", "min_neighbors", "stride"});
        take(*t, "clip_min", s.clip_min);
        take(*t, "clip_max", s.clip_max);
        take(*t, "radius", s.outlier_radius);
        take(*t, "min_neighbors", s.min_neighbors);
        take(*t, "stride", s.stride);
    }
    if (const auto* t = section(root, "synth")) {
        check_keys(*t, "synth.", {"points"});
        take(*t, "points", s.synth_points);
    }
}

Settings resolve(const Flags& f) {
    Settings s;
    if (!f.config.empty()) apply_config_file(f.config, s);
    if (f.threads) s.threads = *f.threads;
    if (f.tau) s.segment.tau = *f.tau;
    if (f.normalization) s.segment.normalization = mf3d::normalization_from_string(*f.normalization);
    if (f.views) s.rig.views = *f.views;
    if (f.elevation) s.rig.elevation_deg = *f.elevation;
    if (f.layout) s.rig.layout = mf3d::rig_layout_from_string(*f.layout);
    if (f.width) s.width = *f.width;
    if (f.height) s.height = *f.height;
    if (f.focal) s.focal = *f.focal;
    if (f.splat) s.rig.splat_px = *f.splat;
    if (f.min_pixels) s.segment.min_pixels = *f.min_pixels;
    if (f.inpaint) s.segment.inpaint = *f.inpaint;
    if (f.cache_dir) s.cache_dir = *f.cache_dir;
    if (f.count_other_in_oa) s.count_other_in_oa = *f.count_other_in_oa;
    if (f.clip_min) s.clip_min = *f.clip_min;
    if (f.clip_max) s.clip_max = *f.clip_max;
    if (f.outlier_radius) s.outlier_radius = *f.outlier_radius;
    if (f.min_neighbors) s.min_neighbors = *f.min_neighbors;
    if (f.stride) s.stride = *f.stride;
    if (f.points) s.synth_points = *f.points;

    if (!std::isfinite(s.segment.tau)) throw mf3d::InputError("tau must be finite");
    if (s.width < 1 || s.height < 1) throw mf3d::InputError("image size must be positive");
    if (!(s.focal > 0)) throw mf3d::InputError("focal length must be positive");
    if (s.synth_points < 16) throw mf3d::InputError("synth point target must be at least 16");
    mf3d::check_view_count(s.rig.views);
    s.rig.intrinsics = mf3d::Intrinsics::centered(s.width, s.height, s.focal);
    mf3d::set_thread_count(s.threads);
    return s;
}

fs::path require_out(const Flags& f) {
    if (f.out.empty()) throw mf3d::InputError("--out is required");
    fs::create_directories(f.out);
    return f.out;
}

void require_path(const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw mf3d::InputError(std::string(what) + " not found: " + p.string());
}

json read_json(const fs::path& p, const char* what) {
    require_path(p, what);
    try {
        return json::parse(mf3d::detail::read_text_file(p));
    } catch (const json::exception& e) {
        throw mf3d::FormatError(p.string() + ": " + e.what());
    }
}

void write_json(const fs::path& p, const json& j) { mf3d::detail::write_text_file(p, j.dump(2) + "\n"); }

mf3d::ModelKind parse_kind(const std::string& k) {
    if (k == "auto") return mf3d::ModelKind::Auto;
    if (k == "mesh") return mf3d::ModelKind::Mesh;
    if (k == "points") return mf3d::ModelKind::Points;
    if (k == "gaussians") return mf3d::ModelKind::Gaussians;
    throw mf3d::InputError("unknown model kind '" + k + "'");
}

mf3d::Model load_model_reporting(const fs::path& path, const std::string& kind) {
    mf3d::LoadReport report;
    auto model = mf3d::load_model(path, parse_kind(kind), &report);
    if (report.dropped_degenerate_faces)
        warn(path.string() + ": dropped " + std::to_string(report.dropped_degenerate_faces) + " degenerate faces");
    if (report.dropped_invalid_normals) warn(path.string() + ": normals are not unit length and were ignored");
    return model;
}

struct GroundTruth {
    std::vector<std::string> prompts;
    std::vector<std::int32_t> labels;
};

GroundTruth read_gt(const fs::path& p) {
    const json j = read_json(p, "ground truth");
    GroundTruth gt;
    try {
        gt.prompts = j.at("prompts").get<std::vector<std::string>>();
        gt.labels = j.at("labels").get<std::vector<std::int32_t>>();
    } catch (const json::exception& e) {
        throw mf3d::FormatError(p.string() + ": " + e.what());
    }
    if (gt.prompts.empty()) throw mf3d::FormatError(p.string() + ": no prompts");
    return gt;
}

double since_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// ------------------------------------------------------------------ commands

void write_renders(const fs::path& out, const mf3d::Model& model, const Settings& s) {
    const auto rig = mf3d::build_rig(model, s.rig);
    const auto renders = mf3d::render_views(model, rig, s.rig.splat_px);
    for (const auto& r : renders) mf3d::save_render(out, r);
    mf3d::save_rig(out, rig);
}

int cmd_render(const Flags& f, const std::string& model_path, const std::string& kind) {
    const Settings s = resolve(f);
    require_path(model_path, "model file");
    const auto model = load_model_reporting(model_path, kind);
    const fs::path out = require_out(f);
    write_renders(out, model, s);
    std::cout << "rendered " << s.rig.views << " views to " << out.string() << "\n";
    return 0;
}

int cmd_segment(const Flags& f, const std::string& model_path, const std::string& kind, const fs::path& renders_dir,
                const fs::path& bundle_dir, const fs::path& prompts_dir) {
    const Settings s = resolve(f);
    const auto t_start = std::chrono::steady_clock::now();
    require_path(model_path, "model file");
    const fs::path rig_path = renders_dir / "rig.json";
    const fs::path manifest_path = bundle_dir / "manifest.json";
    require_path(rig_path, "rig file");
    require_path(manifest_path, "bundle manifest");
    const auto model = load_model_reporting(model_path, kind);
    const mf3d::PointSet points = mf3d::as_points(model);
    const auto text = mf3d::read_text_embeddings(prompts_dir);
    const fs::path out = require_out(f);

    mf3d::BundleReadReport io;
    auto bundle = mf3d::read_bundle(bundle_dir, {.load_masks = false}, &io);
    if (bundle.dim != text.dim())
        throw mf3d::FormatError("bundle embeddings have C=" + std::to_string(bundle.dim) + " but prompts have C=" +
                                std::to_string(text.dim()));
    const auto rig = mf3d::load_rig(rig_path);

    const fs::path cache_dir = mf3d::resolve_cache_dir(out, s.cache_dir);
    const fs::path cache_file = cache_dir / mf3d::kMaskCacheFile;
    const mf3d::Digest key = mf3d::mask_cache_key(manifest_path, rig_path);
    std::optional<mf3d::CachedMasks> cached;
    std::string why;
    {
        mf3d::CacheLock lock(cache_dir, false);
        cached = mf3d::read_mask_cache(cache_file, key, points.size(), bundle.mask_count(), s.segment.min_pixels, &why);
    }
    if (!cached && !why.empty()) warn("mask cache invalidated (" + why + "); rebuilding");

    mf3d::SegmentTimings timings;
    std::optional<mf3d::Segmenter> segmenter;
    const bool hit = cached.has_value();
    if (hit) {
        const auto t0 = std::chrono::steady_clock::now();
        segmenter.emplace(std::move(cached->masks),
                          mf3d::Segmenter::select_rows(bundle.unit_embeddings, cached->bundle_rows));
        timings.lift_ms = since_ms(t0);
    } else {
        bundle = mf3d::read_bundle(bundle_dir, {}, &io);
        std::set<int> needed;
        for (const auto& ref : bundle.refs) needed.insert(ref.view_index);
        std::vector<mf3d::RenderOutput> renders;
        for (const auto& pose : rig)
            if (needed.count(pose.view_index)) renders.push_back(mf3d::load_render(renders_dir, pose.view_index));
        const auto t0 = std::chrono::steady_clock::now();
        auto lifted = mf3d::lift_bundle(bundle, renders, points.size(), s.segment.min_pixels);
        mf3d::CachedMasks fresh{mf3d::stack_masks(lifted.masks, points.size()), lifted.bundle_rows};
        timings.lift_ms = since_ms(t0);
        if (lifted.rejected) std::cerr << "info: " << lifted.rejected << " masks below min_pixels were rejected\n";
        {
            mf3d::CacheLock lock(cache_dir, true);
            mf3d::write_mask_cache(cache_file, key, bundle.mask_count(), s.segment.min_pixels, fresh);
        }
        segmenter.emplace(std::move(fresh.masks), mf3d::Segmenter::select_rows(bundle.unit_embeddings, fresh.bundle_rows));
    }

    mf3d::LabelField field = segmenter->run(text, s.segment, &timings);
    if (s.segment.inpaint) mf3d::inpaint_knn(points, field, s.segment.inpaint_k);
    const double total_ms = since_ms(t_start);

    json labels = mf3d::labels_to_json(field, text.prompts);
    labels["views"] = rig.size();
    write_json(out / "labels.json", labels);
    const auto palette = mf3d::default_palette(text.class_count());
    mf3d::save_model(model, out / "segmented.ply", field.labels, palette);
    const json timing = {{"cache", hit ? "hit" : "miss"},
                         {"mask_files_read", io.mask_files_read},
                         {"lift_ms", timings.lift_ms},
                         {"classify_ms", timings.classify_ms},
                         {"fuse_ms", timings.fuse_ms},
                         {"classify_fuse_ms", timings.classify_ms + timings.fuse_ms},
                         {"assign_ms", timings.assign_ms},
                         {"total_ms", total_ms}};
    write_json(out / "timing.json", timing);
    std::cout << "segmented " << points.size() << " points (" << field.covered_count() << " covered), cache "
              << (hit ? "hit" : "miss") << ", classify+fuse " << timings.classify_ms + timings.fuse_ms << " ms\n";
    return 0;
}

int cmd_eval(const Flags& f, const fs::path& pred_path, const fs::path& gt_path) {
    const Settings s = resolve(f);
    const GroundTruth gt = read_gt(gt_path);
    const json pred = read_json(pred_path, "prediction");
    std::vector<std::int32_t> labels;
    std::vector<std::uint8_t> covered;
    std::vector<std::string> prompts;
    int views = 0;
    try {
        labels = pred.at("labels").get<std::vector<std::int32_t>>();
        prompts = pred.at("prompts").get<std::vector<std::string>>();
        if (pred.contains("covered")) covered = pred.at("covered").get<std::vector<std::uint8_t>>();
        if (pred.contains("views")) views = pred.at("views").get<int>();
    } catch (const json::exception& e) {
        throw mf3d::FormatError(pred_path.string() + ": " + e.what());
    }
    if (prompts != gt.prompts)
        throw mf3d::FormatError("prediction prompts differ from ground-truth prompts");
    if (f.views) views = *f.views;
    const int k = static_cast<int>(gt.prompts.size());
    const auto all = mf3d::metrics(mf3d::confusion(labels, gt.labels, k), s.count_other_in_oa);
    json report = mf3d::metrics_to_json(all);
    report["views"] = views;
    if (!covered.empty()) {
        const auto cm = mf3d::confusion(labels, gt.labels, k, covered);
        report["covered"] = cm.total() - cm.unlabeled_total() > 0
                                ? mf3d::metrics_to_json(mf3d::metrics(cm, s.count_other_in_oa))
                                : json(nullptr);
    }
    std::cout << report.dump(2) << "\n";
    if (!f.out.empty()) {
        const fs::path out = require_out(f);
        write_json(out / "metrics.json", report);
        mf3d::detail::write_text_file(out / "metrics.csv", std::string(mf3d::kMetricsCsvHeader) + "\n" +
                                                               mf3d::metrics_csv_row(views, all) + "\n");
    }
    return 0;
}

std::vector<int> parse_view_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw mf3d::InputError("invalid view count '" + item + "' in '" + text + "'");
        }
    }
    if (out.empty()) throw mf3d::InputError("empty view list");
    return out;
}

int cmd_ablate(const Flags& f, const std::string& model_path, const std::string& kind, const fs::path& gt_path,
               const std::string& view_list) {
    Flags base = f;
    base.views.reset();
    const Settings s = resolve(base);
    require_path(model_path, "model file");
    const GroundTruth gt = read_gt(gt_path);
    const auto model = load_model_reporting(model_path, kind);
    const auto counts = parse_view_list(view_list);
    const int k = static_cast<int>(gt.prompts.size());
    const auto text = mf3d::canonical_text_embeddings(gt.prompts);
    const mf3d::BundleSource oracle = [&](const std::vector<mf3d::RenderOutput>& renders,
                                          const std::vector<mf3d::CameraPose>& rig) {
        return mf3d::oracle_bundle(renders, rig, gt.labels, k);
    };
    const auto rows = mf3d::views_ablation(model, text, counts, oracle, gt.labels, s.rig, s.segment);
    const std::string csv = mf3d::ablation_csv(rows);
    std::cout << csv;
    if (!f.out.empty()) {
        const fs::path out = require_out(f);
        mf3d::detail::write_text_file(out / "ablation.csv", csv);
        write_json(out / "ablation.json", mf3d::ablation_to_json(rows));
    }
    return 0;
}

int cmd_capture(const Flags& f, const fs::path& input) {
    const Settings s = resolve(f);
    const mf3d::CalibGraph graph = mf3d::calib_from_json(read_json(input / "calib.json", "calibration"));
    const fs::path out = require_out(f);
    const auto world = mf3d::solve_world_transforms(graph);
    for (const auto& w : world.warnings) warn(w);

    std::vector<std::pair<mf3d::PointSet, mf3d::RigidTransform>> clouds;
    for (const auto& [id, to_world] : world.camera_to_world) {
        const fs::path dir = input / id;
        require_path(dir, "camera directory");
        const auto frame = mf3d::clip_depth_range(mf3d::read_depth_frame(dir, id), s.clip_min, s.clip_max);
        clouds.emplace_back(mf3d::depth_to_cloud(frame, s.stride), to_world);
    }
    const auto merged = mf3d::merge_clouds(clouds);
    const auto filtered = mf3d::radius_outlier_removal(merged, s.outlier_radius, s.min_neighbors);
    if (merged.empty()) warn("no valid depth in range; writing an empty cloud");
    mf3d::save_model(filtered.kept, out / "cloud.ply");
    const json report = {{"cameras", world.camera_to_world.size()},
                         {"points", filtered.kept.size()},
                         {"removed", filtered.removed.size()},
                         {"warnings", world.warnings}};
    write_json(out / "capture.json", report);
    std::cout << "captured " << filtered.kept.size() << " points (" << filtered.removed.size() << " outliers removed)\n";
    return 0;
}

int cmd_synth(const Flags& f, const std::string& kind) {
    const Settings s = resolve(f);
    const fs::path out = require_out(f);
    if (kind == "cube-capture") {
        const auto fx = mf3d::make_cube_capture();
        for (const auto& frame : fx.frames) mf3d::write_depth_frame(out / frame.camera_id, frame);
        write_json(out / "calib.json", mf3d::calib_to_json(fx.calib));
        std::cout << "wrote " << fx.frames.size() << " depth frames to " << out.string() << "\n";
        return 0;
    }
    const auto fixture = mf3d::make_fixture(kind, static_cast<std::size_t>(s.synth_points));
    const mf3d::Model model = fixture.mesh;
    mf3d::save_model(model, out / "model.ply");
    write_json(out / "gt.json", {{"prompts", fixture.prompts}, {"labels", fixture.gt}});
    const auto rig = mf3d::build_rig(model, s.rig);
    const auto renders = mf3d::render_views(model, rig, s.rig.splat_px);
    for (const auto& r : renders) mf3d::save_render(out / "renders", r);
    mf3d::save_rig(out / "renders", rig);
    mf3d::write_bundle(mf3d::oracle_bundle(renders, rig, fixture.gt, fixture.class_count()), out / "bundle");
    mf3d::write_text_embeddings(out / "prompts", mf3d::canonical_text_embeddings(fixture.prompts));
    std::cout << "wrote " << kind << " (" << fixture.mesh.vertices.size() << " points, " << fixture.class_count()
              << " classes, " << rig.size() << " views) to " << out.string() << "\n";
    return 0;
}

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "TOML settings file")->check(CLI::ExistingFile);
    cmd->add_option("--threads", f.threads, "worker threads (0 = all cores)");
    cmd->add_option("--out", f.out, "output directory");
}

void add_rig(CLI::App* cmd, Flags& f, bool views = true) {
    if (views) cmd->add_option("--views", f.views, "camera count V");
    cmd->add_option("--elevation", f.elevation, "camera elevation in degrees");
    cmd->add_option("--layout", f.layout, "ring or zigzag")->check(CLI::IsMember({"ring", "zigzag"}));
    cmd->add_option("--width", f.width, "image width");
    cmd->add_option("--height", f.height, "image height");
    cmd->add_option("--focal", f.focal, "focal length in pixels");
    cmd->add_option("--splat", f.splat, "point splat radius in pixels");
}

void add_segment(CLI::App* cmd, Flags& f) {
    cmd->add_option("--tau", f.tau, "score threshold for the other class");
    cmd->add_option("--normalization", f.normalization, "none or coverage")
        ->check(CLI::IsMember({"none", "coverage"}));
    cmd->add_option("--min-pixels", f.min_pixels, "minimum lifted pixels per mask");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mf3d: open-vocabulary segmentation of 3D models from multi-view mask proposals"};
    app.require_subcommand(1);
    Flags f;
    std::string model, kind = "auto", renders, bundle, prompts, pred, gt, input, synth_kind, view_list;

    auto* render = app.add_subcommand("render", "render the rig views of a model");
    add_common(render, f);
    add_rig(render, f);
    render->add_option("--model", model, "model PLY")->required();
    render->add_option("--kind", kind, "auto, mesh, points or gaussians");

    auto* segment = app.add_subcommand("segment", "label every model point from a proposal bundle");
    add_common(segment, f);
    add_segment(segment, f);
    segment->add_option("--model", model, "model PLY")->required();
    segment->add_option("--kind", kind, "auto, mesh, points or gaussians");
    segment->add_option("--renders", renders, "render directory with rig.json")->required();
    segment->add_option("--bundle", bundle, "proposal bundle directory")->required();
    segment->add_option("--prompts", prompts, "directory with prompts.json and text_embeddings.f32")->required();
    segment->add_option("--cache-dir", f.cache_dir, "mask cache directory");
    segment->add_flag("--inpaint,!--no-inpaint", f.inpaint, "fill uncovered points from nearest covered neighbors");

    auto* eval = app.add_subcommand("eval", "score labels against ground truth");
    add_common(eval, f);
    eval->add_option("--views", f.views, "view count written to the CSV row");
    eval->add_option("--pred", pred, "labels.json")->required();
    eval->add_option("--gt", gt, "gt.json")->required();
    eval->add_flag("--count-other-in-oa,!--no-count-other-in-oa", f.count_other_in_oa,
                   "count ground-truth other points in OA");

    auto* ablate = app.add_subcommand("ablate-views", "metrics per view count with the oracle proposal source");
    add_common(ablate, f);
    add_rig(ablate, f, false);
    add_segment(ablate, f);
    ablate->add_option("--model", model, "model PLY")->required();
    ablate->add_option("--kind", kind, "auto, mesh, points or gaussians");
    ablate->add_option("--gt", gt, "gt.json")->required();
    ablate->add_option("--views", view_list, "comma-separated view counts")->default_val("2,4,8,16");

    auto* capture = app.add_subcommand("capture", "fuse calibrated RGB-D frames into one filtered cloud");
    add_common(capture, f);
    capture->add_option("--input", input, "capture directory with calib.json")->required();
    capture->add_option("--clip-min", f.clip_min, "nearest valid depth in meters");
    capture->add_option("--clip-max", f.clip_max, "farthest valid depth in meters");
    capture->add_option("--radius", f.outlier_radius, "outlier search radius in meters");
    capture->add_option("--min-neighbors", f.min_neighbors, "neighbors required to keep a point");
    capture->add_option("--stride", f.stride, "pixel sampling stride");

    auto* synth = app.add_subcommand("synth", "write a synthetic fixture with ground truth");
    add_common(synth, f);
    add_rig(synth, f);
    synth->add_option("kind", synth_kind, "sphere2, capsule5, occluder or cube-capture")
        ->required()
        ->check(CLI::IsMember({"sphere2", "capsule5", "occluder", "cube-capture"}));
    synth->add_option("--points", f.points, "target point count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*render) return cmd_render(f, model, kind);
        if (*segment) return cmd_segment(f, model, kind, renders, bundle, prompts);
        if (*eval) return cmd_eval(f, pred, gt);
        if (*ablate) return cmd_ablate(f, model, kind, gt, view_list);
        if (*capture) return cmd_capture(f, input);
        if (*synth) return cmd_synth(f, synth_kind);
    } catch (const mf3d::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
