#pragma once

// On-disk layout of a render directory:
//   rig.json, view{i}.png, view{i}.pidx, view{i}.dpth   (i is 1-based)

#include <filesystem>
#include <string>
#include <vector>

#include "mf3d/camera.hpp"
#include "mf3d/detail/binary_io.hpp"
#include "mf3d/image_io.hpp"
#include "mf3d/render.hpp"

namespace mf3d {

inline std::filesystem::path view_file(const std::filesystem::path& dir, int view, const char* ext) {
    return dir / ("view" + std::to_string(view) + ext);
}

inline void save_render(const std::filesystem::path& dir, const RenderOutput& r) {
    std::filesystem::create_directories(dir);
    write_png(view_file(dir, r.view_index, ".png"), r.width, r.height, r.rgb);
    write_index_map(view_file(dir, r.view_index, ".pidx"), r.width, r.height, r.point_index);
    write_depth_map(view_file(dir, r.view_index, ".dpth"), r.width, r.height, r.depth);
}

/// Loads the index and depth maps of one view; the PNG is read only when
/// `with_rgb` is set.
inline RenderOutput load_render(const std::filesystem::path& dir, int view, bool with_rgb = false) {
    RenderOutput r;
    r.view_index = view;
    int w = 0, h = 0;
    r.point_index = read_index_map(view_file(dir, view, ".pidx"), r.width, r.height);
    r.depth = read_depth_map(view_file(dir, view, ".dpth"), w, h);
    if (w != r.width || h != r.height) throw FormatError("depth and index maps of view " + std::to_string(view) + " differ in size");
    if (with_rgb) {
        auto img = read_png(view_file(dir, view, ".png"));
        if (img.width != r.width || img.height != r.height)
            throw FormatError("image of view " + std::to_string(view) + " differs in size from its index map");
        r.rgb = std::move(img.pixels);
    }
    return r;
}

inline void save_rig(const std::filesystem::path& dir, const std::vector<CameraPose>& rig) {
    std::filesystem::create_directories(dir);
    detail::write_text_file(dir / "rig.json", rig_to_json(rig).dump(2) + "\n");
}

inline std::vector<CameraPose> load_rig(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw InputError("rig file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return rig_from_json(j);
}

} // namespace mf3d
