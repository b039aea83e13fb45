#pragma once

// PLY 1.0 reader/writer for meshes, point clouds and 3D Gaussian checkpoints.
// Reads ASCII and binary little-endian; writes either.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mf3d/detail/binary_io.hpp"
#include "mf3d/error.hpp"
#include "mf3d/geom.hpp"

namespace mf3d {

enum class ModelKind { Auto, Mesh, Points, Gaussians };
enum class PlyEncoding { Ascii, BinaryLittleEndian };

/// Zeroth-order spherical harmonic basis constant used to decode Gaussian DC terms.
inline constexpr double kShC0 = 0.28209479177387814;

/// Color reserved for the "other" class when writing labeled models.
inline constexpr Rgb8 kOtherColor{128, 128, 128};

struct LoadReport {
    std::size_t dropped_degenerate_faces = 0;
    bool dropped_invalid_normals = false;
};

namespace detail::ply {

enum class Scalar { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline std::optional<Scalar> scalar_from_name(std::string_view n) {
    if (n == "char" || n == "int8") return Scalar::Int8;
    if (n == "uchar" || n == "uint8") return Scalar::UInt8;
    if (n == "short" || n == "int16") return Scalar::Int16;
    if (n == "ushort" || n == "uint16") return Scalar::UInt16;
    if (n == "int" || n == "int32") return Scalar::Int32;
    if (n == "uint" || n == "uint32") return Scalar::UInt32;
    if (n == "float" || n == "float32") return Scalar::Float32;
    if (n == "double" || n == "float64") return Scalar::Float64;
    return std::nullopt;
}

struct Property {
    std::string name;
    Scalar type = Scalar::Float32;
    bool is_list = false;
    Scalar count_type = Scalar::UInt8;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> props;

    int find(std::string_view prop) const {
        for (std::size_t i = 0; i < props.size(); ++i)
            if (props[i].name == prop) return static_cast<int>(i);
        return -1;
    }
};

enum class Format { Ascii, BinaryLE };

struct Header {
    Format format = Format::Ascii;
    std::vector<Element> elements;
    std::size_t data_offset = 0;
    std::size_t line_count = 0;
};

inline Header parse_header(std::span<const std::uint8_t> bytes, const std::string& source) {
    Header h;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool have_format = false;
    auto next_line = [&]() -> std::optional<std::string> {
        if (pos >= bytes.size()) return std::nullopt;
        std::size_t end = pos;
        while (end < bytes.size() && bytes[end] != '\n') ++end;
        std::string line(reinterpret_cast<const char*>(bytes.data()) + pos, end - pos);
        pos = end < bytes.size() ? end + 1 : end;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };

    auto first = next_line();
    if (!first || *first != "ply") throw ParseError(source, 1, "missing 'ply' magic");

    while (true) {
        auto line = next_line();
        if (!line) throw ParseError(source, line_no, "header ended without end_header");
        std::istringstream ss(*line);
        std::string keyword;
        ss >> keyword;
        if (keyword.empty() || keyword == "comment" || keyword == "obj_info") continue;
        if (keyword == "end_header") break;
        if (keyword == "format") {
            std::string fmt, version;
            ss >> fmt >> version;
            if (fmt == "ascii") h.format = Format::Ascii;
            else if (fmt == "binary_little_endian") h.format = Format::BinaryLE;
            else if (fmt == "binary_big_endian") throw ParseError(source, line_no, "big-endian PLY is not supported");
            else throw ParseError(source, line_no, "unknown format '" + fmt + "'");
            if (version != "1.0") throw ParseError(source, line_no, "unsupported version '" + version + "'");
            have_format = true;
        } else if (keyword == "element") {
            Element e;
            long long count = -1;
            ss >> e.name >> count;
            if (e.name.empty() || !ss || count < 0) throw ParseError(source, line_no, "malformed element line");
            e.count = static_cast<std::size_t>(count);
            h.elements.push_back(std::move(e));
        } else if (keyword == "property") {
            if (h.elements.empty()) throw ParseError(source, line_no, "property before any element");
            Property p;
            std::string type;
            ss >> type;
            if (type == "list") {
                std::string count_type, item_type;
                ss >> count_type >> item_type >> p.name;
                auto ct = scalar_from_name(count_type);
                auto it = scalar_from_name(item_type);
                if (!ct || !it || p.name.empty()) throw ParseError(source, line_no, "malformed list property");
                if (*ct == Scalar::Float32 || *ct == Scalar::Float64)
                    throw ParseError(source, line_no, "list count type must be integral");
                p.is_list = true;
                p.count_type = *ct;
                p.type = *it;
            } else {
                auto t = scalar_from_name(type);
                ss >> p.name;
                if (!t || p.name.empty()) throw ParseError(source, line_no, "malformed property '" + *line + "'");
                p.type = *t;
            }
            h.elements.back().props.push_back(std::move(p));
        } else {
            throw ParseError(source, line_no, "unexpected header keyword '" + keyword + "'");
        }
    }
    if (!have_format) throw ParseError(source, line_no, "missing format line");
    h.data_offset = pos;
    h.line_count = line_no;
    return h;
}

inline std::size_t scalar_size(Scalar s) {
    switch (s) {
    case Scalar::Int8:
    case Scalar::UInt8: return 1;
    case Scalar::Int16:
    case Scalar::UInt16: return 2;
    case Scalar::Int32:
    case Scalar::UInt32:
    case Scalar::Float32: return 4;
    case Scalar::Float64: return 8;
    }
    return 0;
}

// Pulls scalar values out of the data section in either encoding.
class ValueSource {
public:
    ValueSource(std::span<const std::uint8_t> data, Format fmt, std::string source, std::size_t first_line)
        : data_(data), fmt_(fmt), source_(std::move(source)), line_(first_line) {}

    double next(Scalar type) { return fmt_ == Format::Ascii ? next_ascii(type) : next_binary(type); }

private:
    double next_binary(Scalar type) {
        const std::size_t n = scalar_size(type);
        if (data_.size() - pos_ < n) throw FormatError(source_ + ": binary payload truncated");
        const auto* p = data_.data() + pos_;
        pos_ += n;
        switch (type) {
        case Scalar::Int8: return static_cast<std::int8_t>(p[0]);
        case Scalar::UInt8: return p[0];
        case Scalar::Int16: return get_le<std::int16_t>(p);
        case Scalar::UInt16: return get_le<std::uint16_t>(p);
        case Scalar::Int32: return get_le<std::int32_t>(p);
        case Scalar::UInt32: return get_le<std::uint32_t>(p);
        case Scalar::Float32: return get_le<float>(p);
        case Scalar::Float64: return get_le<double>(p);
        }
        return 0.0;
    }

    double next_ascii(Scalar type) {
        while (pos_ < data_.size() && std::isspace(data_[pos_])) {
            if (data_[pos_] == '\n') ++line_;
            ++pos_;
        }
        if (pos_ >= data_.size()) throw ParseError(source_, line_, "unexpected end of ASCII data");
        const char* begin = reinterpret_cast<const char*>(data_.data()) + pos_;
        const char* end = begin;
        const char* limit = reinterpret_cast<const char*>(data_.data()) + data_.size();
        while (end < limit && !std::isspace(static_cast<unsigned char>(*end))) ++end;
        pos_ += static_cast<std::size_t>(end - begin);
        if (type == Scalar::Float32) {
            float v = 0;
            auto [ptr, ec] = std::from_chars(begin, end, v);
            if (ec != std::errc() || ptr != end) throw ParseError(source_, line_, "bad float '" + std::string(begin, end) + "'");
            return v;
        }
        if (type == Scalar::Float64) {
            double v = 0;
            auto [ptr, ec] = std::from_chars(begin, end, v);
            if (ec != std::errc() || ptr != end) throw ParseError(source_, line_, "bad double '" + std::string(begin, end) + "'");
            return v;
        }
        long long v = 0;
        auto [ptr, ec] = std::from_chars(begin, end, v);
        if (ec != std::errc() || ptr != end) throw ParseError(source_, line_, "bad integer '" + std::string(begin, end) + "'");
        return static_cast<double>(v);
    }

    std::span<const std::uint8_t> data_;
    Format fmt_;
    std::string source_;
    std::size_t line_;
    std::size_t pos_ = 0;
};

// Column-oriented storage of one element's values.
struct ElementData {
    std::vector<std::vector<double>> scalars;         // per scalar property
    std::vector<std::vector<std::int64_t>> list_offsets; // per list property, count+1 entries
    std::vector<std::vector<std::int64_t>> list_values;
};

inline ElementData read_element(const Element& e, ValueSource& src) {
    ElementData d;
    d.scalars.resize(e.props.size());
    d.list_offsets.resize(e.props.size());
    d.list_values.resize(e.props.size());
    for (std::size_t p = 0; p < e.props.size(); ++p) {
        if (e.props[p].is_list) {
            d.list_offsets[p].reserve(e.count + 1);
            d.list_offsets[p].push_back(0);
        } else {
            d.scalars[p].reserve(e.count);
        }
    }
    for (std::size_t i = 0; i < e.count; ++i) {
        for (std::size_t p = 0; p < e.props.size(); ++p) {
            const auto& prop = e.props[p];
            if (!prop.is_list) {
                d.scalars[p].push_back(src.next(prop.type));
                continue;
            }
            const double n = src.next(prop.count_type);
            if (n < 0) throw FormatError("negative list length in element '" + e.name + "'");
            for (long long k = 0; k < static_cast<long long>(n); ++k)
                d.list_values[p].push_back(static_cast<std::int64_t>(src.next(prop.type)));
            d.list_offsets[p].push_back(static_cast<std::int64_t>(d.list_values[p].size()));
        }
    }
    return d;
}

} // namespace detail::ply

/// Loads a PLY file. kind=Auto yields a TriMesh when faces are present, a
/// Gaussian-decoded PointSet when f_dc_* is present without colors, and a
/// plain PointSet otherwise.
inline Model load_model(const std::filesystem::path& path, ModelKind kind = ModelKind::Auto,
                        LoadReport* report = nullptr) {
    using namespace detail::ply;
    const std::string source = path.string();
    if (!std::filesystem::exists(path)) throw InputError("model file not found: " + source);
    const auto bytes = detail::read_file(path);
    const Header header = parse_header(bytes, source);

    ValueSource src{std::span<const std::uint8_t>(bytes).subspan(header.data_offset), header.format, source, header.line_count + 1};
    const Element* vertex_el = nullptr;
    const Element* face_el = nullptr;
    ElementData vertex_data, face_data;
    for (const auto& e : header.elements) {
        auto data = read_element(e, src);
        if (e.name == "vertex" && !vertex_el) {
            vertex_el = &e;
            vertex_data = std::move(data);
        } else if (e.name == "face" && !face_el) {
            face_el = &e;
            face_data = std::move(data);
        }
    }
    if (!vertex_el) throw FormatError(source + ": no vertex element");

    auto column = [&](std::string_view name) -> const std::vector<double>* {
        const int idx = vertex_el->find(name);
        if (idx < 0 || vertex_el->props[static_cast<std::size_t>(idx)].is_list) return nullptr;
        return &vertex_data.scalars[static_cast<std::size_t>(idx)];
    };
    const auto *x = column("x"), *y = column("y"), *z = column("z");
    if (!x || !y || !z) throw FormatError(source + ": vertex element lacks x/y/z properties");
    const auto *red = column("red"), *green = column("green"), *blue = column("blue");
    const auto *nx = column("nx"), *ny = column("ny"), *nz = column("nz");
    const auto *dc0 = column("f_dc_0"), *dc1 = column("f_dc_1"), *dc2 = column("f_dc_2");
    const bool has_rgb = red && green && blue;
    const bool has_dc = dc0 && dc1 && dc2;
    const bool has_faces = face_el && face_el->count > 0;

    if (kind == ModelKind::Auto) {
        if (has_faces) kind = ModelKind::Mesh;
        else if (has_dc && !has_rgb) kind = ModelKind::Gaussians;
        else kind = ModelKind::Points;
    }
    if (kind == ModelKind::Gaussians && !has_dc)
        throw FormatError(source + ": Gaussian model lacks f_dc_0..2 properties");
    if (kind == ModelKind::Mesh && !face_el) throw FormatError(source + ": mesh requested but file has no face element");

    const std::size_t n = vertex_el->count;
    std::vector<Vec3> positions(n);
    for (std::size_t i = 0; i < n; ++i) positions[i] = Vec3((*x)[i], (*y)[i], (*z)[i]);
    for (std::size_t i = 0; i < n; ++i)
        if (!positions[i].allFinite()) throw FormatError(source + ": vertex " + std::to_string(i) + " is not finite");

    std::optional<std::vector<Color>> colors;
    if (kind == ModelKind::Gaussians) {
        colors.emplace(n);
        for (std::size_t i = 0; i < n; ++i)
            (*colors)[i] = Color(std::clamp(0.5 + kShC0 * (*dc0)[i], 0.0, 1.0),
                                 std::clamp(0.5 + kShC0 * (*dc1)[i], 0.0, 1.0),
                                 std::clamp(0.5 + kShC0 * (*dc2)[i], 0.0, 1.0));
    } else if (has_rgb) {
        const auto rtype = vertex_el->props[static_cast<std::size_t>(vertex_el->find("red"))].type;
        const bool is_float = rtype == Scalar::Float32 || rtype == Scalar::Float64;
        colors.emplace(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (is_float) (*colors)[i] = Color((*red)[i], (*green)[i], (*blue)[i]);
            else (*colors)[i] = Color((*red)[i] / 255.0, (*green)[i] / 255.0, (*blue)[i] / 255.0);
        }
    }

    if (kind == ModelKind::Mesh) {
        TriMesh mesh;
        mesh.vertices = std::move(positions);
        mesh.vertex_colors = std::move(colors);
        int idx_prop = face_el->find("vertex_indices");
        if (idx_prop < 0) idx_prop = face_el->find("vertex_index");
        if (idx_prop < 0 || !face_el->props[static_cast<std::size_t>(idx_prop)].is_list)
            throw FormatError(source + ": face element lacks a vertex_indices list");
        const auto& offsets = face_data.list_offsets[static_cast<std::size_t>(idx_prop)];
        const auto& values = face_data.list_values[static_cast<std::size_t>(idx_prop)];
        std::size_t dropped = 0;
        for (std::size_t f = 0; f + 1 < offsets.size(); ++f) {
            const auto begin = static_cast<std::size_t>(offsets[f]);
            const auto end = static_cast<std::size_t>(offsets[f + 1]);
            for (std::size_t k = begin; k < end; ++k)
                if (values[k] < 0 || values[k] >= static_cast<std::int64_t>(n))
                    throw FormatError(source + ": face " + std::to_string(f) + " references vertex " +
                                      std::to_string(values[k]) + " of " + std::to_string(n));
            if (end - begin < 3) {
                ++dropped;
                continue;
            }
            // Polygons are fan-triangulated.
            for (std::size_t k = begin + 1; k + 1 < end; ++k) {
                Face tri{static_cast<std::int32_t>(values[begin]), static_cast<std::int32_t>(values[k]),
                         static_cast<std::int32_t>(values[k + 1])};
                if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
                    ++dropped;
                    continue;
                }
                mesh.faces.push_back(tri);
            }
        }
        if (report) report->dropped_degenerate_faces = dropped;
        return mesh;
    }

    PointSet points;
    points.positions = std::move(positions);
    points.colors = std::move(colors);
    if (kind == ModelKind::Points && nx && ny && nz) {
        std::vector<Vec3> normals(n);
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i) {
            normals[i] = Vec3((*nx)[i], (*ny)[i], (*nz)[i]);
            ok = std::abs(normals[i].norm() - 1.0) <= 1e-4;
        }
        if (ok) points.normals = std::move(normals);
        else if (report) report->dropped_invalid_normals = true;
    }
    return points;
}

/// A fixed, visually distinct palette cycled to `k` entries.
inline std::vector<Rgb8> default_palette(std::size_t k) {
    static constexpr Rgb8 kBase[] = {
        {230, 25, 75},   {60, 180, 75},   {0, 130, 200},  {255, 225, 25}, {245, 130, 48},
        {145, 30, 180},  {70, 240, 240},  {240, 50, 230}, {210, 245, 60}, {250, 190, 212},
        {0, 128, 128},   {220, 190, 255}, {170, 110, 40}, {255, 250, 200}, {128, 0, 0},
        {170, 255, 195}, {128, 128, 0},   {255, 215, 180}, {0, 0, 128},   {64, 64, 64},
    };
    std::vector<Rgb8> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = kBase[i % std::size(kBase)];
    return out;
}

namespace detail::ply {

inline void append_text(std::vector<std::uint8_t>& out, std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

template <typename T>
void append_number(std::vector<std::uint8_t>& out, T v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.insert(out.end(), buf, ptr);
}

} // namespace detail::ply

/// Writes a model as PLY. When `labels` is non-empty, vertex colors are
/// replaced by palette colors; label == palette.size() is the "other" class
/// and is written gray. An empty palette falls back to default_palette.
inline void save_model(const Model& model, const std::filesystem::path& path,
                       std::span<const std::int32_t> labels = {}, std::span<const Rgb8> palette = {},
                       PlyEncoding encoding = PlyEncoding::BinaryLittleEndian) {
    using detail::ply::append_number;
    using detail::ply::append_text;

    const auto* mesh = std::get_if<TriMesh>(&model);
    const auto* cloud = std::get_if<PointSet>(&model);
    const std::vector<Vec3>& positions = mesh ? mesh->vertices : cloud->positions;
    const std::optional<std::vector<Color>>& source_colors = mesh ? mesh->vertex_colors : cloud->colors;
    const std::optional<std::vector<Vec3>>* normals = cloud ? &cloud->normals : nullptr;
    const std::size_t n = positions.size();

    std::vector<Rgb8> rgb;
    if (!labels.empty()) {
        if (labels.size() != n)
            throw FormatError("label count " + std::to_string(labels.size()) + " does not match point count " +
                              std::to_string(n));
        std::vector<Rgb8> fallback;
        if (palette.empty()) {
            std::int32_t max_label = 0;
            for (auto l : labels) max_label = std::max(max_label, l);
            fallback = default_palette(static_cast<std::size_t>(max_label));
            palette = fallback;
        }
        rgb.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto l = labels[i];
            if (l < 0 || static_cast<std::size_t>(l) > palette.size())
                throw FormatError("label " + std::to_string(l) + " at point " + std::to_string(i) +
                                  " exceeds palette size " + std::to_string(palette.size()));
            rgb[i] = static_cast<std::size_t>(l) == palette.size() ? kOtherColor : palette[static_cast<std::size_t>(l)];
        }
    } else if (source_colors) {
        rgb.resize(n);
        for (std::size_t i = 0; i < n; ++i) rgb[i] = to_rgb8((*source_colors)[i]);
    }
    const bool write_normals = normals && normals->has_value();
    const bool ascii = encoding == PlyEncoding::Ascii;

    std::vector<std::uint8_t> out;
    append_text(out, "ply\n");
    append_text(out, ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n");
    append_text(out, "element vertex " + std::to_string(n) + "\n");
    append_text(out, "property float x\nproperty float y\nproperty float z\n");
    if (!rgb.empty()) append_text(out, "property uchar red\nproperty uchar green\nproperty uchar blue\n");
    if (write_normals) append_text(out, "property float nx\nproperty float ny\nproperty float nz\n");
    if (mesh) {
        append_text(out, "element face " + std::to_string(mesh->faces.size()) + "\n");
        append_text(out, "property list uchar int vertex_indices\n");
    }
    append_text(out, "end_header\n");

    for (std::size_t i = 0; i < n; ++i) {
        float xyz[3] = {static_cast<float>(positions[i].x()), static_cast<float>(positions[i].y()),
                        static_cast<float>(positions[i].z())};
        float nrm[3] = {0, 0, 0};
        if (write_normals) {
            const auto& nv = (**normals)[i];
            nrm[0] = static_cast<float>(nv.x());
            nrm[1] = static_cast<float>(nv.y());
            nrm[2] = static_cast<float>(nv.z());
        }
        if (ascii) {
            for (int k = 0; k < 3; ++k) {
                if (k) out.push_back(' ');
                append_number(out, xyz[k]);
            }
            if (!rgb.empty())
                for (int k = 0; k < 3; ++k) {
                    out.push_back(' ');
                    append_number(out, static_cast<int>(rgb[i][static_cast<std::size_t>(k)]));
                }
            if (write_normals)
                for (int k = 0; k < 3; ++k) {
                    out.push_back(' ');
                    append_number(out, nrm[k]);
                }
            out.push_back('\n');
        } else {
            for (float v : xyz) detail::put_le(out, v);
            if (!rgb.empty()) out.insert(out.end(), rgb[i].begin(), rgb[i].end());
            if (write_normals)
                for (float v : nrm) detail::put_le(out, v);
        }
    }
    if (mesh) {
        for (const auto& f : mesh->faces) {
            if (ascii) {
                append_text(out, "3");
                for (auto idx : f) {
                    out.push_back(' ');
                    append_number(out, idx);
                }
                out.push_back('\n');
            } else {
                out.push_back(3);
                for (auto idx : f) detail::put_le(out, idx);
            }
        }
    }
    detail::write_file(path, out);
}

} // namespace mf3d
