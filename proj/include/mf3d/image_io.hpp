#pragma once

// Raster file formats: 8-bit RGB PNG, plus raw little-endian point-index
// (PIDX) and depth (DPTH) maps with a 16-byte header
// {magic[4], u32 height, u32 width, u32 reserved}.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <png.h>

#include "mf3d/detail/binary_io.hpp"
#include "mf3d/error.hpp"

namespace mf3d {

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels; // row-major, 3 bytes per pixel
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace detail

inline void write_png(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb) {
    if (rgb.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3)
        throw InvariantError("write_png: pixel buffer does not match image size");
    detail::FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) throw InputError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw InvariantError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw InvariantError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InputError("libpng failed writing " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(y) * width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Reads any PNG, converted to 8-bit RGB.
inline RgbImage read_png(const std::filesystem::path& path) {
    detail::FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw InputError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw InvariantError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw InvariantError("png_create_info_struct failed");
    }
    RgbImage img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("malformed PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    if (png_get_rowbytes(png, info) != static_cast<std::size_t>(img.width) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("unsupported PNG layout in " + path.string());
    }
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

namespace detail {

template <typename T>
void write_raster(const std::filesystem::path& path, const char (&magic)[5], int width, int height,
                  std::span<const T> values) {
    if (values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
        throw InvariantError("raster buffer does not match image size");
    std::vector<std::uint8_t> out;
    out.reserve(16 + values.size() * sizeof(T));
    out.insert(out.end(), magic, magic + 4);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(height));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(width));
    put_le<std::uint32_t>(out, 0);
    for (T v : values) put_le(out, v);
    write_file(path, out);
}

template <typename T>
std::vector<T> read_raster(const std::filesystem::path& path, const char (&magic)[5], int& width, int& height) {
    const auto bytes = read_file(path);
    ByteReader in(bytes, path.string());
    auto m = in.bytes(4);
    if (!std::equal(m.begin(), m.end(), magic)) throw FormatError(path.string() + ": bad magic, expected " + magic);
    height = static_cast<int>(in.read<std::uint32_t>());
    width = static_cast<int>(in.read<std::uint32_t>());
    in.read<std::uint32_t>();
    const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (in.remaining() != count * sizeof(T))
        throw FormatError(path.string() + ": payload is " + std::to_string(in.remaining()) + " bytes, expected " +
                          std::to_string(count * sizeof(T)));
    std::vector<T> values(count);
    for (auto& v : values) v = in.read<T>();
    return values;
}

} // namespace detail

inline void write_index_map(const std::filesystem::path& path, int width, int height,
                            std::span<const std::int32_t> index) {
    detail::write_raster(path, "PIDX", width, height, index);
}

inline std::vector<std::int32_t> read_index_map(const std::filesystem::path& path, int& width, int& height) {
    return detail::read_raster<std::int32_t>(path, "PIDX", width, height);
}

inline void write_depth_map(const std::filesystem::path& path, int width, int height, std::span<const float> depth) {
    detail::write_raster(path, "DPTH", width, height, depth);
}

inline std::vector<float> read_depth_map(const std::filesystem::path& path, int& width, int& height) {
    return detail::read_raster<float>(path, "DPTH", width, height);
}

} // namespace mf3d
