#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mf3d/error.hpp"

namespace mf3d::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T byteswap_if_big(T v) {
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

/// Appends the little-endian bytes of an arithmetic value.
template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    value = byteswap_if_big(value);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &value, sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
T get_le(const std::uint8_t* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return byteswap_if_big(v);
}

/// Bounds-checked little-endian reader over a byte buffer.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> data, std::string source)
        : data_(data), source_(std::move(source)) {}

    template <typename T>
    T read() {
        need(sizeof(T));
        T v = get_le<T>(data_.data() + pos_);
        pos_ += sizeof(T);
        return v;
    }

    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n)
            throw FormatError(source_ + ": unexpected end of data at byte " + std::to_string(pos_));
    }

    std::span<const std::uint8_t> data_;
    std::string source_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> data(size);
    if (size > 0) in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size));
    if (!in) throw InputError("failed reading " + path.string());
    return data;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

/// Writes through a sibling temp file and renames it into place.
inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + path.string());
        out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
        if (!out) throw InputError("failed writing " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw InputError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace mf3d::detail
