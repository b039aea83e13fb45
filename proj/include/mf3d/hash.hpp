#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include "mf3d/detail/binary_io.hpp"
#include "mf3d/error.hpp"

namespace mf3d {

using Digest = std::array<std::uint8_t, 32>;

inline Digest sha256(std::span<const std::uint8_t> data) {
    Digest out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size())
        throw InvariantError("sha256 failed");
    return out;
}

inline Digest sha256(std::string_view text) {
    return sha256(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s;
    s.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        s.push_back(kHex[b >> 4]);
        s.push_back(kHex[b & 0xF]);
    }
    return s;
}

inline std::string sha256_hex(std::span<const std::uint8_t> data) { return to_hex(sha256(data)); }

inline std::string sha256_file_hex(const std::filesystem::path& path) { return sha256_hex(detail::read_file(path)); }

} // namespace mf3d
