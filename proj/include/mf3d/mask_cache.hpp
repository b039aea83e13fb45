#pragma once

// Persistent cache of the lifted mask matrix M. The key is
// sha256(manifest.json) XOR sha256(rig.json); the file stores M column-sparse
// together with the bundle row of each column, followed by a sha256 of
// everything before it.
//
//   "MCSC" u32 version
//   u64 P, u64 bundle_masks, u64 cols, u64 nnz, i32 min_pixels, u32 reserved
//   32-byte key
//   u64 col_ptr[cols + 1], i32 row_idx[nnz], u64 bundle_rows[cols]
//   32-byte sha256 trailer

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mf3d/detail/binary_io.hpp"
#include "mf3d/error.hpp"
#include "mf3d/hash.hpp"
#include "mf3d/proposal.hpp"

namespace mf3d {

inline constexpr std::uint32_t kMaskCacheVersion = 1;
inline constexpr char kMaskCacheFile[] = "masks.mcsc";

inline Digest mask_cache_key(const std::filesystem::path& manifest, const std::filesystem::path& rig) {
    const Digest a = sha256(detail::read_file(manifest));
    const Digest b = sha256(detail::read_file(rig));
    Digest k{};
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = a[i] ^ b[i];
    return k;
}

struct CachedMasks {
    SparseMaskMatrix masks;
    std::vector<std::size_t> bundle_rows;
};

/// Cache directory: $MF3D_CACHE_DIR, else `configured`, else `<out>/.cache`.
inline std::filesystem::path resolve_cache_dir(const std::filesystem::path& out, const std::string& configured = {}) {
    if (const char* env = std::getenv("MF3D_CACHE_DIR"); env && *env) return env;
    if (!configured.empty()) return configured;
    return out / ".cache";
}

/// Advisory flock on `<dir>/lock`, shared for readers and exclusive for the
/// writer. Released on destruction.
class CacheLock {
public:
    CacheLock(const std::filesystem::path& dir, bool exclusive) {
        std::filesystem::create_directories(dir);
        const auto path = dir / "lock";
        fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
        if (fd_ < 0) throw InputError("cannot open cache lock " + path.string() + ": " + std::strerror(errno));
        if (::flock(fd_, exclusive ? LOCK_EX : LOCK_SH) != 0) {
            ::close(fd_);
            throw InputError("cannot lock " + path.string() + ": " + std::strerror(errno));
        }
    }
    ~CacheLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    CacheLock(const CacheLock&) = delete;
    CacheLock& operator=(const CacheLock&) = delete;

private:
    int fd_ = -1;
};

inline void write_mask_cache(const std::filesystem::path& path, const Digest& key, std::size_t bundle_masks,
                             int min_pixels, const CachedMasks& cached) {
    const auto& m = cached.masks;
    if (cached.bundle_rows.size() != m.cols()) throw InvariantError("cache rows do not match mask columns");
    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), {'M', 'C', 'S', 'C'});
    detail::put_le<std::uint32_t>(buf, kMaskCacheVersion);
    detail::put_le<std::uint64_t>(buf, m.rows());
    detail::put_le<std::uint64_t>(buf, bundle_masks);
    detail::put_le<std::uint64_t>(buf, m.cols());
    detail::put_le<std::uint64_t>(buf, m.nnz());
    detail::put_le<std::int32_t>(buf, min_pixels);
    detail::put_le<std::uint32_t>(buf, 0);
    buf.insert(buf.end(), key.begin(), key.end());
    for (auto c : m.col_ptr()) detail::put_le<std::uint64_t>(buf, c);
    for (auto r : m.row_idx()) detail::put_le<std::int32_t>(buf, r);
    for (auto r : cached.bundle_rows) detail::put_le<std::uint64_t>(buf, r);
    const Digest sum = sha256(buf);
    buf.insert(buf.end(), sum.begin(), sum.end());
    detail::write_file(path, buf);
}

/// Returns the cached matrix when the file exists, verifies, and matches
/// key, point count, mask count and min_pixels; otherwise nullopt with the
/// reason in `why` (empty when the file is simply absent).
inline std::optional<CachedMasks> read_mask_cache(const std::filesystem::path& path, const Digest& key,
                                                  std::size_t point_count, std::size_t bundle_masks, int min_pixels,
                                                  std::string* why = nullptr) {
    auto miss = [&](std::string reason) -> std::optional<CachedMasks> {
        if (why) *why = std::move(reason);
        return std::nullopt;
    };
    if (!std::filesystem::exists(path)) return miss("");
    const auto data = detail::read_file(path);
    if (data.size() < 4 + 4 + 8 * 4 + 8 + 32 + 32) return miss("cache file truncated");
    const std::span<const std::uint8_t> body(data.data(), data.size() - 32);
    const Digest sum = sha256(body);
    if (!std::equal(sum.begin(), sum.end(), data.end() - 32)) return miss("cache checksum mismatch");
    try {
        detail::ByteReader in(body, path.string());
        const auto magic = in.bytes(4);
        if (std::memcmp(magic.data(), "MCSC", 4) != 0) return miss("not a mask cache file");
        if (in.read<std::uint32_t>() != kMaskCacheVersion) return miss("cache version differs");
        const auto p = in.read<std::uint64_t>();
        const auto n = in.read<std::uint64_t>();
        const auto cols = in.read<std::uint64_t>();
        const auto nnz = in.read<std::uint64_t>();
        const auto min_px = in.read<std::int32_t>();
        (void)in.read<std::uint32_t>();
        const auto stored_key = in.bytes(32);
        if (!std::equal(key.begin(), key.end(), stored_key.begin())) return miss("bundle or rig changed since the cache was built");
        if (p != point_count) return miss("point count differs from the cached matrix");
        if (n != bundle_masks) return miss("bundle mask count differs from the cached matrix");
        if (min_px != min_pixels) return miss("min_pixels differs from the cached matrix");
        if (in.remaining() != (cols + 1) * 8 + nnz * 4 + cols * 8) return miss("cache payload size is inconsistent");
        std::vector<std::size_t> col_ptr(cols + 1);
        for (auto& c : col_ptr) c = in.read<std::uint64_t>();
        std::vector<std::int32_t> rows(nnz);
        for (auto& r : rows) r = in.read<std::int32_t>();
        CachedMasks out;
        out.bundle_rows.resize(cols);
        for (auto& r : out.bundle_rows) {
            r = in.read<std::uint64_t>();
            if (r >= bundle_masks) return miss("cached bundle row out of range");
        }
        out.masks = SparseMaskMatrix(p, std::move(col_ptr), std::move(rows));
        return out;
    } catch (const Error& e) {
        return miss(std::string("cache file unreadable: ") + e.what());
    }
}

} // namespace mf3d
