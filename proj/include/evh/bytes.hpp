#ifndef EVH_BYTES_HPP
#define EVH_BYTES_HPP

#include <cstdint>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace evh {

using Bytes = std::vector<std::uint8_t>;

inline std::uint16_t read_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t read_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t read_u64(const std::uint8_t* p) {
    return static_cast<std::uint64_t>(read_u32(p)) |
           (static_cast<std::uint64_t>(read_u32(p + 4)) << 32);
}

inline void write_u16(std::uint8_t* p, std::uint16_t v) {
    p[0] = static_cast<std::uint8_t>(v);
    p[1] = static_cast<std::uint8_t>(v >> 8);
}

inline void write_u32(std::uint8_t* p, std::uint32_t v) {
    p[0] = static_cast<std::uint8_t>(v);
    p[1] = static_cast<std::uint8_t>(v >> 8);
    p[2] = static_cast<std::uint8_t>(v >> 16);
    p[3] = static_cast<std::uint8_t>(v >> 24);
}

inline void write_u64(std::uint8_t* p, std::uint64_t v) {
    write_u32(p, static_cast<std::uint32_t>(v));
    write_u32(p + 4, static_cast<std::uint32_t>(v >> 32));
}

template <typename T>
inline T align_up(T v, T alignment) {
    if (alignment == 0) return v;
    T rem = v % alignment;
    return rem == 0 ? v : v + (alignment - rem);
}

// Positional difference count plus the length difference. Symmetric.
std::size_t byte_diff_count(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

// FNV-1a over the content; used for manifest digests, not security.
std::uint64_t fnv1a64(std::span<const std::uint8_t> data);

std::string hex64(std::uint64_t v);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> data);

} // namespace evh

#endif
