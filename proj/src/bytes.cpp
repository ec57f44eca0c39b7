#include "evh/bytes.hpp"

#include <cstdio>
#include <fstream>

#include "evh/errors.hpp"

namespace evh {

std::size_t byte_diff_count(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    const std::size_t common = a.size() < b.size() ? a.size() : b.size();
    std::size_t diff = 0;
    for (std::size_t i = 0; i < common; ++i) {
        diff += (a[i] != b[i]) ? 1 : 0;
    }
    const std::size_t longer = a.size() > b.size() ? a.size() : b.size();
    return diff + (longer - common);
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> data) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::uint8_t byte : data) {
        h ^= byte;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

Bytes read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    in.seekg(0, std::ios::end);
    const std::streamoff len = in.tellg();
    in.seekg(0, std::ios::beg);
    Bytes data(static_cast<std::size_t>(len));
    if (len > 0) in.read(reinterpret_cast<char*>(data.data()), len);
    if (!in) throw Error("short read: " + path);
    return data;
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("short write: " + path);
}

} // namespace evh
