#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace siammm::binio {

// Little-endian primitives for the SMM* file formats.

inline void write_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

inline void write_u8(std::ostream& os, std::uint8_t v) {
    os.put(static_cast<char>(v));
}

inline void write_f64(std::ostream& os, double v) {
    write_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline void write_f32(std::ostream& os, float v) {
    write_u32(os, std::bit_cast<std::uint32_t>(v));
}

inline std::uint32_t read_u32(std::istream& is, const char* ctx) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error(std::string(ctx) + ": truncated at byte offset " +
                                 std::to_string(static_cast<long long>(is.tellg())));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(std::istream& is, const char* ctx) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw std::runtime_error(std::string(ctx) + ": truncated at byte offset " +
                                 std::to_string(static_cast<long long>(is.tellg())));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint8_t read_u8(std::istream& is, const char* ctx) {
    const int c = is.get();
    if (c == EOF)
        throw std::runtime_error(std::string(ctx) + ": truncated at byte offset " +
                                 std::to_string(static_cast<long long>(is.tellg())));
    return static_cast<std::uint8_t>(c);
}

inline double read_f64(std::istream& is, const char* ctx) {
    return std::bit_cast<double>(read_u64(is, ctx));
}

inline float read_f32(std::istream& is, const char* ctx) {
    return std::bit_cast<float>(read_u32(is, ctx));
}

inline void write_magic(std::ostream& os, const char magic[4]) {
    os.write(magic, 4);
}

inline void expect_magic(std::istream& is, const char magic[4], const char* ctx) {
    char b[4] = {};
    if (!is.read(b, 4) || std::memcmp(b, magic, 4) != 0)
        throw std::runtime_error(std::string(ctx) + ": bad magic at byte offset 0, expected \"" +
                                 std::string(magic, 4) + "\"");
}

}  // namespace siammm::binio
