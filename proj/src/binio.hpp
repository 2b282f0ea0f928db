#pragma once

// Little-endian binary IO helpers shared by the dataset and checkpoint
// containers. Explicit byte order keeps the formats platform-independent.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sdp/common.hpp"

namespace sdp::binio {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    put_u32(os, static_cast<std::uint32_t>(v));
    put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline void put_u8(std::ostream& os, std::uint8_t v) {
    os.write(reinterpret_cast<const char*>(&v), 1);
}

inline void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

inline void put_f32_array(std::ostream& os, const float* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) put_f32(os, data[i]);
}

inline void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("unexpected end of file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& is) {
    const std::uint64_t lo = get_u32(is);
    const std::uint64_t hi = get_u32(is);
    return lo | (hi << 32);
}

inline std::uint8_t get_u8(std::istream& is) {
    char c;
    is.read(&c, 1);
    if (!is) throw IoError("unexpected end of file");
    return static_cast<std::uint8_t>(c);
}

inline float get_f32(std::istream& is) {
    const std::uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void get_f32_array(std::istream& is, float* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) data[i] = get_f32(is);
}

inline std::string get_string(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw IoError("unexpected end of file");
    return s;
}

// Whole-file atomic write: stream into <path>.tmp, then rename.
class AtomicFile {
public:
    explicit AtomicFile(const std::string& path) : path_(path), tmp_(path + ".tmp") {
        os_.open(tmp_, std::ios::binary | std::ios::trunc);
        if (!os_) throw IoError("cannot open for writing: " + tmp_);
    }
    std::ostream& stream() { return os_; }
    void commit() {
        os_.flush();
        if (!os_) throw IoError("write failed: " + tmp_);
        os_.close();
        if (std::rename(tmp_.c_str(), path_.c_str()) != 0) {
            throw IoError("rename failed: " + path_);
        }
        committed_ = true;
    }
    ~AtomicFile() {
        if (!committed_) {
            os_.close();
            std::remove(tmp_.c_str());
        }
    }

private:
    std::string path_, tmp_;
    std::ofstream os_;
    bool committed_ = false;
};

}  // namespace sdp::binio
