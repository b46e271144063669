// Little-endian binary primitives shared by the on-disk formats.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "alp/array.hpp"

namespace alp {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace binio {

template <typename T>
void write_pod(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError(std::string("truncated read: ") + what);
    return v;
}

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, size_t n, const char* what) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw IoError(std::string("truncated read: ") + what);
}

inline void write_magic(std::ostream& os, const char m[4]) { os.write(m, 4); }

inline void expect_magic(std::istream& is, const char m[4], const char* format_name) {
    char got[4];
    read_bytes(is, got, 4, "magic");
    if (std::memcmp(got, m, 4) != 0)
        throw IoError(std::string("bad magic for ") + format_name + " file");
}

inline void write_f32s(std::ostream& os, const float* p, size_t n) {
    write_bytes(os, p, n * sizeof(float));
}

inline void read_f32s(std::istream& is, float* p, size_t n, const char* what) {
    read_bytes(is, p, n * sizeof(float), what);
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return is;
}

}  // namespace binio
}  // namespace alp
