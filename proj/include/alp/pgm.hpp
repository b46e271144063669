// P5 (binary) PGM writing.
#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "alp/binio.hpp"

namespace alp {

inline std::string pgm_bytes(int w, int h, const std::vector<std::uint8_t>& gray) {
    if (static_cast<size_t>(w) * h != gray.size()) throw ContractError("pgm: size mismatch");
    std::ostringstream os;
    os << "P5\n" << w << " " << h << "\n255\n";
    os.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
    return os.str();
}

inline void write_pgm(const std::string& path, int w, int h,
                      const std::vector<std::uint8_t>& gray) {
    auto os = binio::open_out(path);
    const std::string bytes = pgm_bytes(w, h, gray);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("pgm: write failed: " + path);
}

}  // namespace alp
