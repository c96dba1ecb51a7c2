#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "sncl/errors.hpp"
#include "sncl/tensor.hpp"

namespace sncl {

/// Writes a tensor as a little-endian float32 .npy (format 1.0, C order).
inline void write_npy(const std::string& path, const Tensor& t) {
    std::ostringstream shape;
    shape << '(';
    for (std::size_t i = 0; i < t.rank(); ++i) shape << t.dim(i) << (t.rank() == 1 || i + 1 < t.rank() ? "," : "");
    shape << ')';
    std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': " + shape.str() + ", }";
    const std::size_t unpadded = 10 + header.size() + 1;
    header.append((64 - unpadded % 64) % 64, ' ');
    header.push_back('\n');

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write("\x93NUMPY\x01\x00", 8);
    const auto len = static_cast<std::uint16_t>(header.size());
    const char len_bytes[2] = {static_cast<char>(len & 0xFF), static_cast<char>(len >> 8)};
    out.write(len_bytes, 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (double v : t.storage()) {
        const float f = static_cast<float>(v);
        char b[4];
        std::memcpy(b, &f, 4);
        out.write(b, 4);
    }
    if (!out) throw IoError("failed writing " + path);
}

/// Reads a float32 C-order .npy written by write_npy (or numpy.save).
inline Tensor read_npy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw FormatError(path + " is not an .npy file");
    std::size_t header_len = 0;
    if (magic[6] == 1) {
        unsigned char b[2];
        in.read(reinterpret_cast<char*>(b), 2);
        header_len = b[0] | (b[1] << 8);
    } else {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        header_len = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::size_t>(b[3]) << 24);
    }
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw FormatError(path + ": truncated header");
    if (header.find("'<f4'") == std::string::npos) throw FormatError(path + ": only little-endian float32 is supported");
    if (header.find("'fortran_order': True") != std::string::npos) throw FormatError(path + ": Fortran order unsupported");
    const auto open = header.find('(', header.find("'shape'"));
    const auto close = header.find(')', open);
    if (open == std::string::npos || close == std::string::npos) throw FormatError(path + ": no shape in header");
    Shape shape;
    std::stringstream dims(header.substr(open + 1, close - open - 1));
    std::string item;
    while (std::getline(dims, item, ','))
        if (item.find_first_not_of(' ') != std::string::npos) shape.push_back(std::stoull(item));
    Tensor t(shape);
    for (auto& v : t.storage()) {
        char b[4];
        in.read(b, 4);
        if (!in) throw FormatError(path + ": truncated data");
        float f;
        std::memcpy(&f, b, 4);
        v = f;
    }
    return t;
}

}  // namespace sncl
