#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "sgsr/error.hpp"
#include "sgsr/tensor.hpp"

namespace sgsr {

// Binary PGM (P5), 8-bit or 16-bit big-endian samples. Values map to [0,1]
// by dividing by maxval.

namespace pgm_detail {

struct Cursor {
    const std::string& buf;
    std::size_t pos = 0;

    bool eof() const { return pos >= buf.size(); }
    char peek() const { return buf[pos]; }

    void skip_space_and_comments(const char* what) {
        bool progressed = true;
        while (progressed && !eof()) {
            progressed = false;
            while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) {
                ++pos;
                progressed = true;
            }
            if (!eof() && peek() == '#') {
                while (!eof() && peek() != '\n') ++pos;
                progressed = true;
            }
        }
        if (eof())
            throw FormatError(std::string("pgm: unexpected end of header before ") + what +
                              " at byte offset " + std::to_string(pos));
    }

    int read_int(const char* what) {
        skip_space_and_comments(what);
        if (!std::isdigit(static_cast<unsigned char>(peek())))
            throw FormatError(std::string("pgm: expected digit for ") + what +
                              " at byte offset " + std::to_string(pos));
        long v = 0;
        while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
            v = v * 10 + (peek() - '0');
            if (v > 1 << 30)
                throw FormatError(std::string("pgm: ") + what + " out of range at byte offset " +
                                  std::to_string(pos));
            ++pos;
        }
        return static_cast<int>(v);
    }
};

} // namespace pgm_detail

inline Tensor read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5')
        throw FormatError("pgm '" + path.string() + "': unsupported magic at byte offset 0");
    pgm_detail::Cursor cur{buf, 2};
    const int width = cur.read_int("width");
    const int height = cur.read_int("height");
    const int maxval = cur.read_int("maxval");
    if (width < 1 || height < 1)
        throw FormatError("pgm: non-positive dimensions at byte offset " + std::to_string(cur.pos));
    if (maxval < 1 || maxval > 65535)
        throw FormatError("pgm: maxval " + std::to_string(maxval) + " out of range at byte offset " +
                          std::to_string(cur.pos));
    // exactly one whitespace byte separates the header from the payload
    if (cur.eof() || !std::isspace(static_cast<unsigned char>(cur.peek())))
        throw FormatError("pgm: missing header terminator at byte offset " +
                          std::to_string(cur.pos));
    ++cur.pos;

    const std::size_t count = static_cast<std::size_t>(width) * height;
    const int bytes_per = maxval > 255 ? 2 : 1;
    if (buf.size() - cur.pos < count * bytes_per)
        throw IntegrityError("pgm '" + path.string() + "': payload truncated at byte offset " +
                             std::to_string(buf.size()));

    Tensor img(Shape4(1, 1, height, width));
    const double inv = 1.0 / maxval;
    const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data()) + cur.pos;
    for (std::size_t i = 0; i < count; ++i) {
        unsigned v = bytes_per == 1 ? p[i] : (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
        img.data[i] = v * inv;
    }
    return img;
}

// Clamps to [0,1] and quantizes by round(v * maxval). 16-bit samples are
// written big-endian per the format.
inline void write_pgm(const Tensor& img, const std::filesystem::path& path, int maxval = 255) {
    if (img.shape.n != 1 || img.shape.c != 1)
        throw DimensionError("write_pgm: expected single-channel image (1,1,h,w), got " +
                             img.shape.str());
    if (maxval < 1 || maxval > 65535) throw ConfigError("write_pgm: maxval out of range");

    std::string buf = "P5\n" + std::to_string(img.shape.w) + " " + std::to_string(img.shape.h) +
                      "\n" + std::to_string(maxval) + "\n";
    const int bytes_per = maxval > 255 ? 2 : 1;
    buf.reserve(buf.size() + img.size() * bytes_per);
    for (double v : img.data) {
        const double c = std::clamp(v, 0.0, 1.0);
        const unsigned q = static_cast<unsigned>(std::lround(c * maxval));
        if (bytes_per == 2) buf.push_back(static_cast<char>((q >> 8) & 0xff));
        buf.push_back(static_cast<char>(q & 0xff));
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to '" + path.string() + "'");
}

} // namespace sgsr
