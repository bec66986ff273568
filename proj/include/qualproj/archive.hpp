#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <zlib.h>

#include "qualproj/datasets.hpp"
#include "qualproj/error.hpp"

// Just enough archive handling for the dataset fetch helper: gzip inflate
// and ustar extraction (the two dataset archives are a .gz per IDX file and
// one .tar.gz of CIFAR batches).

namespace qualproj {

inline std::vector<std::uint8_t> gunzip_bytes(const std::vector<std::uint8_t>& in,
                                              const std::string& name) {
    z_stream strm{};
    // 15+32: accept gzip or zlib framing
    if (inflateInit2(&strm, 15 + 32) != Z_OK) throw Error("zlib init failed");
    std::vector<std::uint8_t> out;
    out.reserve(in.size() * 3);
    std::uint8_t buf[1 << 16];
    strm.next_in = const_cast<Bytef*>(in.data());
    strm.avail_in = static_cast<uInt>(in.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        strm.next_out = buf;
        strm.avail_out = sizeof buf;
        rc = inflate(&strm, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&strm);
            throw ParseError(name + ": corrupt gzip stream (zlib rc " + std::to_string(rc) + ")");
        }
        out.insert(out.end(), buf, buf + (sizeof buf - strm.avail_out));
    }
    inflateEnd(&strm);
    return out;
}

namespace detail {

inline std::size_t parse_tar_octal(const char* p, std::size_t n) {
    std::size_t v = 0;
    for (std::size_t i = 0; i < n && p[i]; ++i) {
        if (p[i] == ' ') continue;
        if (p[i] < '0' || p[i] > '7') throw ParseError("tar: bad octal field");
        v = v * 8 + std::size_t(p[i] - '0');
    }
    return v;
}

} // namespace detail

/// Extracts regular files from an (uncompressed) ustar stream into
/// dest_dir, preserving relative paths. Returns the extracted paths.
inline std::vector<std::filesystem::path> untar_to(const std::vector<std::uint8_t>& tar,
                                                   const std::filesystem::path& dest_dir) {
    std::vector<std::filesystem::path> extracted;
    std::size_t off = 0;
    while (off + 512 <= tar.size()) {
        const char* hdr = reinterpret_cast<const char*>(tar.data() + off);
        bool all_zero = true;
        for (std::size_t i = 0; i < 512; ++i) {
            if (hdr[i] != 0) { all_zero = false; break; }
        }
        if (all_zero) break; // end-of-archive marker

        std::string rel(hdr, hdr + 100);
        rel = rel.c_str(); // trim at NUL
        const std::size_t size = detail::parse_tar_octal(hdr + 124, 12);
        const char type = hdr[156];
        off += 512;
        if (off + size > tar.size()) throw ParseError("tar: truncated entry " + rel);

        if (type == '0' || type == '\0') {
            std::filesystem::path out = dest_dir;
            for (const auto& part : std::filesystem::path(rel)) {
                if (part == ".." || part == "/") throw ParseError("tar: unsafe path " + rel);
                out /= part;
            }
            std::filesystem::create_directories(out.parent_path());
            write_file_bytes(out, tar.data() + off, size);
            extracted.push_back(out);
        }
        off += (size + 511) / 512 * 512;
    }
    return extracted;
}

} // namespace qualproj
