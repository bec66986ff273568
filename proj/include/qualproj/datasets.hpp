#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "qualproj/error.hpp"
#include "qualproj/rng.hpp"

// MNIST IDX and CIFAR-10 binary parsing, CIFAR 32x32 RGB -> 28x28 grayscale
// preprocessing, sample-subset selection, and a flat binary cache format
// ("QPDS") for preprocessed vectors.

namespace qualproj {

inline constexpr std::uint32_t kIdxImagesMagic = 2051; // 0x00000803
inline constexpr std::uint32_t kIdxLabelsMagic = 2049; // 0x00000801
inline constexpr std::size_t kMnistSide = 28;
inline constexpr std::size_t kImageDim = kMnistSide * kMnistSide; // 784
inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = kCifarSide * kCifarSide;     // 1024 per plane
inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * kCifarPixels;   // 3073

struct LabeledDataset {
    enum class Source { Mnist, Cifar10 };
    std::vector<std::vector<double>> images; // each kImageDim, values in [0,1]
    std::vector<int> labels;                 // 0..9
    Source source = Source::Mnist;

    std::size_t size() const { return images.size(); }
};

/// One CIFAR-10 binary record: label byte plus 3072 channel-planar pixel
/// bytes (1024 R, 1024 G, 1024 B; each plane row-major 32x32).
struct RawCifarImage {
    std::uint8_t label = 0;
    std::array<std::uint8_t, 3 * kCifarPixels> pixels{};
};

// Raw IDX containers; parse/serialize are exact inverses on the bytes
// consumed, which the tests use as a round-trip property.
struct IdxImages {
    std::uint32_t count = 0, rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels; // count * rows * cols
};
struct IdxLabels {
    std::uint32_t count = 0;
    std::vector<std::uint8_t> labels;
};

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    in.seekg(0, std::ios::end);
    const auto n = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
    if (n > 0) in.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!in) throw IoError("failed reading file: " + path.string());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const void* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("failed writing file: " + path.string());
}

namespace detail {

inline std::uint32_t read_be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

} // namespace detail

// ---------------------------------------------------------------------------
// IDX (MNIST) format
// ---------------------------------------------------------------------------

inline IdxImages parse_idx_images(const std::vector<std::uint8_t>& bytes,
                                  const std::string& name) {
    if (bytes.size() < 16) throw ParseError(name + ": truncated IDX image header");
    const std::uint32_t magic = detail::read_be32(bytes.data());
    if (magic != kIdxImagesMagic) {
        throw ParseError(name + ": bad IDX image magic " + std::to_string(magic) +
                         " (expected " + std::to_string(kIdxImagesMagic) + ")");
    }
    IdxImages out;
    out.count = detail::read_be32(bytes.data() + 4);
    out.rows = detail::read_be32(bytes.data() + 8);
    out.cols = detail::read_be32(bytes.data() + 12);
    if (out.rows == 0 || out.cols == 0 || out.rows > 16384 || out.cols > 16384) {
        throw ParseError(name + ": implausible IDX image dimensions " +
                         std::to_string(out.rows) + "x" + std::to_string(out.cols));
    }
    // overflow-safe: divide instead of multiplying the untrusted count
    const std::size_t per_image = std::size_t(out.rows) * out.cols;
    if (out.count > (bytes.size() - 16) / per_image) {
        throw ParseError(name + ": truncated IDX image data (" +
                         std::to_string(bytes.size()) + " bytes for " +
                         std::to_string(out.count) + " images)");
    }
    const std::size_t need = 16 + std::size_t(out.count) * per_image;
    out.pixels.assign(bytes.begin() + 16, bytes.begin() + std::ptrdiff_t(need));
    return out;
}

inline IdxLabels parse_idx_labels(const std::vector<std::uint8_t>& bytes,
                                  const std::string& name) {
    if (bytes.size() < 8) throw ParseError(name + ": truncated IDX label header");
    const std::uint32_t magic = detail::read_be32(bytes.data());
    if (magic != kIdxLabelsMagic) {
        throw ParseError(name + ": bad IDX label magic " + std::to_string(magic) +
                         " (expected " + std::to_string(kIdxLabelsMagic) + ")");
    }
    IdxLabels out;
    out.count = detail::read_be32(bytes.data() + 4);
    const std::size_t need = 8 + out.count;
    if (bytes.size() < need) {
        throw ParseError(name + ": truncated IDX label data (" +
                         std::to_string(bytes.size()) + " bytes, need " +
                         std::to_string(need) + ")");
    }
    out.labels.assign(bytes.begin() + 8, bytes.begin() + std::ptrdiff_t(need));
    return out;
}

inline IdxImages parse_idx_images(const std::filesystem::path& path) {
    return parse_idx_images(read_file_bytes(path), path.string());
}
inline IdxLabels parse_idx_labels(const std::filesystem::path& path) {
    return parse_idx_labels(read_file_bytes(path), path.string());
}

inline std::vector<std::uint8_t> serialize_idx_images(const IdxImages& idx) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + idx.pixels.size());
    detail::append_be32(out, kIdxImagesMagic);
    detail::append_be32(out, idx.count);
    detail::append_be32(out, idx.rows);
    detail::append_be32(out, idx.cols);
    out.insert(out.end(), idx.pixels.begin(), idx.pixels.end());
    return out;
}

inline std::vector<std::uint8_t> serialize_idx_labels(const IdxLabels& idx) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + idx.labels.size());
    detail::append_be32(out, kIdxLabelsMagic);
    detail::append_be32(out, idx.count);
    out.insert(out.end(), idx.labels.begin(), idx.labels.end());
    return out;
}

/// Loads an MNIST image/label file pair into the universal sample format:
/// 28x28 pixels flattened row-major to 784 doubles, byte v mapped to v/255.
inline LabeledDataset load_mnist(const std::filesystem::path& images_path,
                                 const std::filesystem::path& labels_path) {
    const IdxImages imgs = parse_idx_images(images_path);
    const IdxLabels labs = parse_idx_labels(labels_path);
    if (imgs.rows != kMnistSide || imgs.cols != kMnistSide) {
        throw ParseError(images_path.string() + ": expected 28x28 images, got " +
                         std::to_string(imgs.rows) + "x" + std::to_string(imgs.cols));
    }
    if (imgs.count != labs.count) {
        throw ParseError("image/label count mismatch: " + images_path.string() + " has " +
                         std::to_string(imgs.count) + ", " + labels_path.string() +
                         " has " + std::to_string(labs.count));
    }
    LabeledDataset ds;
    ds.source = LabeledDataset::Source::Mnist;
    ds.images.reserve(imgs.count);
    ds.labels.reserve(imgs.count);
    for (std::size_t n = 0; n < imgs.count; ++n) {
        const std::uint8_t* px = imgs.pixels.data() + n * kImageDim;
        std::vector<double> img(kImageDim);
        for (std::size_t i = 0; i < kImageDim; ++i) img[i] = px[i] / 255.0;
        ds.images.push_back(std::move(img));
        const std::uint8_t lab = labs.labels[n];
        if (lab > 9) {
            throw ParseError(labels_path.string() + ": label " + std::to_string(lab) +
                             " out of range 0..9 at record " + std::to_string(n));
        }
        ds.labels.push_back(lab);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary format
// ---------------------------------------------------------------------------

inline std::vector<RawCifarImage> parse_cifar10_batch(const std::vector<std::uint8_t>& bytes,
                                                      const std::string& name) {
    if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
        throw ParseError(name + ": size " + std::to_string(bytes.size()) +
                         " is not a positive multiple of " +
                         std::to_string(kCifarRecordBytes));
    }
    std::vector<RawCifarImage> out(bytes.size() / kCifarRecordBytes);
    for (std::size_t n = 0; n < out.size(); ++n) {
        const std::uint8_t* rec = bytes.data() + n * kCifarRecordBytes;
        if (rec[0] > 9) {
            throw ParseError(name + ": label " + std::to_string(rec[0]) +
                             " out of range 0..9 at record " + std::to_string(n));
        }
        out[n].label = rec[0];
        std::memcpy(out[n].pixels.data(), rec + 1, 3 * kCifarPixels);
    }
    return out;
}

inline std::vector<RawCifarImage> load_cifar10(const std::vector<std::filesystem::path>& batch_paths) {
    if (batch_paths.empty()) throw ConfigError("load_cifar10: no batch files given");
    std::vector<RawCifarImage> all;
    for (const auto& p : batch_paths) {
        auto batch = parse_cifar10_batch(read_file_bytes(p), p.string());
        all.insert(all.end(), batch.begin(), batch.end());
    }
    return all;
}

// ---------------------------------------------------------------------------
// CIFAR preprocessing: RGB 32x32 -> grayscale 28x28 -> flat 784
// ---------------------------------------------------------------------------

/// Rec.601 luminance then bilinear 32->28 downsample, row-major flatten.
/// Pixel bytes are scaled to [0,1] before the luminance sum, so every
/// output stays in [0,1].
inline std::vector<double> preprocess_cifar(const RawCifarImage& raw) {
    std::array<double, kCifarPixels> gray;
    const std::uint8_t* r = raw.pixels.data();
    const std::uint8_t* g = r + kCifarPixels;
    const std::uint8_t* b = g + kCifarPixels;
    for (std::size_t i = 0; i < kCifarPixels; ++i) {
        gray[i] = 0.299 * (r[i] / 255.0) + 0.587 * (g[i] / 255.0) + 0.114 * (b[i] / 255.0);
    }

    const double scale = double(kCifarSide) / double(kMnistSide); // 8/7
    std::vector<double> out(kImageDim);
    for (std::size_t oy = 0; oy < kMnistSide; ++oy) {
        const double sy = oy * scale;
        const std::size_t y0 = static_cast<std::size_t>(sy);
        const std::size_t y1 = std::min(y0 + 1, kCifarSide - 1);
        const double fy = sy - double(y0);
        for (std::size_t ox = 0; ox < kMnistSide; ++ox) {
            const double sx = ox * scale;
            const std::size_t x0 = static_cast<std::size_t>(sx);
            const std::size_t x1 = std::min(x0 + 1, kCifarSide - 1);
            const double fx = sx - double(x0);
            const double top = (1.0 - fx) * gray[y0 * kCifarSide + x0] +
                               fx * gray[y0 * kCifarSide + x1];
            const double bot = (1.0 - fx) * gray[y1 * kCifarSide + x0] +
                               fx * gray[y1 * kCifarSide + x1];
            out[oy * kMnistSide + ox] = (1.0 - fy) * top + fy * bot;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sample selection
// ---------------------------------------------------------------------------

struct ProjectionImageSelection {
    std::vector<std::size_t> indices;            // draw order, no repeats
    std::vector<std::vector<double>> images;     // preprocessed, draw order
};

/// Draws k distinct records without replacement (seeded partial
/// Fisher-Yates) and preprocesses them in draw order.
inline ProjectionImageSelection select_projection_images(const std::vector<RawCifarImage>& cifar,
                                                         std::size_t k, std::uint64_t seed) {
    if (k > cifar.size()) {
        throw ConfigError("select_projection_images: k=" + std::to_string(k) +
                          " exceeds population " + std::to_string(cifar.size()));
    }
    std::vector<std::size_t> pool(cifar.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    rng::Stream stream(seed);
    ProjectionImageSelection sel;
    sel.indices.reserve(k);
    sel.images.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        // uniform index in [i, pool.size())
        const std::size_t span = pool.size() - i;
        const std::size_t j = i + static_cast<std::size_t>(stream.next() % span);
        std::swap(pool[i], pool[j]);
        sel.indices.push_back(pool[i]);
        sel.images.push_back(preprocess_cifar(cifar[pool[i]]));
    }
    return sel;
}

/// First n examples in file order.
inline LabeledDataset select_training_subset(const LabeledDataset& full, std::size_t n) {
    if (n > full.size()) {
        throw ConfigError("select_training_subset: n=" + std::to_string(n) +
                          " exceeds dataset size " + std::to_string(full.size()));
    }
    LabeledDataset sub;
    sub.source = full.source;
    sub.images.assign(full.images.begin(), full.images.begin() + std::ptrdiff_t(n));
    sub.labels.assign(full.labels.begin(), full.labels.begin() + std::ptrdiff_t(n));
    return sub;
}

// ---------------------------------------------------------------------------
// QPDS cache: flat binary of 64-bit floats with a small header
// ---------------------------------------------------------------------------

inline constexpr char kQpdsMagic[4] = {'Q', 'P', 'D', 'S'};
inline constexpr char kLabelsMagic[4] = {'Q', 'P', 'L', 'B'};
inline constexpr std::uint32_t kQpdsVersion = 1;

inline void write_qpds(const std::filesystem::path& path,
                       const std::vector<std::vector<double>>& rows) {
    const std::uint64_t count = rows.size();
    const std::uint64_t dim = rows.empty() ? 0 : rows[0].size();
    for (const auto& r : rows) {
        if (r.size() != dim) throw InvalidInputError("write_qpds: ragged rows");
    }
    std::vector<std::uint8_t> buf;
    buf.reserve(20 + count * dim * sizeof(double));
    buf.insert(buf.end(), kQpdsMagic, kQpdsMagic + 4);
    auto append_raw = [&buf](const void* p, std::size_t n) {
        const auto* c = static_cast<const std::uint8_t*>(p);
        buf.insert(buf.end(), c, c + n);
    };
    append_raw(&kQpdsVersion, 4);
    append_raw(&count, 8);
    append_raw(&dim, 8);
    for (const auto& r : rows) append_raw(r.data(), dim * sizeof(double));
    write_file_bytes(path, buf.data(), buf.size());
}

inline std::vector<std::vector<double>> read_qpds(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 24 || std::memcmp(bytes.data(), kQpdsMagic, 4) != 0) {
        throw ParseError(path.string() + ": not a QPDS file");
    }
    std::uint32_t version;
    std::uint64_t count, dim;
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&count, bytes.data() + 8, 8);
    std::memcpy(&dim, bytes.data() + 16, 8);
    if (version != kQpdsVersion) {
        throw ParseError(path.string() + ": unsupported QPDS version " + std::to_string(version));
    }
    if (bytes.size() != 24 + count * dim * sizeof(double)) {
        throw ParseError(path.string() + ": QPDS payload size mismatch");
    }
    std::vector<std::vector<double>> rows(count, std::vector<double>(dim));
    const std::uint8_t* p = bytes.data() + 24;
    for (auto& r : rows) {
        std::memcpy(r.data(), p, dim * sizeof(double));
        p += dim * sizeof(double);
    }
    return rows;
}

inline void write_labels_sidecar(const std::filesystem::path& path,
                                 const std::vector<int>& labels) {
    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), kLabelsMagic, kLabelsMagic + 4);
    const std::uint32_t version = kQpdsVersion;
    const std::uint64_t count = labels.size();
    auto append_raw = [&buf](const void* p, std::size_t n) {
        const auto* c = static_cast<const std::uint8_t*>(p);
        buf.insert(buf.end(), c, c + n);
    };
    append_raw(&version, 4);
    append_raw(&count, 8);
    for (int lab : labels) {
        if (lab < 0 || lab > 9) throw InvalidInputError("labels sidecar: label out of range");
        buf.push_back(static_cast<std::uint8_t>(lab));
    }
    write_file_bytes(path, buf.data(), buf.size());
}

inline std::vector<int> read_labels_sidecar(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kLabelsMagic, 4) != 0) {
        throw ParseError(path.string() + ": not a labels sidecar");
    }
    std::uint64_t count;
    std::memcpy(&count, bytes.data() + 8, 8);
    if (bytes.size() != 16 + count) {
        throw ParseError(path.string() + ": labels sidecar size mismatch");
    }
    std::vector<int> labels(count);
    for (std::size_t i = 0; i < count; ++i) labels[i] = bytes[16 + i];
    return labels;
}

} // namespace qualproj
