#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <zlib.h>

#include "flowbm/common.hpp"
#include "flowbm/rng.hpp"
#include "flowbm/state.hpp"

namespace flowbm {

class IdxError : public std::runtime_error {
public:
    enum class Kind { Io, Gzip, BadMagic, Truncated, TrailingBytes, CountMismatch, BadShape };
    IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const { return kind_; }

private:
    Kind kind_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<std::uint8_t> inflate_gzip(const std::vector<std::uint8_t>& in, const std::string& path) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IdxError(IdxError::Kind::Gzip, "zlib init failed for " + path);
    std::vector<std::uint8_t> out;
    std::vector<std::uint8_t> buf(1 << 20);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = uInt(in.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = buf.data();
        zs.avail_out = uInt(buf.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw IdxError(IdxError::Kind::Gzip, "corrupt gzip stream in " + path);
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
        if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw IdxError(IdxError::Kind::Gzip, "truncated gzip stream in " + path);
        }
    }
    inflateEnd(&zs);
    return out;
}

/// Whole file, transparently gunzipped when it starts with 1f 8b.
inline std::vector<std::uint8_t> read_maybe_gzip(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IdxError(IdxError::Kind::Io, "cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return inflate_gzip(bytes, path);
    return bytes;
}

inline std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) | (std::uint32_t(b[at + 2]) << 8) |
           std::uint32_t(b[at + 3]);
}

inline std::string hex32(std::uint32_t v) {
    char s[11];
    std::snprintf(s, sizeof s, "0x%08x", v);
    return s;
}

}  // namespace detail

/// Raw IDX image bytes (row-major per image) and optional labels.
struct RawImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;
    std::optional<std::vector<std::uint8_t>> labels;
    std::string source;
};

/// Parses an IDX payload already in memory. `what` names it in error messages.
inline RawImages parse_idx_images(const std::vector<std::uint8_t>& b, const std::string& what) {
    using K = IdxError::Kind;
    if (b.size() < 16)
        throw IdxError(K::Truncated, what + ": header needs 16 bytes, file has " + std::to_string(b.size()));
    const std::uint32_t magic = detail::be32(b, 0);
    if (magic != kIdxImageMagic)
        throw IdxError(K::BadMagic, what + ": bad magic, expected " + detail::hex32(kIdxImageMagic) + ", found " +
                                        detail::hex32(magic));
    RawImages raw;
    raw.count = detail::be32(b, 4);
    raw.rows = detail::be32(b, 8);
    raw.cols = detail::be32(b, 12);
    if (raw.count == 0 || raw.rows == 0 || raw.cols == 0)
        throw IdxError(K::BadShape, what + ": zero-sized dimension");
    const std::size_t expected = 16 + raw.count * raw.rows * raw.cols;
    if (b.size() < expected)
        throw IdxError(K::Truncated, what + ": truncated payload, expected " + std::to_string(expected) +
                                         " bytes, found " + std::to_string(b.size()));
    if (b.size() > expected)
        throw IdxError(K::TrailingBytes, what + ": " + std::to_string(b.size() - expected) +
                                             " unexpected trailing bytes after " + std::to_string(expected));
    raw.pixels.assign(b.begin() + 16, b.end());
    raw.source = what;
    return raw;
}

inline std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& b, const std::string& what) {
    using K = IdxError::Kind;
    if (b.size() < 8)
        throw IdxError(K::Truncated, what + ": header needs 8 bytes, file has " + std::to_string(b.size()));
    const std::uint32_t magic = detail::be32(b, 0);
    if (magic != kIdxLabelMagic)
        throw IdxError(K::BadMagic, what + ": bad magic, expected " + detail::hex32(kIdxLabelMagic) + ", found " +
                                        detail::hex32(magic));
    const std::size_t count = detail::be32(b, 4);
    const std::size_t expected = 8 + count;
    if (b.size() < expected)
        throw IdxError(K::Truncated, what + ": truncated payload, expected " + std::to_string(expected) +
                                         " bytes, found " + std::to_string(b.size()));
    if (b.size() > expected)
        throw IdxError(K::TrailingBytes, what + ": unexpected trailing bytes");
    return {b.begin() + 8, b.end()};
}

inline RawImages load_idx(const std::string& images_path, const std::optional<std::string>& labels_path = {}) {
    RawImages raw = parse_idx_images(detail::read_maybe_gzip(images_path), images_path);
    if (labels_path) {
        auto labels = parse_idx_labels(detail::read_maybe_gzip(*labels_path), *labels_path);
        if (labels.size() != raw.count)
            throw IdxError(IdxError::Kind::CountMismatch, "label count " + std::to_string(labels.size()) +
                                                              " does not match image count " + std::to_string(raw.count));
        raw.labels = std::move(labels);
    }
    return raw;
}

/// Binary images, one column per example.
struct Dataset {
    BitMatrix images;
    std::optional<std::vector<std::uint8_t>> labels;
    std::string source;
    double threshold = 0.5;

    [[nodiscard]] std::size_t size() const { return std::size_t(images.cols()); }
    [[nodiscard]] std::size_t dim() const { return std::size_t(images.rows()); }

    /// Examples at the given indices, in that order.
    [[nodiscard]] Dataset select(const std::vector<std::size_t>& idx) const {
        require(!idx.empty(), "dataset: empty selection");
        Dataset d{BitMatrix(images.rows(), Eigen::Index(idx.size())), std::nullopt, source, threshold};
        if (labels) d.labels.emplace();
        for (std::size_t k = 0; k < idx.size(); ++k) {
            require(idx[k] < size(), "dataset: index out of range");
            d.images.col(Eigen::Index(k)) = images.col(Eigen::Index(idx[k]));
            if (labels) d.labels->push_back((*labels)[idx[k]]);
        }
        return d;
    }
    [[nodiscard]] Dataset head(std::size_t n) const {
        std::vector<std::size_t> idx(std::min(n, size()));
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        return select(idx);
    }
};

/// pixel -> 1 iff pixel / 255 > threshold.
inline Dataset binarize(const RawImages& raw, double threshold = 0.5) {
    require(threshold > 0.0 && threshold < 1.0, "binarize: threshold must lie in (0,1)");
    const std::size_t d = raw.rows * raw.cols;
    require(raw.count > 0 && raw.pixels.size() == raw.count * d, "binarize: malformed raw image buffer");
    Dataset ds{BitMatrix(Eigen::Index(d), Eigen::Index(raw.count)), raw.labels, raw.source, threshold};
    for (std::size_t k = 0; k < raw.count; ++k)
        for (std::size_t i = 0; i < d; ++i)
            ds.images(Eigen::Index(i), Eigen::Index(k)) = double(raw.pixels[k * d + i]) / 255.0 > threshold ? 1 : 0;
    return ds;
}

inline Dataset load_dataset(const std::string& images_path, const std::optional<std::string>& labels_path = {},
                            double threshold = 0.5) {
    return binarize(load_idx(images_path, labels_path), threshold);
}

struct DataSplit {
    Dataset train;
    std::optional<Dataset> valid;
    std::optional<Dataset> test;
};

/// Disjoint random splits drawn with `seed`; each split keeps the original
/// relative order of its examples.
inline DataSplit split(const Dataset& ds, std::size_t n_train, std::size_t n_valid, std::size_t n_test,
                       std::uint64_t seed) {
    require(n_train >= 1, "split: the training split must be non-empty");
    require(n_train + n_valid + n_test <= ds.size(),
            "split: requested " + std::to_string(n_train + n_valid + n_test) + " examples from " +
                std::to_string(ds.size()));
    std::vector<std::size_t> perm(ds.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    RngStream rng(seed, 0x59117ULL);
    shuffle(perm, rng);
    auto take = [&](std::size_t from, std::size_t n) {
        std::vector<std::size_t> idx(perm.begin() + std::ptrdiff_t(from), perm.begin() + std::ptrdiff_t(from + n));
        std::sort(idx.begin(), idx.end());
        return ds.select(idx);
    };
    DataSplit out{take(0, n_train), std::nullopt, std::nullopt};
    if (n_valid) out.valid = take(n_train, n_valid);
    if (n_test) out.test = take(n_train + n_valid, n_test);
    return out;
}

}  // namespace flowbm
