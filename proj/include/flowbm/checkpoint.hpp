#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <zlib.h>

#include "flowbm/common.hpp"
#include "flowbm/training.hpp"

namespace flowbm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { Io, BadMagic, Version, Corrupt, Checksum };
    CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const { return kind_; }

private:
    Kind kind_;
};

inline constexpr char kCheckpointMagic[8] = {'F', 'L', 'O', 'W', 'B', 'M', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: magic[8] | u32 version | sections... | u32 crc32(all preceding bytes).
// Section: u32 tag | u64 payload length | payload. Integers and IEEE-754
// doubles are little-endian.
namespace ckpt {

inline constexpr std::uint32_t tag(const char (&s)[5]) {
    return std::uint32_t(std::uint8_t(s[0])) | std::uint32_t(std::uint8_t(s[1])) << 8 |
           std::uint32_t(std::uint8_t(s[2])) << 16 | std::uint32_t(std::uint8_t(s[3])) << 24;
}
inline constexpr std::uint32_t kLayout = tag("LAYO");
inline constexpr std::uint32_t kConfig = tag("CONF");
inline constexpr std::uint32_t kWeights = tag("WGHT");
inline constexpr std::uint32_t kBiases = tag("BIAS");
inline constexpr std::uint32_t kAdam = tag("ADAM");
inline constexpr std::uint32_t kEpoch = tag("EPCH");
inline constexpr std::uint32_t kChains = tag("CHNS");

class Writer {
public:
    template <class T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void put_reals(const double* data, std::size_t count) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(data);
        buf_.insert(buf_.end(), p, p + count * sizeof(double));
    }
    void put_bytes(const std::uint8_t* data, std::size_t count) { buf_.insert(buf_.end(), data, data + count); }
    void begin_section(std::uint32_t t) {
        put(t);
        len_at_ = buf_.size();
        put(std::uint64_t{0});
    }
    void end_section() {
        const std::uint64_t len = buf_.size() - len_at_ - sizeof(std::uint64_t);
        std::memcpy(buf_.data() + len_at_, &len, sizeof len);
    }
    std::vector<std::uint8_t>& bytes() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
    std::size_t len_at_ = 0;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, p_, sizeof(T));
        p_ += sizeof(T);
        return v;
    }
    void get_reals(double* out, std::size_t count) {
        need(count * sizeof(double));
        std::memcpy(out, p_, count * sizeof(double));
        p_ += count * sizeof(double);
    }
    void get_bytes(std::uint8_t* out, std::size_t count) {
        need(count);
        std::memcpy(out, p_, count);
        p_ += count;
    }
    [[nodiscard]] std::size_t remaining() const { return std::size_t(end_ - p_); }
    [[nodiscard]] const std::uint8_t* pos() const { return p_; }
    void skip(std::size_t n) {
        need(n);
        p_ += n;
    }

private:
    void need(std::size_t n) const {
        if (std::size_t(end_ - p_) < n) throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint: section overruns file");
    }
    const std::uint8_t* p_;
    const std::uint8_t* end_;
};

inline void put_matrix(Writer& w, const Eigen::MatrixXd& m) {
    w.put(std::uint64_t(m.rows()));
    w.put(std::uint64_t(m.cols()));
    w.put_reals(m.data(), std::size_t(m.size()));
}
inline Eigen::MatrixXd get_matrix(Reader& r) {
    const auto rows = r.get<std::uint64_t>(), cols = r.get<std::uint64_t>();
    if (rows > (1u << 16) || cols > (1u << 16) || rows * cols * sizeof(double) > r.remaining())
        throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint: implausible matrix shape");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    r.get_reals(m.data(), std::size_t(m.size()));
    return m;
}
inline Eigen::VectorXd get_vector(Reader& r) {
    Eigen::MatrixXd m = get_matrix(r);
    if (m.cols() != 1) throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint: expected a vector");
    return m.col(0);
}

inline void put_config(Writer& w, const TrainConfig& c) {
    w.put(c.eta);
    w.put(c.beta1);
    w.put(c.beta2);
    w.put(c.adam_eps);
    w.put(c.lambda);
    w.put(std::int64_t(c.minibatch));
    w.put(std::int64_t(c.epochs));
    w.put(c.seed);
    w.put(std::int64_t(c.r));
    w.put(std::int64_t(c.intra_sweeps));
    w.put(c.init_scale);
    w.put(c.clamp_z);
    w.put(std::int64_t(c.method));
    w.put(std::int64_t(c.cd_k));
    w.put(std::int64_t(c.checkpoint_every));
}
inline TrainConfig get_config(Reader& r) {
    TrainConfig c;
    c.eta = r.get<double>();
    c.beta1 = r.get<double>();
    c.beta2 = r.get<double>();
    c.adam_eps = r.get<double>();
    c.lambda = r.get<double>();
    c.minibatch = int(r.get<std::int64_t>());
    c.epochs = int(r.get<std::int64_t>());
    c.seed = r.get<std::uint64_t>();
    c.r = int(r.get<std::int64_t>());
    c.intra_sweeps = int(r.get<std::int64_t>());
    c.init_scale = r.get<double>();
    c.clamp_z = r.get<double>();
    const auto method = r.get<std::int64_t>();
    if (method < 0 || method > 2) throw CheckpointError(CheckpointError::Kind::Corrupt, "checkpoint: bad method code");
    c.method = Method(method);
    c.cd_k = int(r.get<std::int64_t>());
    c.checkpoint_every = int(r.get<std::int64_t>());
    return c;
}

}  // namespace ckpt

inline std::vector<std::uint8_t> serialize_checkpoint(const TrainingState& s) {
    using namespace ckpt;
    Writer w;
    w.put_bytes(reinterpret_cast<const std::uint8_t*>(kCheckpointMagic), sizeof kCheckpointMagic);
    w.put(kCheckpointVersion);

    w.begin_section(kLayout);
    w.put(std::uint64_t(s.machine.layout.sizes.size()));
    for (auto sz : s.machine.layout.sizes) w.put(std::uint64_t(sz));
    for (bool f : s.machine.layout.intra_layer) w.put(std::uint8_t(f ? 1 : 0));
    w.end_section();

    w.begin_section(kConfig);
    put_config(w, s.config);
    w.end_section();

    w.begin_section(kWeights);
    put_matrix(w, s.machine.weights);
    w.end_section();

    w.begin_section(kBiases);
    put_matrix(w, s.machine.biases);
    w.end_section();

    w.begin_section(kAdam);
    w.put(s.adam.t);
    put_matrix(w, s.adam.m1_weights);
    put_matrix(w, s.adam.m1_biases);
    put_matrix(w, s.adam.m2_weights);
    put_matrix(w, s.adam.m2_biases);
    w.end_section();

    w.begin_section(kEpoch);
    w.put(std::int64_t(s.epoch));
    w.end_section();

    if (s.chains) {
        w.begin_section(kChains);
        w.put(std::uint64_t(s.chains->rows()));
        w.put(std::uint64_t(s.chains->cols()));
        w.put_bytes(s.chains->data(), std::size_t(s.chains->size()));
        w.end_section();
    }

    auto& bytes = w.bytes();
    const auto crc = std::uint32_t(crc32(0L, bytes.data(), uInt(bytes.size())));
    w.put(crc);
    return std::move(bytes);
}

inline TrainingState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    using namespace ckpt;
    using K = CheckpointError::Kind;
    if (bytes.size() < sizeof kCheckpointMagic + 8 ||
        std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
        throw CheckpointError(K::BadMagic, "not a flowbm checkpoint (bad magic)");
    Reader head(bytes.data() + sizeof kCheckpointMagic, 4);
    const auto version = head.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw CheckpointError(K::Version, "unsupported checkpoint version " + std::to_string(version) +
                                              " (this build reads version " + std::to_string(kCheckpointVersion) + ")");

    // Walk the sections first so that length errors and trailing garbage are
    // reported as corruption rather than as a checksum mismatch.
    Reader r(bytes.data() + sizeof kCheckpointMagic + 4, bytes.size() - sizeof kCheckpointMagic - 4);
    TrainingState s;
    LayerSpec layout;
    std::optional<Eigen::MatrixXd> weights;
    std::optional<Eigen::VectorXd> biases;
    bool have_layout = false, have_config = false, have_adam = false, have_epoch = false;
    while (r.remaining() > sizeof(std::uint32_t)) {
        if (r.remaining() < 12) throw CheckpointError(K::Corrupt, "checkpoint: truncated section header");
        const auto t = r.get<std::uint32_t>();
        const auto len = r.get<std::uint64_t>();
        if (len > r.remaining() - sizeof(std::uint32_t))
            throw CheckpointError(K::Corrupt, "checkpoint: section length exceeds file size");
        Reader sec(r.pos(), std::size_t(len));
        r.skip(std::size_t(len));
        if (t == kLayout) {
            const auto nl = sec.get<std::uint64_t>();
            if (nl == 0 || nl > 64) throw CheckpointError(K::Corrupt, "checkpoint: bad layer count");
            for (std::uint64_t k = 0; k < nl; ++k) layout.sizes.push_back(std::size_t(sec.get<std::uint64_t>()));
            for (std::uint64_t k = 0; k + 1 < nl; ++k) layout.intra_layer.push_back(sec.get<std::uint8_t>() != 0);
            have_layout = true;
        } else if (t == kConfig) {
            s.config = get_config(sec);
            have_config = true;
        } else if (t == kWeights) {
            weights = get_matrix(sec);
        } else if (t == kBiases) {
            biases = get_vector(sec);
        } else if (t == kAdam) {
            s.adam.t = sec.get<std::uint64_t>();
            s.adam.m1_weights = get_matrix(sec);
            s.adam.m1_biases = get_vector(sec);
            s.adam.m2_weights = get_matrix(sec);
            s.adam.m2_biases = get_vector(sec);
            have_adam = true;
        } else if (t == kEpoch) {
            s.epoch = int(sec.get<std::int64_t>());
            have_epoch = true;
        } else if (t == kChains) {
            const auto rows = sec.get<std::uint64_t>(), cols = sec.get<std::uint64_t>();
            if (rows * cols != sec.remaining()) throw CheckpointError(K::Corrupt, "checkpoint: bad chain section");
            BitMatrix c(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
            sec.get_bytes(c.data(), std::size_t(c.size()));
            s.chains = std::move(c);
        } else {
            throw CheckpointError(K::Corrupt, "checkpoint: unknown section tag");
        }
        if (sec.remaining() != 0) throw CheckpointError(K::Corrupt, "checkpoint: section has unread bytes");
    }
    if (r.remaining() != sizeof(std::uint32_t)) throw CheckpointError(K::Corrupt, "checkpoint: missing checksum");
    const auto stored = r.get<std::uint32_t>();
    const auto crc = std::uint32_t(crc32(0L, bytes.data(), uInt(bytes.size() - sizeof(std::uint32_t))));
    if (crc != stored) throw CheckpointError(K::Checksum, "checkpoint: checksum mismatch");
    if (!have_layout || !have_config || !weights || !biases || !have_adam || !have_epoch)
        throw CheckpointError(K::Corrupt, "checkpoint: missing required section");

    try {
        layout.check();
        s.machine = BoltzmannMachine(layout);
    } catch (const InputError& e) {
        throw CheckpointError(K::Corrupt, std::string("checkpoint: invalid layout: ") + e.what());
    }
    const auto n = Eigen::Index(s.machine.n());
    if (weights->rows() != n || weights->cols() != n || biases->size() != n || s.adam.m1_weights.rows() != n ||
        s.adam.m1_weights.cols() != n || s.adam.m2_weights.rows() != n || s.adam.m2_weights.cols() != n ||
        s.adam.m1_biases.size() != n || s.adam.m2_biases.size() != n)
        throw CheckpointError(K::Corrupt, "checkpoint: parameter shapes do not match the layout");
    s.machine.weights = std::move(*weights);
    s.machine.biases = std::move(*biases);
    return s;
}

/// Writes via a temporary sibling and rename, so readers never see a partial file.
inline void save_checkpoint(const std::string& path, const TrainingState& s) {
    const auto bytes = serialize_checkpoint(s);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot write " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        if (!out) throw CheckpointError(CheckpointError::Kind::Io, "write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline TrainingState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open checkpoint " + path);
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace flowbm
