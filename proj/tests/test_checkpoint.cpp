#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "flowbm/checkpoint.hpp"
#include "support.hpp"

using namespace flowbm;
namespace fs = std::filesystem;

namespace {

TrainingState sample_state(bool chains) {
    TrainConfig cfg;
    cfg.eta = 0.0123;
    cfg.lambda = 3e-5;
    cfg.minibatch = 17;
    cfg.epochs = 9;
    cfg.seed = 0xDEADBEEFCAFEULL;
    cfg.r = 3;
    cfg.intra_sweeps = 2;
    cfg.method = chains ? Method::Pcd : Method::Vpf;
    cfg.cd_k = 4;
    cfg.checkpoint_every = 3;
    auto s = TrainingState::fresh(LayerSpec({6, 4, 3}, {true, false}), cfg);
    s.machine = fixture::random_machine(s.machine.layout, 5, 1.0);
    s.adam.t = 41;
    s.adam.m1_weights = s.machine.weights * 0.1;
    s.adam.m2_weights = s.machine.weights.cwiseAbs2();
    s.adam.m1_biases = s.machine.biases * -0.5;
    s.adam.m2_biases = s.machine.biases.cwiseAbs2();
    s.epoch = 7;
    if (chains) s.chains = fixture::random_bits(13, 5, 6);
    return s;
}

void expect_bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    ASSERT_EQ(a.rows(), b.rows());
    ASSERT_EQ(a.cols(), b.cols());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * std::size_t(a.size())), 0);
}

CheckpointError::Kind kind_of(const std::vector<std::uint8_t>& bytes) {
    try {
        deserialize_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "deserialization succeeded";
    return CheckpointError::Kind::Io;
}

std::vector<std::uint8_t> read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Checkpoint, RoundTripPreservesEveryField) {
    for (bool chains : {false, true}) {
        const auto s = sample_state(chains);
        const auto back = deserialize_checkpoint(serialize_checkpoint(s));
        EXPECT_EQ(back.machine.layout.sizes, s.machine.layout.sizes);
        EXPECT_EQ(back.machine.layout.intra_layer, s.machine.layout.intra_layer);
        expect_bit_equal(back.machine.weights, s.machine.weights);
        expect_bit_equal(back.machine.biases, s.machine.biases);
        expect_bit_equal(back.adam.m1_weights, s.adam.m1_weights);
        expect_bit_equal(back.adam.m2_weights, s.adam.m2_weights);
        expect_bit_equal(back.adam.m1_biases, s.adam.m1_biases);
        expect_bit_equal(back.adam.m2_biases, s.adam.m2_biases);
        EXPECT_EQ(back.adam.t, 41u);
        EXPECT_EQ(back.epoch, 7);
        EXPECT_EQ(back.config.eta, s.config.eta);
        EXPECT_EQ(back.config.lambda, s.config.lambda);
        EXPECT_EQ(back.config.minibatch, 17);
        EXPECT_EQ(back.config.seed, s.config.seed);
        EXPECT_EQ(back.config.r, 3);
        EXPECT_EQ(back.config.intra_sweeps, 2);
        EXPECT_EQ(back.config.method, s.config.method);
        EXPECT_EQ(back.config.cd_k, 4);
        EXPECT_EQ(back.config.checkpoint_every, 3);
        ASSERT_EQ(back.chains.has_value(), chains);
        if (chains) {
            EXPECT_EQ(*back.chains, *s.chains);
        }
        EXPECT_TRUE(validate(back.machine).empty());
    }
}

TEST(Checkpoint, SpecialDoublesSurviveBitExactly) {
    auto s = sample_state(false);
    s.adam.m2_biases(0) = std::numeric_limits<double>::denorm_min();
    s.adam.m2_biases(1) = -0.0;
    s.adam.m1_biases(2) = std::numeric_limits<double>::max();
    const auto back = deserialize_checkpoint(serialize_checkpoint(s));
    expect_bit_equal(back.adam.m2_biases, s.adam.m2_biases);
    expect_bit_equal(back.adam.m1_biases, s.adam.m1_biases);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    const auto dir = fs::temp_directory_path();
    const auto a = dir / "flowbm_ck_a.ckpt", b = dir / "flowbm_ck_b.ckpt";
    save_checkpoint(a.string(), sample_state(true));
    save_checkpoint(b.string(), load_checkpoint(a.string()));
    EXPECT_EQ(read_file(a), read_file(b));
    EXPECT_FALSE(fs::exists(a.string() + ".tmp"));
    fs::remove(a);
    fs::remove(b);
}

TEST(Checkpoint, VersionMismatchIsExplicit) {
    auto bytes = serialize_checkpoint(sample_state(false));
    bytes[8] = 2;
    EXPECT_EQ(kind_of(bytes), CheckpointError::Kind::Version);
    try {
        deserialize_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
    }
}

TEST(Checkpoint, TrailingGarbageIsCorrupt) {
    auto bytes = serialize_checkpoint(sample_state(false));
    for (std::size_t extra : {1u, 4u, 11u, 64u}) {
        auto b = bytes;
        b.insert(b.end(), extra, 0xAB);
        EXPECT_EQ(kind_of(b), CheckpointError::Kind::Corrupt) << extra;
    }
}

TEST(Checkpoint, CorruptLengthIsDetected) {
    auto bytes = serialize_checkpoint(sample_state(false));
    // First section header starts after magic and version; its u64 length follows the tag.
    auto b = bytes;
    b[16 + 5] = 0x7F;
    EXPECT_EQ(kind_of(b), CheckpointError::Kind::Corrupt);
    b = bytes;
    b[16] += 1;
    EXPECT_EQ(kind_of(b), CheckpointError::Kind::Corrupt);
}

TEST(Checkpoint, FlippedPayloadBitFailsChecksum) {
    const auto s = sample_state(false);
    const auto bytes = serialize_checkpoint(s);
    // Locate payload doubles by value so the flips land inside data, not headers.
    auto find_double = [&](double v) {
        std::uint8_t pat[8];
        std::memcpy(pat, &v, 8);
        const auto it = std::search(bytes.begin(), bytes.end(), pat, pat + 8);
        EXPECT_NE(it, bytes.end());
        return std::size_t(it - bytes.begin());
    };
    for (std::size_t at : {find_double(s.machine.weights(0, 7)), find_double(s.adam.m2_biases(3)) + 7,
                           find_double(s.config.eta), bytes.size() - 1}) {
        auto b = bytes;
        b[at] ^= 0x10;
        EXPECT_EQ(kind_of(b), CheckpointError::Kind::Checksum) << at;
    }
}

TEST(Checkpoint, BadMagicTruncationAndMissingFile) {
    auto bytes = serialize_checkpoint(sample_state(false));
    auto b = bytes;
    b[0] = 'X';
    EXPECT_EQ(kind_of(b), CheckpointError::Kind::BadMagic);
    EXPECT_EQ(kind_of({}), CheckpointError::Kind::BadMagic);
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + std::ptrdiff_t(bytes.size() / 2));
    EXPECT_EQ(kind_of(cut), CheckpointError::Kind::Corrupt);
    try {
        load_checkpoint("/nonexistent/run/final.ckpt");
        FAIL();
    } catch (const CheckpointError& e) {
        EXPECT_EQ(e.kind(), CheckpointError::Kind::Io);
    }
}

TEST(Checkpoint, ShapeMismatchWithValidChecksumIsCorrupt) {
    auto s = sample_state(false);
    s.machine.weights = Eigen::MatrixXd::Zero(5, 5);
    EXPECT_EQ(kind_of(serialize_checkpoint(s)), CheckpointError::Kind::Corrupt);
}
