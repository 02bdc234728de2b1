#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "deeplob/checkpoint.hpp"

namespace deeplob {
namespace {

DeepLobConfig small_config() {
    DeepLobConfig c;
    c.input_time = 12;
    c.conv_width = 4;
    c.inception_width = 4;
    c.lstm_hidden = 6;
    return c;
}

template <typename T>
Checkpoint<T> sample_checkpoint() {
    Checkpoint<T> ck;
    ck.config = small_config();
    auto m = DeepLob<T>::build(ck.config, 9);
    ck.params = m.params();
    ck.adam = AdamState<T>::for_params(ck.params);
    ck.adam.step = 17;
    Rng rng(3);
    for (auto& p : ck.adam.first_moment)
        for (auto& v : p.value.vec()) v = static_cast<T>(rng.normal());
    ck.rng_state = rng.state();
    ck.meta = {{"horizon", "10"}, {"setup", "2"}};
    return ck;
}

// Rewrites the trailing checksum after the body was edited.
std::string reseal(std::string bytes) {
    const std::size_t body = bytes.size() - 8;
    std::uint64_t sum = fnv1a64(bytes.data(), body);
    for (int i = 0; i < 8; ++i) {
        bytes[body + i] = static_cast<char>(sum & 0xff);
        sum >>= 8;
    }
    return bytes;
}

TEST(Checkpoint, RoundTripIsExact) {
    const auto ck = sample_checkpoint<float>();
    const std::string bytes = serialize_checkpoint(ck);
    const auto back = deserialize_checkpoint<float>(bytes);
    EXPECT_EQ(back, ck);
    EXPECT_EQ(serialize_checkpoint(back), bytes);

    const auto dir = std::filesystem::temp_directory_path() / "deeplob_ckpt_test";
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "m.dlck", ck);
    EXPECT_EQ(load_checkpoint<float>(dir / "m.dlck"), ck);
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, DoubleRoundTrip) {
    const auto ck = sample_checkpoint<double>();
    EXPECT_EQ(deserialize_checkpoint<double>(serialize_checkpoint(ck)), ck);
}

TEST(Checkpoint, TruncatedOrFlippedRejected) {
    const std::string bytes = serialize_checkpoint(sample_checkpoint<float>());
    for (std::size_t cut : {std::size_t{0}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
        EXPECT_THROW(deserialize_checkpoint<float>(bytes.substr(0, cut)), CheckpointError) << cut;
    }
    std::string flipped = bytes;
    flipped[bytes.size() / 3] ^= 0x01;
    EXPECT_THROW(deserialize_checkpoint<float>(flipped), CheckpointError);
    std::string magic = bytes;
    magic[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint<float>(magic), CheckpointError);
}

TEST(Checkpoint, UnknownVersionRejected) {
    std::string bytes = serialize_checkpoint(sample_checkpoint<float>());
    bytes[4] = 2;
    try {
        deserialize_checkpoint<float>(reseal(bytes));
        FAIL() << "expected CheckpointError";
    } catch (const CheckpointError& e) {
        EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
    }
}

TEST(Checkpoint, PrecisionMismatchNeedsFlag) {
    const auto ck = sample_checkpoint<float>();
    const std::string bytes = serialize_checkpoint(ck);
    EXPECT_THROW(deserialize_checkpoint<double>(bytes), CheckpointError);
    CheckpointLoadOptions opt;
    opt.convert_precision = true;
    const auto wide = deserialize_checkpoint<double>(bytes, opt);
    ASSERT_EQ(wide.params.size(), ck.params.size());
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
        for (std::size_t j = 0; j < ck.params[i].value.size(); ++j) {
            EXPECT_EQ(wide.params[i].value[j], static_cast<double>(ck.params[i].value[j]));
        }
    }
}

TEST(Checkpoint, ParamsMustFitConfig) {
    auto ck = sample_checkpoint<float>();
    ck.config.lstm_hidden = 7;
    EXPECT_THROW(deserialize_checkpoint<float>(serialize_checkpoint(ck)), CheckpointError);
}

TEST(Checkpoint, MissingFileIsIoError) {
    EXPECT_THROW(load_checkpoint<float>("/nonexistent/dir/m.dlck"), IoError);
}

}  // namespace
}  // namespace deeplob
