#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "deeplob/train.hpp"

namespace deeplob {
namespace {

constexpr std::size_t kT = 12;

DeepLobConfig small_config() {
    DeepLobConfig c;
    c.input_time = kT;
    c.conv_width = 8;
    c.inception_width = 8;
    c.lstm_hidden = 16;
    return c;
}

// The newest row of every window carries its class in the first level.
struct Toy {
    std::shared_ptr<SeriesDay> day = std::make_shared<SeriesDay>();
    WindowSet ws;
    SampleSet set{10};
};

std::unique_ptr<Toy> toy(std::size_t n, std::uint64_t seed) {
    auto t = std::make_unique<Toy>();
    SeriesDay& d = *t->day;
    d.day_id = "toy";
    Rng rng(seed);
    d.features.resize(n * kFeatures);
    for (auto& v : d.features) v = 0.3 * rng.normal();
    LabelSeq seq(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(rng.below(3));
        seq[i] = class_label(c);
        for (std::size_t f = 0; f < 4; ++f) d.features[i * kFeatures + f] += 2.0 * (c - 1);
    }
    d.mids.assign(n, 1.0);
    d.labels[10] = seq;
    t->ws = WindowSet(t->day, d.labels, kT);
    t->set.add(t->ws);
    return t;
}

TrainConfig fast_config() {
    TrainConfig c;
    c.max_epochs = 20;
    c.patience = 20;
    c.batch_size = 32;
    c.adam.learning_rate = 1e-3;
    c.adam.epsilon = 1e-8;
    c.threads = 1;
    return c;
}

TEST(Train, SeparableToyReachesHighAccuracy) {
    const auto tr = toy(1500, 1), va = toy(400, 2);
    const auto res = train(DeepLob<float>::build(small_config(), 1), tr->set, va->set, fast_config());
    EXPECT_GE(res.best_val_acc, 0.99);
    EXPECT_LE(res.history.size(), 20u);
    EXPECT_GT(res.history.front().train_loss, res.history.back().train_loss);
    EXPECT_EQ(accuracy(res.model, va->set), res.best_val_acc);
}

TEST(Train, TargetAccuracyStopsEarly) {
    const auto tr = toy(1500, 1), va = toy(400, 2);
    auto cfg = fast_config();
    cfg.target_val_acc = 0.9;
    const auto res = train(DeepLob<float>::build(small_config(), 1), tr->set, va->set, cfg);
    EXPECT_GE(res.history.back().val_acc, 0.9);
    EXPECT_EQ(res.stop_reason, "target validation accuracy reached");
    EXPECT_LT(res.history.size(), 20u);
}

TEST(Train, PatienceStopsWhenValidationStalls) {
    const auto tr = toy(200, 1), va = toy(100, 2);
    auto cfg = fast_config();
    cfg.adam.learning_rate = 1e-30;
    cfg.patience = 2;
    const auto res = train(DeepLob<float>::build(small_config(), 1), tr->set, va->set, cfg);
    EXPECT_EQ(res.history.size(), 3u);
    EXPECT_EQ(res.best_epoch, 1u);
    EXPECT_NE(res.stop_reason.find("no validation improvement"), std::string::npos);
}

TEST(Train, BitwiseIdenticalAcrossThreadCounts) {
    const auto tr = toy(300, 3), va = toy(100, 4);
    auto cfg = fast_config();
    cfg.max_epochs = 3;
    cfg.batch_size = 20;  // one partial shard per batch
    const auto a = train(DeepLob<float>::build(small_config(), 5), tr->set, va->set, cfg);
    cfg.threads = 3;
    const auto b = train(DeepLob<float>::build(small_config(), 5), tr->set, va->set, cfg);
    EXPECT_EQ(a.history, b.history);
    EXPECT_EQ(a.model.params(), b.model.params());
    EXPECT_EQ(a.adam, b.adam);
    EXPECT_EQ(a.rng_state, b.rng_state);
}

TEST(Train, WindowSubsamplingPerEpoch) {
    const auto tr = toy(600, 3), va = toy(100, 4);
    auto cfg = fast_config();
    cfg.max_epochs = 2;
    cfg.max_train_windows = 64;
    cfg.max_val_windows = 50;
    const auto res = train(DeepLob<float>::build(small_config(), 5), tr->set, va->set, cfg);
    ASSERT_EQ(res.history.size(), 2u);
    // accuracies are multiples of 1/64 and 1/50
    for (const auto& r : res.history) {
        EXPECT_NEAR(r.train_acc * 64.0, std::round(r.train_acc * 64.0), 1e-9);
        EXPECT_NEAR(r.val_acc * 50.0, std::round(r.val_acc * 50.0), 1e-9);
    }
}

TEST(Train, NonFiniteInputDiverges) {
    auto tr = toy(200, 1);
    const auto va = toy(100, 2);
    tr->day->features[50 * kFeatures + 7] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(train(DeepLob<float>::build(small_config(), 1), tr->set, va->set, fast_config()), DivergenceError);
}

TEST(Train, InvalidConfigRejected) {
    const auto tr = toy(200, 1);
    auto cfg = fast_config();
    cfg.batch_size = 0;
    EXPECT_THROW(train(DeepLob<float>::build(small_config(), 1), tr->set, tr->set, cfg), ConfigError);
    EXPECT_THROW(train(DeepLob<float>::build(small_config(), 1), tr->set, SampleSet(10), fast_config()), ArgumentError);
}

TEST(Train, HistoryCsv) {
    const std::vector<EpochRecord> h{{1, 1.0, 0.5, 0.25}, {2, 0.5, 0.75, 0.5}};
    EXPECT_EQ(history_csv(h), "epoch,train_loss,train_acc,val_acc\n1,1,0.5,0.25\n2,0.5,0.75,0.5\n");
}

}  // namespace
}  // namespace deeplob
