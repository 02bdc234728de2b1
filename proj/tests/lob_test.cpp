#include <gtest/gtest.h>

#include "deeplob/lob.hpp"
#include "deeplob/tensor.hpp"

namespace deeplob {
namespace {

LobSnapshot ladder(double best_bid, double best_ask, double tick, double bid_vol1, double ask_vol1) {
    LobSnapshot s;
    for (std::size_t i = 0; i < kLevels; ++i) {
        s.ask_prices[i] = best_ask + tick * static_cast<double>(i);
        s.bid_prices[i] = best_bid - tick * static_cast<double>(i);
        s.ask_volumes[i] = 5.0;
        s.bid_volumes[i] = 5.0;
    }
    s.bid_volumes[0] = bid_vol1;
    s.ask_volumes[0] = ask_vol1;
    return s;
}

// The book from the order-book illustration: 3 shares at 20.6, 2 at 20.7, more at 20.8.
LobSnapshot figure_book() {
    LobSnapshot s = ladder(20.4, 20.6, 0.1, 4.0, 3.0);
    s.ask_volumes[1] = 2.0;
    s.ask_volumes[2] = 4.0;
    return s;
}

LobSnapshot random_book(Rng& rng) {
    LobSnapshot s;
    const double mid = rng.uniform(10.0, 200.0);
    const double half_spread = rng.uniform(0.005, 0.05);
    double a = mid + half_spread, b = mid - half_spread;
    for (std::size_t i = 0; i < kLevels; ++i) {
        s.ask_prices[i] = a;
        s.bid_prices[i] = b;
        a += rng.uniform(0.01, 0.05);
        b -= rng.uniform(0.01, 0.05);
        s.ask_volumes[i] = std::floor(rng.uniform(1.0, 50.0));
        s.bid_volumes[i] = std::floor(rng.uniform(1.0, 50.0));
    }
    return s;
}

TEST(LobCore, MidPrice) {
    EXPECT_DOUBLE_EQ(mid_price(ladder(20.4, 20.6, 0.1, 1, 1)), 20.5);
}

TEST(LobCore, ZeroSpreadIsRejected) {
    EXPECT_THROW(mid_price(ladder(20.5, 20.5, 0.1, 1, 1)), ValidationError);
}

TEST(LobCore, ValidationRejectsBadLevels) {
    LobSnapshot s = ladder(20.4, 20.6, 0.1, 1, 1);
    s.ask_volumes[3] = 0.0;
    EXPECT_THROW(validate(s), ValidationError);
    s = ladder(20.4, 20.6, 0.1, 1, 1);
    s.bid_prices[5] = s.bid_prices[4];
    EXPECT_THROW(validate(s), ValidationError);
    s = ladder(20.4, 20.6, 0.1, 1, 1);
    s.ask_prices[0] = -1.0;
    EXPECT_THROW(validate(s), ValidationError);
}

TEST(LobCore, FigureMarketOrderMovesBestAsk) {
    const LobSnapshot before = figure_book();
    const LobSnapshot after = apply_market_order(before, Side::Buy, 5.0);
    EXPECT_DOUBLE_EQ(after.ask_prices[0], 20.8);
    EXPECT_DOUBLE_EQ(after.ask_volumes[0], 4.0);
    EXPECT_NEAR(mid_price(after) - mid_price(before), 0.1, 1e-12);
    EXPECT_EQ(after.bid_prices, before.bid_prices);
    EXPECT_EQ(after.bid_volumes, before.bid_volumes);
}

TEST(LobCore, ZeroQuantityIsIdentity) {
    const LobSnapshot s = figure_book();
    EXPECT_EQ(apply_market_order(s, Side::Buy, 0.0), s);
    EXPECT_EQ(apply_market_order(s, Side::Sell, 0.0), s);
}

TEST(LobCore, PartialSellReducesFrontBid) {
    const LobSnapshot s = figure_book();  // bid L1 volume 4
    const LobSnapshot after = apply_market_order(s, Side::Sell, 1.0);
    EXPECT_DOUBLE_EQ(after.bid_volumes[0], 3.0);
    EXPECT_EQ(after.bid_prices, s.bid_prices);
    EXPECT_EQ(after.ask_prices, s.ask_prices);
    EXPECT_EQ(after.ask_volumes, s.ask_volumes);
}

TEST(LobCore, InsufficientLiquidity) {
    const LobSnapshot s = figure_book();
    double depth = 0;
    for (double v : s.ask_volumes) depth += v;
    EXPECT_THROW(apply_market_order(s, Side::Buy, depth + 1.0), InsufficientLiquidity);
    EXPECT_NO_THROW(apply_market_order(s, Side::Buy, depth));
}

TEST(LobCore, ImbalanceExamples) {
    EXPECT_DOUBLE_EQ(imbalance(ladder(20.4, 20.6, 0.1, 1, 1)), 0.5);
    EXPECT_DOUBLE_EQ(imbalance(ladder(20.4, 20.6, 0.1, 3, 1)), 0.75);
    EXPECT_NEAR(imbalance(ladder(20.4, 20.6, 0.1, 1e-12, 1)), 0.0, 1e-11);
}

TEST(LobCore, MicroPriceExamples) {
    EXPECT_DOUBLE_EQ(micro_price(ladder(20.4, 20.6, 0.1, 1, 1)), 20.5);
    EXPECT_NEAR(micro_price(ladder(20.4, 20.6, 0.1, 3, 1)), 20.55, 1e-12);
    EXPECT_NEAR(micro_price(ladder(20.4, 20.6, 0.1, 1e9, 1)), 20.6, 1e-8);
}

TEST(LobCore, TickIngestion) {
    TickSnapshot t;
    for (std::size_t i = 0; i < kLevels; ++i) {
        t.ask_ticks[i] = 2060 + static_cast<std::int64_t>(i);
        t.bid_ticks[i] = 2040 - static_cast<std::int64_t>(i);
        t.ask_volumes[i] = t.bid_volumes[i] = 1.0;
    }
    EXPECT_NEAR(mid_price(from_ticks(t, 0.01)), 20.5, 1e-12);
    EXPECT_THROW(from_ticks(t, 0.0), ArgumentError);
}

TEST(LobCore, LenientClampRepairsAndWarns) {
    LobSnapshot s = ladder(20.4, 20.6, 0.1, 1, 1);
    s.bid_prices[0] = 20.7;  // crossed
    s.ask_volumes[2] = 0.0;
    std::vector<std::string> warnings;
    const LobSnapshot fixed = clamp_snapshot(s, 0.01, 1.0, warnings);
    EXPECT_TRUE(is_valid(fixed));
    EXPECT_GE(warnings.size(), 2u);
    EXPECT_THROW(validate(s), ValidationError);
}

// Randomised invariants over many books.
TEST(LobCore, Properties) {
    Rng rng(11);
    for (int trial = 0; trial < 2000; ++trial) {
        const LobSnapshot s = random_book(rng);
        ASSERT_TRUE(is_valid(s));
        const double mid = mid_price(s);
        EXPECT_GT(mid, s.bid_prices[0]);
        EXPECT_LT(mid, s.ask_prices[0]);
        const double micro = micro_price(s);
        EXPECT_GE(micro, s.bid_prices[0]);
        EXPECT_LE(micro, s.ask_prices[0]);
        if (s.ask_volumes[0] == s.bid_volumes[0]) {
            EXPECT_NEAR(micro, mid, 1e-12);
        } else {
            EXPECT_NE(micro, mid);
        }
        EXPECT_EQ(unflatten(flatten(s)), s);

        const Side side = rng.uniform() < 0.5 ? Side::Buy : Side::Sell;
        const LevelArray& vols = side == Side::Buy ? s.ask_volumes : s.bid_volumes;
        double depth = 0;
        for (double v : vols) depth += v;
        const double qty = std::floor(rng.uniform(0.0, depth));
        const Execution ex = execute_market_order(s, side, qty);
        // Shares conserved across the original levels (integer volumes keep this exact).
        const LevelArray& before_p = side == Side::Buy ? s.ask_prices : s.bid_prices;
        const LevelArray& after_p = side == Side::Buy ? ex.book.ask_prices : ex.book.bid_prices;
        const LevelArray& after_v = side == Side::Buy ? ex.book.ask_volumes : ex.book.bid_volumes;
        double remaining = 0.0;
        for (std::size_t i = 0; i < kLevels; ++i) {
            for (std::size_t j = 0; j < kLevels; ++j) {
                if (after_p[i] == before_p[j]) remaining += after_v[i];
            }
        }
        EXPECT_EQ(ex.filled, qty);
        EXPECT_EQ(ex.filled + remaining, depth);
        EXPECT_TRUE(is_valid(ex.book));
    }
}

}  // namespace
}  // namespace deeplob
