#include <gtest/gtest.h>

#include <cmath>

#include "deeplob/trading.hpp"
#include "oracles.hpp"

namespace deeplob {
namespace {

std::vector<int> random_signals(Rng& rng, std::size_t n) {
    std::vector<int> s(n);
    for (auto& v : s) v = static_cast<int>(rng.below(3)) - 1;
    return s;
}

TEST(Signals, ArgmaxAndTies) {
    Tensor<double> p({4, 3}, std::vector<double>{0.7, 0.2, 0.1, 0.1, 0.3, 0.6, 0.2, 0.6, 0.2, 0.4, 0.4, 0.2});
    EXPECT_EQ(signals_from_probs(p), (std::vector<int>{-1, 1, 0, 0}));
    Tensor<double> bad({1, 3}, std::vector<double>{0.5, 0.5, 0.5});
    EXPECT_THROW(signals_from_probs(bad), ArgumentError);
    Tensor<double> neg({1, 3}, std::vector<double>{1.2, -0.1, -0.1});
    EXPECT_THROW(signals_from_probs(neg), ArgumentError);
    EXPECT_THROW(signals_from_probs(Tensor<double>({2, 2})), ShapeError);
}

TEST(Simulate, ConstantSeriesEarnsNothing) {
    Rng rng(1);
    const std::vector<double> mids(500, 42.5);
    const auto led = simulate("d", mids, random_signals(rng, 500));
    EXPECT_FALSE(led.trades.empty());
    EXPECT_EQ(led.profit(), 0.0);
    EXPECT_EQ(led.final_cash, led.initial_cash);
}

TEST(Simulate, StepSeriesLongEarnsStep) {
    std::vector<double> mids(100, 10.0);
    for (std::size_t t = 50; t < mids.size(); ++t) mids[t] = 10.75;
    std::vector<int> s(100, 0);
    s[3] = 1;
    SimOptions opt;
    opt.mu = 3.0;
    const auto led = simulate("d", mids, s, opt);
    ASSERT_EQ(led.trades.size(), 1u);
    EXPECT_EQ(led.trades[0].entry_index, 8u);
    EXPECT_EQ(led.trades[0].exit_index, 99u);
    EXPECT_DOUBLE_EQ(led.profit(), 3.0 * 0.75);
    s[3] = -1;
    EXPECT_DOUBLE_EQ(simulate("d", mids, s, opt).profit(), -3.0 * 0.75);
}

TEST(Simulate, MatchesReplayOracle) {
    Rng rng(7);
    for (int it = 0; it < 200; ++it) {
        const std::size_t n = 20 + rng.below(300);
        std::vector<double> mids(n);
        const std::size_t period = 2 + rng.below(20);
        for (std::size_t t = 0; t < n; ++t) mids[t] = 100.0 + 0.01 * static_cast<double>(t % period);
        const auto sig = random_signals(rng, n);
        SimOptions opt;
        opt.delay = rng.below(8);
        const auto led = simulate("d", mids, sig, opt);
        EXPECT_NEAR(led.profit(), oracle::replay_profit(mids, sig, static_cast<int>(opt.delay)), 1e-9);
    }
}

TEST(Simulate, NoPyramiding) {
    std::vector<double> mids(60);
    for (std::size_t t = 0; t < mids.size(); ++t) mids[t] = static_cast<double>(t);
    const std::vector<int> s(60, 1);
    const auto led = simulate("d", mids, s);
    ASSERT_EQ(led.trades.size(), 1u);
    EXPECT_EQ(led.trades[0].entry_index, 5u);
    EXPECT_DOUBLE_EQ(led.profit(), 59.0 - 5.0);
}

TEST(Simulate, OverrunSignalsDiscarded) {
    std::vector<double> mids(20, 1.0);
    std::vector<int> s(20, 0);
    s[15] = 1;  // would execute at 20
    EXPECT_TRUE(simulate("d", mids, s).trades.empty());
    s[14] = 1;  // executes at 19, the last event
    const auto led = simulate("d", mids, s);
    ASSERT_EQ(led.trades.size(), 1u);
    EXPECT_EQ(led.trades[0].entry_index, 19u);
    EXPECT_EQ(led.trades[0].exit_index, 19u);
}

TEST(Simulate, AuctionMaskBlocksExecution) {
    std::vector<double> mids(30);
    for (std::size_t t = 0; t < mids.size(); ++t) mids[t] = static_cast<double>(t);
    std::vector<int> s(30, 0);
    s[0] = 1;
    s[1] = 1;
    SimOptions opt;
    opt.auction.assign(30, false);
    opt.auction[5] = true;
    for (std::size_t t = 25; t < 30; ++t) opt.auction[t] = true;
    const auto led = simulate("d", mids, s, opt);
    ASSERT_EQ(led.trades.size(), 1u);
    EXPECT_EQ(led.trades[0].entry_index, 6u);
    EXPECT_EQ(led.trades[0].exit_index, 24u);  // forced close before the closing auction
}

TEST(Simulate, CloseOnlyNeverFlips) {
    std::vector<double> mids(40);
    for (std::size_t t = 0; t < mids.size(); ++t) mids[t] = static_cast<double>(t);
    std::vector<int> s(40, 0);
    s[0] = 1;
    s[10] = -1;
    SimOptions opt;
    opt.close_only = true;
    auto led = simulate("d", mids, s, opt);
    ASSERT_EQ(led.trades.size(), 1u);
    EXPECT_DOUBLE_EQ(led.profit(), 15.0 - 5.0);
    opt.close_only = false;
    led = simulate("d", mids, s, opt);
    ASSERT_EQ(led.trades.size(), 2u);
    EXPECT_EQ(led.trades[1].side, -1);
    EXPECT_DOUBLE_EQ(led.trades[1].profit, -(39.0 - 15.0));
}

TEST(Simulate, CashIdentity) {
    Rng rng(3);
    for (int it = 0; it < 50; ++it) {
        std::vector<double> mids(200);
        double x = 50.0;
        for (auto& m : mids) m = (x += rng.normal() * 0.1);
        SimOptions opt;
        opt.initial_cash = 1000.0;
        opt.mu = 2.0;
        const auto led = simulate("d", mids, random_signals(rng, 200), opt);
        EXPECT_NEAR(led.final_cash - led.initial_cash, led.profit(), 1e-9);
    }
}

TEST(Simulate, InvalidInputs) {
    const std::vector<double> mids(10, 1.0);
    EXPECT_THROW(simulate("d", mids, std::vector<int>(9, 0)), ShapeError);
    EXPECT_THROW(simulate("d", mids, std::vector<int>(10, 2)), ArgumentError);
    SimOptions opt;
    opt.mu = 0.0;
    EXPECT_THROW(simulate("d", mids, std::vector<int>(10, 0), opt), ArgumentError);
}

DayLedger ledger_with(const std::string& day, std::vector<double> profits) {
    DayLedger l;
    l.day = day;
    for (double p : profits) {
        Trade t;
        t.day = day;
        t.profit = p;
        l.trades.push_back(t);
    }
    return l;
}

TEST(DailyStats, FiveDayFixture) {
    // normalised profits 1, 2, 3, 4, 5; one day without trades
    const std::vector<DayLedger> days{ledger_with("a", {1.0}), ledger_with("b", {1.0, 3.0}), ledger_with("c", {3.0, 3.0, 3.0}),
                                      ledger_with("q", {}), ledger_with("d", {8.0, 0.0}), ledger_with("e", {5.0})};
    const auto s = daily_stats(days);
    EXPECT_EQ(s.observations, 5u);
    EXPECT_NEAR(s.mean, 3.0, 1e-12);
    EXPECT_NEAR(s.sd, std::sqrt(2.5), 1e-12);
    EXPECT_NEAR(s.t_stat, 3.0 / std::sqrt(0.5), 1e-12);
}

TEST(DailyStats, DegenerateCases) {
    auto s = daily_stats({ledger_with("a", {2.0}), ledger_with("b", {1.0, 3.0})});
    EXPECT_TRUE(std::isinf(s.t_stat));
    EXPECT_GT(s.t_stat, 0.0);
    s = daily_stats({ledger_with("a", {0.0}), ledger_with("b", {0.0})});
    EXPECT_EQ(s.t_stat, 0.0);
    EXPECT_THROW(daily_stats({ledger_with("a", {1.0}), ledger_with("b", {})}), ArgumentError);
}

TEST(Signals, AlignToEvents) {
    const auto s = align_signals(6, {2, 4}, {1, -1});
    EXPECT_EQ(s, (std::vector<int>{0, 0, 1, 0, -1, 0}));
    EXPECT_THROW(align_signals(3, {3}, {1}), ArgumentError);
}

}  // namespace
}  // namespace deeplob
