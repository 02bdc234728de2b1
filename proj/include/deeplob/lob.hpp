#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "deeplob/error.hpp"

namespace deeplob {

inline constexpr std::size_t kLevels = 10;
inline constexpr std::size_t kFeatures = 4 * kLevels;

using LevelArray = std::array<double, kLevels>;

// One timestamp of a 10-level book. Index 0 is the best level on each side.
struct LobSnapshot {
    std::int64_t timestamp = 0;
    LevelArray ask_prices{};
    LevelArray ask_volumes{};
    LevelArray bid_prices{};
    LevelArray bid_volumes{};

    friend bool operator==(const LobSnapshot&, const LobSnapshot&) = default;
};

// Model input ordering: {p_a(i), v_a(i), p_b(i), v_b(i)} for i = 1..10.
struct FeatureVector {
    std::array<double, kFeatures> values{};

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

enum class Side { Buy, Sell };

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ValidationError("invalid snapshot: " + what);
}

}  // namespace detail

inline void validate(const LobSnapshot& s) {
    for (std::size_t i = 0; i < kLevels; ++i) {
        detail::require(std::isfinite(s.ask_prices[i]) && s.ask_prices[i] > 0.0,
                        "ask price at level " + std::to_string(i + 1) + " must be positive");
        detail::require(std::isfinite(s.bid_prices[i]) && s.bid_prices[i] > 0.0,
                        "bid price at level " + std::to_string(i + 1) + " must be positive");
        detail::require(std::isfinite(s.ask_volumes[i]) && s.ask_volumes[i] > 0.0,
                        "ask volume at level " + std::to_string(i + 1) + " must be positive");
        detail::require(std::isfinite(s.bid_volumes[i]) && s.bid_volumes[i] > 0.0,
                        "bid volume at level " + std::to_string(i + 1) + " must be positive");
        if (i > 0) {
            detail::require(s.ask_prices[i] > s.ask_prices[i - 1], "ask prices must strictly increase");
            detail::require(s.bid_prices[i] < s.bid_prices[i - 1], "bid prices must strictly decrease");
        }
    }
    detail::require(s.bid_prices[0] < s.ask_prices[0], "best bid must be below best ask");
}

inline bool is_valid(const LobSnapshot& s) {
    try {
        validate(s);
        return true;
    } catch (const ValidationError&) {
        return false;
    }
}

inline double mid_price(const LobSnapshot& s) {
    validate(s);
    return (s.ask_prices[0] + s.bid_prices[0]) / 2.0;
}

// Best-bid share of the level-1 volume.
inline double imbalance(const LobSnapshot& s) {
    validate(s);
    return s.bid_volumes[0] / (s.ask_volumes[0] + s.bid_volumes[0]);
}

inline double micro_price(const LobSnapshot& s) {
    const double weight = imbalance(s);
    return weight * s.ask_prices[0] + (1.0 - weight) * s.bid_prices[0];
}

inline FeatureVector flatten(const LobSnapshot& s) {
    FeatureVector f;
    for (std::size_t i = 0; i < kLevels; ++i) {
        f.values[4 * i + 0] = s.ask_prices[i];
        f.values[4 * i + 1] = s.ask_volumes[i];
        f.values[4 * i + 2] = s.bid_prices[i];
        f.values[4 * i + 3] = s.bid_volumes[i];
    }
    return f;
}

inline LobSnapshot unflatten(const FeatureVector& f, std::int64_t timestamp = 0) {
    LobSnapshot s;
    s.timestamp = timestamp;
    for (std::size_t i = 0; i < kLevels; ++i) {
        s.ask_prices[i] = f.values[4 * i + 0];
        s.ask_volumes[i] = f.values[4 * i + 1];
        s.bid_prices[i] = f.values[4 * i + 2];
        s.bid_volumes[i] = f.values[4 * i + 3];
    }
    return s;
}

// Integer-tick ingestion: prices arrive as tick counts and are scaled once.
struct TickSnapshot {
    std::int64_t timestamp = 0;
    std::array<std::int64_t, kLevels> ask_ticks{};
    LevelArray ask_volumes{};
    std::array<std::int64_t, kLevels> bid_ticks{};
    LevelArray bid_volumes{};
};

inline LobSnapshot from_ticks(const TickSnapshot& t, double tick_size) {
    if (!(tick_size > 0.0)) throw ArgumentError("tick size must be positive");
    LobSnapshot s;
    s.timestamp = t.timestamp;
    for (std::size_t i = 0; i < kLevels; ++i) {
        s.ask_prices[i] = static_cast<double>(t.ask_ticks[i]) * tick_size;
        s.bid_prices[i] = static_cast<double>(t.bid_ticks[i]) * tick_size;
        s.ask_volumes[i] = t.ask_volumes[i];
        s.bid_volumes[i] = t.bid_volumes[i];
    }
    validate(s);
    return s;
}

// Lenient ingestion: repair a snapshot instead of rejecting it. Every repair
// is reported through `warnings`.
inline LobSnapshot clamp_snapshot(LobSnapshot s, double tick_size, double min_volume,
                                  std::vector<std::string>& warnings) {
    auto note = [&](const std::string& msg) { warnings.push_back(msg); };
    for (std::size_t i = 0; i < kLevels; ++i) {
        if (!(s.ask_volumes[i] > 0.0)) {
            note("ask volume clamped at level " + std::to_string(i + 1));
            s.ask_volumes[i] = min_volume;
        }
        if (!(s.bid_volumes[i] > 0.0)) {
            note("bid volume clamped at level " + std::to_string(i + 1));
            s.bid_volumes[i] = min_volume;
        }
    }
    if (!(s.ask_prices[0] > 0.0)) throw ValidationError("invalid snapshot: best ask not positive, cannot clamp");
    if (!(s.bid_prices[0] < s.ask_prices[0])) {
        note("crossed book: best bid moved one tick below best ask");
        s.bid_prices[0] = s.ask_prices[0] - tick_size;
    }
    for (std::size_t i = 1; i < kLevels; ++i) {
        if (!(s.ask_prices[i] > s.ask_prices[i - 1])) {
            note("ask level " + std::to_string(i + 1) + " re-spaced");
            s.ask_prices[i] = s.ask_prices[i - 1] + tick_size;
        }
        if (!(s.bid_prices[i] < s.bid_prices[i - 1])) {
            note("bid level " + std::to_string(i + 1) + " re-spaced");
            s.bid_prices[i] = s.bid_prices[i - 1] - tick_size;
        }
    }
    validate(s);
    return s;
}

struct PriceLevel {
    double price = 0.0;
    double volume = 0.0;
};

// Supplies a replacement for the deepest level once a level has been consumed.
// Receives the side being refilled and the current deepest two levels.
using LevelRefill = std::function<PriceLevel(Side book_side, const PriceLevel& deepest, const PriceLevel& second)>;

// Default refill continues the existing level spacing and repeats the deepest volume.
inline PriceLevel extend_spacing(Side, const PriceLevel& deepest, const PriceLevel& second) {
    return {deepest.price + (deepest.price - second.price), deepest.volume};
}

struct Execution {
    LobSnapshot book;
    double filled = 0.0;
    double notional = 0.0;
    std::size_t levels_consumed = 0;
};

// Walks the opposite side in price priority. A buy consumes asks, a sell
// consumes bids. Fully consumed levels are removed and the book is re-indexed
// back to ten levels through `refill`.
inline Execution execute_market_order(const LobSnapshot& s, Side side, double qty,
                                      const LevelRefill& refill = extend_spacing) {
    validate(s);
    if (!(qty >= 0.0) || !std::isfinite(qty)) throw ArgumentError("market order quantity must be non-negative");

    const bool buy = side == Side::Buy;
    const LevelArray& prices = buy ? s.ask_prices : s.bid_prices;
    const LevelArray& volumes = buy ? s.ask_volumes : s.bid_volumes;

    double depth = 0.0;
    for (double v : volumes) depth += v;
    if (qty > depth) {
        throw InsufficientLiquidity("market order for " + std::to_string(qty) + " exceeds visible depth " +
                                    std::to_string(depth));
    }

    Execution ex;
    ex.book = s;
    if (qty == 0.0) return ex;

    std::vector<PriceLevel> levels;
    levels.reserve(kLevels);
    for (std::size_t i = 0; i < kLevels; ++i) levels.push_back({prices[i], volumes[i]});
    const std::vector<PriceLevel> original = levels;

    double remaining = qty;
    std::size_t front = 0;
    while (remaining > 0.0 && front < levels.size()) {
        PriceLevel& lvl = levels[front];
        const double take = std::min(remaining, lvl.volume);
        ex.notional += take * lvl.price;
        ex.filled += take;
        remaining -= take;
        lvl.volume -= take;
        if (lvl.volume <= 0.0) {
            ++front;
            ++ex.levels_consumed;
        }
    }
    std::vector<PriceLevel> kept(levels.begin() + static_cast<std::ptrdiff_t>(front), levels.end());
    const Side book_side = buy ? Side::Sell : Side::Buy;
    while (kept.size() < kLevels) {
        PriceLevel deepest;
        PriceLevel second;
        if (kept.size() >= 2) {
            deepest = kept.back();
            second = kept[kept.size() - 2];
        } else if (kept.size() == 1) {
            deepest = kept.back();
            second = {deepest.price - (original[1].price - original[0].price), deepest.volume};
        } else {
            deepest = original.back();
            second = original[kLevels - 2];
        }
        kept.push_back(refill(book_side, deepest, second));
    }

    LevelArray& out_p = buy ? ex.book.ask_prices : ex.book.bid_prices;
    LevelArray& out_v = buy ? ex.book.ask_volumes : ex.book.bid_volumes;
    for (std::size_t i = 0; i < kLevels; ++i) {
        out_p[i] = kept[i].price;
        out_v[i] = kept[i].volume;
    }
    validate(ex.book);
    return ex;
}

inline LobSnapshot apply_market_order(const LobSnapshot& s, Side side, double qty,
                                      const LevelRefill& refill = extend_spacing) {
    return execute_market_order(s, side, qty, refill).book;
}

}  // namespace deeplob
