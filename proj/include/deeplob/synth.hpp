#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deeplob/data.hpp"
#include "deeplob/error.hpp"
#include "deeplob/lob.hpp"
#include "deeplob/tensor.hpp"

namespace deeplob {

// Event-driven order-book simulator with a latent directional regime.
// In a +1 regime buy market orders, bid-side limit arrivals and ask-side
// cancels are favoured (and mirrored for -1), which builds queue imbalance
// and pushes the mid-price; in a 0 regime market orders dry up and the book
// only churns. signal_strength scales all of these biases: at 0 the regime
// has no effect at all and the mid-price is a symmetric random walk.
struct SynthConfig {
    std::uint64_t seed = 1;
    std::size_t n_days = 10;
    std::size_t events_per_day = 20000;
    double signal_strength = 0.8;      // [0, 1]
    double tick_size = 0.01;
    double initial_price = 100.0;
    double mean_volume = 20.0;         // mean shares per resting level
    double market_prob = 0.3;          // chance an event is a market order
    double cancel_prob = 0.3;          // chance an event is a cancel
    double improve_prob = 0.5;         // limit order improves a wide spread
    double market_size = 15.0;         // mean market order size
    double side_bias = 0.45;           // max shift of side probabilities, < 0.5
    double regime_duration = 1500.0;   // mean events per regime
    double reversion = 0.02;           // relative deviation where regimes lean back
    double mean_gap_ms = 200.0;        // mean time between events
    std::optional<int> fixed_regime;   // pin the regime (drift fixtures)

    void validate() const {
        auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (n_days < 1) throw ConfigError("synth: n_days must be >= 1");
        if (events_per_day < 2) throw ConfigError("synth: events_per_day must be >= 2");
        if (!in01(signal_strength)) throw ConfigError("synth: signal_strength must be in [0,1]");
        if (!(tick_size > 0.0)) throw ConfigError("synth: tick_size must be > 0");
        if (!(initial_price > 20.0 * tick_size)) throw ConfigError("synth: initial_price must exceed 20 ticks");
        if (!(mean_volume >= 1.0)) throw ConfigError("synth: mean_volume must be >= 1");
        if (!in01(market_prob) || !in01(cancel_prob) || market_prob + cancel_prob > 1.0) {
            throw ConfigError("synth: market_prob and cancel_prob must be in [0,1] with sum <= 1");
        }
        if (!in01(improve_prob)) throw ConfigError("synth: improve_prob must be in [0,1]");
        if (!(market_size > 0.0)) throw ConfigError("synth: market_size must be > 0");
        if (!(side_bias >= 0.0 && side_bias < 0.5)) throw ConfigError("synth: side_bias must be in [0,0.5)");
        if (!(regime_duration >= 1.0)) throw ConfigError("synth: regime_duration must be >= 1");
        if (!(reversion > 0.0)) throw ConfigError("synth: reversion must be > 0");
        if (!(mean_gap_ms > 0.0)) throw ConfigError("synth: mean_gap_ms must be > 0");
        if (fixed_regime && (*fixed_regime < -1 || *fixed_regime > 1)) throw ConfigError("synth: fixed_regime must be -1, 0 or 1");
    }
};

struct SynthOutput {
    std::vector<SeriesDay> days;
    std::vector<std::vector<std::int8_t>> regimes;  // latent regime per event
};

namespace detail {

// Book held in integer ticks so repeated updates never drift off the grid.
struct TickBook {
    std::array<std::int64_t, kLevels> ask{}, bid{};
    std::array<double, kLevels> ask_vol{}, bid_vol{};

    LobSnapshot snapshot(double tick, std::int64_t ts) const {
        LobSnapshot s;
        s.timestamp = ts;
        for (std::size_t i = 0; i < kLevels; ++i) {
            s.ask_prices[i] = static_cast<double>(ask[i]) * tick;
            s.bid_prices[i] = static_cast<double>(bid[i]) * tick;
            s.ask_volumes[i] = ask_vol[i];
            s.bid_volumes[i] = bid_vol[i];
        }
        return s;
    }

    void load(const LobSnapshot& s, double tick) {
        for (std::size_t i = 0; i < kLevels; ++i) {
            ask[i] = std::llround(s.ask_prices[i] / tick);
            bid[i] = std::llround(s.bid_prices[i] / tick);
            ask_vol[i] = s.ask_volumes[i];
            bid_vol[i] = s.bid_volumes[i];
        }
    }

    std::int64_t spread() const { return ask[0] - bid[0]; }
    double mid_ticks() const { return 0.5 * static_cast<double>(ask[0] + bid[0]); }
};

class SynthEngine {
public:
    explicit SynthEngine(const SynthConfig& c) : c_(c), rng_(c.seed) {
        const auto centre = std::llround(c.initial_price / c.tick_size);
        anchor_ = static_cast<double>(centre);
        for (std::size_t i = 0; i < kLevels; ++i) {
            book_.ask[i] = centre + 1 + static_cast<std::int64_t>(i);
            book_.bid[i] = centre - 1 - static_cast<std::int64_t>(i);
            book_.ask_vol[i] = draw_volume();
            book_.bid_vol[i] = draw_volume();
        }
        regime_ = c.fixed_regime.value_or(0);
    }

    SynthOutput run() {
        SynthOutput out;
        for (std::size_t d = 0; d < c_.n_days; ++d) {
            std::vector<LobSnapshot> snaps;
            std::vector<std::int8_t> regimes;
            snaps.reserve(c_.events_per_day);
            regimes.reserve(c_.events_per_day);
            double clock_ns = 8.5 * 3600.0 * 1e9;  // 08:30
            for (std::size_t e = 0; e < c_.events_per_day; ++e) {
                step();
                clock_ns += rng_.exponential(c_.mean_gap_ms * 1e6);
                snaps.push_back(book_.snapshot(c_.tick_size, static_cast<std::int64_t>(clock_ns)));
                regimes.push_back(static_cast<std::int8_t>(regime_));
            }
            char id[32];
            std::snprintf(id, sizeof id, "synth-d%02zu", d + 1);
            out.days.push_back(SeriesDay::from_snapshots(id, snaps));
            out.regimes.push_back(std::move(regimes));
        }
        return out;
    }

private:
    double draw_volume() { return std::ceil(rng_.exponential(c_.mean_volume)); }

    // Probability of the side favoured by the regime: 0.5 + bias*s*r.
    double lean() const { return 0.5 + c_.side_bias * c_.signal_strength * static_cast<double>(regime_); }

    // Activity multiplier for price-moving events: quiet regimes damp them.
    double quiet_factor() const { return regime_ == 0 ? 1.0 - c_.signal_strength : 1.0; }

    void update_regime() {
        if (c_.fixed_regime) return;
        if (rng_.uniform() >= 1.0 / c_.regime_duration) return;
        // Lean back towards the anchor price so days stay in a bounded range.
        const double dev = (book_.mid_ticks() - anchor_) / anchor_ / c_.reversion;
        const double lean_down = std::tanh(dev);
        const double p_up = (1.0 - lean_down) / 3.0;
        const double p_down = (1.0 + lean_down) / 3.0;
        const double u = rng_.uniform();
        regime_ = u < p_up ? 1 : (u < p_up + p_down ? -1 : 0);
    }

    void market_order() {
        const Side side = rng_.uniform() < lean() ? Side::Buy : Side::Sell;
        const auto& vols = side == Side::Buy ? book_.ask_vol : book_.bid_vol;
        double depth = 0.0;
        for (double v : vols) depth += v;
        const double qty = std::min(std::ceil(rng_.exponential(c_.market_size)), depth - 1.0);
        if (qty <= 0.0) return;
        const double tick = c_.tick_size;
        LevelRefill refill = [this, tick](Side, const PriceLevel& deepest, const PriceLevel& second) {
            const double gap = std::abs(deepest.price - second.price);
            const double step = std::max(tick, std::round(gap / tick) * tick);
            const double dir = deepest.price > second.price ? 1.0 : -1.0;
            return PriceLevel{deepest.price + dir * step, draw_volume()};
        };
        const auto ex = execute_market_order(book_.snapshot(tick, 0), side, qty, refill);
        book_.load(ex.book, tick);
    }

    void cancel() {
        const bool ask_side = rng_.uniform() < lean();
        auto& vols = ask_side ? book_.ask_vol : book_.bid_vol;
        const std::size_t level = static_cast<std::size_t>(rng_.below(kLevels));
        const double cut = std::ceil(rng_.uniform() * vols[level]);
        vols[level] = std::max(1.0, vols[level] - cut);
    }

    void limit_order() {
        // Orders inside a wide spread come from either side with equal odds,
        // and more often the wider it is, so the spread stays a few ticks.
        const double gap = static_cast<double>(book_.spread() - 1);
        if (gap > 0.0 && rng_.uniform() < std::min(1.0, c_.improve_prob * gap) * quiet_factor()) {
            const bool bid_side = rng_.uniform() < 0.5;
            auto& prices = bid_side ? book_.bid : book_.ask;
            auto& vols = bid_side ? book_.bid_vol : book_.ask_vol;
            for (std::size_t i = kLevels - 1; i > 0; --i) {
                prices[i] = prices[i - 1];
                vols[i] = vols[i - 1];
            }
            prices[0] += bid_side ? 1 : -1;
            vols[0] = draw_volume();
            return;
        }
        const bool bid_side = rng_.uniform() < lean();
        auto& vols = bid_side ? book_.bid_vol : book_.ask_vol;
        const std::size_t level = static_cast<std::size_t>(rng_.below(kLevels));
        vols[level] += std::ceil(rng_.exponential(0.5 * c_.mean_volume));
    }

    void step() {
        update_regime();
        const double pm = c_.market_prob * quiet_factor();
        const double u = rng_.uniform();
        if (u < pm) {
            market_order();
        } else if (u < pm + c_.cancel_prob) {
            cancel();
        } else {
            limit_order();
        }
    }

    SynthConfig c_;
    Rng rng_;
    TickBook book_;
    double anchor_ = 0.0;
    int regime_ = 0;
};

}  // namespace detail

inline SynthOutput synth_generate(const SynthConfig& config) {
    config.validate();
    return detail::SynthEngine(config).run();
}

}  // namespace deeplob
