#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "deeplob/error.hpp"
#include "deeplob/tensor.hpp"

namespace deeplob {

// Column order of a probability row: down, stationary, up.
template <typename T>
std::vector<int> signals_from_probs(const Tensor<T>& probs, double sum_tolerance = 1e-4) {
    if (probs.rank() != 2 || probs.dim(1) != 3) throw ShapeError("signals: probabilities must be [N,3], got " + shape_str(probs.shape()));
    std::vector<int> out(probs.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T* p = probs.data() + i * 3;
        double sum = 0.0;
        for (int c = 0; c < 3; ++c) {
            if (!std::isfinite(static_cast<double>(p[c])) || p[c] < T(0)) {
                throw ArgumentError("signals: row " + std::to_string(i) + " has an invalid probability");
            }
            sum += static_cast<double>(p[c]);
        }
        if (std::abs(sum - 1.0) > sum_tolerance) throw ArgumentError("signals: row " + std::to_string(i) + " does not sum to 1");
        int best = 0;
        bool tie = false;
        for (int c = 1; c < 3; ++c) {
            if (p[c] > p[best]) {
                best = c;
                tie = false;
            } else if (p[c] == p[best]) {
                tie = true;
            }
        }
        out[i] = tie ? 0 : best - 1;
    }
    return out;
}

// Spreads per-window signals onto the event axis; events without a window
// get 0 (wait).
inline std::vector<int> align_signals(std::size_t n_events, const std::vector<std::size_t>& anchors,
                                      const std::vector<int>& window_signals) {
    if (anchors.size() != window_signals.size()) throw ShapeError("align_signals: anchors and signals differ in length");
    std::vector<int> s(n_events, 0);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (anchors[i] >= n_events) throw ArgumentError("align_signals: anchor beyond the day");
        s[anchors[i]] = window_signals[i];
    }
    return s;
}

struct Trade {
    std::string day;
    std::size_t entry_index = 0;
    std::size_t exit_index = 0;
    int side = 0;  // +1 long, -1 short
    double entry_mid = 0.0;
    double exit_mid = 0.0;
    double profit = 0.0;
};

struct DayLedger {
    std::string day;
    std::vector<Trade> trades;
    double initial_cash = 0.0;
    double final_cash = 0.0;

    double profit() const {
        double p = 0.0;
        for (const auto& t : trades) p += t.profit;
        return p;
    }
};

struct SimOptions {
    double mu = 1.0;            // shares per position
    std::size_t delay = 5;      // execution lag in events
    bool close_only = false;    // opposite signal only closes, never flips
    std::vector<bool> auction;  // optional per-event mask, true = no executions
    double initial_cash = 0.0;
};

inline DayLedger simulate(const std::string& day, const std::vector<double>& mids, const std::vector<int>& signals,
                          const SimOptions& opt = {}) {
    if (signals.size() != mids.size()) {
        throw ShapeError("simulate: " + std::to_string(signals.size()) + " signals for " + std::to_string(mids.size()) + " mids");
    }
    if (!opt.auction.empty() && opt.auction.size() != mids.size()) throw ShapeError("simulate: auction mask length mismatch");
    if (!(opt.mu > 0.0)) throw ArgumentError("simulate: mu must be > 0");
    auto masked = [&](std::size_t i) { return !opt.auction.empty() && opt.auction[i]; };

    DayLedger led;
    led.day = day;
    led.initial_cash = opt.initial_cash;
    double cash = opt.initial_cash;
    const std::size_t n = mids.size();
    int pos = 0;
    Trade open;

    auto enter = [&](int side, std::size_t e) {
        pos = side;
        open = Trade{day, e, e, side, mids[e], mids[e], 0.0};
        cash -= side * opt.mu * mids[e];
    };
    auto leave = [&](std::size_t e) {
        open.exit_index = e;
        open.exit_mid = mids[e];
        open.profit = open.side * opt.mu * (open.exit_mid - open.entry_mid);
        cash += open.side * opt.mu * mids[e];
        led.trades.push_back(open);
        pos = 0;
    };

    for (std::size_t t = 0; t < n; ++t) {
        const int s = signals[t];
        if (s < -1 || s > 1) throw ArgumentError("simulate: signal must be -1, 0 or +1");
        if (s == 0 || s == pos) continue;
        const std::size_t e = t + opt.delay;
        if (e >= n || masked(e)) continue;  // overrun or auction: discarded
        if (pos == 0) {
            enter(s, e);
        } else {
            leave(e);
            if (!opt.close_only) enter(s, e);
        }
    }
    if (pos != 0) {
        std::size_t last = n - 1;
        while (masked(last) && last > open.entry_index) --last;
        leave(last);
    }
    led.final_cash = cash;
    return led;
}

struct DayStats {
    std::string day;
    double profit = 0.0;
    std::size_t trades = 0;
    double normalised = 0.0;  // profit / trades, 0 without trades
};

struct DailyStats {
    std::vector<DayStats> days;
    std::size_t observations = 0;
    double mean = 0.0;
    double sd = 0.0;
    double t_stat = 0.0;
};

// One-sample t statistic of normalised daily profit; days without trades are
// not observations. sd = 0 gives +-inf (0 when the mean is 0 too).
inline DailyStats daily_stats(const std::vector<DayLedger>& ledgers) {
    DailyStats s;
    std::vector<double> obs;
    for (const auto& l : ledgers) {
        DayStats d;
        d.day = l.day;
        d.profit = l.profit();
        d.trades = l.trades.size();
        if (d.trades) {
            d.normalised = d.profit / static_cast<double>(d.trades);
            obs.push_back(d.normalised);
        }
        s.days.push_back(d);
    }
    s.observations = obs.size();
    if (obs.size() < 2) throw ArgumentError("daily_stats: need at least 2 trading days, got " + std::to_string(obs.size()));
    const double n = static_cast<double>(obs.size());
    for (double v : obs) s.mean += v;
    s.mean /= n;
    double ss = 0.0;
    for (double v : obs) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (n - 1.0));
    if (s.sd == 0.0) {
        s.t_stat = s.mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), s.mean);
    } else {
        s.t_stat = s.mean / (s.sd / std::sqrt(n));
    }
    return s;
}

inline std::string ledger_csv(const std::vector<DayLedger>& ledgers) {
    std::string out = "day,entry_index,exit_index,side,entry_mid,exit_mid,profit\n";
    char line[256];
    for (const auto& l : ledgers) {
        for (const auto& t : l.trades) {
            std::snprintf(line, sizeof line, "%s,%zu,%zu,%d,%.10g,%.10g,%.10g\n", t.day.c_str(), t.entry_index, t.exit_index,
                          t.side, t.entry_mid, t.exit_mid, t.profit);
            out += line;
        }
    }
    return out;
}

inline std::string daily_csv(const DailyStats& s) {
    std::string out = "day,profit,trades,normalised_profit\n";
    char line[256];
    for (const auto& d : s.days) {
        std::snprintf(line, sizeof line, "%s,%.10g,%zu,%.10g\n", d.day.c_str(), d.profit, d.trades, d.normalised);
        out += line;
    }
    std::snprintf(line, sizeof line, "# observations=%zu mean=%.10g sd=%.10g t=%.10g\n", s.observations, s.mean, s.sd, s.t_stat);
    out += line;
    return out;
}

// Running total after each trade, in ledger order.
inline std::string cumulative_csv(const std::vector<DayLedger>& ledgers) {
    std::string out = "day,exit_index,cumulative_profit\n";
    char line[160];
    double total = 0.0;
    for (const auto& l : ledgers) {
        for (const auto& t : l.trades) {
            total += t.profit;
            std::snprintf(line, sizeof line, "%s,%zu,%.10g\n", t.day.c_str(), t.exit_index, total);
            out += line;
        }
    }
    return out;
}

}  // namespace deeplob
