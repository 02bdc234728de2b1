#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deeplob/data.hpp"
#include "deeplob/error.hpp"

namespace deeplob {

// Horizons of the five label rows at the bottom of every FI-2010 matrix.
inline constexpr std::array<int, 5> kFi2010Horizons{10, 20, 30, 50, 100};
inline constexpr std::size_t kFi2010Days = 10;

// Benchmark encoding 1 = up, 2 = stationary, 3 = down.
inline Label fi2010_label(double code, const std::string& where) {
    if (code == 1.0) return 1;
    if (code == 2.0) return 0;
    if (code == 3.0) return -1;
    throw ParseError(where + ": label code must be 1, 2 or 3");
}

namespace detail {

inline std::vector<double> parse_row(const std::string& line, const std::string& where) {
    std::vector<double> row;
    const char* p = line.data();
    const char* end = p + line.size();
    while (true) {
        while (p < end && (*p == ' ' || *p == '\t' || *p == '\r' || *p == ',')) ++p;
        if (p >= end) break;
        double v = 0.0;
        // from_chars rejects a leading '+'
        const char* start = (*p == '+') ? p + 1 : p;
        auto [next, ec] = std::from_chars(start, end, v);
        if (ec != std::errc() || (next < end && *next != ' ' && *next != '\t' && *next != '\r' && *next != ',')) {
            const char* tok_end = p;
            while (tok_end < end && *tok_end != ' ' && *tok_end != '\t') ++tok_end;
            throw ParseError(where + ", column " + std::to_string(row.size() + 1) + ": non-numeric cell '" +
                             std::string(p, tok_end) + "'");
        }
        row.push_back(v);
        p = next;
    }
    return row;
}

}  // namespace detail

// Parses one benchmark text matrix: one row per feature, one column per
// event. Rows 1-40 are the order-book features, the last five rows are the
// labels; everything in between is parsed (to validate it) and dropped.
inline SeriesDay parse_fi2010(std::istream& in, const std::string& day_id) {
    std::vector<std::vector<double>> book_rows;
    std::deque<std::vector<double>> tail;
    std::size_t n_rows = 0, n_cols = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = day_id + ": row " + std::to_string(n_rows + 1);
        auto row = detail::parse_row(line, where);
        if (n_rows == 0) {
            n_cols = row.size();
        } else if (row.size() != n_cols) {
            throw ParseError(where + ": has " + std::to_string(row.size()) + " cells, expected " + std::to_string(n_cols));
        }
        if (n_rows < kFeatures) {
            book_rows.push_back(std::move(row));
        } else {
            tail.push_back(std::move(row));
            if (tail.size() > kFi2010Horizons.size()) tail.pop_front();
        }
        ++n_rows;
    }
    if (n_rows < kFeatures + kFi2010Horizons.size()) {
        throw ParseError(day_id + ": " + std::to_string(n_rows) + " rows, need at least 45 (40 features + 5 labels)");
    }
    if (n_cols == 0) throw ParseError(day_id + ": no events");

    SeriesDay d;
    d.day_id = day_id;
    d.features.resize(n_cols * kFeatures);
    for (std::size_t j = 0; j < kFeatures; ++j) {
        for (std::size_t i = 0; i < n_cols; ++i) d.features[i * kFeatures + j] = book_rows[j][i];
    }
    for (std::size_t h = 0; h < kFi2010Horizons.size(); ++h) {
        LabelSeq seq(n_cols);
        const std::string where = day_id + ": label row for k=" + std::to_string(kFi2010Horizons[h]);
        for (std::size_t i = 0; i < n_cols; ++i) seq[i] = fi2010_label(tail[h][i], where);
        d.labels[kFi2010Horizons[h]] = std::move(seq);
    }
    d.recompute_mids();
    d.validate();
    return d;
}

inline SeriesDay read_fi2010_file(const std::filesystem::path& path, const std::string& day_id) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return parse_fi2010(in, day_id);
}

// Locates the ten single-day files of one normalisation variant. The
// benchmark's fold-1 training file holds day 1 and its fold-i test file
// holds day i+1.
inline std::vector<std::filesystem::path> fi2010_day_files(const std::filesystem::path& dir,
                                                          const std::string& variant = "ZScore") {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("FI-2010 directory not found: " + dir.string());
    std::vector<fs::path> files(kFi2010Days);
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.find("_" + variant + "_") == std::string::npos) continue;
        const auto cf = name.rfind("_CF_");
        if (cf == std::string::npos || name.size() < 4 || name.substr(name.size() - 4) != ".txt") continue;
        int fold = 0;
        const std::string num = name.substr(cf + 4, name.size() - 4 - (cf + 4));
        auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), fold);
        if (ec != std::errc() || p != num.data() + num.size() || fold < 1 || fold > 9) continue;
        if (name.rfind("Train_", 0) == 0 && fold == 1) files[0] = entry.path();
        if (name.rfind("Test_", 0) == 0) files[static_cast<std::size_t>(fold)] = entry.path();
    }
    for (std::size_t d = 0; d < kFi2010Days; ++d) {
        if (files[d].empty()) {
            throw IoError("FI-2010 day " + std::to_string(d + 1) + " file (" +
                          (d == 0 ? "Train_*_" + variant + "_CF_1.txt" : "Test_*_" + variant + "_CF_" + std::to_string(d) + ".txt") +
                          ") missing under " + dir.string());
        }
    }
    return files;
}

struct Fi2010Sanity {
    std::array<double, kFeatures> mean{};
    std::array<double, kFeatures> stddev{};
    std::array<std::size_t, 3> class_counts{};  // shortest horizon, order (-1, 0, +1)
    std::vector<std::string> warnings;
};

// Statistical self-check of the loaded benchmark: z-scored features should
// have |mean| < 0.5 and std in [0.5, 2], and the stationary class should be
// the most frequent one at the shortest horizon.
inline Fi2010Sanity fi2010_sanity(const std::vector<SeriesDay>& days) {
    Fi2010Sanity s;
    std::vector<const SeriesDay*> ptrs;
    for (const auto& d : days) ptrs.push_back(&d);
    const auto st = feature_stats(ptrs);
    s.mean = st.mean;
    s.stddev = st.stddev;
    for (std::size_t j = 0; j < kFeatures; ++j) {
        if (std::abs(st.mean[j]) >= 0.5 || st.stddev[j] < 0.5 || st.stddev[j] > 2.0) {
            std::ostringstream os;
            os << "feature " << j << " mean " << st.mean[j] << " std " << st.stddev[j]
               << " outside the z-score sanity band; check the feature ordering";
            s.warnings.push_back(os.str());
        }
    }
    for (const auto& d : days) {
        auto it = d.labels.find(kFi2010Horizons[0]);
        if (it == d.labels.end()) continue;
        for (const auto& l : it->second) {
            if (l) ++s.class_counts[static_cast<std::size_t>(class_index(*l))];
        }
    }
    if (s.class_counts[1] < s.class_counts[0] || s.class_counts[1] < s.class_counts[2]) {
        s.warnings.push_back("stationary class is not the majority at k=10; check the label mapping");
    }
    return s;
}

struct DaySplit {
    std::vector<SeriesDay> train;
    std::vector<SeriesDay> val;
    std::vector<SeriesDay> test;
};

// Cuts the tail fraction of a day into a separate validation day.
inline std::pair<SeriesDay, SeriesDay> split_day_tail(const SeriesDay& day, double tail_fraction) {
    if (!(tail_fraction > 0.0 && tail_fraction < 1.0)) throw ArgumentError("split_day_tail: fraction must be in (0,1)");
    const std::size_t n = day.n_events();
    const std::size_t cut = n - static_cast<std::size_t>(std::floor(static_cast<double>(n) * tail_fraction));
    if (cut == 0 || cut == n) throw ArgumentError("split_day_tail: day " + day.day_id + " too short to split");
    auto slice = [&](std::size_t lo, std::size_t hi, const std::string& suffix) {
        SeriesDay s;
        s.day_id = day.day_id + suffix;
        s.n_features = day.n_features;
        s.features.assign(day.features.begin() + static_cast<std::ptrdiff_t>(lo * day.n_features),
                          day.features.begin() + static_cast<std::ptrdiff_t>(hi * day.n_features));
        s.mids.assign(day.mids.begin() + static_cast<std::ptrdiff_t>(lo), day.mids.begin() + static_cast<std::ptrdiff_t>(hi));
        if (!day.timestamps.empty()) {
            s.timestamps.assign(day.timestamps.begin() + static_cast<std::ptrdiff_t>(lo),
                                day.timestamps.begin() + static_cast<std::ptrdiff_t>(hi));
        }
        for (const auto& [k, seq] : day.labels) {
            s.labels[k].assign(seq.begin() + static_cast<std::ptrdiff_t>(lo), seq.begin() + static_cast<std::ptrdiff_t>(hi));
        }
        return s;
    };
    return {slice(0, cut, ""), slice(cut, n, ":val")};
}

// Setup 2: days 1-7 train, 8-10 test. Setup 1 fold i (1..9): days 1..i
// train, day i+1 test. The last `val_fraction` of the final training day is
// held out for early stopping.
inline DaySplit split_fi2010(const std::vector<SeriesDay>& days, int setup, int fold, double val_fraction = 0.2) {
    if (days.size() != kFi2010Days) throw ArgumentError("FI-2010 split needs exactly 10 days, got " + std::to_string(days.size()));
    std::size_t n_train = 0, test_lo = 0, test_hi = 0;
    if (setup == 2) {
        n_train = 7;
        test_lo = 7;
        test_hi = 10;
    } else if (setup == 1) {
        if (fold < 1 || fold > 9) throw ArgumentError("setup 1 fold must be in 1..9, got " + std::to_string(fold));
        n_train = static_cast<std::size_t>(fold);
        test_lo = n_train;
        test_hi = n_train + 1;
    } else {
        throw ArgumentError("FI-2010 setup must be 1 or 2, got " + std::to_string(setup));
    }
    DaySplit s;
    for (std::size_t d = 0; d < n_train; ++d) s.train.push_back(days[d]);
    if (val_fraction > 0.0) {
        auto [head, tail] = split_day_tail(s.train.back(), val_fraction);
        s.train.back() = std::move(head);
        s.val.push_back(std::move(tail));
    }
    for (std::size_t d = test_lo; d < test_hi; ++d) s.test.push_back(days[d]);
    return s;
}

inline std::vector<SeriesDay> load_fi2010(const std::filesystem::path& dir, const std::string& variant = "ZScore") {
    const auto files = fi2010_day_files(dir, variant);
    std::vector<SeriesDay> days;
    for (std::size_t d = 0; d < files.size(); ++d) days.push_back(read_fi2010_file(files[d], "fi2010-day" + std::to_string(d + 1)));
    return days;
}

inline DaySplit load_fi2010(const std::filesystem::path& dir, int setup, int fold, double val_fraction = 0.2,
                            const std::string& variant = "ZScore") {
    if (setup == 1 && (fold < 1 || fold > 9)) throw ArgumentError("setup 1 fold must be in 1..9, got " + std::to_string(fold));
    return split_fi2010(load_fi2010(dir, variant), setup, fold, val_fraction);
}

}  // namespace deeplob
