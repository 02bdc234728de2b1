#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deeplob/error.hpp"
#include "deeplob/lob.hpp"
#include "deeplob/tensor.hpp"

namespace deeplob {

// Class labels: -1 down, 0 stationary, +1 up.
using Label = std::int8_t;
using LabelSeq = std::vector<std::optional<Label>>;
using HorizonLabels = std::map<int, LabelSeq>;

inline constexpr std::size_t kWindowLength = 100;

inline int class_index(Label l) { return static_cast<int>(l) + 1; }
inline Label class_label(int idx) { return static_cast<Label>(idx - 1); }

// One trading day of one instrument: row-major [n_events x 40] features.
struct SeriesDay {
    std::string day_id;
    std::size_t n_features = kFeatures;
    std::vector<double> features;
    std::vector<double> mids;
    std::vector<std::int64_t> timestamps;  // optional, empty when absent
    HorizonLabels labels;                 // provided or computed labels

    std::size_t n_events() const { return n_features ? features.size() / n_features : 0; }

    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(features).subspan(i * n_features, n_features);
    }

    // Mid-prices from the best ask (col 0) and best bid (col 2).
    void recompute_mids() {
        mids.resize(n_events());
        for (std::size_t i = 0; i < mids.size(); ++i) {
            mids[i] = (features[i * n_features + 0] + features[i * n_features + 2]) / 2.0;
        }
    }

    void validate() const {
        if (n_features != kFeatures) throw ValidationError("day " + day_id + ": expected 40 features per event");
        if (features.empty() || features.size() % n_features != 0) {
            throw ValidationError("day " + day_id + ": feature buffer empty or not a multiple of 40");
        }
        if (mids.size() != n_events()) throw ValidationError("day " + day_id + ": mid-price count mismatch");
        if (!timestamps.empty()) {
            if (timestamps.size() != n_events()) throw ValidationError("day " + day_id + ": timestamp count mismatch");
            if (!std::is_sorted(timestamps.begin(), timestamps.end())) {
                throw ValidationError("day " + day_id + ": timestamps decrease");
            }
        }
        for (const auto& [k, seq] : labels) {
            if (seq.size() != n_events()) throw ValidationError("day " + day_id + ": label count mismatch at k=" + std::to_string(k));
        }
    }

    static SeriesDay from_snapshots(std::string id, const std::vector<LobSnapshot>& snaps) {
        if (snaps.empty()) throw ValidationError("day " + id + ": no snapshots");
        SeriesDay d;
        d.day_id = std::move(id);
        d.features.reserve(snaps.size() * kFeatures);
        d.timestamps.reserve(snaps.size());
        for (const auto& s : snaps) {
            const auto f = flatten(s);
            d.features.insert(d.features.end(), f.values.begin(), f.values.end());
            d.timestamps.push_back(s.timestamp);
        }
        d.recompute_mids();
        d.validate();
        return d;
    }
};

struct NormalizationStats {
    std::array<double, kFeatures> mean{};
    std::array<double, kFeatures> stddev{};
    std::array<bool, kFeatures> zero_std{};
    std::vector<std::string> source_days;
};

struct NormalizedDay {
    SeriesDay day;
    NormalizationStats stats;
    std::vector<std::string> warnings;
};

// Pooled population mean/std of every feature over `days`.
inline NormalizationStats feature_stats(std::span<const SeriesDay* const> days) {
    NormalizationStats st;
    std::array<double, kFeatures> sum{}, sq{};
    std::size_t count = 0;
    for (const SeriesDay* d : days) {
        st.source_days.push_back(d->day_id);
        for (std::size_t i = 0; i < d->n_events(); ++i) {
            const auto r = d->row(i);
            for (std::size_t j = 0; j < kFeatures; ++j) sum[j] += r[j];
        }
        count += d->n_events();
    }
    if (count == 0) throw ArgumentError("feature_stats: no events");
    for (std::size_t j = 0; j < kFeatures; ++j) st.mean[j] = sum[j] / static_cast<double>(count);
    // second pass about the mean for numerical stability
    for (const SeriesDay* d : days) {
        for (std::size_t i = 0; i < d->n_events(); ++i) {
            const auto r = d->row(i);
            for (std::size_t j = 0; j < kFeatures; ++j) {
                const double dev = r[j] - st.mean[j];
                sq[j] += dev * dev;
            }
        }
    }
    for (std::size_t j = 0; j < kFeatures; ++j) {
        st.stddev[j] = std::sqrt(sq[j] / static_cast<double>(count));
        st.zero_std[j] = st.stddev[j] == 0.0;
    }
    return st;
}

// Z-score each day with the statistics of up to `lookback` preceding days of
// the same instrument. The first day has no history and is dropped; days
// after it use whatever history exists (at least one day). Mid-prices and
// labels are carried over from the raw day unchanged.
inline std::vector<NormalizedDay> rolling_zscore(const std::vector<SeriesDay>& days, std::size_t lookback = 5) {
    if (lookback < 1) throw ArgumentError("rolling_zscore: lookback must be >= 1");
    std::vector<NormalizedDay> out;
    for (std::size_t d = 1; d < days.size(); ++d) {
        const std::size_t first = d > lookback ? d - lookback : 0;
        std::vector<const SeriesDay*> history;
        for (std::size_t h = first; h < d; ++h) history.push_back(&days[h]);
        NormalizedDay nd;
        nd.stats = feature_stats(history);
        nd.day = days[d];
        for (std::size_t j = 0; j < kFeatures; ++j) {
            if (nd.stats.zero_std[j]) {
                nd.warnings.push_back("day " + days[d].day_id + ": feature " + std::to_string(j) +
                                      " has zero std over the lookback; using std 1");
            }
        }
        const std::size_t n = nd.day.n_events();
        for (std::size_t i = 0; i < n; ++i) {
            double* r = nd.day.features.data() + i * kFeatures;
            for (std::size_t j = 0; j < kFeatures; ++j) {
                const double sd = nd.stats.zero_std[j] ? 1.0 : nd.stats.stddev[j];
                r[j] = (r[j] - nd.stats.mean[j]) / sd;
            }
        }
        out.push_back(std::move(nd));
    }
    return out;
}

enum class LabelMethod {
    FutureMean,     // l = (m+ - p_t) / p_t
    BilateralMean,  // l = (m+ - m-) / m-
};

// How the backward mean m- is formed: the printed form averages p_{t-k..t}
// (k+1 terms); the symmetric form averages p_{t-k..t-1} (k terms).
enum class PastWindow { Printed, Symmetric };

inline LabelMethod parse_label_method(const std::string& s) {
    if (s == "future-mean") return LabelMethod::FutureMean;
    if (s == "bilateral-mean") return LabelMethod::BilateralMean;
    throw ArgumentError("unknown labelling method '" + s + "' (expected future-mean or bilateral-mean)");
}

inline std::string to_string(LabelMethod m) {
    return m == LabelMethod::FutureMean ? "future-mean" : "bilateral-mean";
}

// Smoothed direction labels. Points without k future mids (or without the
// required past mids for the bilateral method) are left unlabelled.
inline LabelSeq smooth_labels(std::span<const double> mids, int k, double alpha, LabelMethod method,
                              PastWindow past = PastWindow::Printed) {
    if (k < 1) throw ArgumentError("smooth_labels: horizon k must be >= 1");
    if (!(alpha >= 0.0)) throw ArgumentError("smooth_labels: alpha must be >= 0");
    const std::size_t n = mids.size(), kk = static_cast<std::size_t>(k);
    LabelSeq out(n);
    for (std::size_t t = 0; t < n; ++t) {
        if (t + kk >= n) continue;
        double future = 0.0;
        for (std::size_t i = 1; i <= kk; ++i) future += mids[t + i];
        const double m_plus = future / static_cast<double>(k);
        double l;
        if (method == LabelMethod::FutureMean) {
            l = (m_plus - mids[t]) / mids[t];
        } else {
            if (t < kk) continue;
            // Oldest first, ending at p_t (printed) or p_{t-1} (symmetric).
            const std::size_t last = past == PastWindow::Printed ? t : t - 1;
            double past_sum = 0.0;
            for (std::size_t i = t - kk; i <= last; ++i) past_sum += mids[i];
            const double m_minus = past_sum / static_cast<double>(last - (t - kk) + 1);
            l = (m_plus - m_minus) / m_minus;
        }
        out[t] = l > alpha ? Label{1} : (l < -alpha ? Label{-1} : Label{0});
    }
    return out;
}

// A 100x40 input block with its labels, materialised on demand.
struct LabelledWindow {
    Tensor<double> input;  // [100, 40]
    std::map<int, Label> labels;
    std::size_t anchor_t = 0;
};

// Sliding windows (stride 1) over one day. Holds a shared view of the day
// and copies rows out only when a window is read.
class WindowSet {
public:
    WindowSet() = default;

    WindowSet(std::shared_ptr<const SeriesDay> day, const HorizonLabels& labels, std::size_t window = kWindowLength)
        : day_(std::move(day)), window_(window) {
        if (!day_) throw ArgumentError("WindowSet: null day");
        for (const auto& [k, seq] : labels) {
            if (seq.size() != day_->n_events()) throw ValidationError("WindowSet: label sequence length mismatch");
            horizons_.push_back(k);
        }
        const std::size_t n = day_->n_events();
        if (n < window_) return;
        for (std::size_t t = window_ - 1; t < n; ++t) {
            bool complete = true;
            for (const auto& [k, seq] : labels) complete = complete && seq[t].has_value();
            if (!complete) continue;
            anchors_.push_back(t);
            for (const auto& [k, seq] : labels) labels_[k].push_back(*seq[t]);
        }
    }

    std::size_t size() const { return anchors_.size(); }
    bool empty() const { return anchors_.empty(); }
    std::size_t window() const { return window_; }
    std::size_t anchor(std::size_t i) const { return anchors_.at(i); }
    const std::vector<std::size_t>& anchors() const { return anchors_; }
    const std::vector<int>& horizons() const { return horizons_; }
    const SeriesDay& day() const { return *day_; }
    std::shared_ptr<const SeriesDay> day_ptr() const { return day_; }

    Label label(std::size_t i, int horizon) const {
        auto it = labels_.find(horizon);
        if (it == labels_.end()) throw ArgumentError("WindowSet: no labels for horizon " + std::to_string(horizon));
        return it->second.at(i);
    }

    template <typename T>
    void copy_input(std::size_t i, T* dst) const {
        const std::size_t first = anchors_.at(i) + 1 - window_;
        const double* src = day_->features.data() + first * day_->n_features;
        const std::size_t len = window_ * day_->n_features;
        for (std::size_t j = 0; j < len; ++j) dst[j] = static_cast<T>(src[j]);
    }

    LabelledWindow materialize(std::size_t i) const {
        LabelledWindow w;
        w.input = Tensor<double>({window_, day_->n_features});
        copy_input(i, w.input.data());
        for (int k : horizons_) w.labels[k] = label(i, k);
        w.anchor_t = anchors_.at(i);
        return w;
    }

private:
    std::shared_ptr<const SeriesDay> day_;
    std::size_t window_ = kWindowLength;
    std::vector<int> horizons_;
    std::vector<std::size_t> anchors_;
    std::map<int, std::vector<Label>> labels_;
};

inline WindowSet make_windows(std::shared_ptr<const SeriesDay> day, const HorizonLabels& labels,
                              std::size_t window = kWindowLength) {
    return WindowSet(std::move(day), labels, window);
}

// Flat list of (window set, index) references for one horizon; the unit the
// trainer and the evaluators iterate over.
class SampleSet {
public:
    struct Ref {
        const WindowSet* set;
        std::size_t index;
    };

    SampleSet() = default;
    explicit SampleSet(int horizon) : horizon_(horizon) {}

    void add(const WindowSet& ws, std::size_t stride = 1) {
        if (stride < 1) throw ArgumentError("SampleSet: stride must be >= 1");
        for (std::size_t i = 0; i < ws.size(); i += stride) refs_.push_back({&ws, i});
    }

    // Keep every stride-th reference (deterministic thinning).
    SampleSet thinned(std::size_t max_count) const {
        SampleSet out(horizon_);
        if (max_count == 0 || refs_.size() <= max_count) {
            out.refs_ = refs_;
            return out;
        }
        const double step = static_cast<double>(refs_.size()) / static_cast<double>(max_count);
        for (std::size_t i = 0; i < max_count; ++i) {
            out.refs_.push_back(refs_[static_cast<std::size_t>(static_cast<double>(i) * step)]);
        }
        return out;
    }

    std::size_t size() const { return refs_.size(); }
    bool empty() const { return refs_.empty(); }
    int horizon() const { return horizon_; }
    const Ref& ref(std::size_t i) const { return refs_.at(i); }

    int target(std::size_t i) const { return class_index(refs_.at(i).set->label(refs_[i].index, horizon_)); }

    std::size_t input_elements() const { return refs_.empty() ? 0 : refs_[0].set->window() * kFeatures; }

    template <typename T>
    void copy_input(std::size_t i, T* dst) const {
        refs_.at(i).set->copy_input(refs_[i].index, dst);
    }

    // Stacks the selected samples into an [N,1,T,F] batch.
    template <typename T>
    Tensor<T> batch(std::span<const std::size_t> indices) const {
        const std::size_t t_len = refs_.empty() ? kWindowLength : refs_[0].set->window();
        Tensor<T> x({indices.size(), 1, t_len, kFeatures});
        for (std::size_t b = 0; b < indices.size(); ++b) copy_input(indices[b], x.data() + b * t_len * kFeatures);
        return x;
    }

    std::array<std::size_t, 3> class_counts() const {
        std::array<std::size_t, 3> c{};
        for (std::size_t i = 0; i < refs_.size(); ++i) ++c[static_cast<std::size_t>(target(i))];
        return c;
    }

private:
    int horizon_ = 10;
    std::vector<Ref> refs_;
};

}  // namespace deeplob
