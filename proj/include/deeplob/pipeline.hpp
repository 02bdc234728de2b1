#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "deeplob/config.hpp"
#include "deeplob/data.hpp"
#include "deeplob/error.hpp"
#include "deeplob/evaluation.hpp"
#include "deeplob/fi2010.hpp"
#include "deeplob/lobfile.hpp"
#include "deeplob/synth.hpp"

namespace deeplob {

// Days ready for windowing: normalised features, raw mids, labels for every
// configured horizon.
struct PreparedData {
    std::vector<SeriesDay> days;
    std::vector<std::string> warnings;
};

inline void check_dataset_path(const RunConfig& cfg) {
    if (cfg.dataset.kind == "synth") return;
    if (!std::filesystem::is_directory(cfg.dataset.path)) {
        throw ConfigError("dataset.path '" + cfg.dataset.path + "' is not an existing directory");
    }
}

// Recomputes labels from the raw mids for all configured horizons.
inline void label_days(std::vector<SeriesDay>& days, const RunConfig& cfg) {
    for (auto& d : days) {
        d.labels.clear();
        for (int k : cfg.horizons) d.labels[k] = smooth_labels(d.mids, k, cfg.alpha_for(k), cfg.label_method, cfg.past_window);
    }
}

inline std::vector<SeriesDay> raw_days(const RunConfig& cfg) {
    if (cfg.dataset.kind == "synth") return synth_generate(cfg.synth).days;
    if (cfg.dataset.kind == "lob") return load_lob_dir(cfg.dataset.path);
    return load_fi2010(cfg.dataset.path, cfg.dataset.fi2010_variant);
}

inline PreparedData prepare_data(const RunConfig& cfg) {
    check_dataset_path(cfg);
    PreparedData out;
    std::vector<SeriesDay> days = raw_days(cfg);
    if (cfg.dataset.kind == "fi2010") {
        // shipped already normalised and labelled
        for (int k : cfg.horizons) {
            if (!days.front().labels.count(k)) throw ConfigError("FI-2010 provides no labels for k=" + std::to_string(k));
        }
        out.warnings = fi2010_sanity(days).warnings;
        out.days = std::move(days);
        return out;
    }
    if (cfg.dataset.normalise) {
        for (auto& nd : rolling_zscore(days, cfg.dataset.lookback)) {
            for (auto& w : nd.warnings) out.warnings.push_back(std::move(w));
            out.days.push_back(std::move(nd.day));
        }
    } else {
        out.days = std::move(days);
    }
    if (out.days.empty()) throw DataError("no days left after normalisation (need at least 2 input days)");
    label_days(out.days, cfg);
    return out;
}

// Day-level partition for a single training run. Setup 1 uses `fold`.
struct RunSplit {
    Fold fold;
    std::size_t n_val_days = 0;  // trailing train days used for validation; 0 = tail of the last day
};

inline RunSplit run_split(const RunConfig& cfg, std::size_t n_days, std::size_t fold = 0) {
    RunSplit s;
    if (cfg.setup == "rolling") {
        const RollingSplit r = rolling_split(n_days);
        s.fold = r.fold;
        s.n_val_days = r.n_val;
    } else if (cfg.setup == "2") {
        const std::size_t n_train = n_days == kFi2010Days ? 7 : static_cast<std::size_t>(std::lround(0.7 * static_cast<double>(n_days)));
        s.fold = setup2_fold(n_days, std::clamp<std::size_t>(n_train, 1, n_days - 1));
    } else {
        const auto folds = setup1_folds(n_days);
        const std::size_t f = fold ? fold : folds.size();
        if (f < 1 || f > folds.size()) throw ArgumentError("fold must be in 1.." + std::to_string(folds.size()));
        s.fold = folds[f - 1];
    }
    return s;
}

inline std::vector<Fold> protocol_folds(const RunConfig& cfg, std::size_t n_days) {
    if (cfg.setup == "1") return setup1_folds(n_days);
    return {run_split(cfg, n_days).fold};
}

// Window sets and the train / validation / test sample sets of one horizon.
struct HorizonData {
    std::vector<std::shared_ptr<const SeriesDay>> train_days, val_days, test_days;
    std::vector<WindowSet> train_ws, val_ws, test_ws;
    SampleSet train, val, test;
};

inline std::unique_ptr<HorizonData> horizon_data(const std::vector<SeriesDay>& days, const RunSplit& split, int k,
                                                 double val_fraction = 0.2) {
    auto h = std::make_unique<HorizonData>();
    const auto& tr = split.fold.train;
    const std::size_t n_val = std::min(split.n_val_days, tr.size() - 1);
    for (std::size_t j = 0; j < tr.size(); ++j) {
        auto d = std::make_shared<const SeriesDay>(days.at(tr[j]));
        (n_val && j + n_val >= tr.size() ? h->val_days : h->train_days).push_back(std::move(d));
    }
    if (h->val_days.empty()) {
        auto [head, tail] = split_day_tail(*h->train_days.back(), val_fraction);
        h->train_days.back() = std::make_shared<const SeriesDay>(std::move(head));
        h->val_days.push_back(std::make_shared<const SeriesDay>(std::move(tail)));
    }
    for (std::size_t d : split.fold.test) h->test_days.push_back(std::make_shared<const SeriesDay>(days.at(d)));

    auto build = [k](const std::vector<std::shared_ptr<const SeriesDay>>& src, std::vector<WindowSet>& ws, SampleSet& set) {
        ws.reserve(src.size());
        for (const auto& d : src) {
            auto it = d->labels.find(k);
            if (it == d->labels.end()) throw DataError("day " + d->day_id + " has no labels for k=" + std::to_string(k));
            ws.emplace_back(d, HorizonLabels{{k, it->second}});
        }
        set = SampleSet(k);
        for (const auto& w : ws) set.add(w);
    };
    build(h->train_days, h->train_ws, h->train);
    build(h->val_days, h->val_ws, h->val);
    build(h->test_days, h->test_ws, h->test);
    if (h->train.empty() || h->val.empty()) throw DataError("no labelled windows for training at k=" + std::to_string(k));
    return h;
}

}  // namespace deeplob
