#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "deeplob/data.hpp"
#include "deeplob/error.hpp"
#include "deeplob/fi2010.hpp"
#include "deeplob/model.hpp"
#include "deeplob/train.hpp"

namespace deeplob {

// Counts indexed (true class, predicted class); class order -1, 0, +1.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, 3>, 3> counts{};

    void add(Label truth, Label predicted, std::uint64_t n = 1) {
        counts.at(static_cast<std::size_t>(class_index(truth))).at(static_cast<std::size_t>(class_index(predicted))) += n;
    }
    void add_index(int truth, int predicted) { ++counts.at(static_cast<std::size_t>(truth)).at(static_cast<std::size_t>(predicted)); }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (const auto& r : counts)
            for (auto v : r) t += v;
        return t;
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) counts[i][j] += o.counts[i][j];
        return *this;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

enum class Averaging { Weighted, Macro };

inline std::string to_string(Averaging a) { return a == Averaging::Weighted ? "weighted" : "macro"; }

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
};

struct MetricReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    Averaging mode = Averaging::Weighted;
    std::array<ClassMetrics, 3> per_class{};
};

inline MetricReport metrics(const ConfusionMatrix& cm, Averaging mode = Averaging::Weighted) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw ArgumentError("metrics: empty confusion matrix");
    auto ratio = [](double a, double b) { return b == 0.0 ? 0.0 : a / b; };
    MetricReport r;
    r.mode = mode;
    std::uint64_t hits = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        std::uint64_t predicted = 0, actual = 0;
        for (std::size_t o = 0; o < 3; ++o) {
            predicted += cm.counts[o][c];
            actual += cm.counts[c][o];
        }
        const double tp = static_cast<double>(cm.counts[c][c]);
        hits += cm.counts[c][c];
        ClassMetrics& m = r.per_class[c];
        m.precision = ratio(tp, static_cast<double>(predicted));
        m.recall = ratio(tp, static_cast<double>(actual));
        m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
        m.support = actual;
    }
    r.accuracy = static_cast<double>(hits) / static_cast<double>(total);
    for (const auto& m : r.per_class) {
        const double w = mode == Averaging::Weighted ? static_cast<double>(m.support) / static_cast<double>(total) : 1.0 / 3.0;
        r.precision += w * m.precision;
        r.recall += w * m.recall;
        r.f1 += w * m.f1;
    }
    return r;
}

// Unweighted mean of the headline numbers (per-class entries are averaged too).
inline MetricReport mean_report(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw ArgumentError("mean_report: no reports");
    MetricReport m;
    m.mode = reports.front().mode;
    const double n = static_cast<double>(reports.size());
    for (const auto& r : reports) {
        m.accuracy += r.accuracy / n;
        m.precision += r.precision / n;
        m.recall += r.recall / n;
        m.f1 += r.f1 / n;
        for (std::size_t c = 0; c < 3; ++c) {
            m.per_class[c].precision += r.per_class[c].precision / n;
            m.per_class[c].recall += r.per_class[c].recall / n;
            m.per_class[c].f1 += r.per_class[c].f1 / n;
            m.per_class[c].support += r.per_class[c].support;
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Predictors and the dataset store used by the protocol runners.

class Predictor {
public:
    virtual ~Predictor() = default;
    // Class index (0..2) for every sample.
    virtual std::vector<int> predict(const SampleSet& set) const = 0;
};

class ConstantPredictor final : public Predictor {
public:
    explicit ConstantPredictor(Label label) : cls_(class_index(label)) {}
    std::vector<int> predict(const SampleSet& set) const override { return std::vector<int>(set.size(), cls_); }

private:
    int cls_;
};

class RandomPredictor final : public Predictor {
public:
    explicit RandomPredictor(std::uint64_t seed) : seed_(seed) {}
    std::vector<int> predict(const SampleSet& set) const override {
        Rng rng(seed_);
        std::vector<int> out(set.size());
        for (auto& c : out) c = static_cast<int>(rng.below(3));
        return out;
    }

private:
    std::uint64_t seed_;
};

template <typename T>
class ModelPredictor final : public Predictor {
public:
    explicit ModelPredictor(DeepLob<T> model, std::size_t threads = 0) : model_(std::move(model)), threads_(threads) {}
    std::vector<int> predict(const SampleSet& set) const override {
        const Tensor<T> p = predict_probs(model_, set, threads_);
        std::vector<int> out(set.size());
        for (std::size_t i = 0; i < set.size(); ++i) out[i] = argmax_row(p, i);
        return out;
    }
    const DeepLob<T>& model() const { return model_; }

private:
    DeepLob<T> model_;
    std::size_t threads_;
};

inline ConfusionMatrix confusion(const Predictor& p, const SampleSet& set) {
    const auto pred = p.predict(set);
    if (pred.size() != set.size()) throw ShapeError("predictor returned the wrong number of predictions");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < set.size(); ++i) cm.add_index(set.target(i), pred[i]);
    return cm;
}

enum class Phase { Train, Test };

inline std::string to_string(Phase p) { return p == Phase::Train ? "train" : "test"; }

// Day container that hands days out per phase and logs every access. While a
// fence is up, asking for a fenced day in the training phase is an error.
class DayStore {
public:
    struct Access {
        std::size_t day;
        Phase phase;
    };

    DayStore() = default;
    explicit DayStore(std::vector<SeriesDay> days) {
        for (auto& d : days) days_.push_back(std::make_shared<const SeriesDay>(std::move(d)));
    }

    std::size_t size() const { return days_.size(); }

    std::shared_ptr<const SeriesDay> open(std::size_t i, Phase phase) const {
        if (i >= days_.size()) throw DataError("day " + std::to_string(i + 1) + " missing from the dataset");
        std::lock_guard lock(mu_);
        if (phase == Phase::Train && fence_.count(i)) {
            throw DataError("test day " + days_[i]->day_id + " requested during training");
        }
        log_.push_back({i, phase});
        return days_[i];
    }

    void fence(std::set<std::size_t> test_days) const {
        std::lock_guard lock(mu_);
        fence_ = std::move(test_days);
    }

    std::vector<Access> accesses() const {
        std::lock_guard lock(mu_);
        return log_;
    }

    void clear_log() const {
        std::lock_guard lock(mu_);
        log_.clear();
    }

private:
    std::vector<std::shared_ptr<const SeriesDay>> days_;
    mutable std::mutex mu_;
    mutable std::set<std::size_t> fence_;
    mutable std::vector<Access> log_;
};

// One train/test partition in day indices (0-based, contiguous).
struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

inline std::vector<Fold> setup1_folds(std::size_t n_days = kFi2010Days) {
    if (n_days < 2) throw ArgumentError("setup 1 needs at least 2 days");
    std::vector<Fold> folds;
    for (std::size_t i = 1; i < n_days; ++i) {
        Fold f;
        for (std::size_t d = 0; d < i; ++d) f.train.push_back(d);
        f.test.push_back(i);
        folds.push_back(std::move(f));
    }
    return folds;
}

inline Fold setup2_fold(std::size_t n_days = kFi2010Days, std::size_t n_train = 7) {
    if (n_train < 1 || n_train >= n_days) throw ArgumentError("setup 2: invalid train/test day split");
    Fold f;
    for (std::size_t d = 0; d < n_days; ++d) (d < n_train ? f.train : f.test).push_back(d);
    return f;
}

// Chronological train / validation / test day split in 6:3:3 proportion.
// Validation days are part of `train` for the store fence, the runner peels
// them off the end.
struct RollingSplit {
    Fold fold;
    std::size_t n_val = 0;
};

inline RollingSplit rolling_split(std::size_t n_days) {
    if (n_days < 3) throw ArgumentError("rolling protocol needs at least 3 days");
    const std::size_t n_test = std::max<std::size_t>(1, n_days / 4);
    const std::size_t n_val = std::max<std::size_t>(1, n_days / 4);
    RollingSplit s;
    s.fold = setup2_fold(n_days, n_days - n_test);
    s.n_val = n_val;
    return s;
}

// Trains a predictor for one horizon from training and validation samples.
using Fitter = std::function<std::unique_ptr<Predictor>(const SampleSet& train, const SampleSet& val, int horizon)>;

struct LabelSpec {
    LabelMethod method = LabelMethod::FutureMean;
    std::map<int, double> alpha;  // per horizon
};

struct ProtocolOptions {
    double val_fraction = 0.2;  // tail of the last training day, when no validation days are given
    std::size_t n_val_days = 0;  // trailing training days used for validation instead
    std::size_t test_stride = 1;
    std::optional<LabelSpec> relabel;  // compute labels instead of using those stored with the day
};

struct FoldResult {
    int horizon = 0;
    std::size_t fold = 0;
    ConfusionMatrix cm;
    MetricReport report;
};

struct ProtocolResult {
    std::vector<FoldResult> folds;
    std::map<int, MetricReport> mean;  // per horizon, unweighted over folds
};

namespace detail {

inline std::shared_ptr<const SeriesDay> with_labels(std::shared_ptr<const SeriesDay> day, int k,
                                                    const std::optional<LabelSpec>& relabel) {
    if (!relabel) {
        if (!day->labels.count(k)) throw DataError("day " + day->day_id + " has no labels for k=" + std::to_string(k));
        return day;
    }
    auto it = relabel->alpha.find(k);
    if (it == relabel->alpha.end()) throw ConfigError("no alpha configured for horizon " + std::to_string(k));
    auto copy = std::make_shared<SeriesDay>(*day);
    copy->labels.clear();
    copy->labels[k] = smooth_labels(copy->mids, k, it->second, relabel->method);
    return copy;
}

}  // namespace detail

inline ProtocolResult run_protocol(const DayStore& store, const std::vector<Fold>& folds, const std::vector<int>& horizons,
                                   const Fitter& fit, const ProtocolOptions& opt = {}) {
    if (folds.empty()) throw ArgumentError("protocol: no folds");
    if (horizons.empty()) throw ArgumentError("protocol: no horizons");
    ProtocolResult result;
    for (int k : horizons) {
        std::vector<MetricReport> reports;
        for (std::size_t fi = 0; fi < folds.size(); ++fi) {
            const Fold& fold = folds[fi];
            if (fold.train.empty() || fold.test.empty()) throw ArgumentError("protocol: fold with no train or test days");
            store.fence({fold.test.begin(), fold.test.end()});

            std::vector<std::shared_ptr<const SeriesDay>> train_days, val_days;
            const std::size_t n_val_days = std::min(opt.n_val_days, fold.train.size() - 1);
            for (std::size_t j = 0; j < fold.train.size(); ++j) {
                auto d = detail::with_labels(store.open(fold.train[j], Phase::Train), k, opt.relabel);
                (j + n_val_days >= fold.train.size() && n_val_days ? val_days : train_days).push_back(std::move(d));
            }
            if (val_days.empty()) {
                auto [head, tail] = split_day_tail(*train_days.back(), opt.val_fraction);
                train_days.back() = std::make_shared<const SeriesDay>(std::move(head));
                val_days.push_back(std::make_shared<const SeriesDay>(std::move(tail)));
            }
            std::vector<WindowSet> train_ws, val_ws;
            for (const auto& d : train_days) train_ws.emplace_back(d, HorizonLabels{{k, d->labels.at(k)}});
            for (const auto& d : val_days) val_ws.emplace_back(d, HorizonLabels{{k, d->labels.at(k)}});
            SampleSet train_set(k), val_set(k);
            for (const auto& w : train_ws) train_set.add(w);
            for (const auto& w : val_ws) val_set.add(w);
            if (train_set.empty() || val_set.empty()) throw DataError("protocol: no labelled windows for training");
            const auto predictor = fit(train_set, val_set, k);

            std::vector<WindowSet> test_ws;
            for (std::size_t d : fold.test) {
                auto day = detail::with_labels(store.open(d, Phase::Test), k, opt.relabel);
                test_ws.emplace_back(day, HorizonLabels{{k, day->labels.at(k)}});
            }
            SampleSet test_set(k);
            for (const auto& w : test_ws) test_set.add(w, opt.test_stride);
            if (test_set.empty()) throw DataError("protocol: no labelled test windows");
            FoldResult fr;
            fr.horizon = k;
            fr.fold = fi + 1;
            fr.cm = confusion(*predictor, test_set);
            fr.report = metrics(fr.cm);
            reports.push_back(fr.report);
            result.folds.push_back(std::move(fr));
        }
        result.mean[k] = mean_report(reports);
    }
    store.fence({});
    return result;
}

inline ProtocolResult run_setup1(const DayStore& store, const Fitter& fit, const std::vector<int>& horizons = {10, 50, 100},
                                 const ProtocolOptions& opt = {}) {
    if (store.size() != kFi2010Days) throw DataError("setup 1 needs 10 days, dataset has " + std::to_string(store.size()));
    return run_protocol(store, setup1_folds(store.size()), horizons, fit, opt);
}

inline ProtocolResult run_setup2(const DayStore& store, const Fitter& fit, const std::vector<int>& horizons = {10, 20, 50},
                                 const ProtocolOptions& opt = {}) {
    if (store.size() != kFi2010Days) throw DataError("setup 2 needs 10 days, dataset has " + std::to_string(store.size()));
    return run_protocol(store, {setup2_fold(store.size())}, horizons, fit, opt);
}

// Rolling protocol on already-normalised days (e.g. rolling_zscore output):
// chronological train / validation / test days, labels computed per horizon.
inline ProtocolResult run_rolling(const DayStore& store, const Fitter& fit, const std::vector<int>& horizons,
                                  const LabelSpec& labels, ProtocolOptions opt = {}) {
    const RollingSplit s = rolling_split(store.size());
    opt.n_val_days = s.n_val;
    opt.relabel = labels;
    return run_protocol(store, {s.fold}, horizons, fit, opt);
}

// Fitter that trains a fresh DeepLOB per horizon.
template <typename T>
Fitter deeplob_fitter(DeepLobConfig model_cfg, TrainConfig train_cfg, std::uint64_t model_seed,
                      std::function<void(int, const EpochRecord&)> on_epoch = {}) {
    return [=](const SampleSet& train_set, const SampleSet& val_set, int k) -> std::unique_ptr<Predictor> {
        auto res = train(DeepLob<T>::build(model_cfg, model_seed), train_set, val_set, train_cfg,
                         [&](const EpochRecord& r) {
                             if (on_epoch) on_epoch(k, r);
                         });
        return std::make_unique<ModelPredictor<T>>(std::move(res.model), train_cfg.threads);
    };
}

// ---------------------------------------------------------------------------
// Forward-pass latency.

struct LatencyStats {
    std::size_t batch = 0;
    std::size_t reps = 0;
    double median_ms = 0.0;
    double p99_ms = 0.0;
    double mean_ms = 0.0;
};

struct BenchReport {
    std::size_t parameters = 0;
    std::vector<LatencyStats> runs;
};

template <typename T>
BenchReport bench_forward(const DeepLob<T>& model, const std::vector<std::size_t>& batch_sizes, std::size_t reps = 1000,
                          std::size_t warmup = 20, std::uint64_t seed = 1) {
    if (reps < 1) throw ArgumentError("bench: reps must be >= 1");
    BenchReport rep;
    rep.parameters = model.parameter_count();
    const auto& c = model.config();
    Rng rng(seed);
    for (std::size_t b : batch_sizes) {
        if (b < 1) throw ArgumentError("bench: batch size must be >= 1");
        Tensor<T> x({b, 1, c.input_time, c.input_features});
        for (auto& v : x.vec()) v = static_cast<T>(rng.normal());
        for (std::size_t i = 0; i < warmup; ++i) (void)model.forward(x);
        std::vector<double> ms(reps);
        for (auto& m : ms) {
            const auto t0 = std::chrono::steady_clock::now();
            const Tensor<T> y = model.forward(x);
            const auto t1 = std::chrono::steady_clock::now();
            if (!std::isfinite(static_cast<double>(y[0]))) throw DivergenceError("bench: non-finite output");
            m = std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
        LatencyStats s;
        s.batch = b;
        s.reps = reps;
        for (double m : ms) s.mean_ms += m / static_cast<double>(reps);
        std::sort(ms.begin(), ms.end());
        s.median_ms = reps % 2 ? ms[reps / 2] : 0.5 * (ms[reps / 2 - 1] + ms[reps / 2]);
        s.p99_ms = ms[std::min(reps - 1, static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(reps))) - 1)];
        rep.runs.push_back(s);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Reports.

inline nlohmann::json to_json(const MetricReport& r) {
    nlohmann::json j{{"accuracy", r.accuracy}, {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
                     {"averaging", to_string(r.mode)}};
    static const char* names[3] = {"down", "stationary", "up"};
    for (std::size_t c = 0; c < 3; ++c) {
        const auto& m = r.per_class[c];
        j["per_class"][names[c]] = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
    }
    return j;
}

inline nlohmann::json to_json(const ConfusionMatrix& cm) { return cm.counts; }

inline nlohmann::json to_json(const ProtocolResult& r) {
    nlohmann::json j;
    j["folds"] = nlohmann::json::array();
    for (const auto& f : r.folds) {
        j["folds"].push_back({{"horizon", f.horizon}, {"fold", f.fold}, {"confusion", to_json(f.cm)}, {"metrics", to_json(f.report)}});
    }
    for (const auto& [k, m] : r.mean) j["mean"][std::to_string(k)] = to_json(m);
    return j;
}

inline nlohmann::json to_json(const BenchReport& b) {
    nlohmann::json j{{"parameters", b.parameters}, {"runs", nlohmann::json::array()}};
    for (const auto& s : b.runs) {
        j["runs"].push_back({{"batch", s.batch}, {"reps", s.reps}, {"median_ms", s.median_ms}, {"p99_ms", s.p99_ms}, {"mean_ms", s.mean_ms}});
    }
    return j;
}

// Table-style percentages, one row per horizon (and fold when asked).
inline std::string metrics_csv(const ProtocolResult& r, bool per_fold = false) {
    std::string out = per_fold ? "horizon,fold,accuracy,precision,recall,f1\n" : "horizon,accuracy,precision,recall,f1\n";
    char line[160];
    if (per_fold) {
        for (const auto& f : r.folds) {
            std::snprintf(line, sizeof line, "%d,%zu,%.2f,%.2f,%.2f,%.2f\n", f.horizon, f.fold, 100 * f.report.accuracy,
                          100 * f.report.precision, 100 * f.report.recall, 100 * f.report.f1);
            out += line;
        }
        return out;
    }
    for (const auto& [k, m] : r.mean) {
        std::snprintf(line, sizeof line, "%d,%.2f,%.2f,%.2f,%.2f\n", k, 100 * m.accuracy, 100 * m.precision, 100 * m.recall,
                      100 * m.f1);
        out += line;
    }
    return out;
}

// Rows normalised to percentages of each true class.
inline std::string confusion_percent_csv(const ConfusionMatrix& cm) {
    static const char* names[3] = {"down", "stationary", "up"};
    std::string out = "true\\predicted,down,stationary,up\n";
    char cell[32];
    for (std::size_t i = 0; i < 3; ++i) {
        std::uint64_t row = 0;
        for (auto v : cm.counts[i]) row += v;
        out += names[i];
        for (std::size_t j = 0; j < 3; ++j) {
            const double pct = row ? 100.0 * static_cast<double>(cm.counts[i][j]) / static_cast<double>(row) : 0.0;
            std::snprintf(cell, sizeof cell, ",%.2f", pct);
            out += cell;
        }
        out += '\n';
    }
    return out;
}

inline std::string metric_table(const std::string& name, const std::map<int, MetricReport>& by_horizon) {
    std::string out;
    char line[200];
    for (const auto& [k, m] : by_horizon) {
        std::snprintf(line, sizeof line, "k=%d\n%-12s %10s %12s %10s %8s\n%-12s %10.2f %12.2f %10.2f %8.2f\n", k, "Model",
                      "Accuracy %", "Precision %", "Recall %", "F1 %", name.c_str(), 100 * m.accuracy, 100 * m.precision,
                      100 * m.recall, 100 * m.f1);
        out += line;
    }
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace deeplob
