#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deeplob/data.hpp"
#include "deeplob/error.hpp"
#include "deeplob/model.hpp"
#include "deeplob/synth.hpp"
#include "deeplob/train.hpp"

namespace deeplob {

// Everything a CLI run needs. Unset keys keep these defaults; the resolved
// object is written next to the outputs.
struct RunConfig {
    struct Dataset {
        std::string kind = "lob";        // lob | fi2010 | synth
        std::string path;                // .lob directory or FI-2010 directory
        std::string fi2010_variant = "ZScore";
        bool normalise = true;           // rolling z-score for lob/synth data
        std::size_t lookback = 5;
    } dataset;

    std::string setup = "2";             // 1 | 2 | rolling
    std::vector<int> horizons{10};
    std::map<int, double> alpha{{10, 2e-5}, {20, 2e-5}, {50, 2e-5}, {100, 2e-5}};
    LabelMethod label_method = LabelMethod::FutureMean;
    PastWindow past_window = PastWindow::Printed;

    DeepLobConfig model;
    std::uint64_t model_seed = 1;
    TrainConfig training;
    std::string precision = "float32";   // float32 | float64

    SynthConfig synth;

    struct Trading {
        double mu = 1.0;
        std::size_t delay = 5;
        bool close_only = false;
    } trading;

    struct Explain {
        std::size_t n_samples = 1000;
        std::uint64_t seed = 1;
        std::size_t day = 0;     // index into the test days
        std::size_t anchor = 0;  // window index within that day
    } explain;

    struct Bench {
        std::vector<std::size_t> batch_sizes{1, 8, 32};
        std::size_t reps = 1000;
    } bench;

    std::string out = "run";
    std::uint64_t seed = 1;  // master seed; --seed overrides model, training and synth seeds

    void apply_seed(std::uint64_t s) {
        seed = s;
        model_seed = s;
        training.seed = s;
        synth.seed = s;
        explain.seed = s;
    }

    double alpha_for(int k) const {
        auto it = alpha.find(k);
        if (it == alpha.end()) throw ConfigError("no alpha configured for horizon " + std::to_string(k));
        return it->second;
    }

    void validate() const {
        if (dataset.kind != "lob" && dataset.kind != "fi2010" && dataset.kind != "synth") {
            throw ConfigError("dataset.kind must be lob, fi2010 or synth, got '" + dataset.kind + "'");
        }
        if (dataset.kind != "synth" && dataset.path.empty()) throw ConfigError("dataset.path is required for " + dataset.kind + " data");
        if (dataset.lookback < 1) throw ConfigError("dataset.lookback must be >= 1");
        if (setup != "1" && setup != "2" && setup != "rolling") throw ConfigError("setup must be 1, 2 or rolling, got '" + setup + "'");
        if (horizons.empty()) throw ConfigError("at least one horizon is required");
        for (int k : horizons) {
            if (k < 1) throw ConfigError("horizons must be >= 1");
        }
        for (const auto& [k, a] : alpha) {
            if (!(a >= 0.0)) throw ConfigError("alpha for k=" + std::to_string(k) + " must be >= 0");
        }
        if (precision != "float32" && precision != "float64") throw ConfigError("precision must be float32 or float64");
        if (out.empty()) throw ConfigError("out directory must not be empty");
        if (!(trading.mu > 0.0)) throw ConfigError("trading.mu must be > 0");
        if (explain.n_samples < 2) throw ConfigError("explain.n_samples must be >= 2");
        if (bench.reps < 1 || bench.batch_sizes.empty()) throw ConfigError("bench needs reps >= 1 and a batch size");
        try {
            model.validate();
        } catch (const ArgumentError& e) {
            throw ConfigError(e.what());
        }
        training.validate();
        synth.validate();
    }
};

inline PastWindow parse_past_window(const std::string& s) {
    if (s == "printed") return PastWindow::Printed;
    if (s == "symmetric") return PastWindow::Symmetric;
    throw ConfigError("label past window must be printed or symmetric, got '" + s + "'");
}

inline std::string to_string(PastWindow p) { return p == PastWindow::Printed ? "printed" : "symmetric"; }

namespace detail {

template <typename V>
void read_opt(const nlohmann::json& j, const char* key, V& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<V>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> known) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("unknown config key '" + where + "." + key + "'");
    }
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
    using detail::read_opt;
    RunConfig c;
    detail::check_keys(j, "config", {"dataset", "setup", "horizons", "alpha", "label_method", "label_past_window", "model",
                                     "model_seed", "training", "precision", "synth", "trading", "explain", "bench", "out", "seed"});
    read_opt(j, "seed", c.seed);
    c.apply_seed(c.seed);
    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        detail::check_keys(d, "dataset", {"kind", "path", "fi2010_variant", "normalise", "lookback"});
        read_opt(d, "kind", c.dataset.kind);
        read_opt(d, "path", c.dataset.path);
        read_opt(d, "fi2010_variant", c.dataset.fi2010_variant);
        read_opt(d, "normalise", c.dataset.normalise);
        read_opt(d, "lookback", c.dataset.lookback);
    }
    if (j.contains("setup")) {
        const auto& s = j["setup"];
        c.setup = s.is_number_integer() ? std::to_string(s.get<int>()) : s.get<std::string>();
    }
    read_opt(j, "horizons", c.horizons);
    if (j.contains("alpha")) {
        const auto& a = j["alpha"];
        if (a.is_number()) {
            const double v = a.get<double>();
            for (auto& [k, x] : c.alpha) x = v;
            for (int k : c.horizons) c.alpha[k] = v;
        } else if (a.is_object()) {
            for (const auto& [key, v] : a.items()) {
                try {
                    c.alpha[std::stoi(key)] = v.get<double>();
                } catch (const std::exception&) {
                    throw ConfigError("alpha keys must be horizons with numeric values, got '" + key + "'");
                }
            }
        } else {
            throw ConfigError("alpha must be a number or an object keyed by horizon");
        }
    }
    if (j.contains("label_method")) {
        try {
            c.label_method = parse_label_method(j["label_method"].get<std::string>());
        } catch (const ArgumentError& e) {
            throw ConfigError(e.what());
        }
    }
    if (j.contains("label_past_window")) c.past_window = parse_past_window(j["label_past_window"].get<std::string>());
    if (j.contains("model")) {
        const auto& m = j["model"];
        detail::check_keys(m, "model", {"input_time", "input_features", "conv_width", "inception_width", "lstm_hidden",
                                        "leaky_slope", "temporal_kernel", "classes"});
        read_opt(m, "input_time", c.model.input_time);
        read_opt(m, "input_features", c.model.input_features);
        read_opt(m, "conv_width", c.model.conv_width);
        read_opt(m, "inception_width", c.model.inception_width);
        read_opt(m, "lstm_hidden", c.model.lstm_hidden);
        read_opt(m, "leaky_slope", c.model.leaky_slope);
        read_opt(m, "temporal_kernel", c.model.temporal_kernel);
        read_opt(m, "classes", c.model.classes);
    }
    read_opt(j, "model_seed", c.model_seed);
    if (j.contains("training")) {
        const auto& t = j["training"];
        detail::check_keys(t, "training", {"max_epochs", "patience", "batch_size", "max_train_windows", "max_val_windows",
                                           "target_val_acc", "learning_rate", "epsilon", "beta1", "beta2", "seed", "threads"});
        auto& tc = c.training;
        read_opt(t, "max_epochs", tc.max_epochs);
        read_opt(t, "patience", tc.patience);
        read_opt(t, "batch_size", tc.batch_size);
        read_opt(t, "max_train_windows", tc.max_train_windows);
        read_opt(t, "max_val_windows", tc.max_val_windows);
        if (t.contains("target_val_acc") && !t["target_val_acc"].is_null()) tc.target_val_acc = t["target_val_acc"].get<double>();
        read_opt(t, "learning_rate", tc.adam.learning_rate);
        read_opt(t, "epsilon", tc.adam.epsilon);
        read_opt(t, "beta1", tc.adam.beta1);
        read_opt(t, "beta2", tc.adam.beta2);
        read_opt(t, "seed", tc.seed);
        read_opt(t, "threads", tc.threads);
    }
    read_opt(j, "precision", c.precision);
    if (j.contains("synth")) {
        const auto& s = j["synth"];
        detail::check_keys(s, "synth", {"seed", "n_days", "events_per_day", "signal_strength", "tick_size", "initial_price",
                                        "mean_volume", "market_prob", "cancel_prob", "improve_prob", "market_size", "side_bias",
                                        "regime_duration", "reversion", "mean_gap_ms"});
        auto& sc = c.synth;
        read_opt(s, "seed", sc.seed);
        read_opt(s, "n_days", sc.n_days);
        read_opt(s, "events_per_day", sc.events_per_day);
        read_opt(s, "signal_strength", sc.signal_strength);
        read_opt(s, "tick_size", sc.tick_size);
        read_opt(s, "initial_price", sc.initial_price);
        read_opt(s, "mean_volume", sc.mean_volume);
        read_opt(s, "market_prob", sc.market_prob);
        read_opt(s, "cancel_prob", sc.cancel_prob);
        read_opt(s, "improve_prob", sc.improve_prob);
        read_opt(s, "market_size", sc.market_size);
        read_opt(s, "side_bias", sc.side_bias);
        read_opt(s, "regime_duration", sc.regime_duration);
        read_opt(s, "reversion", sc.reversion);
        read_opt(s, "mean_gap_ms", sc.mean_gap_ms);
    }
    if (j.contains("trading")) {
        const auto& t = j["trading"];
        detail::check_keys(t, "trading", {"mu", "delay", "close_only"});
        read_opt(t, "mu", c.trading.mu);
        read_opt(t, "delay", c.trading.delay);
        read_opt(t, "close_only", c.trading.close_only);
    }
    if (j.contains("explain")) {
        const auto& e = j["explain"];
        detail::check_keys(e, "explain", {"n_samples", "seed", "day", "anchor"});
        read_opt(e, "n_samples", c.explain.n_samples);
        read_opt(e, "seed", c.explain.seed);
        read_opt(e, "day", c.explain.day);
        read_opt(e, "anchor", c.explain.anchor);
    }
    if (j.contains("bench")) {
        const auto& b = j["bench"];
        detail::check_keys(b, "bench", {"batch_sizes", "reps"});
        read_opt(b, "batch_sizes", c.bench.batch_sizes);
        read_opt(b, "reps", c.bench.reps);
    }
    read_opt(j, "out", c.out);
    return c;
}

inline RunConfig parse_run_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json alpha;
    for (const auto& [k, a] : c.alpha) alpha[std::to_string(k)] = a;
    const auto& t = c.training;
    const auto& s = c.synth;
    return {
        {"dataset",
         {{"kind", c.dataset.kind},
          {"path", c.dataset.path},
          {"fi2010_variant", c.dataset.fi2010_variant},
          {"normalise", c.dataset.normalise},
          {"lookback", c.dataset.lookback}}},
        {"setup", c.setup},
        {"horizons", c.horizons},
        {"alpha", alpha},
        {"label_method", to_string(c.label_method)},
        {"label_past_window", to_string(c.past_window)},
        {"model",
         {{"input_time", c.model.input_time},
          {"input_features", c.model.input_features},
          {"conv_width", c.model.conv_width},
          {"inception_width", c.model.inception_width},
          {"lstm_hidden", c.model.lstm_hidden},
          {"leaky_slope", c.model.leaky_slope},
          {"temporal_kernel", c.model.temporal_kernel},
          {"classes", c.model.classes}}},
        {"model_seed", c.model_seed},
        {"training",
         {{"max_epochs", t.max_epochs},
          {"patience", t.patience},
          {"batch_size", t.batch_size},
          {"max_train_windows", t.max_train_windows},
          {"max_val_windows", t.max_val_windows},
          {"target_val_acc", t.target_val_acc ? nlohmann::json(*t.target_val_acc) : nlohmann::json(nullptr)},
          {"learning_rate", t.adam.learning_rate},
          {"epsilon", t.adam.epsilon},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"seed", t.seed},
          {"threads", t.threads}}},
        {"precision", c.precision},
        {"synth",
         {{"seed", s.seed},
          {"n_days", s.n_days},
          {"events_per_day", s.events_per_day},
          {"signal_strength", s.signal_strength},
          {"tick_size", s.tick_size},
          {"initial_price", s.initial_price},
          {"mean_volume", s.mean_volume},
          {"market_prob", s.market_prob},
          {"cancel_prob", s.cancel_prob},
          {"improve_prob", s.improve_prob},
          {"market_size", s.market_size},
          {"side_bias", s.side_bias},
          {"regime_duration", s.regime_duration},
          {"reversion", s.reversion},
          {"mean_gap_ms", s.mean_gap_ms}}},
        {"trading", {{"mu", c.trading.mu}, {"delay", c.trading.delay}, {"close_only", c.trading.close_only}}},
        {"explain",
         {{"n_samples", c.explain.n_samples}, {"seed", c.explain.seed}, {"day", c.explain.day}, {"anchor", c.explain.anchor}}},
        {"bench", {{"batch_sizes", c.bench.batch_sizes}, {"reps", c.bench.reps}}},
        {"out", c.out},
        {"seed", c.seed},
    };
}

}  // namespace deeplob
