// deeplob: command-line driver for the whole pipeline.

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deeplob/checkpoint.hpp"
#include "deeplob/config.hpp"
#include "deeplob/evaluation.hpp"
#include "deeplob/explain.hpp"
#include "deeplob/fi2010.hpp"
#include "deeplob/lobfile.hpp"
#include "deeplob/pipeline.hpp"
#include "deeplob/synth.hpp"
#include "deeplob/trading.hpp"
#include "deeplob/train.hpp"

#ifndef DEEPLOB_VERSION
#define DEEPLOB_VERSION "0.0.0"
#endif
#ifndef DEEPLOB_GIT_REV
#define DEEPLOB_GIT_REV "unknown"
#endif

namespace fs = std::filesystem;
using namespace deeplob;
using json = nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kRuntime = 1, kUsage = 2, kConfig = 3, kIo = 4, kData = 5, kDivergence = 6 };

constexpr const char* kExitHelp =
    "Exit codes:\n"
    "  0  success\n"
    "  1  runtime failure\n"
    "  2  usage error (bad flag or argument)\n"
    "  3  configuration error (bad or missing config, missing dataset path)\n"
    "  4  I/O error (unreadable or unwritable file, corrupt checkpoint)\n"
    "  5  data error (malformed input, no usable windows)\n"
    "  6  training diverged\n"
    "Threads: DEEPLOB_THREADS (default: all cores).";

std::string code_version() { return std::string(DEEPLOB_VERSION) + "+" + DEEPLOB_GIT_REV; }

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Flags shared by every subcommand.
struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string setup;
    std::optional<int> horizon;
    std::optional<double> alpha;
    std::string method;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "Run configuration (JSON)");
    cmd->add_option("--seed", c.seed, "Master seed (model, training, generator, explainer)");
    cmd->add_option("--setup", c.setup, "Evaluation protocol")->check(CLI::IsMember({"1", "2", "rolling"}));
    cmd->add_option("--horizon", c.horizon, "Prediction horizon k")->check(CLI::PositiveNumber);
    cmd->add_option("--alpha", c.alpha, "Label threshold for the selected horizons")->check(CLI::NonNegativeNumber);
    cmd->add_option("--method", c.method, "Labelling method")->check(CLI::IsMember({"future-mean", "bilateral-mean"}));
    cmd->add_option("--out", c.out, "Output directory");
}

RunConfig resolve(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
    if (c.seed) cfg.apply_seed(*c.seed);
    if (!c.setup.empty()) cfg.setup = c.setup;
    if (c.horizon) cfg.horizons = {*c.horizon};
    if (c.alpha) {
        for (int k : cfg.horizons) cfg.alpha[k] = *c.alpha;
    }
    if (!c.method.empty()) cfg.label_method = parse_label_method(c.method);
    if (!c.out.empty()) cfg.out = c.out;
    cfg.validate();
    return cfg;
}

// Run directory bookkeeping: resolved config, manifest of outputs.
class RunDir {
public:
    RunDir(const RunConfig& cfg, std::string command) : root_(cfg.out), command_(std::move(command)), cfg_(cfg) {
        std::error_code ec;
        fs::create_directories(root_, ec);
        if (ec) throw IoError("cannot create output directory " + root_.string() + ": " + ec.message());
        write("config.json", to_json(cfg).dump(2) + "\n");
    }

    fs::path path(const fs::path& rel) const { return root_ / rel; }

    void write(const fs::path& rel, const std::string& bytes) {
        const fs::path p = root_ / rel;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        write_text(p, bytes);
        record(rel);
    }

    void record(const fs::path& rel) { outputs_.push_back(rel.generic_string()); }

    void finish(const json& extra = json::object()) {
        json m;
        m["command"] = command_;
        m["code_version"] = code_version();
        m["config_sha256"] = sha256_hex(to_json(cfg_).dump());
        m["seeds"] = {{"seed", cfg_.seed},
                      {"model", cfg_.model_seed},
                      {"training", cfg_.training.seed},
                      {"synth", cfg_.synth.seed},
                      {"explain", cfg_.explain.seed}};
        m["outputs"] = json::array();
        for (const auto& rel : outputs_) m["outputs"].push_back({{"path", rel}, {"sha256", sha256_hex(read_file(root_ / rel))}});
        if (!extra.empty()) m["details"] = extra;
        write_text(root_ / "manifest.json", m.dump(2) + "\n");
    }

private:
    fs::path root_;
    std::string command_;
    RunConfig cfg_;
    std::vector<std::string> outputs_;
};

void save_days(RunDir& run, const std::vector<SeriesDay>& days) {
    for (const auto& d : days) {
        const fs::path rel = fs::path("data") / (d.day_id + ".lob");
        fs::create_directories(run.path("data"));
        save_lob_day(run.path(rel), d);
        run.record(rel);
    }
}

// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg) {
    SynthOutput gen = synth_generate(cfg.synth);
    label_days(gen.days, cfg);
    RunDir run(cfg, "synth");
    save_days(run, gen.days);
    run.finish({{"days", gen.days.size()}, {"events_per_day", cfg.synth.events_per_day}});
    std::printf("wrote %zu synthetic days to %s\n", gen.days.size(), run.path("data").c_str());
    return kOk;
}

int cmd_ingest(const RunConfig& cfg, const std::string& input, const std::string& variant) {
    if (!fs::is_directory(input)) throw ConfigError("--input '" + input + "' is not an existing directory");
    const auto days = load_fi2010(input, variant);
    const auto sanity = fi2010_sanity(days);
    RunDir run(cfg, "ingest");
    save_days(run, days);
    for (const auto& w : sanity.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    run.finish({{"days", days.size()}, {"warnings", sanity.warnings}});
    std::printf("ingested %zu FI-2010 days into %s\n", days.size(), run.path("data").c_str());
    return kOk;
}

int cmd_label(const RunConfig& cfg) {
    if (cfg.dataset.kind != "lob") throw ConfigError("label works on canonical .lob data (dataset.kind = lob)");
    check_dataset_path(cfg);
    auto days = load_lob_dir(cfg.dataset.path);
    label_days(days, cfg);
    RunDir run(cfg, "label");
    save_days(run, days);
    json counts = json::object();
    for (int k : cfg.horizons) {
        std::array<std::size_t, 3> c{};
        for (const auto& d : days)
            for (const auto& l : d.labels.at(k))
                if (l) ++c[static_cast<std::size_t>(class_index(*l))];
        counts[std::to_string(k)] = c;
        std::printf("k=%d  down %zu  stationary %zu  up %zu\n", k, c[0], c[1], c[2]);
    }
    run.finish({{"class_counts", counts}});
    return kOk;
}

template <typename T>
Checkpoint<T> load_model_checkpoint(const std::string& path, bool convert) {
    if (path.empty()) throw ConfigError("--checkpoint is required");
    return load_checkpoint<T>(path, CheckpointLoadOptions{convert});
}

int checkpoint_horizon(const std::map<std::string, std::string>& meta, const Common& c) {
    if (c.horizon) return *c.horizon;
    auto it = meta.find("horizon");
    if (it == meta.end()) throw ConfigError("checkpoint has no horizon; pass --horizon");
    return std::stoi(it->second);
}

template <typename T>
int cmd_train(const RunConfig& cfg, std::size_t fold) {
    const PreparedData data = prepare_data(cfg);
    for (const auto& w : data.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    const RunSplit split = run_split(cfg, data.days.size(), fold);
    RunDir run(cfg, "train");
    json summary = json::object();
    for (int k : cfg.horizons) {
        const auto h = horizon_data(data.days, split, k);
        std::printf("k=%d: %zu train / %zu validation windows\n", k, h->train.size(), h->val.size());
        auto res = train(DeepLob<T>::build(cfg.model, cfg.model_seed), h->train, h->val, cfg.training, [&](const EpochRecord& r) {
            std::printf("  epoch %3zu  loss %.4f  train_acc %.4f  val_acc %.4f\n", r.epoch, r.train_loss, r.train_acc, r.val_acc);
            std::fflush(stdout);
        });
        const fs::path dir = "k" + std::to_string(k);
        fs::create_directories(run.path(dir));
        Checkpoint<T> ck{cfg.model, res.model.params(), res.adam, res.rng_state, {}};
        ck.meta = {{"horizon", std::to_string(k)},
                   {"setup", cfg.setup},
                   {"label_method", to_string(cfg.label_method)},
                   {"best_epoch", std::to_string(res.best_epoch)},
                   {"best_val_acc", std::to_string(res.best_val_acc)},
                   {"stop_reason", res.stop_reason},
                   {"code_version", code_version()}};
        save_checkpoint(run.path(dir / "model.dlck"), ck);
        run.record(dir / "model.dlck");
        run.write(dir / "history.csv", history_csv(res.history));
        summary[std::to_string(k)] = {{"best_epoch", res.best_epoch}, {"best_val_acc", res.best_val_acc}, {"stop_reason", res.stop_reason}};
        std::printf("k=%d: best val_acc %.4f at epoch %zu (%s)\n", k, res.best_val_acc, res.best_epoch, res.stop_reason.c_str());
    }
    run.finish(summary);
    return kOk;
}

void emit_reports(RunDir& run, const ProtocolResult& r, const std::string& title) {
    std::printf("%s", metric_table(title, r.mean).c_str());
    run.write("metrics.csv", metrics_csv(r));
    run.write("metrics_folds.csv", metrics_csv(r, true));
    run.write("metrics.json", to_json(r).dump(2) + "\n");
    std::map<int, ConfusionMatrix> total;
    for (const auto& f : r.folds) total[f.horizon] += f.cm;
    for (const auto& [k, cm] : total) run.write("confusion_k" + std::to_string(k) + ".csv", confusion_percent_csv(cm));
}

template <typename T>
int cmd_evaluate(const RunConfig& cfg, const Common& common, const std::string& checkpoint, bool convert) {
    const PreparedData data = prepare_data(cfg);
    for (const auto& w : data.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    if (!checkpoint.empty()) {
        const auto ck = load_model_checkpoint<T>(checkpoint, convert);
        const int k = checkpoint_horizon(ck.meta, common);
        const auto h = horizon_data(data.days, run_split(cfg, data.days.size()), k);
        if (h->test.empty()) throw DataError("no labelled test windows");
        RunDir run(cfg, "evaluate");
        const ModelPredictor<T> model(DeepLob<T>::from_params(ck.config, ck.params), cfg.training.threads);
        ProtocolResult r;
        FoldResult f;
        f.horizon = k;
        f.fold = 1;
        f.cm = confusion(model, h->test);
        f.report = metrics(f.cm);
        r.folds.push_back(f);
        r.mean[k] = f.report;
        emit_reports(run, r, "DeepLOB");
        run.finish();
        return kOk;
    }
    const DayStore store(data.days);
    auto fitter = deeplob_fitter<T>(cfg.model, cfg.training, cfg.model_seed, [](int k, const EpochRecord& r) {
        std::printf("  k=%d epoch %3zu  loss %.4f  val_acc %.4f\n", k, r.epoch, r.train_loss, r.val_acc);
        std::fflush(stdout);
    });
    ProtocolOptions opt;
    if (cfg.setup == "rolling") opt.n_val_days = rolling_split(store.size()).n_val;
    RunDir run(cfg, "evaluate");
    const ProtocolResult r = run_protocol(store, protocol_folds(cfg, store.size()), cfg.horizons, fitter, opt);
    emit_reports(run, r, "DeepLOB");
    run.finish();
    return kOk;
}

template <typename T>
int cmd_backtest(const RunConfig& cfg, const Common& common, const std::string& checkpoint, bool convert) {
    const auto ck = load_model_checkpoint<T>(checkpoint, convert);
    const int k = checkpoint_horizon(ck.meta, common);
    const PreparedData data = prepare_data(cfg);
    const auto h = horizon_data(data.days, run_split(cfg, data.days.size()), k);
    const DeepLob<T> model = DeepLob<T>::from_params(ck.config, ck.params);
    SimOptions sim;
    sim.mu = cfg.trading.mu;
    sim.delay = cfg.trading.delay;
    sim.close_only = cfg.trading.close_only;
    std::vector<DayLedger> ledgers;
    for (const auto& ws : h->test_ws) {
        if (ws.empty()) continue;
        SampleSet s(k);
        s.add(ws);
        const auto signals = signals_from_probs(predict_probs(model, s, cfg.training.threads));
        const auto& day = ws.day();
        ledgers.push_back(simulate(day.day_id, day.mids, align_signals(day.n_events(), ws.anchors(), signals), sim));
    }
    if (ledgers.empty()) throw DataError("no test days with windows to trade");
    RunDir run(cfg, "backtest");
    run.write("ledger.csv", ledger_csv(ledgers));
    run.write("cumulative.csv", cumulative_csv(ledgers));
    json details;
    double total = 0.0;
    std::size_t trades = 0;
    for (const auto& l : ledgers) {
        total += l.profit();
        trades += l.trades.size();
    }
    std::printf("%zu days, %zu trades, total profit %.6g\n", ledgers.size(), trades, total);
    details = {{"days", ledgers.size()}, {"trades", trades}, {"profit", total}};
    try {
        const DailyStats st = daily_stats(ledgers);
        run.write("daily.csv", daily_csv(st));
        std::printf("normalised daily profit mean %.6g, t = %.4g over %zu days\n", st.mean, st.t_stat, st.observations);
        details["t_stat"] = std::isfinite(st.t_stat) ? json(st.t_stat) : json(st.t_stat > 0 ? "inf" : "-inf");
    } catch (const ArgumentError& e) {
        std::fprintf(stderr, "note: %s; no t-statistic\n", e.what());
    }
    run.finish(details);
    return kOk;
}

template <typename T>
int cmd_explain(const RunConfig& cfg, const Common& common, const std::string& checkpoint, bool convert) {
    const auto ck = load_model_checkpoint<T>(checkpoint, convert);
    const int k = checkpoint_horizon(ck.meta, common);
    const PreparedData data = prepare_data(cfg);
    const auto h = horizon_data(data.days, run_split(cfg, data.days.size()), k);
    if (cfg.explain.day >= h->test_ws.size()) throw ConfigError("explain.day is beyond the test days");
    const WindowSet& ws = h->test_ws[cfg.explain.day];
    if (cfg.explain.anchor >= ws.size()) throw ConfigError("explain.anchor is beyond the windows of that day");
    const DeepLob<T> model = DeepLob<T>::from_params(ck.config, ck.params);
    const LabelledWindow w = ws.materialize(cfg.explain.anchor);
    const ProbFn prob = model_prob_fn(model);
    Tensor<double> x({1, 1, w.input.dim(0), w.input.dim(1)});
    std::copy(w.input.vec().begin(), w.input.vec().end(), x.data());
    const Tensor<double> p = prob(x);
    const int cls = argmax_row(p, 0);

    ExplainOptions opt;
    opt.n_samples = cfg.explain.n_samples;
    opt.seed = cfg.explain.seed;
    opt.grid.time = w.input.dim(0);
    opt.grid.features = w.input.dim(1);
    const Explanation e = explain(prob, w.input, cls, opt);

    RunDir run(cfg, "explain");
    render_heatmap(e, run.path("attribution.csv"), run.path("attribution.ppm"));
    run.record("attribution.csv");
    run.record("attribution.ppm");
    auto tile_json = [&](std::size_t tile) {
        const std::size_t r = tile / e.grid.cols(), c = tile % e.grid.cols();
        return json{{"tile", tile},
                    {"time_from", r * e.grid.tile_time},
                    {"time_to", (r + 1) * e.grid.tile_time - 1},
                    {"feature_from", c * e.grid.tile_features},
                    {"feature_to", (c + 1) * e.grid.tile_features - 1},
                    {"weight", e.weights[tile]}};
    };
    json j{{"day", ws.day().day_id},
           {"anchor_t", w.anchor_t},
           {"predicted_class", cls - 1},
           {"true_label", w.labels.at(k)},
           {"probability", e.base_probability},
           {"r2", e.r2},
           {"intercept", e.intercept},
           {"top_positive", json::array()},
           {"top_negative", json::array()}};
    for (auto t : e.top_positive) j["top_positive"].push_back(tile_json(t));
    for (auto t : e.top_negative) j["top_negative"].push_back(tile_json(t));
    run.write("explanation.json", j.dump(2) + "\n");
    run.finish();
    std::printf("explained %s t=%zu: class %d with p=%.4f, surrogate R^2 %.3f\n", ws.day().day_id.c_str(), w.anchor_t, cls - 1,
                e.base_probability, e.r2);
    return kOk;
}

template <typename T>
int cmd_bench(const RunConfig& cfg, const std::string& checkpoint, bool convert) {
    DeepLob<T> model = DeepLob<T>::build(cfg.model, cfg.model_seed);
    if (!checkpoint.empty()) {
        const auto ck = load_model_checkpoint<T>(checkpoint, convert);
        model = DeepLob<T>::from_params(ck.config, ck.params);
    }
    const BenchReport rep = bench_forward(model, cfg.bench.batch_sizes, cfg.bench.reps);
    std::printf("parameters: %zu\n%6s %12s %12s %12s\n", rep.parameters, "batch", "median ms", "p99 ms", "mean ms");
    for (const auto& s : rep.runs) std::printf("%6zu %12.4f %12.4f %12.4f\n", s.batch, s.median_ms, s.p99_ms, s.mean_ms);
    RunDir run(cfg, "bench");
    run.write("bench.json", to_json(rep).dump(2) + "\n");
    run.finish();
    return kOk;
}

template <typename Fn>
int dispatch_precision(const RunConfig& cfg, Fn&& fn) {
    if (cfg.precision == "float64") return fn(double{});
    return fn(float{});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DeepLOB limit order book pipeline"};
    app.footer(kExitHelp);
    app.require_subcommand(1);
    app.set_version_flag("--version", code_version());

    Common common;
    std::string checkpoint, input, variant = "ZScore";
    std::size_t fold = 0;
    bool convert = false;

    auto* synth = app.add_subcommand("synth", "Generate synthetic order book days (.lob)");
    auto* ingest = app.add_subcommand("ingest", "Convert FI-2010 text files to .lob days");
    auto* label = app.add_subcommand("label", "Recompute smoothed labels for .lob days");
    auto* trn = app.add_subcommand("train", "Train one model per horizon");
    auto* eval = app.add_subcommand("evaluate", "Run an evaluation protocol, or score a checkpoint on the test days");
    auto* backtest = app.add_subcommand("backtest", "Trading simulation driven by a checkpoint");
    auto* expl = app.add_subcommand("explain", "LIME attribution for one test window");
    auto* bench = app.add_subcommand("bench", "Forward-pass latency");
    for (auto* c : {synth, ingest, label, trn, eval, backtest, expl, bench}) add_common(c, common);

    ingest->add_option("--input", input, "FI-2010 directory")->required();
    ingest->add_option("--variant", variant, "Normalisation variant in the file names")->check(CLI::IsMember({"ZScore", "MinMax", "DecPre"}));
    trn->add_option("--fold", fold, "Setup 1 fold (1..9, default last)");
    for (auto* c : {eval, backtest, expl, bench}) c->add_option("--checkpoint", checkpoint, "Model checkpoint (.dlck)");
    for (auto* c : {backtest, expl}) c->get_option("--checkpoint")->required();
    for (auto* c : {eval, backtest, expl, bench}) c->add_flag("--convert-precision", convert, "Allow loading a checkpoint of the other precision");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        const RunConfig cfg = resolve(common);
        if (*synth) return cmd_synth(cfg);
        if (*ingest) return cmd_ingest(cfg, input, variant);
        if (*label) return cmd_label(cfg);
        return dispatch_precision(cfg, [&](auto tag) -> int {
            using T = decltype(tag);
            if (*trn) return cmd_train<T>(cfg, fold);
            if (*eval) return cmd_evaluate<T>(cfg, common, checkpoint, convert);
            if (*backtest) return cmd_backtest<T>(cfg, common, checkpoint, convert);
            if (*expl) return cmd_explain<T>(cfg, common, checkpoint, convert);
            return cmd_bench<T>(cfg, checkpoint, convert);
        });
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const ArgumentError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kUsage;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return kIo;
    } catch (const CheckpointError& e) {
        std::fprintf(stderr, "checkpoint error: %s\n", e.what());
        return kIo;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "diverged: %s\n", e.what());
        return kDivergence;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kData;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kData;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kData;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return kIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntime;
    }
}
