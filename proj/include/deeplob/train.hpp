#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deeplob/adam.hpp"
#include "deeplob/data.hpp"
#include "deeplob/error.hpp"
#include "deeplob/model.hpp"
#include "deeplob/parallel.hpp"

namespace deeplob {

struct TrainConfig {
    std::size_t max_epochs = 200;
    std::size_t patience = 20;
    std::size_t batch_size = 32;
    std::size_t max_train_windows = 0;     // windows drawn per epoch, 0 = all
    std::size_t max_val_windows = 0;       // evenly thinned validation set, 0 = all
    std::optional<double> target_val_acc;  // stop as soon as validation accuracy reaches this
    AdamConfig adam;
    std::uint64_t seed = 1;
    std::size_t threads = 0;  // 0 = default_threads()

    void validate() const {
        if (max_epochs < 1) throw ConfigError("training: max_epochs must be >= 1");
        if (patience < 1) throw ConfigError("training: patience must be >= 1");
        if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
        if (!(adam.learning_rate > 0.0) || !(adam.epsilon > 0.0)) throw ConfigError("training: lr and epsilon must be > 0");
        if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
            throw ConfigError("training: ADAM betas must be in [0,1)");
        }
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

template <typename T>
struct TrainResult {
    DeepLob<T> model;      // parameters of the best validation epoch
    AdamState<T> adam;     // optimizer state at that epoch
    std::string rng_state;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_acc = -1.0;
    std::string stop_reason;
};

// Class probabilities [N,3] for every sample, evaluated in fixed blocks so
// the result does not depend on the thread count.
template <typename T>
Tensor<T> predict_probs(const DeepLob<T>& model, const SampleSet& set, std::size_t threads = 0,
                        std::size_t block = 64) {
    if (set.empty()) throw ArgumentError("predict: empty sample set");
    const std::size_t classes = model.config().classes;
    Tensor<T> out({set.size(), classes});
    const std::size_t n_blocks = (set.size() + block - 1) / block;
    parallel_for(n_blocks, threads ? threads : default_threads(), [&](std::size_t b) {
        const std::size_t lo = b * block, hi = std::min(set.size(), lo + block);
        std::vector<std::size_t> idx(hi - lo);
        std::iota(idx.begin(), idx.end(), lo);
        const Tensor<T> p = model.forward(set.batch<T>(idx));
        std::copy(p.vec().begin(), p.vec().end(), out.data() + lo * classes);
    });
    return out;
}

template <typename T>
int argmax_row(const Tensor<T>& probs, std::size_t i) {
    const std::size_t c = probs.dim(1);
    int best = 0;
    for (std::size_t k = 1; k < c; ++k) {
        if (probs[i * c + k] > probs[i * c + static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    }
    return best;
}

template <typename T>
double accuracy(const DeepLob<T>& model, const SampleSet& set, std::size_t threads = 0) {
    const Tensor<T> p = predict_probs(model, set, threads);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < set.size(); ++i) hit += argmax_row(p, i) == set.target(i);
    return static_cast<double>(hit) / static_cast<double>(set.size());
}

// Mini-batch ADAM with early stopping on validation accuracy.
template <typename T>
TrainResult<T> train(DeepLob<T> model, const SampleSet& train_set, const SampleSet& val_set, const TrainConfig& cfg,
                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    cfg.validate();
    if (train_set.empty()) throw ArgumentError("training: empty training set");
    if (val_set.empty()) throw ArgumentError("training: empty validation set");
    const std::size_t threads = cfg.threads ? cfg.threads : default_threads();
    const SampleSet val = val_set.thinned(cfg.max_val_windows);

    Rng rng(cfg.seed);
    AdamState<T> adam = AdamState<T>::for_params(model.params());
    TrainResult<T> result;
    result.model = model;
    result.adam = adam;
    result.rng_state = rng.state();

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t per_epoch =
        cfg.max_train_windows ? std::min(cfg.max_train_windows, train_set.size()) : train_set.size();

    // Each batch is cut into fixed shards; shard gradients are combined in
    // shard order, so results are bitwise identical for any thread count.
    constexpr std::size_t kShard = 8;
    const std::size_t bs = cfg.batch_size;
    const std::size_t max_shards = (bs + kShard - 1) / kShard;
    std::vector<ParamList<T>> shard_grads(max_shards);
    std::vector<double> shard_loss(max_shards);
    std::vector<std::size_t> shard_hits(max_shards);

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        std::size_t hits = 0;
        for (std::size_t start = 0; start < per_epoch; start += bs) {
            const std::size_t n = std::min(bs, per_epoch - start);
            const std::size_t n_shards = (n + kShard - 1) / kShard;
            parallel_for(n_shards, threads, [&](std::size_t s) {
                const std::size_t lo = start + s * kShard, hi = std::min(start + n, lo + kShard);
                const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
                std::vector<int> y(idx.size());
                for (std::size_t j = 0; j < idx.size(); ++j) y[j] = train_set.target(idx[j]);
                auto lg = model.loss_and_grad(train_set.batch<T>(idx), y);
                // loss_and_grad averages over the shard; reweight to the batch
                const T w = static_cast<T>(idx.size()) / static_cast<T>(n);
                for (auto& g : lg.grads) {
                    for (auto& v : g.value.vec()) v *= w;
                }
                shard_loss[s] = static_cast<double>(lg.loss) * static_cast<double>(idx.size());
                std::size_t h = 0;
                for (std::size_t j = 0; j < idx.size(); ++j) h += argmax_row(lg.probs, j) == y[j];
                shard_hits[s] = h;
                shard_grads[s] = std::move(lg.grads);
            });
            ParamList<T> grad = std::move(shard_grads[0]);
            for (std::size_t s = 1; s < n_shards; ++s) {
                for (std::size_t p = 0; p < grad.size(); ++p) grad[p].value += shard_grads[s][p].value;
            }
            double batch_loss = 0.0;
            for (std::size_t s = 0; s < n_shards; ++s) {
                batch_loss += shard_loss[s];
                hits += shard_hits[s];
            }
            if (!std::isfinite(batch_loss)) {
                throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                      ", batch starting at sample " + std::to_string(start) +
                                      "; lower the learning rate or check the input normalisation");
            }
            loss_sum += batch_loss;
            adam_step(model.params(), grad, adam, cfg.adam);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(per_epoch);
        rec.train_acc = static_cast<double>(hits) / static_cast<double>(per_epoch);
        rec.val_acc = accuracy(model, val, threads);
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (rec.val_acc > result.best_val_acc) {  // ties keep the earlier epoch
            result.best_val_acc = rec.val_acc;
            result.best_epoch = epoch;
            result.model = model;
            result.adam = adam;
            result.rng_state = rng.state();
        }
        if (cfg.target_val_acc && rec.val_acc >= *cfg.target_val_acc) {
            result.stop_reason = "target validation accuracy reached";
            break;
        }
        if (epoch - result.best_epoch >= cfg.patience) {
            result.stop_reason = "no validation improvement for " + std::to_string(cfg.patience) + " epochs";
            break;
        }
        if (epoch == cfg.max_epochs) result.stop_reason = "epoch limit reached";
    }
    return result;
}

inline std::string history_csv(const std::vector<EpochRecord>& history) {
    std::string out = "epoch,train_loss,train_acc,val_acc\n";
    char line[128];
    for (const auto& r : history) {
        std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g\n", r.epoch, r.train_loss, r.train_acc, r.val_acc);
        out += line;
    }
    return out;
}

inline void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot create " + path.string());
    out << history_csv(history);
}

}  // namespace deeplob
