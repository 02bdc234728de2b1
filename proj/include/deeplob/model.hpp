#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "deeplob/adam.hpp"
#include "deeplob/error.hpp"
#include "deeplob/layers.hpp"
#include "deeplob/tensor.hpp"

namespace deeplob {

struct DeepLobConfig {
    std::size_t input_time = 100;
    std::size_t input_features = 40;
    std::size_t conv_width = 16;
    std::size_t inception_width = 32;
    std::size_t lstm_hidden = 64;
    double leaky_slope = 0.01;
    std::size_t temporal_kernel = 4;
    std::size_t classes = 3;

    void validate() const {
        if (input_time < 1 || conv_width < 1 || inception_width < 1 || lstm_hidden < 1 || classes < 2 ||
            temporal_kernel < 1) {
            throw ArgumentError("model config: widths must be >= 1 and classes >= 2");
        }
        // Two (1x2, stride 2) reductions followed by a full-width filter.
        if (input_features < 4 || input_features % 4 != 0) {
            throw ArgumentError("model config: input features must be a positive multiple of 4, got " +
                                std::to_string(input_features));
        }
        if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ArgumentError("model config: leaky slope outside [0,1)");
    }

    friend bool operator==(const DeepLobConfig&, const DeepLobConfig&) = default;
};

// Indices into the conv table; each conv is followed by a leaky ReLU.
enum ConvSlot : std::size_t {
    kB1Spatial, kB1Temporal1, kB1Temporal2,
    kB2Spatial, kB2Temporal1, kB2Temporal2,
    kB3Spatial, kB3Temporal1, kB3Temporal2,
    kIncA1, kIncA2, kIncB1, kIncB2, kIncC1,
    kConvCount
};

inline constexpr std::array<const char*, kConvCount> kConvNames = {
    "block1.conv1", "block1.conv2", "block1.conv3", "block2.conv1", "block2.conv2", "block2.conv3",
    "block3.conv1", "block3.conv2", "block3.conv3", "inception.3x1.reduce", "inception.3x1.conv",
    "inception.5x1.reduce", "inception.5x1.conv", "inception.pool.conv"};

// Parameter list indices after the convs (2 tensors per conv).
inline constexpr std::size_t kLstmInput = 2 * kConvCount;
inline constexpr std::size_t kLstmRecurrent = kLstmInput + 1;
inline constexpr std::size_t kLstmBias = kLstmInput + 2;
inline constexpr std::size_t kDenseWeight = kLstmInput + 3;
inline constexpr std::size_t kDenseBias = kLstmInput + 4;
inline constexpr std::size_t kParamTensorCount = kLstmInput + 5;

inline std::array<ConvSpec, kConvCount> conv_plan(const DeepLobConfig& c) {
    c.validate();
    const std::size_t w = c.conv_width, iw = c.inception_width, k = c.temporal_kernel;
    std::array<ConvSpec, kConvCount> s{};
    s[kB1Spatial] = ConvSpec::same_in_time(1, w, 1, 2, 1, 2);
    s[kB1Temporal1] = ConvSpec::same_in_time(w, w, k, 1);
    s[kB1Temporal2] = ConvSpec::same_in_time(w, w, k, 1);
    s[kB2Spatial] = ConvSpec::same_in_time(w, w, 1, 2, 1, 2);
    s[kB2Temporal1] = ConvSpec::same_in_time(w, w, k, 1);
    s[kB2Temporal2] = ConvSpec::same_in_time(w, w, k, 1);
    s[kB3Spatial] = ConvSpec::same_in_time(w, w, 1, c.input_features / 4);
    s[kB3Temporal1] = ConvSpec::same_in_time(w, w, k, 1);
    s[kB3Temporal2] = ConvSpec::same_in_time(w, w, k, 1);
    s[kIncA1] = ConvSpec::same_in_time(w, iw, 1, 1);
    s[kIncA2] = ConvSpec::same_in_time(iw, iw, 3, 1);
    s[kIncB1] = ConvSpec::same_in_time(w, iw, 1, 1);
    s[kIncB2] = ConvSpec::same_in_time(iw, iw, 5, 1);
    s[kIncC1] = ConvSpec::same_in_time(w, iw, 1, 1);
    return s;
}

inline LstmSpec lstm_plan(const DeepLobConfig& c) { return {3 * c.inception_width, c.lstm_hidden}; }

inline std::size_t expected_parameter_count(const DeepLobConfig& c) {
    std::size_t n = 0;
    for (const auto& s : conv_plan(c)) n += s.parameter_count();
    n += lstm_plan(c).parameter_count();
    n += c.lstm_hidden * c.classes + c.classes;
    return n;
}

// Activations kept from the forward pass for backpropagation.
template <typename T>
struct ForwardCache {
    std::array<Tensor<T>, kConvCount> conv_in;
    std::array<Tensor<T>, kConvCount> conv_out;  // pre-activation
    PoolResult<T> pool;
    Tensor<T> concat;  // [N,3*iw,T,1]
    LstmCache<T> lstm;
    Tensor<T> last_hidden;  // [N,H]
    Tensor<T> logits;
};

using ShapeTrace = std::vector<std::pair<std::string, Shape>>;

template <typename T>
class DeepLob {
public:
    DeepLob() = default;

    // Glorot-uniform weights, zero biases, forget-gate bias 1.
    static DeepLob build(const DeepLobConfig& cfg, std::uint64_t seed) {
        DeepLob m;
        m.cfg_ = cfg;
        m.specs_ = conv_plan(cfg);
        m.lstm_spec_ = lstm_plan(cfg);
        Rng rng(seed);
        auto glorot = [&rng](const Shape& shape, std::size_t fan_in, std::size_t fan_out) {
            Tensor<T> t(shape);
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            for (auto& v : t.vec()) v = static_cast<T>(rng.uniform(-limit, limit));
            return t;
        };
        for (std::size_t i = 0; i < kConvCount; ++i) {
            const ConvSpec& s = m.specs_[i];
            const std::size_t field = s.kernel_h * s.kernel_w;
            const std::string name = kConvNames[i];
            m.params_.push_back({name + ".weight", glorot(s.weight_shape(), s.in_channels * field, s.out_channels * field)});
            m.params_.push_back({name + ".bias", Tensor<T>(s.bias_shape())});
        }
        const LstmSpec& ls = m.lstm_spec_;
        m.params_.push_back({"lstm.w_input", glorot(ls.input_weight_shape(), ls.input_size, 4 * ls.hidden_size)});
        m.params_.push_back({"lstm.w_recurrent", glorot(ls.recurrent_weight_shape(), ls.hidden_size, 4 * ls.hidden_size)});
        Tensor<T> lstm_bias(ls.bias_shape());
        for (std::size_t k = 0; k < ls.hidden_size; ++k) lstm_bias[ls.hidden_size + k] = T(1);
        m.params_.push_back({"lstm.bias", std::move(lstm_bias)});
        m.params_.push_back({"dense.weight", glorot({cfg.lstm_hidden, cfg.classes}, cfg.lstm_hidden, cfg.classes)});
        m.params_.push_back({"dense.bias", Tensor<T>({cfg.classes})});
        return m;
    }

    // Wraps an existing parameter list (e.g. from a checkpoint) after checking shapes.
    static DeepLob from_params(const DeepLobConfig& cfg, ParamList<T> params) {
        DeepLob m = build(cfg, 0);
        if (params.size() != m.params_.size()) throw ShapeError("parameter tensor count does not match model plan");
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i].name != m.params_[i].name || params[i].value.shape() != m.params_[i].value.shape()) {
                throw ShapeError("parameter '" + params[i].name + "' does not match model plan entry '" +
                                 m.params_[i].name + "' " + shape_str(m.params_[i].value.shape()));
            }
        }
        m.params_ = std::move(params);
        return m;
    }

    const DeepLobConfig& config() const { return cfg_; }
    const ParamList<T>& params() const { return params_; }
    ParamList<T>& params() { return params_; }
    const std::array<ConvSpec, kConvCount>& conv_specs() const { return specs_; }
    const LstmSpec& lstm_spec() const { return lstm_spec_; }
    std::size_t parameter_count() const { return deeplob::parameter_count(params_); }

    Tensor<T>& conv_weight(std::size_t slot) { return params_[2 * slot].value; }
    Tensor<T>& conv_bias(std::size_t slot) { return params_[2 * slot + 1].value; }

    // x: [N,1,T,F]. Returns logits [N,classes].
    Tensor<T> logits(const Tensor<T>& x, ForwardCache<T>* cache = nullptr, ShapeTrace* trace = nullptr) const {
        if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg_.input_time || x.dim(3) != cfg_.input_features) {
            throw ShapeError("model input must be [N,1," + std::to_string(cfg_.input_time) + "," +
                             std::to_string(cfg_.input_features) + "], got " + shape_str(x.shape()));
        }
        ForwardCache<T> local;
        ForwardCache<T>& c = cache ? *cache : local;
        const T slope = static_cast<T>(cfg_.leaky_slope);
        auto record = [&](const char* what, const Tensor<T>& t) {
            if (trace) trace->emplace_back(what, t.shape());
        };
        auto conv_act = [&](std::size_t slot, const Tensor<T>& in) {
            c.conv_in[slot] = in;
            c.conv_out[slot] = conv2d_forward(in, specs_[slot], params_[2 * slot].value, params_[2 * slot + 1].value);
            Tensor<T> out = leaky_relu(c.conv_out[slot], slope);
            record(kConvNames[slot], out);
            return out;
        };

        record("input", x);
        Tensor<T> h = x;
        for (std::size_t slot = kB1Spatial; slot <= kB3Temporal2; ++slot) h = conv_act(slot, h);

        Tensor<T> a = conv_act(kIncA2, conv_act(kIncA1, h));
        Tensor<T> b = conv_act(kIncB2, conv_act(kIncB1, h));
        c.pool = maxpool_time(h, 3);
        record("inception.pool", c.pool.y);
        Tensor<T> p = conv_act(kIncC1, c.pool.y);
        c.concat = concat_channels<T>({&a, &b, &p});
        record("inception.concat", c.concat);

        // [N,C,T,1] -> [N,T,C]
        const std::size_t n = x.dim(0), ch = c.concat.dim(1), t_len = c.concat.dim(2);
        Tensor<T> seq({n, t_len, ch});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < ch; ++k)
                for (std::size_t t = 0; t < t_len; ++t) seq[(i * t_len + t) * ch + k] = c.concat[(i * ch + k) * t_len + t];
        record("lstm.input", seq);

        const Tensor<T> hidden = lstm_forward(seq, lstm_spec_, lstm_params(), &c.lstm);
        record("lstm.hidden", hidden);
        const std::size_t hs = lstm_spec_.hidden_size;
        c.last_hidden = Tensor<T>({n, hs});
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(hidden.data() + (i * t_len + t_len - 1) * hs, hs, c.last_hidden.data() + i * hs);
        }
        c.logits = dense_forward(c.last_hidden, params_[kDenseWeight].value, params_[kDenseBias].value);
        record("logits", c.logits);
        return c.logits;
    }

    Tensor<T> forward(const Tensor<T>& x, ShapeTrace* trace = nullptr) const {
        Tensor<T> p = softmax(logits(x, nullptr, trace));
        if (trace) trace->emplace_back("softmax", p.shape());
        return p;
    }

    // Gradient of a loss w.r.t. all parameters given dL/dlogits.
    ParamList<T> backward(const ForwardCache<T>& c, const Tensor<T>& dlogits) const {
        ParamList<T> g = zeros_like(params_);
        const T slope = static_cast<T>(cfg_.leaky_slope);

        auto dense = dense_backward(c.last_hidden, params_[kDenseWeight].value, dlogits);
        g[kDenseWeight].value = std::move(dense.dw);
        g[kDenseBias].value = std::move(dense.db);

        const std::size_t n = c.last_hidden.dim(0), hs = lstm_spec_.hidden_size, t_len = c.lstm.x.dim(1);
        Tensor<T> dh(c.lstm.hidden.shape());
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(dense.dx.data() + i * hs, hs, dh.data() + (i * t_len + t_len - 1) * hs);
        }
        auto lg = lstm_backward(c.lstm, lstm_spec_, lstm_params(), dh);
        g[kLstmInput].value = std::move(lg.dparams.w_input);
        g[kLstmRecurrent].value = std::move(lg.dparams.w_recurrent);
        g[kLstmBias].value = std::move(lg.dparams.bias);

        const std::size_t ch = c.concat.dim(1);
        Tensor<T> dcat(c.concat.shape());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < ch; ++k)
                for (std::size_t t = 0; t < t_len; ++t) dcat[(i * ch + k) * t_len + t] = lg.dx[(i * t_len + t) * ch + k];
        const std::size_t iw = cfg_.inception_width;
        auto parts = split_channels(dcat, {iw, iw, iw});

        auto conv_back = [&](std::size_t slot, const Tensor<T>& dy, bool need_dx) {
            const Tensor<T> dz = leaky_relu_backward(c.conv_out[slot], dy, slope);
            auto cg = conv2d_backward(c.conv_in[slot], specs_[slot], params_[2 * slot].value, dz, need_dx);
            g[2 * slot].value = std::move(cg.dw);
            g[2 * slot + 1].value = std::move(cg.db);
            return std::move(cg.dx);
        };

        Tensor<T> du = conv_back(kIncA1, conv_back(kIncA2, parts[0], true), true);
        du += conv_back(kIncB1, conv_back(kIncB2, parts[1], true), true);
        du += maxpool_time_backward(c.pool, conv_back(kIncC1, parts[2], true));

        for (std::size_t slot = kB3Temporal2 + 1; slot-- > kB1Spatial;) {
            du = conv_back(slot, du, slot != kB1Spatial);
        }
        return g;
    }

    struct LossGrad {
        T loss;
        Tensor<T> probs;
        ParamList<T> grads;
    };

    LossGrad loss_and_grad(const Tensor<T>& x, const std::vector<int>& targets) const {
        ForwardCache<T> cache;
        const Tensor<T> z = logits(x, &cache);
        auto xe = softmax_xent(z, targets);
        return {xe.loss, std::move(xe.probs), backward(cache, xe.dlogits)};
    }

private:
    LstmParams<T> lstm_params() const {
        return {params_[kLstmInput].value, params_[kLstmRecurrent].value, params_[kLstmBias].value};
    }

    DeepLobConfig cfg_;
    std::array<ConvSpec, kConvCount> specs_{};
    LstmSpec lstm_spec_;
    ParamList<T> params_;
};

}  // namespace deeplob
