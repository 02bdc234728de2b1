#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "deeplob/error.hpp"
#include "deeplob/tensor.hpp"

namespace deeplob {

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> value;

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Ordered set of named tensors; order is part of the checkpoint contract.
template <typename T>
using ParamList = std::vector<NamedTensor<T>>;

template <typename T>
std::size_t parameter_count(const ParamList<T>& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
}

template <typename T>
ParamList<T> zeros_like(const ParamList<T>& params) {
    ParamList<T> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back({p.name, Tensor<T>(p.value.shape())});
    return out;
}

struct AdamConfig {
    double learning_rate = 0.01;
    double epsilon = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
};

template <typename T>
struct AdamState {
    std::uint64_t step = 0;
    ParamList<T> first_moment;
    ParamList<T> second_moment;

    static AdamState for_params(const ParamList<T>& params) {
        return {0, zeros_like(params), zeros_like(params)};
    }

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Bias-corrected ADAM update, in place.
template <typename T>
void adam_step(ParamList<T>& params, const ParamList<T>& grads, AdamState<T>& state, const AdamConfig& cfg = {}) {
    if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size()) {
        throw ShapeError("adam: parameter/gradient/state counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i].value.require_same_shape(grads[i].value, "adam grad");
        params[i].value.require_same_shape(state.first_moment[i].value, "adam m");
        params[i].value.require_same_shape(state.second_moment[i].value, "adam v");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
    const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
    const T lr = static_cast<T>(cfg.learning_rate), eps = static_cast<T>(cfg.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
        T* p = params[i].value.data();
        const T* g = grads[i].value.data();
        T* m = state.first_moment[i].value.data();
        T* v = state.second_moment[i].value.data();
        const std::size_t n = params[i].value.size();
        for (std::size_t j = 0; j < n; ++j) {
            m[j] = b1 * m[j] + (T(1) - b1) * g[j];
            v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
            const T m_hat = m[j] / c1;
            const T v_hat = v[j] / c2;
            p[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

}  // namespace deeplob
