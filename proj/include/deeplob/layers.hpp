#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "deeplob/error.hpp"
#include "deeplob/tensor.hpp"

namespace deeplob {

namespace kernel {

// y[i] += a * x[i]
template <typename T>
inline void axpy(std::size_t n, T a, const T* __restrict x, T* __restrict y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Fixed 8-lane accumulation; the summation order depends only on n.
template <typename T>
inline T dot(std::size_t n, const T* __restrict a, const T* __restrict b) {
    T acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
    }
    T tail = T(0);
    for (; i < n; ++i) tail += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

template <typename T>
inline T sigmoid(T z) {
    return T(1) / (T(1) + std::exp(-z));
}

}  // namespace kernel

// 2-D convolution over (time, feature). Cross-correlation, no kernel flip.
struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_h = 1;  // time
    std::size_t kernel_w = 1;  // feature
    std::size_t stride_h = 1;
    std::size_t stride_w = 1;
    std::size_t pad_top = 0;
    std::size_t pad_bottom = 0;
    std::size_t pad_left = 0;
    std::size_t pad_right = 0;

    // Zero padding on the time axis only so T is preserved; an even kernel puts
    // the extra zero row at the start of the sequence.
    static ConvSpec same_in_time(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw,
                                 std::size_t sh = 1, std::size_t sw = 1) {
        ConvSpec s;
        s.in_channels = in;
        s.out_channels = out;
        s.kernel_h = kh;
        s.kernel_w = kw;
        s.stride_h = sh;
        s.stride_w = sw;
        s.pad_top = kh / 2;
        s.pad_bottom = kh - 1 - kh / 2;
        return s;
    }

    void validate() const {
        if (kernel_h < 1 || kernel_w < 1 || stride_h < 1 || stride_w < 1 || in_channels < 1 || out_channels < 1) {
            throw ArgumentError("conv spec: kernel, stride and channel counts must be >= 1");
        }
    }

    Shape weight_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }
    Shape bias_shape() const { return {out_channels}; }
    std::size_t parameter_count() const { return out_channels * in_channels * kernel_h * kernel_w + out_channels; }

    std::size_t out_time(std::size_t t) const {
        const std::size_t padded = t + pad_top + pad_bottom;
        if (padded < kernel_h) throw ShapeError("conv: time axis shorter than kernel");
        return (padded - kernel_h) / stride_h + 1;
    }
    std::size_t out_features(std::size_t f) const {
        const std::size_t padded = f + pad_left + pad_right;
        if (padded < kernel_w) throw ShapeError("conv: feature axis shorter than kernel");
        return (padded - kernel_w) / stride_w + 1;
    }
};

namespace detail {

struct ConvGeometry {
    std::size_t n, c, t, f, o, to, fo;
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const ConvSpec& s, const Tensor<T>& w, const Tensor<T>& b) {
    s.validate();
    if (x.rank() != 4) throw ShapeError("conv: input must be [N,C,T,F], got " + shape_str(x.shape()));
    if (x.dim(1) != s.in_channels) throw ShapeError("conv: input channels " + std::to_string(x.dim(1)) +
                                                    " != spec " + std::to_string(s.in_channels));
    if (w.shape() != s.weight_shape()) throw ShapeError("conv: weight shape " + shape_str(w.shape()) +
                                                        " != " + shape_str(s.weight_shape()));
    if (b.shape() != s.bias_shape()) throw ShapeError("conv: bias shape " + shape_str(b.shape()));
    return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), s.out_channels, s.out_time(x.dim(2)), s.out_features(x.dim(3))};
}

// Valid output range [lo, hi) along one axis for kernel offset k.
inline void valid_range(std::size_t in_len, std::size_t out_len, std::size_t stride, std::size_t pad, std::size_t k,
                        std::size_t& lo, std::size_t& hi) {
    // in = out*stride + k - pad must be within [0, in_len)
    const long long shift = static_cast<long long>(k) - static_cast<long long>(pad);
    long long l = 0;
    if (shift < 0) l = (-shift + static_cast<long long>(stride) - 1) / static_cast<long long>(stride);
    long long h = 0;
    const long long limit = static_cast<long long>(in_len) - shift;  // out*stride < limit
    if (limit > 0) h = (limit + static_cast<long long>(stride) - 1) / static_cast<long long>(stride);
    h = std::min<long long>(h, static_cast<long long>(out_len));
    lo = static_cast<std::size_t>(std::max<long long>(l, 0));
    hi = static_cast<std::size_t>(std::max<long long>(h, static_cast<long long>(lo)));
}

// Patch matrix, row-major [C*KH*KW, TO*FO]: row (c, kh, kw) holds the input
// value each output position sees through that tap (0 in the padding).
template <typename T>
void im2col(const T* xp, const ConvGeometry& g, const ConvSpec& s, T* cols) {
    const std::size_t plane = g.to * g.fo;
    for (std::size_t c = 0; c < g.c; ++c) {
        const T* xc = xp + c * g.t * g.f;
        for (std::size_t kh = 0; kh < s.kernel_h; ++kh) {
            std::size_t t_lo, t_hi;
            valid_range(g.t, g.to, s.stride_h, s.pad_top, kh, t_lo, t_hi);
            for (std::size_t kw = 0; kw < s.kernel_w; ++kw) {
                T* row = cols + ((c * s.kernel_h + kh) * s.kernel_w + kw) * plane;
                std::size_t f_lo, f_hi;
                valid_range(g.f, g.fo, s.stride_w, s.pad_left, kw, f_lo, f_hi);
                std::fill(row, row + t_lo * g.fo, T(0));
                std::fill(row + t_hi * g.fo, row + plane, T(0));
                if (s.stride_w == 1 && s.stride_h == 1 && f_lo == 0 && f_hi == g.fo && g.fo == g.f) {
                    // whole rows are contiguous in the input
                    const std::size_t ti = t_lo + kh - s.pad_top;
                    std::copy_n(xc + ti * g.f, (t_hi - t_lo) * g.f, row + t_lo * g.fo);
                    continue;
                }
                for (std::size_t to = t_lo; to < t_hi; ++to) {
                    const T* xr = xc + (to * s.stride_h + kh - s.pad_top) * g.f;
                    T* out = row + to * g.fo;
                    std::fill(out, out + f_lo, T(0));
                    std::fill(out + f_hi, out + g.fo, T(0));
                    for (std::size_t fo = f_lo; fo < f_hi; ++fo) out[fo] = xr[fo * s.stride_w + kw - s.pad_left];
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, const ConvSpec& s, T* dxp) {
    const std::size_t plane = g.to * g.fo;
    for (std::size_t c = 0; c < g.c; ++c) {
        T* dxc = dxp + c * g.t * g.f;
        for (std::size_t kh = 0; kh < s.kernel_h; ++kh) {
            std::size_t t_lo, t_hi;
            valid_range(g.t, g.to, s.stride_h, s.pad_top, kh, t_lo, t_hi);
            for (std::size_t kw = 0; kw < s.kernel_w; ++kw) {
                const T* row = cols + ((c * s.kernel_h + kh) * s.kernel_w + kw) * plane;
                std::size_t f_lo, f_hi;
                valid_range(g.f, g.fo, s.stride_w, s.pad_left, kw, f_lo, f_hi);
                for (std::size_t to = t_lo; to < t_hi; ++to) {
                    T* dxr = dxc + (to * s.stride_h + kh - s.pad_top) * g.f;
                    const T* in = row + to * g.fo;
                    for (std::size_t fo = f_lo; fo < f_hi; ++fo) dxr[fo * s.stride_w + kw - s.pad_left] += in[fo];
                }
            }
        }
    }
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

}  // namespace detail

// Per sample: Y[O, TO*FO] = W[O, C*KH*KW] * cols + b.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvSpec& s, const Tensor<T>& w, const Tensor<T>& b) {
    const auto g = detail::conv_geometry(x, s, w, b);
    Tensor<T> y({g.n, g.o, g.to, g.fo});
    const std::size_t in_sample = g.c * g.t * g.f;
    const std::size_t plane = g.to * g.fo;
    const std::size_t k_len = g.c * s.kernel_h * s.kernel_w;
    std::vector<T> cols(k_len * plane);
    const detail::CMapMat<T> wm(w.data(), static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(k_len));
    const detail::CMapMat<T> cm(cols.data(), static_cast<Eigen::Index>(k_len), static_cast<Eigen::Index>(plane));
    const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bv(b.data(), static_cast<Eigen::Index>(g.o));
    for (std::size_t n = 0; n < g.n; ++n) {
        detail::im2col(x.data() + n * in_sample, g, s, cols.data());
        detail::MapMat<T> ym(y.data() + n * g.o * plane, static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(plane));
        ym.noalias() = wm * cm;
        ym.colwise() += bv;
    }
    debug_check_finite(y, "conv2d_forward");
    return y;
}

template <typename T>
struct ConvGrads {
    Tensor<T> dx;
    Tensor<T> dw;
    Tensor<T> db;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvSpec& s, const Tensor<T>& w, const Tensor<T>& dy,
                             bool need_dx = true) {
    const Tensor<T> bias_probe(s.bias_shape());
    const auto g = detail::conv_geometry(x, s, w, bias_probe);
    if (dy.shape() != Shape{g.n, g.o, g.to, g.fo}) {
        throw ShapeError("conv backward: upstream gradient shape " + shape_str(dy.shape()));
    }
    ConvGrads<T> out{need_dx ? Tensor<T>(x.shape()) : Tensor<T>(), Tensor<T>(w.shape()), Tensor<T>(s.bias_shape())};
    const std::size_t in_sample = g.c * g.t * g.f;
    const std::size_t plane = g.to * g.fo;
    const std::size_t k_len = g.c * s.kernel_h * s.kernel_w;
    const auto O = static_cast<Eigen::Index>(g.o), K = static_cast<Eigen::Index>(k_len), P = static_cast<Eigen::Index>(plane);
    std::vector<T> cols(k_len * plane), dcols(need_dx ? k_len * plane : 0);
    const detail::CMapMat<T> wm(w.data(), O, K);
    const detail::CMapMat<T> cm(cols.data(), K, P);
    detail::MapMat<T> dwm(out.dw.data(), O, K);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dbv(out.db.data(), O);

    for (std::size_t n = 0; n < g.n; ++n) {
        const detail::CMapMat<T> gm(dy.data() + n * g.o * plane, O, P);
        dbv += gm.rowwise().sum();
        detail::im2col(x.data() + n * in_sample, g, s, cols.data());
        dwm.noalias() += gm * cm.transpose();
        if (need_dx) {
            detail::MapMat<T> dcm(dcols.data(), K, P);
            dcm.noalias() = wm.transpose() * gm;
            detail::col2im_add(dcols.data(), g, s, out.dx.data() + n * in_sample);
        }
    }
    return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.01)) {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
    return y;
}

// Subgradient at exactly 0 is `slope`.
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& dy, T slope = T(0.01)) {
    x.require_same_shape(dy, "leaky_relu_backward");
    Tensor<T> dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : slope * dy[i];
    return dx;
}

// Max over a window along time, stride 1, zero padded so T is preserved.
// Padding cells take part in the max with value 0 and receive no gradient.
template <typename T>
struct PoolResult {
    Tensor<T> y;
    std::vector<std::ptrdiff_t> argmax;  // flat input index, -1 when padding won
};

template <typename T>
PoolResult<T> maxpool_time(const Tensor<T>& x, std::size_t window = 3) {
    if (x.rank() != 4) throw ShapeError("maxpool: input must be [N,C,T,F]");
    if (window < 1) throw ArgumentError("maxpool: window must be >= 1");
    const std::size_t nc = x.dim(0) * x.dim(1), t_len = x.dim(2), f_len = x.dim(3);
    const std::size_t pad = window / 2;
    PoolResult<T> r{Tensor<T>(x.shape()), std::vector<std::ptrdiff_t>(x.size(), -1)};
    for (std::size_t p = 0; p < nc; ++p) {
        const std::size_t base = p * t_len * f_len;
        for (std::size_t t = 0; t < t_len; ++t) {
            for (std::size_t f = 0; f < f_len; ++f) {
                bool have = false;
                T best = T(0);
                std::ptrdiff_t arg = -1;
                // Candidates in increasing time; strict comparison keeps the earliest on ties.
                for (std::size_t k = 0; k < window; ++k) {
                    const long long ti = static_cast<long long>(t + k) - static_cast<long long>(pad);
                    const bool inside = ti >= 0 && ti < static_cast<long long>(t_len);
                    const T v = inside ? x[base + static_cast<std::size_t>(ti) * f_len + f] : T(0);
                    if (!have || v > best) {
                        have = true;
                        best = v;
                        arg = inside ? static_cast<std::ptrdiff_t>(base + static_cast<std::size_t>(ti) * f_len + f) : -1;
                    }
                }
                const std::size_t out = base + t * f_len + f;
                r.y[out] = best;
                r.argmax[out] = arg;
            }
        }
    }
    return r;
}

template <typename T>
Tensor<T> maxpool_time_backward(const PoolResult<T>& fwd, const Tensor<T>& dy) {
    fwd.y.require_same_shape(dy, "maxpool_backward");
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) {
        if (fwd.argmax[i] >= 0) dx[static_cast<std::size_t>(fwd.argmax[i])] += dy[i];
    }
    return dx;
}

// Concatenate [N,C_i,T,F] tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
    if (parts.empty()) throw ArgumentError("concat: no inputs");
    const std::size_t n = parts[0]->dim(0), t = parts[0]->dim(2), f = parts[0]->dim(3);
    std::size_t c_total = 0;
    for (const auto* p : parts) {
        if (p->rank() != 4 || p->dim(0) != n || p->dim(2) != t || p->dim(3) != f) {
            throw ShapeError("concat: incompatible shape " + shape_str(p->shape()));
        }
        c_total += p->dim(1);
    }
    Tensor<T> y({n, c_total, t, f});
    const std::size_t plane = t * f;
    for (std::size_t b = 0; b < n; ++b) {
        std::size_t c_off = 0;
        for (const auto* p : parts) {
            const std::size_t c = p->dim(1);
            std::copy_n(p->data() + b * c * plane, c * plane, y.data() + (b * c_total + c_off) * plane);
            c_off += c;
        }
    }
    return y;
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& dy, const std::vector<std::size_t>& channels) {
    const std::size_t n = dy.dim(0), c_total = dy.dim(1), plane = dy.dim(2) * dy.dim(3);
    std::vector<Tensor<T>> out;
    std::size_t c_off = 0;
    for (std::size_t c : channels) {
        Tensor<T> part({n, c, dy.dim(2), dy.dim(3)});
        for (std::size_t b = 0; b < n; ++b) {
            std::copy_n(dy.data() + (b * c_total + c_off) * plane, c * plane, part.data() + b * c * plane);
        }
        out.push_back(std::move(part));
        c_off += c;
    }
    if (c_off != c_total) throw ShapeError("split: channel counts do not sum to input");
    return out;
}

// Standard LSTM cell without peepholes. Gate blocks in the packed matrices
// are ordered (input, forget, candidate, output).
struct LstmSpec {
    std::size_t input_size = 0;
    std::size_t hidden_size = 64;

    Shape input_weight_shape() const { return {input_size, 4 * hidden_size}; }
    Shape recurrent_weight_shape() const { return {hidden_size, 4 * hidden_size}; }
    Shape bias_shape() const { return {4 * hidden_size}; }
    std::size_t parameter_count() const { return 4 * hidden_size * (input_size + hidden_size + 1); }
};

template <typename T>
struct LstmParams {
    Tensor<T> w_input;      // [D, 4H]
    Tensor<T> w_recurrent;  // [H, 4H]
    Tensor<T> bias;         // [4H]

    void check(const LstmSpec& s) const {
        if (w_input.shape() != s.input_weight_shape() || w_recurrent.shape() != s.recurrent_weight_shape() ||
            bias.shape() != s.bias_shape()) {
            throw ShapeError("lstm: parameter shapes inconsistent with spec");
        }
    }
};

template <typename T>
struct LstmCache {
    Tensor<T> x;      // [N,T,D]
    Tensor<T> gates;  // activated gates [N,T,4H]
    Tensor<T> cells;  // [N,T,H]
    Tensor<T> hidden; // [N,T,H]
};

template <typename T>
Tensor<T> lstm_forward(const Tensor<T>& x, const LstmSpec& s, const LstmParams<T>& p, LstmCache<T>* cache = nullptr) {
    p.check(s);
    if (x.rank() != 3 || x.dim(2) != s.input_size) {
        throw ShapeError("lstm: input must be [N,T," + std::to_string(s.input_size) + "], got " + shape_str(x.shape()));
    }
    using Index = Eigen::Index;
    const std::size_t n_len = x.dim(0), t_len = x.dim(1), d_len = x.dim(2), h_len = s.hidden_size, g_len = 4 * h_len;
    Tensor<T> gates({n_len, t_len, g_len});
    Tensor<T> cells({n_len, t_len, h_len});
    Tensor<T> hidden({n_len, t_len, h_len});
    const auto N = static_cast<Index>(n_len), H = static_cast<Index>(h_len), G = static_cast<Index>(g_len);
    using Strided = Eigen::Map<detail::RowMat<T>, 0, Eigen::OuterStride<>>;
    using CStrided = Eigen::Map<const detail::RowMat<T>, 0, Eigen::OuterStride<>>;

    // Input projection for every (sample, step) at once.
    detail::MapMat<T> z_all(gates.data(), static_cast<Index>(n_len * t_len), G);
    z_all.noalias() = detail::CMapMat<T>(x.data(), static_cast<Index>(n_len * t_len), static_cast<Index>(d_len)) *
                      detail::CMapMat<T>(p.w_input.data(), static_cast<Index>(d_len), G);
    z_all.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(p.bias.data(), G);
    const detail::CMapMat<T> w_rec(p.w_recurrent.data(), H, G);

    for (std::size_t t = 0; t < t_len; ++t) {
        // rows of step t for every sample are t_len rows apart
        Strided zt(gates.data() + t * g_len, N, G, Eigen::OuterStride<>(static_cast<Index>(t_len * g_len)));
        if (t) {
            CStrided h_prev(hidden.data() + (t - 1) * h_len, N, H, Eigen::OuterStride<>(static_cast<Index>(t_len * h_len)));
            zt.noalias() += h_prev * w_rec;
        }
        for (std::size_t n = 0; n < n_len; ++n) {
            const std::size_t row = n * t_len + t;
            T* gt = gates.data() + row * g_len;
            T* ct = cells.data() + row * h_len;
            T* ht = hidden.data() + row * h_len;
            const T* c_prev = t ? cells.data() + (row - 1) * h_len : nullptr;
            for (std::size_t k = 0; k < h_len; ++k) {
                const T ig = kernel::sigmoid(gt[k]);
                const T fg = kernel::sigmoid(gt[h_len + k]);
                const T cg = std::tanh(gt[2 * h_len + k]);
                const T og = kernel::sigmoid(gt[3 * h_len + k]);
                gt[k] = ig;
                gt[h_len + k] = fg;
                gt[2 * h_len + k] = cg;
                gt[3 * h_len + k] = og;
                ct[k] = (c_prev ? fg * c_prev[k] : T(0)) + ig * cg;
                ht[k] = og * std::tanh(ct[k]);
            }
        }
    }
    debug_check_finite(hidden, "lstm_forward");
    if (cache) {
        cache->x = x;
        cache->gates = std::move(gates);
        cache->cells = std::move(cells);
        cache->hidden = hidden;
    }
    return hidden;
}

template <typename T>
struct LstmGrads {
    Tensor<T> dx;
    LstmParams<T> dparams;
};

// Backpropagation through time given dL/dh_t for every step.
template <typename T>
LstmGrads<T> lstm_backward(const LstmCache<T>& cache, const LstmSpec& s, const LstmParams<T>& p, const Tensor<T>& dh_seq,
                           bool need_dx = true) {
    cache.hidden.require_same_shape(dh_seq, "lstm_backward");
    using Index = Eigen::Index;
    const std::size_t n_len = cache.x.dim(0), t_len = cache.x.dim(1), d_len = cache.x.dim(2), h_len = s.hidden_size,
                      g_len = 4 * h_len;
    const auto N = static_cast<Index>(n_len), H = static_cast<Index>(h_len), G = static_cast<Index>(g_len),
               NT = static_cast<Index>(n_len * t_len), D = static_cast<Index>(d_len);
    LstmGrads<T> g{need_dx ? Tensor<T>(cache.x.shape()) : Tensor<T>(),
                   {Tensor<T>(s.input_weight_shape()), Tensor<T>(s.recurrent_weight_shape()), Tensor<T>(s.bias_shape())}};
    Tensor<T> dz_all({n_len, t_len, g_len});
    detail::RowMat<T> dh_next = detail::RowMat<T>::Zero(N, H);
    std::vector<T> dc_next(n_len * h_len, T(0));
    const detail::CMapMat<T> w_rec(p.w_recurrent.data(), H, G);
    using CStrided = Eigen::Map<const detail::RowMat<T>, 0, Eigen::OuterStride<>>;

    for (std::size_t tt = t_len; tt-- > 0;) {
        for (std::size_t n = 0; n < n_len; ++n) {
            const std::size_t row = n * t_len + tt;
            const T* gt = cache.gates.data() + row * g_len;
            const T* ct = cache.cells.data() + row * h_len;
            const T* c_prev = tt ? cache.cells.data() + (row - 1) * h_len : nullptr;
            const T* dh_in = dh_seq.data() + row * h_len;
            T* dz = dz_all.data() + row * g_len;
            T* dcn = dc_next.data() + n * h_len;
            for (std::size_t k = 0; k < h_len; ++k) {
                const T ig = gt[k], fg = gt[h_len + k], cg = gt[2 * h_len + k], og = gt[3 * h_len + k];
                const T dh = dh_in[k] + dh_next(static_cast<Index>(n), static_cast<Index>(k));
                const T tc = std::tanh(ct[k]);
                const T dog = dh * tc;
                const T dc = dcn[k] + dh * og * (T(1) - tc * tc);
                const T dig = dc * cg;
                const T dcg = dc * ig;
                const T dfg = c_prev ? dc * c_prev[k] : T(0);
                dcn[k] = dc * fg;
                dz[k] = dig * ig * (T(1) - ig);
                dz[h_len + k] = dfg * fg * (T(1) - fg);
                dz[2 * h_len + k] = dcg * (T(1) - cg * cg);
                dz[3 * h_len + k] = dog * og * (T(1) - og);
            }
        }
        const CStrided dzt(dz_all.data() + tt * g_len, N, G, Eigen::OuterStride<>(static_cast<Index>(t_len * g_len)));
        dh_next.noalias() = dzt * w_rec.transpose();
    }

    const detail::CMapMat<T> dz_m(dz_all.data(), NT, G);
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g.dparams.bias.data(), G) = dz_m.colwise().sum();
    const detail::CMapMat<T> x_m(cache.x.data(), NT, D);
    detail::MapMat<T>(g.dparams.w_input.data(), D, G).noalias() = x_m.transpose() * dz_m;
    // h_{t-1} for every row (zero at t = 0)
    detail::RowMat<T> h_prev = detail::RowMat<T>::Zero(NT, H);
    for (std::size_t n = 0; n < n_len; ++n) {
        for (std::size_t t = 1; t < t_len; ++t) {
            std::copy_n(cache.hidden.data() + (n * t_len + t - 1) * h_len, h_len, h_prev.data() + (n * t_len + t) * h_len);
        }
    }
    detail::MapMat<T>(g.dparams.w_recurrent.data(), H, G).noalias() = h_prev.transpose() * dz_m;
    if (need_dx) {
        detail::MapMat<T>(g.dx.data(), NT, D).noalias() = dz_m * detail::CMapMat<T>(p.w_input.data(), D, G).transpose();
    }
    return g;
}

// y = x W + b with W of shape [in, out].
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0) || b.shape() != Shape{w.dim(1)}) {
        throw ShapeError("dense: incompatible shapes " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    }
    const std::size_t n = x.dim(0), in = w.dim(0), out = w.dim(1);
    Tensor<T> y({n, out});
    for (std::size_t r = 0; r < n; ++r) {
        T* yr = y.data() + r * out;
        std::copy(b.vec().begin(), b.vec().end(), yr);
        for (std::size_t i = 0; i < in; ++i) kernel::axpy(out, x[r * in + i], w.data() + i * out, yr);
    }
    return y;
}

template <typename T>
struct DenseGrads {
    Tensor<T> dx;
    Tensor<T> dw;
    Tensor<T> db;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy) {
    const std::size_t n = x.dim(0), in = w.dim(0), out = w.dim(1);
    if (dy.shape() != Shape{n, out}) throw ShapeError("dense backward: upstream gradient shape " + shape_str(dy.shape()));
    DenseGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({out})};
    for (std::size_t r = 0; r < n; ++r) {
        const T* gr = dy.data() + r * out;
        for (std::size_t j = 0; j < out; ++j) g.db[j] += gr[j];
        for (std::size_t i = 0; i < in; ++i) {
            kernel::axpy(out, x[r * in + i], gr, g.dw.data() + i * out);
            g.dx[r * in + i] = kernel::dot(out, w.data() + i * out, gr);
        }
    }
    return g;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax: logits must be [N,K]");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    Tensor<T> p(logits.shape());
    for (std::size_t r = 0; r < n; ++r) {
        const T* lr = logits.data() + r * k;
        T* pr = p.data() + r * k;
        const T m = *std::max_element(lr, lr + k);
        T sum = T(0);
        for (std::size_t j = 0; j < k; ++j) {
            pr[j] = std::exp(lr[j] - m);
            sum += pr[j];
        }
        for (std::size_t j = 0; j < k; ++j) pr[j] /= sum;
    }
    return p;
}

template <typename T>
struct XentResult {
    T loss = T(0);        // mean over the batch
    Tensor<T> probs;      // [N,K]
    Tensor<T> dlogits;    // (p - onehot) / N
};

template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, const std::vector<int>& targets) {
    XentResult<T> r;
    r.probs = softmax(logits);
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (targets.size() != n) throw ShapeError("softmax_xent: target count does not match batch");
    r.dlogits = Tensor<T>(logits.shape());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int c = targets[i];
        if (c < 0 || static_cast<std::size_t>(c) >= k) throw ArgumentError("softmax_xent: class index out of range");
        const T* lr = logits.data() + i * k;
        const T m = *std::max_element(lr, lr + k);
        T sum = T(0);
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(lr[j] - m);
        // log-sum-exp form avoids log(0) when the target probability underflows
        total += static_cast<double>(std::log(sum) + m - lr[c]);
        for (std::size_t j = 0; j < k; ++j) {
            const T onehot = static_cast<std::size_t>(c) == j ? T(1) : T(0);
            r.dlogits[i * k + j] = (r.probs[i * k + j] - onehot) / static_cast<T>(n);
        }
    }
    r.loss = static_cast<T>(total / static_cast<double>(n));
    return r;
}

}  // namespace deeplob
