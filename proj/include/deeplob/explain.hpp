#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deeplob/error.hpp"
#include "deeplob/model.hpp"
#include "deeplob/tensor.hpp"

namespace deeplob {

// Rectangular tiles over a [time, features] window. Columns are grouped in
// consecutive pairs, i.e. one level's (price, volume) on one side.
struct RegionGrid {
    std::size_t time = 100;
    std::size_t features = 40;
    std::size_t tile_time = 10;
    std::size_t tile_features = 2;

    void validate() const {
        if (tile_time < 1 || tile_features < 1 || time % tile_time || features % tile_features) {
            throw ArgumentError("region grid: tiles must divide the " + std::to_string(time) + "x" + std::to_string(features) + " window");
        }
    }
    std::size_t rows() const { return time / tile_time; }
    std::size_t cols() const { return features / tile_features; }
    std::size_t tiles() const { return rows() * cols(); }
    std::size_t tile_of(std::size_t t, std::size_t f) const { return (t / tile_time) * cols() + f / tile_features; }
};

struct Explanation {
    RegionGrid grid;
    int target_class = 0;
    std::vector<double> weights;  // per tile
    double intercept = 0.0;
    double r2 = 0.0;
    double base_probability = 0.0;   // model output on the untouched window
    std::vector<std::size_t> top_positive;
    std::vector<std::size_t> top_negative;
};

struct ExplainOptions {
    std::size_t n_samples = 1000;
    std::uint64_t seed = 1;
    RegionGrid grid;
    double ridge = 1e-2;
    std::size_t top = 10;
    std::size_t batch = 64;
};

// Batch [N,1,T,F] -> class probabilities [N,C].
using ProbFn = std::function<Tensor<double>(const Tensor<double>&)>;

template <typename T>
ProbFn model_prob_fn(const DeepLob<T>& model) {
    return [&model](const Tensor<double>& x) {
        Tensor<T> xt(x.shape());
        std::transform(x.vec().begin(), x.vec().end(), xt.vec().begin(), [](double v) { return static_cast<T>(v); });
        const Tensor<T> p = model.forward(xt);
        Tensor<double> out(p.shape());
        std::transform(p.vec().begin(), p.vec().end(), out.vec().begin(), [](T v) { return static_cast<double>(v); });
        return out;
    };
}

struct SurrogateFit {
    std::vector<double> coef;
    double intercept = 0.0;
    double r2 = 0.0;
};

// Weighted ridge regression y ~ b + X beta with an unpenalised intercept.
// Weights are rescaled to mean 1 before fitting.
inline SurrogateFit fit_surrogate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Eigen::VectorXd w, double ridge) {
    const Eigen::Index n = x.rows(), d = x.cols();
    if (n < 2 || y.size() != n || w.size() != n) throw ArgumentError("surrogate: need at least 2 aligned samples");
    if (!(w.minCoeff() >= 0.0) || !(w.sum() > 0.0)) throw ArgumentError("surrogate: sample weights must be >= 0 with positive sum");
    w *= static_cast<double>(n) / w.sum();
    for (Eigen::Index j = 0; j < d; ++j) {
        if (x.col(j).maxCoeff() == x.col(j).minCoeff()) {
            throw ArgumentError("surrogate: region " + std::to_string(j) + " never varies; increase n_samples");
        }
    }
    const double wsum = w.sum();
    const Eigen::RowVectorXd xm = (w.transpose() * x) / wsum;
    const double ym = w.dot(y) / wsum;
    const Eigen::MatrixXd xc = x.rowwise() - xm;
    const Eigen::VectorXd yc = y.array() - ym;
    Eigen::MatrixXd a = xc.transpose() * w.asDiagonal() * xc;
    a.diagonal().array() += ridge;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw ArgumentError("surrogate: singular design; increase n_samples");
    const Eigen::VectorXd beta = ldlt.solve(xc.transpose() * (w.asDiagonal() * yc));

    SurrogateFit f;
    f.coef.assign(beta.data(), beta.data() + d);
    f.intercept = ym - xm.dot(beta);
    const Eigen::VectorXd resid = yc - xc * beta;
    const double ss_res = (w.array() * resid.array().square()).sum();
    const double ss_tot = (w.array() * yc.array().square()).sum();
    f.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return f;
}

namespace detail {

inline void rank_tiles(Explanation& e, std::size_t top) {
    std::vector<std::size_t> idx(e.weights.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return std::abs(e.weights[a]) > std::abs(e.weights[b]); });
    for (std::size_t i : idx) {
        if (e.weights[i] > 0.0 && e.top_positive.size() < top) e.top_positive.push_back(i);
        if (e.weights[i] < 0.0 && e.top_negative.size() < top) e.top_negative.push_back(i);
    }
}

}  // namespace detail

// LIME over tiles: random keep/drop masks, dropped tiles set to 0 (the
// feature mean after z-scoring), exponential kernel on the number of dropped
// tiles with width 0.25 * sqrt(tiles), ridge fit of P(class) on the masks.
// Sample 0 is always the untouched window.
inline Explanation explain(const ProbFn& prob, const Tensor<double>& window, int target_class, const ExplainOptions& opt = {}) {
    const RegionGrid& g = opt.grid;
    g.validate();
    if (window.rank() != 2 || window.dim(0) != g.time || window.dim(1) != g.features) {
        throw ShapeError("explain: window must be [" + std::to_string(g.time) + "," + std::to_string(g.features) + "], got " +
                         shape_str(window.shape()));
    }
    if (opt.n_samples < 2) throw ArgumentError("explain: n_samples must be >= 2");
    const std::size_t n_tiles = g.tiles(), n = opt.n_samples, cells = g.time * g.features;

    Rng rng(opt.seed);
    Eigen::MatrixXd masks(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_tiles));
    masks.row(0).setOnes();
    for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t j = 0; j < n_tiles; ++j) masks(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }

    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t lo = 0; lo < n; lo += opt.batch) {
        const std::size_t hi = std::min(n, lo + opt.batch);
        Tensor<double> x({hi - lo, 1, g.time, g.features});
        for (std::size_t i = lo; i < hi; ++i) {
            double* dst = x.data() + (i - lo) * cells;
            for (std::size_t t = 0; t < g.time; ++t) {
                for (std::size_t f = 0; f < g.features; ++f) {
                    const bool keep = masks(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g.tile_of(t, f))) != 0.0;
                    dst[t * g.features + f] = keep ? window[t * g.features + f] : 0.0;
                }
            }
        }
        const Tensor<double> p = prob(x);
        if (p.rank() != 2 || p.dim(0) != hi - lo || target_class < 0 || static_cast<std::size_t>(target_class) >= p.dim(1)) {
            throw ShapeError("explain: model output does not cover the target class");
        }
        for (std::size_t i = lo; i < hi; ++i) y(static_cast<Eigen::Index>(i)) = p[(i - lo) * p.dim(1) + static_cast<std::size_t>(target_class)];
    }

    const double width = 0.25 * std::sqrt(static_cast<double>(n_tiles));
    Eigen::VectorXd w(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double dropped = static_cast<double>(n_tiles) - masks.row(i).sum();
        w(i) = std::exp(-dropped / (width * width));
    }

    const SurrogateFit fit = fit_surrogate(masks, y, w, opt.ridge);
    Explanation e;
    e.grid = g;
    e.target_class = target_class;
    e.weights = fit.coef;
    e.intercept = fit.intercept;
    e.r2 = fit.r2;
    e.base_probability = y(0);
    detail::rank_tiles(e, opt.top);
    return e;
}

// Per-cell attribution matrix [time, features].
inline std::vector<double> attribution_cells(const Explanation& e) {
    const RegionGrid& g = e.grid;
    std::vector<double> cells(g.time * g.features);
    for (std::size_t t = 0; t < g.time; ++t)
        for (std::size_t f = 0; f < g.features; ++f) cells[t * g.features + f] = e.weights.at(g.tile_of(t, f));
    return cells;
}

inline std::string heatmap_csv(const Explanation& e) {
    const auto cells = attribution_cells(e);
    std::string out;
    char buf[40];
    for (std::size_t t = 0; t < e.grid.time; ++t) {
        for (std::size_t f = 0; f < e.grid.features; ++f) {
            std::snprintf(buf, sizeof buf, "%s%.17g", f ? "," : "", cells[t * e.grid.features + f]);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

inline std::vector<std::vector<double>> read_heatmap_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ParseError(path.string() + ": bad cell '" + cell + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// Signed ramp: white at 0, green for support, red against.
inline std::array<std::uint8_t, 3> attribution_colour(double v, double max_abs) {
    const double a = max_abs > 0.0 ? std::min(1.0, std::abs(v) / max_abs) : 0.0;
    const auto fade = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - a)));
    if (v > 0.0) return {fade, 255, fade};
    if (v < 0.0) return {255, fade, fade};
    return {255, 255, 255};
}

// Binary PPM, time on the x axis and features on the y axis.
inline std::string heatmap_ppm(const Explanation& e, std::size_t scale = 4) {
    if (scale < 1) throw ArgumentError("heatmap: scale must be >= 1");
    const auto cells = attribution_cells(e);
    double max_abs = 0.0;
    for (double v : cells) max_abs = std::max(max_abs, std::abs(v));
    const std::size_t w = e.grid.time * scale, h = e.grid.features * scale;
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const auto c = attribution_colour(cells[(x / scale) * e.grid.features + y / scale], max_abs);
            out.append(reinterpret_cast<const char*>(c.data()), 3);
        }
    }
    return out;
}

inline void render_heatmap(const Explanation& e, const std::filesystem::path& csv_path, const std::filesystem::path& ppm_path,
                           std::size_t scale = 4) {
    auto write = [](const std::filesystem::path& p, const std::string& s) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw IoError("cannot create " + p.string());
        out << s;
        if (!out) throw IoError("write failed for " + p.string());
    };
    write(csv_path, heatmap_csv(e));
    write(ppm_path, heatmap_ppm(e, scale));
}

}  // namespace deeplob
