#pragma once

// Small deterministic numeric kernels. Storage is 32-bit float, every
// reduction accumulates in double and runs in a fixed order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "saccade/errors.hpp"

namespace saccade {

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<float> values)
        : rows(r), cols(c), data(std::move(values)) {
        detail::require(data.size() == rows * cols, "Matrix: data length != rows*cols");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
        return m;
    }

    float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

struct Grid2D {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;

    Grid2D() = default;
    Grid2D(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), values(h * w, fill) {}
    Grid2D(std::size_t h, std::size_t w, std::vector<float> v) : height(h), width(w), values(std::move(v)) {
        detail::require(values.size() == height * width, "Grid2D: values length != height*width");
    }

    float& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
    float at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
    std::size_t size() const { return values.size(); }

    bool operator==(const Grid2D&) const = default;
};

namespace detail {

inline double dot(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

inline void require_finite(std::span<const float> v, const char* what) {
    for (float x : v) {
        if (!std::isfinite(x)) throw ContractViolation(std::string(what) + ": non-finite input");
    }
}

} // namespace detail

inline Matrix transpose(const Matrix& m) {
    Matrix t(m.cols, m.rows);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) t(c, r) = m(r, c);
    return t;
}

// a (m x k) times b_t^T where b_t is (n x k); the natural layout for
// (out, in) weight tables. Each output is one contiguous dot product.
inline Matrix matmul_transposed(const Matrix& a, const Matrix& b_t) {
    if (a.cols != b_t.cols)
        throw ContractViolation("matmul_transposed: inner dimensions differ (" + std::to_string(a.cols) +
                                " vs " + std::to_string(b_t.cols) + ")");
    Matrix out(a.rows, b_t.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        auto ar = a.row(i);
        for (std::size_t j = 0; j < b_t.rows; ++j) out(i, j) = static_cast<float>(detail::dot(ar, b_t.row(j)));
    }
    return out;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ContractViolation("matmul: a.cols (" + std::to_string(a.cols) + ") != b.rows (" +
                                std::to_string(b.rows) + ")");
    return matmul_transposed(a, transpose(b));
}

// y = x W^T + bias, W stored (out, in).
inline Matrix linear(const Matrix& x, const Matrix& weight, std::span<const float> bias) {
    detail::require(bias.size() == weight.rows, "linear: bias length != output features");
    Matrix y = matmul_transposed(x, weight);
    for (std::size_t r = 0; r < y.rows; ++r) {
        auto yr = y.row(r);
        for (std::size_t c = 0; c < y.cols; ++c) yr[c] += bias[c];
    }
    return y;
}

// Row-wise softmax in double precision; returns double rows so callers
// that need exact normalisation checks keep the extra bits.
inline std::vector<double> softmax(std::span<const double> z) {
    for (double x : z)
        if (!std::isfinite(x)) throw ContractViolation("softmax: non-finite input");
    std::vector<double> p(z.size());
    if (z.empty()) return p;
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - mx);
        sum += p[i];
    }
    for (double& x : p) x /= sum;
    return p;
}

inline Matrix softmax_rows(const Matrix& m) {
    detail::require_finite(m.data, "softmax_rows");
    Matrix out(m.rows, m.cols);
    std::vector<double> z(m.cols);
    for (std::size_t r = 0; r < m.rows; ++r) {
        auto in = m.row(r);
        std::copy(in.begin(), in.end(), z.begin());
        auto p = softmax(z);
        auto o = out.row(r);
        for (std::size_t c = 0; c < m.cols; ++c) o[c] = static_cast<float>(p[c]);
    }
    return out;
}

inline std::vector<float> layer_norm(std::span<const float> v, std::span<const float> gain,
                                     std::span<const float> bias, double eps) {
    detail::require(v.size() == gain.size() && v.size() == bias.size(), "layer_norm: length mismatch");
    detail::require(eps > 0.0, "layer_norm: eps must be positive");
    detail::require(!v.empty(), "layer_norm: empty vector");
    double mean = 0.0;
    for (float x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (float x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    const double inv = 1.0 / std::sqrt(var + eps);
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = static_cast<float>((v[i] - mean) * inv * gain[i] + bias[i]);
    return out;
}

inline Matrix layer_norm_rows(const Matrix& m, std::span<const float> gain, std::span<const float> bias,
                              double eps) {
    Matrix out(m.rows, m.cols);
    for (std::size_t r = 0; r < m.rows; ++r) {
        auto n = layer_norm(m.row(r), gain, bias, eps);
        std::copy(n.begin(), n.end(), out.row(r).begin());
    }
    return out;
}

// tanh approximation
inline float gelu(float x) {
    constexpr double k = 0.7978845608028654; // sqrt(2/pi)
    const double xd = x;
    return static_cast<float>(0.5 * xd * (1.0 + std::tanh(k * (xd + 0.044715 * xd * xd * xd))));
}

inline std::vector<float> gelu(std::span<const float> v) {
    std::vector<float> out(v.size());
    std::transform(v.begin(), v.end(), out.begin(), [](float x) { return gelu(x); });
    return out;
}

// Align-corners bilinear resampling: output corner cells sample input
// corner cells exactly, and results are clamped to the four source
// samples so no value escapes the input range.
inline Grid2D bilinear_resize(const Grid2D& g, std::size_t out_h, std::size_t out_w) {
    if (g.height == 0 || g.width == 0 || out_h == 0 || out_w == 0)
        throw ContractViolation("bilinear_resize: zero-sized grid");
    Grid2D out(out_h, out_w);
    auto src_coord = [](std::size_t i, std::size_t in, std::size_t outn) {
        if (outn == 1 || in == 1) return 0.0;
        return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(outn - 1);
    };
    for (std::size_t y = 0; y < out_h; ++y) {
        const double sy = src_coord(y, g.height, out_h);
        const auto y0 = std::min(static_cast<std::size_t>(sy), g.height - 1);
        const auto y1 = std::min(y0 + 1, g.height - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double sx = src_coord(x, g.width, out_w);
            const auto x0 = std::min(static_cast<std::size_t>(sx), g.width - 1);
            const auto x1 = std::min(x0 + 1, g.width - 1);
            const double fx = sx - static_cast<double>(x0);
            const double v00 = g.at(y0, x0), v01 = g.at(y0, x1), v10 = g.at(y1, x0), v11 = g.at(y1, x1);
            const double top = v00 + fx * (v01 - v00);
            const double bot = v10 + fx * (v11 - v10);
            double v = top + fy * (bot - top);
            const double lo = std::min({v00, v01, v10, v11});
            const double hi = std::max({v00, v01, v10, v11});
            out.at(y, x) = static_cast<float>(std::clamp(v, lo, hi));
        }
    }
    return out;
}

} // namespace saccade
