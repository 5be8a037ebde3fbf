#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <string>
#include <vector>

#include "modit/error.hpp"
#include "modit/rng.hpp"

namespace modit {

// Dense row-major matrix. The whole model runs on this one type; vectors are
// 1xN matrices. Template parameter picks the precision mode: double for
// gradient verification, float for training.
template <class T>
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, T(0)) {}
    Matrix(int r, int c, std::initializer_list<T> init) : rows(r), cols(c), data(init) {
        if (static_cast<int>(data.size()) != r * c)
            throw std::invalid_argument("Matrix init list size mismatch");
    }

    T& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return data.size(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    void fill_uniform(Rng& rng, T lo, T hi) {
        for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
    }

    void fill_normal(Rng& rng, T stddev = T(1)) {
        for (auto& v : data) v = static_cast<T>(rng.normal() * stddev);
    }

    bool all_finite() const {
        for (const auto& v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    template <class U>
    Matrix<U> cast() const {
        Matrix<U> out(rows, cols);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using MatF = Matrix<float>;
using MatD = Matrix<double>;

template <class T>
void require_shape(const Matrix<T>& m, int r, int c, const char* what) {
    if (m.rows != r || m.cols != c)
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(r) + "x" +
                                    std::to_string(c) + ", got " + std::to_string(m.rows) + "x" +
                                    std::to_string(m.cols));
}

template <class T>
void require_finite(const Matrix<T>& m, const char* what) {
    if (!m.all_finite()) throw NumericError(std::string(what) + ": non-finite entries");
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
    Matrix<T> out = a;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

template <class T>
void add_inplace(Matrix<T>& a, const Matrix<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("add_inplace: shape mismatch");
    for (size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

template <class T>
Matrix<T> sub(const Matrix<T>& a, const Matrix<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("sub: shape mismatch");
    Matrix<T> out = a;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

template <class T>
Matrix<T> scale(const Matrix<T>& a, T s) {
    Matrix<T> out = a;
    for (auto& v : out.data) v *= s;
    return out;
}

template <class T>
void axpy_inplace(Matrix<T>& y, T s, const Matrix<T>& x) {
    if (!y.same_shape(x)) throw std::invalid_argument("axpy: shape mismatch");
    for (size_t i = 0; i < y.size(); ++i) y.data[i] += s * x.data[i];
}

template <class T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("hadamard: shape mismatch");
    Matrix<T> out = a;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

// ---------------------------------------------------------------------------
// matmul family (naive loops; desk scale)
// ---------------------------------------------------------------------------

template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimension mismatch");
    Matrix<T> out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const T aik = a.at(i, k);
            if (aik == T(0)) continue;
            const T* brow = &b.data[static_cast<size_t>(k) * b.cols];
            T* orow = &out.data[static_cast<size_t>(i) * out.cols];
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

// a^T * b
template <class T>
Matrix<T> matmul_at_b(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_at_b: dimension mismatch");
    Matrix<T> out(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k) {
        for (int i = 0; i < a.cols; ++i) {
            const T aki = a.at(k, i);
            if (aki == T(0)) continue;
            const T* brow = &b.data[static_cast<size_t>(k) * b.cols];
            T* orow = &out.data[static_cast<size_t>(i) * out.cols];
            for (int j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
        }
    }
    return out;
}

// a * b^T
template <class T>
Matrix<T> matmul_a_bt(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_a_bt: dimension mismatch");
    Matrix<T> out(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.rows; ++j) {
            T acc = T(0);
            const T* arow = &a.data[static_cast<size_t>(i) * a.cols];
            const T* brow = &b.data[static_cast<size_t>(j) * b.cols];
            for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            out.at(i, j) = acc;
        }
    }
    return out;
}

template <class T>
Matrix<T> transpose(const Matrix<T>& a) {
    Matrix<T> out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

template <class T>
Matrix<T> vstack(const Matrix<T>& top, const Matrix<T>& bottom) {
    if (top.rows == 0) return bottom;
    if (bottom.rows == 0) return top;
    if (top.cols != bottom.cols) throw std::invalid_argument("vstack: column mismatch");
    Matrix<T> out(top.rows + bottom.rows, top.cols);
    std::copy(top.data.begin(), top.data.end(), out.data.begin());
    std::copy(bottom.data.begin(), bottom.data.end(), out.data.begin() + top.data.size());
    return out;
}

template <class T>
Matrix<T> row_slice(const Matrix<T>& m, int begin, int count) {
    if (begin < 0 || count < 0 || begin + count > m.rows)
        throw std::invalid_argument("row_slice: range out of bounds");
    Matrix<T> out(count, m.cols);
    std::copy(m.data.begin() + static_cast<size_t>(begin) * m.cols,
              m.data.begin() + static_cast<size_t>(begin + count) * m.cols, out.data.begin());
    return out;
}

// Sum of rows -> 1xC. Used for bias gradients.
template <class T>
Matrix<T> col_sum(const Matrix<T>& m) {
    Matrix<T> out(1, m.cols);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) out.at(0, j) += m.at(i, j);
    return out;
}

// ---------------------------------------------------------------------------
// linear layer: y = x W + b (b broadcast over rows)
// ---------------------------------------------------------------------------

template <class T>
Matrix<T> linear_forward(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
    if (x.cols != w.rows) throw std::invalid_argument("linear_forward: inner dimension mismatch");
    if (b.rows != 1 || b.cols != w.cols)
        throw std::invalid_argument("linear_forward: bias shape mismatch");
    Matrix<T> out = matmul(x, w);
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) += b.at(0, j);
    return out;
}

// Returns d_x; accumulates into d_w, d_b.
template <class T>
Matrix<T> linear_backward(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& d_out,
                          Matrix<T>& d_w, Matrix<T>& d_b) {
    add_inplace(d_w, matmul_at_b(x, d_out));
    add_inplace(d_b, col_sum(d_out));
    return matmul_a_bt(d_out, w);
}

// ---------------------------------------------------------------------------
// softmax over rows; -inf entries act as hard masks
// ---------------------------------------------------------------------------

template <class T>
Matrix<T> softmax_rows(const Matrix<T>& scores) {
    Matrix<T> out(scores.rows, scores.cols);
    const T neg_inf = -std::numeric_limits<T>::infinity();
    for (int i = 0; i < scores.rows; ++i) {
        T mx = neg_inf;
        for (int j = 0; j < scores.cols; ++j) mx = std::max(mx, scores.at(i, j));
        if (mx == neg_inf)
            throw NumericError("softmax_rows: fully masked row " + std::to_string(i));
        T sum = T(0);
        for (int j = 0; j < scores.cols; ++j) {
            const T s = scores.at(i, j);
            const T e = (s == neg_inf) ? T(0) : std::exp(s - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < scores.cols; ++j) out.at(i, j) /= sum;
    }
    return out;
}

// d_scores given probs = softmax(scores) and d_probs.
template <class T>
Matrix<T> softmax_backward(const Matrix<T>& probs, const Matrix<T>& d_probs) {
    if (!probs.same_shape(d_probs)) throw std::invalid_argument("softmax_backward: shape mismatch");
    Matrix<T> d_scores(probs.rows, probs.cols);
    for (int i = 0; i < probs.rows; ++i) {
        T dot = T(0);
        for (int j = 0; j < probs.cols; ++j) dot += probs.at(i, j) * d_probs.at(i, j);
        for (int j = 0; j < probs.cols; ++j)
            d_scores.at(i, j) = probs.at(i, j) * (d_probs.at(i, j) - dot);
    }
    return d_scores;
}

// ---------------------------------------------------------------------------
// layer norm (per row, population variance)
// ---------------------------------------------------------------------------

template <class T>
struct LayerNormCache {
    Matrix<T> x;
    Matrix<T> xhat;
    std::vector<T> inv_std;
};

template <class T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& shift, T eps,
                     LayerNormCache<T>* cache = nullptr) {
    if (gain.cols != x.cols || shift.cols != x.cols || gain.rows != 1 || shift.rows != 1)
        throw std::invalid_argument("layer_norm: gain/shift must be 1 x cols(x)");
    Matrix<T> out(x.rows, x.cols);
    Matrix<T> xhat(x.rows, x.cols);
    std::vector<T> inv_std(x.rows);
    const T n = static_cast<T>(x.cols);
    for (int i = 0; i < x.rows; ++i) {
        T mean = T(0);
        for (int j = 0; j < x.cols; ++j) mean += x.at(i, j);
        mean /= n;
        T var = T(0);
        for (int j = 0; j < x.cols; ++j) {
            const T d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= n;
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < x.cols; ++j) {
            const T xh = (x.at(i, j) - mean) * is;
            xhat.at(i, j) = xh;
            out.at(i, j) = gain.at(0, j) * xh + shift.at(0, j);
        }
    }
    if (cache) {
        cache->x = x;
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

// Returns d_x; accumulates into d_gain, d_shift.
template <class T>
Matrix<T> layer_norm_backward(const LayerNormCache<T>& cache, const Matrix<T>& gain,
                              const Matrix<T>& d_out, Matrix<T>& d_gain, Matrix<T>& d_shift) {
    const int rows = cache.x.rows;
    const int cols = cache.x.cols;
    Matrix<T> d_x(rows, cols);
    const T n = static_cast<T>(cols);
    for (int i = 0; i < rows; ++i) {
        T sum_dxhat = T(0);
        T sum_dxhat_xhat = T(0);
        for (int j = 0; j < cols; ++j) {
            const T dxh = d_out.at(i, j) * gain.at(0, j);
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * cache.xhat.at(i, j);
            d_gain.at(0, j) += d_out.at(i, j) * cache.xhat.at(i, j);
            d_shift.at(0, j) += d_out.at(i, j);
        }
        for (int j = 0; j < cols; ++j) {
            const T dxh = d_out.at(i, j) * gain.at(0, j);
            d_x.at(i, j) =
                cache.inv_std[i] *
                (dxh - sum_dxhat / n - cache.xhat.at(i, j) * sum_dxhat_xhat / n);
        }
    }
    return d_x;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

// tanh-approximation GELU; smooth, which keeps finite-difference checks clean
template <class T>
inline T gelu_scalar(T x) {
    const T c = T(0.7978845608028653559);  // sqrt(2/pi)
    const T u = c * (x + T(0.044715) * x * x * x);
    return T(0.5) * x * (T(1) + std::tanh(u));
}

template <class T>
inline T gelu_grad_scalar(T x) {
    const T c = T(0.7978845608028653559);
    const T u = c * (x + T(0.044715) * x * x * x);
    const T th = std::tanh(u);
    const T du = c * (T(1) + T(0.134145) * x * x);
    return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * du;
}

template <class T>
Matrix<T> gelu(const Matrix<T>& x) {
    Matrix<T> out = x;
    for (auto& v : out.data) v = gelu_scalar(v);
    return out;
}

template <class T>
Matrix<T> gelu_backward(const Matrix<T>& x, const Matrix<T>& d_out) {
    Matrix<T> d_x = x;
    for (size_t i = 0; i < d_x.size(); ++i) d_x.data[i] = gelu_grad_scalar(x.data[i]) * d_out.data[i];
    return d_x;
}

template <class T>
Matrix<T> leaky_relu(const Matrix<T>& x, T slope) {
    Matrix<T> out = x;
    for (auto& v : out.data) v = v >= T(0) ? v : slope * v;
    return out;
}

template <class T>
Matrix<T> leaky_relu_backward(const Matrix<T>& x, const Matrix<T>& d_out, T slope) {
    Matrix<T> d_x = x;
    for (size_t i = 0; i < d_x.size(); ++i)
        d_x.data[i] = (x.data[i] >= T(0) ? T(1) : slope) * d_out.data[i];
    return d_x;
}

}  // namespace modit
