#pragma once

#include "modit/matrix.hpp"

namespace modit {

// Weighted-sum loss coefficients. The lip-reading and landmark terms are
// pluggable hooks that default to zero, but their weights keep their
// published values so the total-loss structure is preserved.
template <class T>
struct LossWeights {
    T lambda_t = T(10);
    T lambda_read = T(0.2);
    T lambda_lks = T(0.1);
    T lambda_v = T(0.1);
};

// Hook signature for the external-network losses (lip reading, landmarks).
// Receives (x0, x0_hat) and returns a scalar; bound to zero by default.
template <class T>
using AuxLossHook = T (*)(const Matrix<T>&, const Matrix<T>&);

template <class T>
T zero_aux_loss(const Matrix<T>&, const Matrix<T>&) {
    return T(0);
}

// Mean squared error over all entries.
template <class T>
T noise_loss(const Matrix<T>& eps, const Matrix<T>& eps_hat) {
    if (!eps.same_shape(eps_hat)) throw std::invalid_argument("noise_loss: shape mismatch");
    T acc = T(0);
    for (size_t i = 0; i < eps.size(); ++i) {
        const T d = eps_hat.data[i] - eps.data[i];
        acc += d * d;
    }
    return acc / static_cast<T>(eps.size());
}

// d/d eps_hat of noise_loss.
template <class T>
Matrix<T> noise_loss_backward(const Matrix<T>& eps, const Matrix<T>& eps_hat) {
    Matrix<T> d(eps.rows, eps.cols);
    const T scale = T(2) / static_cast<T>(eps.size());
    for (size_t i = 0; i < eps.size(); ++i) d.data[i] = scale * (eps_hat.data[i] - eps.data[i]);
    return d;
}

// MSE between first-order temporal differences; invariant to constant
// row offsets by construction.
template <class T>
T velocity_loss(const Matrix<T>& x0, const Matrix<T>& x0_hat) {
    if (!x0.same_shape(x0_hat)) throw std::invalid_argument("velocity_loss: shape mismatch");
    if (x0.rows < 2) throw std::invalid_argument("velocity_loss: need at least 2 frames");
    T acc = T(0);
    for (int i = 0; i + 1 < x0.rows; ++i) {
        for (int j = 0; j < x0.cols; ++j) {
            const T v = x0.at(i + 1, j) - x0.at(i, j);
            const T vh = x0_hat.at(i + 1, j) - x0_hat.at(i, j);
            const T d = vh - v;
            acc += d * d;
        }
    }
    return acc / (static_cast<T>(x0.rows - 1) * static_cast<T>(x0.cols));
}

// d/d x0_hat of velocity_loss.
template <class T>
Matrix<T> velocity_loss_backward(const Matrix<T>& x0, const Matrix<T>& x0_hat) {
    if (x0.rows < 2) throw std::invalid_argument("velocity_loss: need at least 2 frames");
    Matrix<T> d(x0.rows, x0.cols);
    const T scale = T(2) / (static_cast<T>(x0.rows - 1) * static_cast<T>(x0.cols));
    for (int i = 0; i + 1 < x0.rows; ++i) {
        for (int j = 0; j < x0.cols; ++j) {
            const T diff =
                scale * ((x0_hat.at(i + 1, j) - x0_hat.at(i, j)) - (x0.at(i + 1, j) - x0.at(i, j)));
            d.at(i + 1, j) += diff;
            d.at(i, j) -= diff;
        }
    }
    return d;
}

template <class T>
T total_loss(T l_t, T l_read, T l_lks, T l_v, const LossWeights<T>& w) {
    return w.lambda_t * l_t + w.lambda_read * l_read + w.lambda_lks * l_lks + w.lambda_v * l_v;
}

}  // namespace modit
