#pragma once

#include "modit/matrix.hpp"

namespace modit {

template <class T>
T sequence_mse(const Matrix<T>& a, const Matrix<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("sequence_mse: length mismatch");
    T acc = T(0);
    for (size_t i = 0; i < a.size(); ++i) {
        const T d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<T>(a.size());
}

// Mean over frames of the squared norm of the second temporal difference.
// Zero for linear ramps; a proxy for temporal jitter.
template <class T>
T jitter_metric(const Matrix<T>& x) {
    if (x.rows < 3) throw std::invalid_argument("jitter_metric: need at least 3 frames");
    T acc = T(0);
    for (int i = 1; i + 1 < x.rows; ++i) {
        for (int j = 0; j < x.cols; ++j) {
            const T d = x.at(i + 1, j) - T(2) * x.at(i, j) + x.at(i - 1, j);
            acc += d * d;
        }
    }
    return acc / static_cast<T>(x.rows - 2);
}

}  // namespace modit
