#pragma once

#include <cmath>
#include <vector>

#include "modit/matrix.hpp"

namespace modit {

template <class T>
struct AdamWConfig {
    T lr = T(1e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(0.01);
};

// Decoupled weight decay Adam over a flat list of tensors. Moment slots are
// aligned with the parameter enumeration order, which is stable (see
// for_each_param).
template <class T>
struct OptimizerState {
    AdamWConfig<T> cfg;
    long long step = 0;
    std::vector<Matrix<T>> m;
    std::vector<Matrix<T>> v;

    void ensure_slots(const std::vector<Matrix<T>*>& params) {
        if (!m.empty()) return;
        m.reserve(params.size());
        v.reserve(params.size());
        for (const auto* p : params) {
            m.emplace_back(p->rows, p->cols);
            v.emplace_back(p->rows, p->cols);
        }
    }
};

// One AdamW update: p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
template <class T>
void adamw_update(std::vector<Matrix<T>*>& params, const std::vector<const Matrix<T>*>& grads,
                  OptimizerState<T>& state) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adamw_update: param/grad count mismatch");
    state.ensure_slots(params);
    if (state.m.size() != params.size())
        throw std::invalid_argument("adamw_update: optimizer state does not match parameters");
    state.step += 1;
    const T b1 = state.cfg.beta1;
    const T b2 = state.cfg.beta2;
    const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(b1), state.step));
    const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(b2), state.step));
    for (size_t k = 0; k < params.size(); ++k) {
        Matrix<T>& p = *params[k];
        const Matrix<T>& g = *grads[k];
        Matrix<T>& m = state.m[k];
        Matrix<T>& v = state.v[k];
        if (!p.same_shape(g) || !p.same_shape(m))
            throw std::invalid_argument("adamw_update: shape mismatch at slot " + std::to_string(k));
        for (size_t i = 0; i < p.size(); ++i) {
            m.data[i] = b1 * m.data[i] + (T(1) - b1) * g.data[i];
            v.data[i] = b2 * v.data[i] + (T(1) - b2) * g.data[i] * g.data[i];
            const T m_hat = m.data[i] / bc1;
            const T v_hat = v.data[i] / bc2;
            p.data[i] -= state.cfg.lr *
                         (m_hat / (std::sqrt(v_hat) + state.cfg.eps) +
                          state.cfg.weight_decay * p.data[i]);
        }
    }
}

}  // namespace modit
