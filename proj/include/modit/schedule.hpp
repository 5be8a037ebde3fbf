#pragma once

#include <cmath>
#include <vector>

#include "modit/matrix.hpp"

namespace modit {

// Noise schedule tables: beta_t, alpha_t = 1 - beta_t, alpha_bar_t = prod alpha_i.
// Indexing is 1-based via t in [1, T]; alpha_bar(0) == 1 so the terminal
// sampler step is well defined.
template <class T>
struct NoiseSchedule {
    int steps = 0;
    std::vector<T> beta;       // beta[t-1] = beta_t
    std::vector<T> alpha;      // alpha[t-1] = 1 - beta_t
    std::vector<T> alpha_bar;  // alpha_bar[t-1] = prod_{i<=t} alpha_i

    T beta_at(int t) const {
        check_t(t);
        return beta[t - 1];
    }
    T alpha_at(int t) const {
        check_t(t);
        return alpha[t - 1];
    }
    // alpha_bar with the alpha_bar_0 := 1 convention.
    T alpha_bar_at(int t) const {
        if (t == 0) return T(1);
        check_t(t);
        return alpha_bar[t - 1];
    }

    void check_t(int t) const {
        if (t < 1 || t > steps)
            throw std::invalid_argument("timestep " + std::to_string(t) + " out of range [1, " +
                                        std::to_string(steps) + "]");
    }
};

template <class T>
NoiseSchedule<T> build_schedule(int steps, T beta_start, T beta_end) {
    if (steps < 1) throw ConfigError("schedule: T must be >= 1");
    if (!(beta_start > T(0)) || !(beta_start <= beta_end) || !(beta_end < T(1)))
        throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule<T> s;
    s.steps = steps;
    s.beta.resize(steps);
    s.alpha.resize(steps);
    s.alpha_bar.resize(steps);
    T prod = T(1);
    for (int i = 0; i < steps; ++i) {
        const T frac = steps == 1 ? T(0) : static_cast<T>(i) / static_cast<T>(steps - 1);
        s.beta[i] = beta_start + (beta_end - beta_start) * frac;
        s.alpha[i] = T(1) - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

// x_t = sqrt(alpha_bar_t) x_0 + sqrt(1 - alpha_bar_t) eps
template <class T>
Matrix<T> forward_noise(const Matrix<T>& x0, int t, const Matrix<T>& eps,
                        const NoiseSchedule<T>& sched) {
    if (!x0.same_shape(eps)) throw std::invalid_argument("forward_noise: shape mismatch");
    sched.check_t(t);
    const T ab = sched.alpha_bar_at(t);
    const T sa = std::sqrt(ab);
    const T sb = std::sqrt(T(1) - ab);
    Matrix<T> out(x0.rows, x0.cols);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = sa * x0.data[i] + sb * eps.data[i];
    return out;
}

// x0_hat = (x_t - sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_bar_t)
template <class T>
Matrix<T> predict_x0(const Matrix<T>& x_t, const Matrix<T>& eps_hat, int t,
                     const NoiseSchedule<T>& sched) {
    if (!x_t.same_shape(eps_hat)) throw std::invalid_argument("predict_x0: shape mismatch");
    sched.check_t(t);
    const T ab = sched.alpha_bar_at(t);
    const T sa = std::sqrt(ab);
    const T sb = std::sqrt(T(1) - ab);
    Matrix<T> out(x_t.rows, x_t.cols);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = (x_t.data[i] - sb * eps_hat.data[i]) / sa;
    return out;
}

// Deterministic step: x_{t-1} = sqrt(alpha_bar_{t-1}) x0_hat + sqrt(1 - alpha_bar_{t-1}) eps_hat.
// At t = 1 this returns x0_hat exactly (alpha_bar_0 = 1).
template <class T>
Matrix<T> ddim_step(const Matrix<T>& x0_hat, const Matrix<T>& eps_hat, int t,
                    const NoiseSchedule<T>& sched) {
    if (!x0_hat.same_shape(eps_hat)) throw std::invalid_argument("ddim_step: shape mismatch");
    sched.check_t(t);
    const T ab_prev = sched.alpha_bar_at(t - 1);
    const T sa = std::sqrt(ab_prev);
    const T sb = std::sqrt(T(1) - ab_prev);
    Matrix<T> out(x0_hat.rows, x0_hat.cols);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = sa * x0_hat.data[i] + sb * eps_hat.data[i];
    return out;
}

// Posterior variance multiplier ((1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)) * beta_t;
// forced to 0 at t = 1.
template <class T>
T ddpm_posterior_variance(int t, const NoiseSchedule<T>& sched) {
    sched.check_t(t);
    if (t == 1) return T(0);
    return (T(1) - sched.alpha_bar_at(t - 1)) / (T(1) - sched.alpha_bar_at(t)) * sched.beta_at(t);
}

// Stochastic reverse step: mean (1/sqrt(alpha_t)) (x_t - (beta_t / sqrt(1 - alpha_bar_t)) eps_hat)
// plus sqrt(variance) * noise.
template <class T>
Matrix<T> ddpm_posterior_sample(const Matrix<T>& x_t, const Matrix<T>& eps_hat, int t,
                                const Matrix<T>& noise, const NoiseSchedule<T>& sched) {
    if (!x_t.same_shape(eps_hat) || !x_t.same_shape(noise))
        throw std::invalid_argument("ddpm_posterior_sample: shape mismatch");
    const T a = sched.alpha_at(t);
    const T ab = sched.alpha_bar_at(t);
    const T coef = sched.beta_at(t) / std::sqrt(T(1) - ab);
    const T inv_sqrt_a = T(1) / std::sqrt(a);
    const T sigma = std::sqrt(ddpm_posterior_variance(t, sched));
    Matrix<T> out(x_t.rows, x_t.cols);
    for (size_t i = 0; i < out.size(); ++i)
        out.data[i] = inv_sqrt_a * (x_t.data[i] - coef * eps_hat.data[i]) + sigma * noise.data[i];
    return out;
}

}  // namespace modit
