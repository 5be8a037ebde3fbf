#pragma once

#include <thread>
#include <vector>

#include "modit/adamw.hpp"
#include "modit/denoiser.hpp"
#include "modit/losses.hpp"
#include "modit/schedule.hpp"

namespace modit {

template <class T>
struct TrainItem {
    Matrix<T> beta0;  // 1 x coeff_dim source-frame conditioning
    Matrix<T> audio;  // t_frames x audio_dim
    Matrix<T> x0;     // t_frames x coeff_dim target sequence
};

template <class T>
struct StepMetrics {
    long long step = 0;
    T l_t = T(0);
    T l_v = T(0);
    T l_total = T(0);
};

namespace detail {
inline constexpr uint64_t kStreamTrainDraw = 0x7261; // per-step noise/timestep draws
inline constexpr uint64_t kStreamEpochPerm = 0x7065; // per-epoch batch shuffles
}  // namespace detail

// Fisher-Yates permutation of [0, n) from a seeded stream per epoch.
inline std::vector<int> epoch_permutation(uint64_t seed, long long epoch, int n) {
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    Rng rng(derive_seed(seed, detail::kStreamEpochPerm, static_cast<uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(i) + 1));
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

// Fixed-size batches without replacement per epoch; leftover items that do
// not fill a batch are skipped for that epoch. Depends only on
// (seed, step_index, n, batch), so resumed runs see identical batches.
inline std::vector<int> batch_indices(uint64_t seed, long long step_index, int n, int batch) {
    if (n < 1) throw DataError("batch_indices: empty dataset");
    if (batch > n) batch = n;
    const long long steps_per_epoch = std::max(1, n / batch);
    const long long epoch = step_index / steps_per_epoch;
    const long long k = step_index % steps_per_epoch;
    std::vector<int> perm = epoch_permutation(seed, epoch, n);
    return std::vector<int>(perm.begin() + k * batch, perm.begin() + k * batch + batch);
}

template <class T>
struct Trainer {
    ModelParams<T> params;
    OptimizerState<T> opt;
    NoiseSchedule<T> sched;
    LossWeights<T> weights;

    bool phase_enabled = true;
    bool phase_in_training = true;
    PhaseConfig phase_cfg;
    MaskSet<T> masks;

    uint64_t seed = 1234;
    int batch = 4;
    int threads = 1;
    long long step_count = 0;  // completed optimizer steps

    AuxLossHook<T> read_hook = zero_aux_loss<T>;
    AuxLossHook<T> lks_hook = zero_aux_loss<T>;

    // One optimizer step over a deterministic batch. Per item: draw t and
    // eps, noise x0, predict the noise, build the weighted loss, and
    // hand-backpropagate lambda_t * dL_t + lambda_v * dL_v (dL_v reaches the
    // prediction through x0_hat = predict_x0). Per-item gradients are reduced
    // in item order so the result is independent of the thread count.
    StepMetrics<T> train_step(const std::vector<TrainItem<T>>& dataset) {
        if (dataset.empty()) throw DataError("train_step: empty dataset");
        const std::vector<int> sel =
            batch_indices(seed, step_count, static_cast<int>(dataset.size()), batch);
        const int n = static_cast<int>(sel.size());

        std::vector<ModelParams<T>> item_grads(n, zeros_like(params));
        std::vector<T> item_lt(n), item_lv(n), item_lread(n), item_llks(n);

        auto run_item = [&](int slot) {
            const TrainItem<T>& item = dataset[sel[slot]];
            Rng rng(derive_seed(seed, detail::kStreamTrainDraw,
                                static_cast<uint64_t>(step_count) * 1000003ULL +
                                    static_cast<uint64_t>(slot)));
            const int t = 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(sched.steps)));
            Matrix<T> eps(item.x0.rows, item.x0.cols);
            eps.fill_normal(rng);
            Matrix<T> x_t = forward_noise(item.x0, t, eps, sched);

            PhaseRuntime<T> phase;
            phase.enabled = phase_enabled && phase_in_training;
            phase.t = t;
            phase.cfg = phase_cfg;
            phase.masks = &masks;

            EpsCache<T> cache;
            Matrix<T> eps_hat = eps_theta(x_t, t, item.beta0, item.audio, params, phase, &cache);
            item_lt[slot] = noise_loss(eps, eps_hat);

            Matrix<T> x0_hat = predict_x0(x_t, eps_hat, t, sched);
            item_lv[slot] = velocity_loss(item.x0, x0_hat);
            item_lread[slot] = read_hook(item.x0, x0_hat);
            item_llks[slot] = lks_hook(item.x0, x0_hat);

            const T inv_n = T(1) / static_cast<T>(n);
            Matrix<T> d_eps = scale(noise_loss_backward(eps, eps_hat), weights.lambda_t * inv_n);
            const T ab = sched.alpha_bar_at(t);
            const T dx0_deps = -std::sqrt(T(1) - ab) / std::sqrt(ab);
            axpy_inplace(d_eps, weights.lambda_v * inv_n * dx0_deps,
                         velocity_loss_backward(item.x0, x0_hat));
            eps_theta_backward(cache, params, d_eps, item_grads[slot]);
        };

        const int workers = std::max(1, std::min(threads, n));
        if (workers == 1) {
            for (int slot = 0; slot < n; ++slot) run_item(slot);
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < workers; ++w)
                pool.emplace_back([&, w] {
                    for (int slot = w; slot < n; slot += workers) run_item(slot);
                });
            for (auto& th : pool) th.join();
        }

        StepMetrics<T> m;
        m.step = step_count + 1;
        T l_read = T(0), l_lks = T(0);
        for (int slot = 0; slot < n; ++slot) {
            m.l_t += item_lt[slot];
            m.l_v += item_lv[slot];
            l_read += item_lread[slot];
            l_lks += item_llks[slot];
        }
        m.l_t /= static_cast<T>(n);
        m.l_v /= static_cast<T>(n);
        l_read /= static_cast<T>(n);
        l_lks /= static_cast<T>(n);
        m.l_total = total_loss(m.l_t, l_read, l_lks, m.l_v, weights);
        if (!std::isfinite(static_cast<double>(m.l_t)))
            throw NumericError("train_step: non-finite noise loss at step " + std::to_string(m.step));
        if (!std::isfinite(static_cast<double>(m.l_v)))
            throw NumericError("train_step: non-finite velocity loss at step " +
                               std::to_string(m.step));

        ModelParams<T> grads = zeros_like(params);
        for (int slot = 0; slot < n; ++slot) {
            std::vector<Matrix<T>*> dst;
            std::vector<const Matrix<T>*> src;
            for_each_param(grads, [&](const std::string&, Matrix<T>& g) { dst.push_back(&g); });
            for_each_param(item_grads[slot],
                           [&](const std::string&, Matrix<T>& g) { src.push_back(&g); });
            for (size_t k = 0; k < dst.size(); ++k) add_inplace(*dst[k], *src[k]);
        }

        std::vector<Matrix<T>*> plist;
        std::vector<const Matrix<T>*> glist;
        for_each_param(params, [&](const std::string&, Matrix<T>& p) { plist.push_back(&p); });
        for_each_param(grads, [&](const std::string&, Matrix<T>& g) { glist.push_back(&g); });
        adamw_update(plist, glist, opt);
        step_count += 1;
        return m;
    }
};

}  // namespace modit
