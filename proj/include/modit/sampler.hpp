#pragma once

#include <functional>
#include <vector>

#include "modit/denoiser.hpp"
#include "modit/schedule.hpp"

namespace modit {

enum class SamplerMode { ddim, ddpm };

struct SamplerConfig {
    SamplerMode mode = SamplerMode::ddim;
    uint64_t seed = 7;
    int resample_inner = 0;  // optional re-noising repetitions per step (off by default)
    bool phase_enabled = true;
    PhaseConfig phase;
    int window_overlap = 4;  // frames shared between consecutive windows
};

// Denoiser evaluation bound by the caller: (x_t, t) -> predicted noise.
template <class T>
using EpsFn = std::function<Matrix<T>(const Matrix<T>&, int)>;

// The generation loop: start from Gaussian noise, then for t = T..1 predict
// the noise, form x0_hat, and take the deterministic step
// x_{t-1} = sqrt(alpha_bar_{t-1}) x0_hat + sqrt(1-alpha_bar_{t-1}) eps_hat
// (or the stochastic posterior step in ddpm mode, with zero noise at t = 1).
// resample_inner > 0 re-noises x_{t-1} back to level t and repeats the step.
template <class T>
Matrix<T> sample_window(const EpsFn<T>& eps_fn, int frames, int coeff_dim,
                        const NoiseSchedule<T>& sched, SamplerMode mode, uint64_t seed,
                        int resample_inner = 0, std::vector<T>* norm_log = nullptr,
                        const Matrix<T>* init_state = nullptr) {
    if (resample_inner < 0) throw std::invalid_argument("sample_window: resample_inner < 0");
    Rng rng(derive_seed(seed, /*stream=*/0x5A));
    Matrix<T> x(frames, coeff_dim);
    if (init_state) {
        require_shape(*init_state, frames, coeff_dim, "sample_window: init_state");
        x = *init_state;
    } else {
        x.fill_normal(rng);
    }

    for (int t = sched.steps; t >= 1; --t) {
        Matrix<T> x_prev;
        const int repeats = (t > 1) ? resample_inner : 0;
        for (int r = 0; r <= repeats; ++r) {
            Matrix<T> eps_hat = eps_fn(x, t);
            if (!eps_hat.all_finite())
                throw NumericError("sample: non-finite prediction at timestep " + std::to_string(t));
            Matrix<T> x0_hat = predict_x0(x, eps_hat, t, sched);
            if (mode == SamplerMode::ddim) {
                x_prev = ddim_step(x0_hat, eps_hat, t, sched);
            } else {
                Matrix<T> noise(frames, coeff_dim);
                if (t > 1) noise.fill_normal(rng);
                x_prev = ddpm_posterior_sample(x, eps_hat, t, noise, sched);
            }
            if (!x_prev.all_finite())
                throw NumericError("sample: non-finite state at timestep " + std::to_string(t));
            if (r < repeats) {
                // re-noise x_{t-1} back to level t: N(sqrt(1-beta_{t-1}) x_{t-1}, beta_{t-1} I)
                const T beta_prev = sched.beta_at(t - 1);
                const T keep = std::sqrt(T(1) - beta_prev);
                const T spread = std::sqrt(beta_prev);
                Matrix<T> z(frames, coeff_dim);
                z.fill_normal(rng);
                for (size_t i = 0; i < x.size(); ++i)
                    x.data[i] = keep * x_prev.data[i] + spread * z.data[i];
            }
        }
        x = std::move(x_prev);
        if (norm_log) {
            T acc = T(0);
            for (const T v : x.data) acc += v * v;
            norm_log->push_back(std::sqrt(acc));
        }
    }
    return x;
}

// Window start offsets covering `total` frames with `frames`-long windows and
// the configured overlap; the last window is shifted left as needed so the
// output ends exactly at `total`.
inline std::vector<int> window_starts(int total, int frames, int overlap) {
    if (frames < 1) throw std::invalid_argument("window_starts: frames < 1");
    if (overlap < 0 || overlap >= frames)
        throw std::invalid_argument("window_starts: overlap must be in [0, frames)");
    if (total < frames) throw std::invalid_argument("window_starts: total shorter than one window");
    std::vector<int> starts{0};
    const int stride = frames - overlap;
    while (starts.back() + frames < total)
        starts.push_back(std::min(starts.back() + stride, total - frames));
    return starts;
}

// Blends per-window sequences into one `total`-frame sequence; overlapped
// frames linearly cross-fade from the earlier window to the later one.
template <class T>
Matrix<T> stitch_windows(const std::vector<Matrix<T>>& windows, const std::vector<int>& starts,
                         int total) {
    if (windows.empty() || windows.size() != starts.size())
        throw std::invalid_argument("stitch_windows: window/start mismatch");
    const int frames = windows[0].rows;
    const int cols = windows[0].cols;
    Matrix<T> out(total, cols);
    std::vector<int> covered(total, 0);
    for (size_t w = 0; w < windows.size(); ++w) {
        const Matrix<T>& win = windows[w];
        const int s = starts[w];
        if (win.rows != frames || win.cols != cols || s < 0 || s + frames > total)
            throw std::invalid_argument("stitch_windows: bad window placement");
        int overlap = 0;
        while (overlap < frames && covered[s + overlap] > 0) ++overlap;
        for (int i = 0; i < frames; ++i) {
            const int p = s + i;
            if (i >= overlap) {
                for (int j = 0; j < cols; ++j) out.at(p, j) = win.at(i, j);
            } else {
                const T alpha = static_cast<T>(i + 1) / static_cast<T>(overlap + 1);
                for (int j = 0; j < cols; ++j)
                    out.at(p, j) = (T(1) - alpha) * out.at(p, j) + alpha * win.at(i, j);
            }
            covered[p] += 1;
        }
    }
    for (int p = 0; p < total; ++p)
        if (covered[p] == 0) throw std::invalid_argument("stitch_windows: uncovered frame");
    return out;
}

// Full generation: per-window sampling with the model-bound denoiser, then
// linear cross-fade over overlapped frames.
template <class T>
Matrix<T> sample(const Matrix<T>& beta0, const Matrix<T>& audio, const ModelParams<T>& params,
                 const NoiseSchedule<T>& sched, const MaskSet<T>& masks, const SamplerConfig& cfg,
                 std::vector<T>* norm_log = nullptr) {
    const DenoiserConfig& mc = params.cfg;
    require_shape(beta0, 1, mc.coeff_dim, "sample: beta0");
    if (audio.cols != mc.audio_dim) throw std::invalid_argument("sample: audio dim mismatch");
    const int total = audio.rows;

    auto run_window = [&](const Matrix<T>& audio_win, uint64_t window_seed) {
        EpsFn<T> eps_fn = [&](const Matrix<T>& x_t, int t) {
            PhaseRuntime<T> phase;
            phase.enabled = cfg.phase_enabled;
            phase.t = t;
            phase.cfg = cfg.phase;
            phase.masks = &masks;
            return eps_theta(x_t, t, beta0, audio_win, params, phase);
        };
        return sample_window(eps_fn, mc.t_frames, mc.coeff_dim, sched, cfg.mode, window_seed,
                             cfg.resample_inner, norm_log);
    };

    if (total == mc.t_frames) return run_window(audio, cfg.seed);

    const std::vector<int> starts = window_starts(total, mc.t_frames, cfg.window_overlap);
    std::vector<Matrix<T>> windows;
    windows.reserve(starts.size());
    for (size_t w = 0; w < starts.size(); ++w) {
        Matrix<T> audio_win = row_slice(audio, starts[w], mc.t_frames);
        windows.push_back(run_window(audio_win, derive_seed(cfg.seed, /*stream=*/0x77, w)));
    }
    return stitch_windows(windows, starts, total);
}

template <class T>
struct SampleRequest {
    Matrix<T> beta0;
    Matrix<T> audio;
    uint64_t seed = 0;  // 0 -> derived from the shared config seed and request index
};

// Batch generation; elementwise identical to independent sample() calls with
// per-request derived seeds.
template <class T>
std::vector<Matrix<T>> sample_batch(const std::vector<SampleRequest<T>>& requests,
                                    const ModelParams<T>& params, const NoiseSchedule<T>& sched,
                                    const MaskSet<T>& masks, const SamplerConfig& cfg) {
    std::vector<Matrix<T>> out(requests.size());
    for (size_t r = 0; r < requests.size(); ++r) {
        SamplerConfig rc = cfg;
        rc.seed = requests[r].seed != 0 ? requests[r].seed
                                        : derive_seed(cfg.seed, /*stream=*/0xBA7C, r);
        try {
            out[r] = sample(requests[r].beta0, requests[r].audio, params, sched, masks, rc);
        } catch (const std::exception& e) {
            throw NumericError("sample_batch: request " + std::to_string(r) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace modit
