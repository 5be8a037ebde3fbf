#pragma once

#include <vector>

#include "modit/matrix.hpp"

namespace modit {

// Deterministic synthetic corpus: audio latents are per-dim AR(1) walks, the
// expression sequence is a fixed random linear map of the audio followed by
// temporal smoothing, and blink tracks are sparse raised-cosine pulses
// independent of audio. With noise_std = 0 the expression is an exact
// function of the audio, so conditioning recovery is checkable.
struct SynthSpec {
    uint64_t seed = 42;
    int num_pairs = 4;
    int t_frames = 12;
    int audio_dim = 16;
    int coeff_dim = 64;
    float noise_std = 0.0f;
    float ar_coeff = 0.9f;
};

struct DataPair {
    MatF audio;                // t_frames x audio_dim
    MatF expression;           // t_frames x coeff_dim
    std::vector<float> blink;  // t_frames
};

namespace detail {
inline constexpr uint64_t kStreamMapping = 0x4D41;
inline constexpr uint64_t kStreamAudio = 0x4155;
inline constexpr uint64_t kStreamNoise = 0x4E4F;
inline constexpr uint64_t kStreamBlink = 0x424C;
}  // namespace detail

// The fixed audio->expression filter bank, a pure function of the spec seed.
inline MatF synth_mapping(const SynthSpec& spec) {
    MatF w(spec.audio_dim, spec.coeff_dim);
    Rng rng(derive_seed(spec.seed, detail::kStreamMapping));
    const float scale = 1.0f / std::sqrt(static_cast<float>(spec.audio_dim));
    for (auto& v : w.data) v = static_cast<float>(rng.normal()) * scale;
    return w;
}

// [0.25, 0.5, 0.25] temporal smoothing, edge-renormalized so constant
// sequences are fixed points.
inline MatF smooth_time(const MatF& x) {
    MatF out(x.rows, x.cols);
    for (int t = 0; t < x.rows; ++t) {
        for (int j = 0; j < x.cols; ++j) {
            float acc = 0.5f * x.at(t, j);
            float norm = 0.5f;
            if (t > 0) {
                acc += 0.25f * x.at(t - 1, j);
                norm += 0.25f;
            }
            if (t + 1 < x.rows) {
                acc += 0.25f * x.at(t + 1, j);
                norm += 0.25f;
            }
            out.at(t, j) = acc / norm;
        }
    }
    return out;
}

// The noiseless audio -> expression ground truth. Reapplying this to a stored
// audio matrix reproduces a noise_std = 0 expression bit-exactly.
inline MatF synth_expression_from_audio(const SynthSpec& spec, const MatF& audio) {
    return smooth_time(matmul(audio, synth_mapping(spec)));
}

inline DataPair gen_pair(const SynthSpec& spec, int index) {
    if (index < 0 || index >= spec.num_pairs)
        throw DataError("gen_pair: index " + std::to_string(index) + " out of range");
    DataPair pair;

    Rng audio_rng(derive_seed(spec.seed, detail::kStreamAudio, static_cast<uint64_t>(index)));
    pair.audio = MatF(spec.t_frames, spec.audio_dim);
    const float rho = spec.ar_coeff;
    const float innovation = std::sqrt(std::max(0.0f, 1.0f - rho * rho));
    for (int t = 0; t < spec.t_frames; ++t)
        for (int d = 0; d < spec.audio_dim; ++d) {
            const float draw = static_cast<float>(audio_rng.normal());
            pair.audio.at(t, d) =
                t == 0 ? draw : rho * pair.audio.at(t - 1, d) + innovation * draw;
        }

    pair.expression = synth_expression_from_audio(spec, pair.audio);
    if (spec.noise_std > 0.0f) {
        Rng noise_rng(derive_seed(spec.seed, detail::kStreamNoise, static_cast<uint64_t>(index)));
        for (auto& v : pair.expression.data)
            v += spec.noise_std * static_cast<float>(noise_rng.normal());
    }

    Rng blink_rng(derive_seed(spec.seed, detail::kStreamBlink, static_cast<uint64_t>(index)));
    pair.blink.assign(spec.t_frames, 0.0f);
    const int pulses = 1 + static_cast<int>(blink_rng.uniform_int(2));
    for (int p = 0; p < pulses; ++p) {
        const double center = blink_rng.uniform(0.15 * spec.t_frames, 0.85 * spec.t_frames);
        const double width = 2.0 + static_cast<double>(blink_rng.uniform_int(3));
        for (int t = 0; t < spec.t_frames; ++t) {
            const double u = std::abs(t - center) / width;
            if (u <= 1.0)
                pair.blink[t] += static_cast<float>(0.5 * (1.0 + std::cos(3.141592653589793 * u)));
        }
    }
    for (auto& v : pair.blink) v = std::min(1.0f, std::max(0.0f, v));
    return pair;
}

inline std::vector<DataPair> gen_pairs(const SynthSpec& spec) {
    std::vector<DataPair> out;
    out.reserve(spec.num_pairs);
    for (int i = 0; i < spec.num_pairs; ++i) out.push_back(gen_pair(spec, i));
    return out;
}

}  // namespace modit
