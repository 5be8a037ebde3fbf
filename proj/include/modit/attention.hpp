#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "modit/matrix.hpp"

namespace modit {

enum class MaskKind { diagonal, dispersed };
enum class PhaseOrder { algorithm_literal, prose_order };

// Nonnegative multiplicative attention mask. `values` spans query rows by key
// columns; the key axis may cover only the semantic positions (audio frames,
// sequence frames) and is expanded to the full concatenated key axis at the
// attention call site.
template <class T>
struct BiasMask {
    MaskKind kind = MaskKind::diagonal;
    Matrix<T> values;
    T bandwidth_or_sigma = T(0);
};

struct BiasTargets {
    bool self_attn = false;
    bool cross_attn = true;  // lip sync is an audio-alignment property
    bool temporal_attn = false;
};

struct PhaseConfig {
    int t_threshold = 1;
    PhaseOrder order = PhaseOrder::algorithm_literal;
    BiasTargets targets;
    bool additive = false;  // add mask to pre-softmax scores instead of multiplying weights
};

// Band mask around the (rescaled) diagonal: entry (i, j) = 1 when
// |i - round(j * T_q / T_k)| <= bandwidth, else floor_value.
template <class T>
BiasMask<T> build_diagonal_bias(int t_q, int t_k, int bandwidth, T floor_value = T(0)) {
    if (t_q < 1 || t_k < 1) throw std::invalid_argument("build_diagonal_bias: empty mask");
    if (bandwidth < 0) throw std::invalid_argument("build_diagonal_bias: bandwidth must be >= 0");
    BiasMask<T> m;
    m.kind = MaskKind::diagonal;
    m.bandwidth_or_sigma = static_cast<T>(bandwidth);
    m.values = Matrix<T>(t_q, t_k);
    for (int j = 0; j < t_k; ++j) {
        const long target = std::llround(static_cast<double>(j) * t_q / t_k);
        for (int i = 0; i < t_q; ++i)
            m.values.at(i, j) = std::abs(i - target) <= bandwidth ? T(1) : floor_value;
    }
    return m;
}

// Gaussian falloff from the rescaled diagonal: entry (i, j) =
// exp(-(i - j*T_q/T_k)^2 / (2 sigma^2)); strictly positive.
template <class T>
BiasMask<T> build_dispersed_bias(int t_q, int t_k, T sigma) {
    if (t_q < 1 || t_k < 1) throw std::invalid_argument("build_dispersed_bias: empty mask");
    if (!(sigma > T(0))) throw std::invalid_argument("build_dispersed_bias: sigma must be > 0");
    BiasMask<T> m;
    m.kind = MaskKind::dispersed;
    m.bandwidth_or_sigma = sigma;
    m.values = Matrix<T>(t_q, t_k);
    for (int i = 0; i < t_q; ++i) {
        for (int j = 0; j < t_k; ++j) {
            const T off = static_cast<T>(i) - static_cast<T>(j) * t_q / t_k;
            m.values.at(i, j) = std::exp(-(off * off) / (T(2) * sigma * sigma));
        }
    }
    return m;
}

template <class T>
void validate_bias_mask(const BiasMask<T>& m) {
    for (int i = 0; i < m.values.rows; ++i) {
        bool any_positive = false;
        for (int j = 0; j < m.values.cols; ++j) {
            const T v = m.values.at(i, j);
            if (v < T(0)) throw NumericError("bias mask: negative entry");
            if (v > T(0)) any_positive = true;
        }
        if (!any_positive) throw NumericError("bias mask: row " + std::to_string(i) + " all zero");
    }
}

// Branch combination from the sampling loop: one mask for t >= t_threshold,
// the (elementwise) sum of both for t < t_threshold; prose order swaps the
// branches. t == t_threshold always takes the ">=" branch.
template <class T>
Matrix<T> phase_combined_mask(int t, const PhaseConfig& cfg, const BiasMask<T>& m_d,
                              const BiasMask<T>& m_e) {
    if (!m_d.values.same_shape(m_e.values))
        throw std::invalid_argument("phase_combined_mask: mask shape mismatch");
    const bool below = t < cfg.t_threshold;
    const bool both = cfg.order == PhaseOrder::algorithm_literal ? below : !below;
    return both ? add(m_d.values, m_e.values) : m_e.values;
}

// Multiplies row-stochastic weights by a nonnegative mask and renormalizes
// each row to sum 1. Throws when a row is masked to all zeros.
template <class T>
Matrix<T> apply_mask_renorm(const Matrix<T>& weights, const Matrix<T>& mask) {
    if (!weights.same_shape(mask)) throw std::invalid_argument("apply_mask_renorm: shape mismatch");
    Matrix<T> out(weights.rows, weights.cols);
    for (int i = 0; i < weights.rows; ++i) {
        T sum = T(0);
        for (int j = 0; j < weights.cols; ++j) {
            const T u = weights.at(i, j) * mask.at(i, j);
            out.at(i, j) = u;
            sum += u;
        }
        if (!(sum > T(0)))
            throw NumericError("apply_mask_renorm: row " + std::to_string(i) +
                               " degenerate after masking");
        for (int j = 0; j < weights.cols; ++j) out.at(i, j) /= sum;
    }
    return out;
}

template <class T>
Matrix<T> apply_phase_bias(const Matrix<T>& weights, int t, const PhaseConfig& cfg,
                           const BiasMask<T>& m_d, const BiasMask<T>& m_e) {
    return apply_mask_renorm(weights, phase_combined_mask(t, cfg, m_d, m_e));
}

// Prepends columns of ones for key positions outside the mask's semantic
// domain (the beta_0 row in self-attention).
template <class T>
Matrix<T> mask_prepend_ones(const Matrix<T>& mask, int prepend_cols) {
    Matrix<T> out(mask.rows, mask.cols + prepend_cols);
    for (int i = 0; i < mask.rows; ++i) {
        for (int j = 0; j < prepend_cols; ++j) out.at(i, j) = T(1);
        for (int j = 0; j < mask.cols; ++j) out.at(i, prepend_cols + j) = mask.at(i, j);
    }
    return out;
}

// Repeats the mask along the key axis. Cross-attention keys are audio frames
// twice over (raw-projected block then K/V-projected block), and the mask is
// indexed by audio frame, so it applies to each copy.
template <class T>
Matrix<T> mask_tile_cols(const Matrix<T>& mask, int copies) {
    Matrix<T> out(mask.rows, mask.cols * copies);
    for (int i = 0; i < mask.rows; ++i)
        for (int c = 0; c < copies; ++c)
            for (int j = 0; j < mask.cols; ++j) out.at(i, c * mask.cols + j) = mask.at(i, j);
    return out;
}

// ---------------------------------------------------------------------------
// learned relative-position score bias f(z)
// ---------------------------------------------------------------------------

// One learned latent per relative offset in [-(T-1), T-1], mapped to a scalar
// additive score term by a 2-layer MLP shared across offsets and heads.
template <class T>
struct TemporalLatent {
    Matrix<T> z;     // (2T-1) x z_dim, row index = offset + (T-1)
    Matrix<T> f1_w;  // z_dim x hidden
    Matrix<T> f2_w;  // hidden x 1
    // No biases: constant score shifts are invisible to softmax, and per-offset
    // shifts live in the z table already.
    static constexpr T leaky_slope = T(0.2);

    int max_offset() const { return (z.rows - 1) / 2; }
};

template <class T>
struct TemporalBiasCache {
    Matrix<T> h_pre;   // (2T-1) x hidden, pre-activation
    Matrix<T> h_act;   // (2T-1) x hidden
    std::vector<T> values;
};

template <class T>
std::vector<T> temporal_bias_values(const TemporalLatent<T>& lat, TemporalBiasCache<T>* cache) {
    Matrix<T> h_pre = matmul(lat.z, lat.f1_w);
    Matrix<T> h_act = leaky_relu(h_pre, TemporalLatent<T>::leaky_slope);
    Matrix<T> out = matmul(h_act, lat.f2_w);
    std::vector<T> values(out.rows);
    for (int i = 0; i < out.rows; ++i) values[i] = out.at(i, 0);
    if (cache) {
        cache->h_pre = std::move(h_pre);
        cache->h_act = std::move(h_act);
        cache->values = values;
    }
    return values;
}

template <class T>
void temporal_bias_backward(const TemporalLatent<T>& lat, const TemporalBiasCache<T>& cache,
                            const std::vector<T>& d_values, TemporalLatent<T>& grads) {
    Matrix<T> d_out(static_cast<int>(d_values.size()), 1);
    for (size_t i = 0; i < d_values.size(); ++i) d_out.at(static_cast<int>(i), 0) = d_values[i];
    add_inplace(grads.f2_w, matmul_at_b(cache.h_act, d_out));
    Matrix<T> d_act = matmul_a_bt(d_out, lat.f2_w);
    Matrix<T> d_pre = leaky_relu_backward(cache.h_pre, d_act, TemporalLatent<T>::leaky_slope);
    add_inplace(grads.f1_w, matmul_at_b(lat.z, d_pre));
    add_inplace(grads.z, matmul_a_bt(d_pre, lat.f1_w));
}

// ---------------------------------------------------------------------------
// multi-head attention core
// ---------------------------------------------------------------------------

template <class T>
struct AttentionParams {
    Matrix<T> w_q, w_k, w_v, w_o;  // width x width
    Matrix<T> b_q, b_v, b_o;       // 1 x width; keys carry no bias (softmax ignores it)
    int heads = 1;
};

template <class T, class Fn>
void for_each_attn_param(AttentionParams<T>& a, const std::string& name, Fn&& fn) {
    fn(name + ".w_q", a.w_q);
    fn(name + ".b_q", a.b_q);
    fn(name + ".w_k", a.w_k);
    fn(name + ".w_v", a.w_v);
    fn(name + ".b_v", a.b_v);
    fn(name + ".w_o", a.w_o);
    fn(name + ".b_o", a.b_o);
}

// Effective bias for one attention evaluation, already expanded to the full
// key axis.
template <class T>
struct AttnBias {
    bool active = false;
    bool additive = false;
    Matrix<T> mask;
};

template <class T>
struct AttnCache {
    Matrix<T> q_src, kv_src, raw_prepend;
    Matrix<T> q, k_full, v_full;
    std::vector<Matrix<T>> probs_pre;  // per head, softmax output before mask bias
    std::vector<Matrix<T>> probs;      // per head, weights actually applied to values
    AttnBias<T> bias;
    Matrix<T> ctx;  // heads merged, before the output projection
    bool has_temporal = false;
    TemporalBiasCache<T> temporal;
};

// Shared core for the three attention roles.
//   q_src:       T_q x C rows projected by W_q
//   kv_src:      rows projected by W_k / W_v (conditioning rows already
//                concatenated by the caller where applicable)
//   raw_prepend: rows entering keys AND values without W_k / W_v (0 rows if unused)
// Bias masks multiply post-softmax weights per head, followed by row
// renormalization; in additive mode the mask is added to pre-softmax scores.
template <class T>
Matrix<T> attention_forward(const Matrix<T>& q_src, const Matrix<T>& kv_src,
                            const Matrix<T>& raw_prepend, const AttentionParams<T>& p,
                            const AttnBias<T>& bias, const TemporalLatent<T>* temporal,
                            AttnCache<T>* cache) {
    const int width = p.w_q.cols;
    if (q_src.cols != width || kv_src.cols != width)
        throw std::invalid_argument("attention_forward: width mismatch");
    if (raw_prepend.rows > 0 && raw_prepend.cols != width)
        throw std::invalid_argument("attention_forward: prepend width mismatch");
    if (width % p.heads != 0)
        throw std::invalid_argument("attention_forward: heads must divide width");
    const int d_k = width / p.heads;
    const int t_q = q_src.rows;
    const int t_k = raw_prepend.rows + kv_src.rows;

    Matrix<T> q = linear_forward(q_src, p.w_q, p.b_q);
    Matrix<T> k_full = vstack(raw_prepend, matmul(kv_src, p.w_k));
    Matrix<T> v_full = vstack(raw_prepend, linear_forward(kv_src, p.w_v, p.b_v));

    if (bias.active && (bias.mask.rows != t_q || bias.mask.cols != t_k))
        throw std::invalid_argument("attention_forward: bias mask must be T_q x T_k");

    std::vector<T> tb_values;
    TemporalBiasCache<T> tb_cache;
    if (temporal) {
        if (t_q != t_k || temporal->max_offset() != t_q - 1)
            throw std::invalid_argument("attention_forward: temporal latent length mismatch");
        tb_values = temporal_bias_values(*temporal, &tb_cache);
    }

    const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(d_k));
    Matrix<T> ctx(t_q, width);
    std::vector<Matrix<T>> probs_pre(p.heads);
    std::vector<Matrix<T>> probs(p.heads);

    for (int h = 0; h < p.heads; ++h) {
        const int off = h * d_k;
        Matrix<T> scores(t_q, t_k);
        for (int i = 0; i < t_q; ++i) {
            for (int j = 0; j < t_k; ++j) {
                T acc = T(0);
                for (int d = 0; d < d_k; ++d) acc += q.at(i, off + d) * k_full.at(j, off + d);
                acc *= inv_sqrt_dk;
                if (temporal) acc += tb_values[static_cast<size_t>(j - i + t_q - 1)];
                if (bias.active && bias.additive) acc += bias.mask.at(i, j);
                scores.at(i, j) = acc;
            }
        }
        probs_pre[h] = softmax_rows(scores);
        probs[h] = (bias.active && !bias.additive) ? apply_mask_renorm(probs_pre[h], bias.mask)
                                                   : probs_pre[h];
        for (int i = 0; i < t_q; ++i)
            for (int j = 0; j < t_k; ++j) {
                const T w = probs[h].at(i, j);
                if (w == T(0)) continue;
                for (int d = 0; d < d_k; ++d) ctx.at(i, off + d) += w * v_full.at(j, off + d);
            }
    }

    Matrix<T> out = linear_forward(ctx, p.w_o, p.b_o);
    if (cache) {
        cache->q_src = q_src;
        cache->kv_src = kv_src;
        cache->raw_prepend = raw_prepend;
        cache->q = std::move(q);
        cache->k_full = std::move(k_full);
        cache->v_full = std::move(v_full);
        cache->probs_pre = std::move(probs_pre);
        cache->probs = std::move(probs);
        cache->bias = bias;
        cache->ctx = std::move(ctx);
        cache->has_temporal = temporal != nullptr;
        cache->temporal = std::move(tb_cache);
    }
    return out;
}

template <class T>
struct AttnInputGrads {
    Matrix<T> d_q_src;
    Matrix<T> d_kv_src;
    Matrix<T> d_raw_prepend;
};

// Backward through attention_forward. Parameter gradients accumulate into
// `grads` (and `temporal_grads` when the call used the learned score bias).
template <class T>
AttnInputGrads<T> attention_backward(const AttnCache<T>& cache, const AttentionParams<T>& p,
                                     const Matrix<T>& d_out, AttentionParams<T>& grads,
                                     const TemporalLatent<T>* temporal,
                                     TemporalLatent<T>* temporal_grads) {
    const int width = p.w_q.cols;
    const int d_k = width / p.heads;
    const int t_q = cache.q.rows;
    const int t_k = cache.k_full.rows;
    const int n_pre = cache.raw_prepend.rows;
    const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(d_k));

    Matrix<T> d_ctx = linear_backward(cache.ctx, p.w_o, d_out, grads.w_o, grads.b_o);

    Matrix<T> d_q(t_q, width);
    Matrix<T> d_k_full(t_k, width);
    Matrix<T> d_v_full(t_k, width);
    std::vector<T> d_tb(cache.has_temporal ? 2 * t_q - 1 : 0, T(0));

    for (int h = 0; h < p.heads; ++h) {
        const int off = h * d_k;
        // d_probs and d_V from ctx_h = probs_h V_h
        Matrix<T> d_probs(t_q, t_k);
        for (int i = 0; i < t_q; ++i)
            for (int j = 0; j < t_k; ++j) {
                T acc = T(0);
                for (int d = 0; d < d_k; ++d)
                    acc += d_ctx.at(i, off + d) * cache.v_full.at(j, off + d);
                d_probs.at(i, j) = acc;
            }
        for (int j = 0; j < t_k; ++j)
            for (int d = 0; d < d_k; ++d) {
                T acc = T(0);
                for (int i = 0; i < t_q; ++i)
                    acc += cache.probs[h].at(i, j) * d_ctx.at(i, off + d);
                d_v_full.at(j, off + d) += acc;
            }

        // through the multiplicative mask + renormalization
        Matrix<T> d_probs_pre;
        if (cache.bias.active && !cache.bias.additive) {
            d_probs_pre = Matrix<T>(t_q, t_k);
            for (int i = 0; i < t_q; ++i) {
                T s = T(0);
                for (int j = 0; j < t_k; ++j)
                    s += cache.probs_pre[h].at(i, j) * cache.bias.mask.at(i, j);
                T dot = T(0);
                for (int j = 0; j < t_k; ++j) dot += d_probs.at(i, j) * cache.probs[h].at(i, j);
                for (int j = 0; j < t_k; ++j)
                    d_probs_pre.at(i, j) =
                        cache.bias.mask.at(i, j) * (d_probs.at(i, j) - dot) / s;
            }
        } else {
            d_probs_pre = std::move(d_probs);
        }

        Matrix<T> d_scores = softmax_backward(cache.probs_pre[h], d_probs_pre);

        if (cache.has_temporal)
            for (int i = 0; i < t_q; ++i)
                for (int j = 0; j < t_k; ++j)
                    d_tb[static_cast<size_t>(j - i + t_q - 1)] += d_scores.at(i, j);

        for (int i = 0; i < t_q; ++i)
            for (int j = 0; j < t_k; ++j) {
                const T ds = d_scores.at(i, j) * inv_sqrt_dk;
                if (ds == T(0)) continue;
                for (int d = 0; d < d_k; ++d) {
                    d_q.at(i, off + d) += ds * cache.k_full.at(j, off + d);
                    d_k_full.at(j, off + d) += ds * cache.q.at(i, off + d);
                }
            }
    }

    if (cache.has_temporal && temporal && temporal_grads)
        temporal_bias_backward(*temporal, cache.temporal, d_tb, *temporal_grads);

    AttnInputGrads<T> in;
    in.d_q_src = linear_backward(cache.q_src, p.w_q, d_q, grads.w_q, grads.b_q);

    Matrix<T> d_k_proj = row_slice(d_k_full, n_pre, t_k - n_pre);
    Matrix<T> d_v_proj = row_slice(d_v_full, n_pre, t_k - n_pre);
    add_inplace(grads.w_k, matmul_at_b(cache.kv_src, d_k_proj));
    in.d_kv_src = matmul_a_bt(d_k_proj, p.w_k);
    add_inplace(in.d_kv_src, linear_backward(cache.kv_src, p.w_v, d_v_proj, grads.w_v, grads.b_v));

    in.d_raw_prepend = Matrix<T>(n_pre, width);
    if (n_pre > 0) {
        add_inplace(in.d_raw_prepend, row_slice(d_k_full, 0, n_pre));
        add_inplace(in.d_raw_prepend, row_slice(d_v_full, 0, n_pre));
    }
    return in;
}

// ---------------------------------------------------------------------------
// role-specific wrappers
// ---------------------------------------------------------------------------

// Self-attention with the source-frame conditioning row prepended to keys and
// values through the same K/V projections as the sequence.
template <class T>
Matrix<T> biased_self_attention(const Matrix<T>& x, const Matrix<T>& beta0_row,
                                const AttentionParams<T>& p, const AttnBias<T>& bias,
                                AttnCache<T>* cache = nullptr) {
    require_shape(beta0_row, 1, x.cols, "biased_self_attention: beta0 row");
    Matrix<T> kv = vstack(beta0_row, x);
    Matrix<T> none(0, x.cols);
    return attention_forward(x, kv, none, p, bias, static_cast<const TemporalLatent<T>*>(nullptr),
                             cache);
}

// Cross-attention over audio latents: keys/values are the width-projected
// audio twice over, first raw then through the learned K/V projections.
template <class T>
Matrix<T> biased_cross_attention(const Matrix<T>& h, const Matrix<T>& audio_w,
                                 const AttentionParams<T>& p, const AttnBias<T>& bias,
                                 AttnCache<T>* cache = nullptr) {
    if (audio_w.cols != h.cols)
        throw std::invalid_argument("biased_cross_attention: audio must be projected to width");
    return attention_forward(h, audio_w, audio_w, p, bias,
                             static_cast<const TemporalLatent<T>*>(nullptr), cache);
}

// Temporal attention whose pre-softmax scores receive the learned
// relative-offset term f(z_{j-i}).
template <class T>
Matrix<T> revised_temporal_attention(const Matrix<T>& h, const TemporalLatent<T>& lat,
                                     const AttentionParams<T>& p,
                                     const AttnBias<T>& bias = AttnBias<T>{},
                                     AttnCache<T>* cache = nullptr) {
    Matrix<T> none(0, h.cols);
    return attention_forward(h, h, none, p, bias, &lat, cache);
}

}  // namespace modit
