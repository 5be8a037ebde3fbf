#pragma once

#include <functional>
#include <string>
#include <vector>

#include "modit/attention.hpp"
#include "modit/matrix.hpp"

namespace modit {

struct DenoiserConfig {
    int width = 1024;
    int ffn_width = 2048;
    int heads = 4;
    int blocks = 1;
    int t_frames = 12;
    int coeff_dim = 64;
    int audio_dim = 16;
    int z_dim = 8;
    int temporal_hidden = 16;
    bool use_beta0 = true;
    bool temporal_revision = true;

    void validate() const {
        if (width < 1 || ffn_width < 1 || heads < 1 || blocks < 1 || t_frames < 1 ||
            coeff_dim < 1 || audio_dim < 1 || z_dim < 1 || temporal_hidden < 1)
            throw ConfigError("model: all counts must be >= 1");
        if (width % heads != 0) throw ConfigError("model: width must be divisible by heads");
    }
};

template <class T>
struct LinearParams {
    Matrix<T> w;
    Matrix<T> b;
};

template <class T>
struct BlockParams {
    Matrix<T> ln1_g, ln1_b;
    AttentionParams<T> self_attn;
    Matrix<T> ln2_g, ln2_b;
    AttentionParams<T> cross_attn;
    Matrix<T> ln3_g, ln3_b;
    AttentionParams<T> temporal_attn;
    TemporalLatent<T> temporal;
    Matrix<T> ln4_g, ln4_b;
    LinearParams<T> ffn1, ffn2;
};

template <class T>
struct ModelParams {
    DenoiserConfig cfg;
    LinearParams<T> input_proj;   // coeff_dim -> width
    LinearParams<T> audio_proj;   // audio_dim -> width
    LinearParams<T> beta0_proj;   // coeff_dim -> width
    LinearParams<T> temb1, temb2; // width -> width
    std::vector<BlockParams<T>> blocks;
    LinearParams<T> output_proj;  // width -> coeff_dim
};

template <class T, class Fn>
void for_each_block_param(BlockParams<T>& blk, const std::string& pre, Fn&& fn) {
    fn(pre + "ln1.g", blk.ln1_g);
    fn(pre + "ln1.b", blk.ln1_b);
    for_each_attn_param(blk.self_attn, pre + "self", fn);
    fn(pre + "ln2.g", blk.ln2_g);
    fn(pre + "ln2.b", blk.ln2_b);
    for_each_attn_param(blk.cross_attn, pre + "cross", fn);
    fn(pre + "ln3.g", blk.ln3_g);
    fn(pre + "ln3.b", blk.ln3_b);
    for_each_attn_param(blk.temporal_attn, pre + "tattn", fn);
    fn(pre + "temporal.z", blk.temporal.z);
    fn(pre + "temporal.f1_w", blk.temporal.f1_w);
    fn(pre + "temporal.f2_w", blk.temporal.f2_w);
    fn(pre + "ln4.g", blk.ln4_g);
    fn(pre + "ln4.b", blk.ln4_b);
    fn(pre + "ffn1.w", blk.ffn1.w);
    fn(pre + "ffn1.b", blk.ffn1.b);
    fn(pre + "ffn2.w", blk.ffn2.w);
    fn(pre + "ffn2.b", blk.ffn2.b);
}

// Enumerates every parameter tensor with a stable name. The optimizer,
// checkpoints, and the gradient checker all key off this order.
template <class T, class Fn>
void for_each_param(ModelParams<T>& p, Fn&& fn) {
    auto lin = [&](const std::string& name, LinearParams<T>& l) {
        fn(name + ".w", l.w);
        fn(name + ".b", l.b);
    };
    lin("input_proj", p.input_proj);
    lin("audio_proj", p.audio_proj);
    lin("beta0_proj", p.beta0_proj);
    lin("temb1", p.temb1);
    lin("temb2", p.temb2);
    for (size_t b = 0; b < p.blocks.size(); ++b)
        for_each_block_param(p.blocks[b], "blocks." + std::to_string(b) + ".", fn);
    lin("output_proj", p.output_proj);
}

template <class T>
ModelParams<T> allocate_params(const DenoiserConfig& cfg) {
    cfg.validate();
    ModelParams<T> p;
    p.cfg = cfg;
    auto lin = [](LinearParams<T>& l, int in, int out) {
        l.w = Matrix<T>(in, out);
        l.b = Matrix<T>(1, out);
    };
    lin(p.input_proj, cfg.coeff_dim, cfg.width);
    lin(p.audio_proj, cfg.audio_dim, cfg.width);
    lin(p.beta0_proj, cfg.coeff_dim, cfg.width);
    lin(p.temb1, cfg.width, cfg.width);
    lin(p.temb2, cfg.width, cfg.width);
    p.blocks.resize(cfg.blocks);
    for (auto& blk : p.blocks) {
        auto attn = [&](AttentionParams<T>& a) {
            a.heads = cfg.heads;
            a.w_q = Matrix<T>(cfg.width, cfg.width);
            a.w_k = Matrix<T>(cfg.width, cfg.width);
            a.w_v = Matrix<T>(cfg.width, cfg.width);
            a.w_o = Matrix<T>(cfg.width, cfg.width);
            a.b_q = Matrix<T>(1, cfg.width);
            a.b_v = Matrix<T>(1, cfg.width);
            a.b_o = Matrix<T>(1, cfg.width);
        };
        blk.ln1_g = Matrix<T>(1, cfg.width);
        blk.ln1_b = Matrix<T>(1, cfg.width);
        attn(blk.self_attn);
        blk.ln2_g = Matrix<T>(1, cfg.width);
        blk.ln2_b = Matrix<T>(1, cfg.width);
        attn(blk.cross_attn);
        blk.ln3_g = Matrix<T>(1, cfg.width);
        blk.ln3_b = Matrix<T>(1, cfg.width);
        attn(blk.temporal_attn);
        blk.temporal.z = Matrix<T>(2 * cfg.t_frames - 1, cfg.z_dim);
        blk.temporal.f1_w = Matrix<T>(cfg.z_dim, cfg.temporal_hidden);
        blk.temporal.f2_w = Matrix<T>(cfg.temporal_hidden, 1);
        blk.ln4_g = Matrix<T>(1, cfg.width);
        blk.ln4_b = Matrix<T>(1, cfg.width);
        lin(blk.ffn1, cfg.width, cfg.ffn_width);
        lin(blk.ffn2, cfg.ffn_width, cfg.width);
    }
    lin(p.output_proj, cfg.width, cfg.coeff_dim);
    return p;
}

// Weight matrices uniform in +-1/sqrt(fan_in); biases zero; layer-norm gains
// one. The output projection is zero so the initial prediction is identically
// zero, unless the caller needs every gradient path live (gradient checking).
template <class T>
ModelParams<T> init_params(const DenoiserConfig& cfg, uint64_t seed, bool zero_output = true) {
    ModelParams<T> p = allocate_params<T>(cfg);
    Rng rng(derive_seed(seed, /*stream=*/0xA11C));
    for_each_param(p, [&](const std::string& name, Matrix<T>& m) {
        const bool is_gain = name.ends_with("ln1.g") || name.ends_with("ln2.g") ||
                             name.ends_with("ln3.g") || name.ends_with("ln4.g");
        const bool is_bias_like = m.rows == 1 && !name.ends_with("temporal.z");
        if (is_gain) {
            m.fill(T(1));
        } else if (name.starts_with("output_proj") && zero_output) {
            m.fill(T(0));
        } else if (is_bias_like && !name.ends_with(".g")) {
            m.fill(T(0));
        } else {
            const T bound = T(1) / std::sqrt(static_cast<T>(m.rows));
            m.fill_uniform(rng, -bound, bound);
        }
    });
    return p;
}

template <class T>
ModelParams<T> zeros_like(const ModelParams<T>& p) {
    ModelParams<T> z = p;
    for_each_param(z, [](const std::string&, Matrix<T>& m) { m.fill(T(0)); });
    return z;
}

// ---------------------------------------------------------------------------
// timestep embedding
// ---------------------------------------------------------------------------

// Interleaved sin/cos of t at geometrically spaced frequencies (pre-MLP).
template <class T>
Matrix<T> timestep_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0)
        throw std::invalid_argument("timestep_embedding: dim must be even and >= 2");
    Matrix<T> e(1, dim);
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double freq =
            half == 1 ? 1.0 : std::exp(-std::log(10000.0) * static_cast<double>(k) / (half - 1));
        e.at(0, 2 * k) = static_cast<T>(std::sin(t * freq));
        e.at(0, 2 * k + 1) = static_cast<T>(std::cos(t * freq));
    }
    return e;
}

// ---------------------------------------------------------------------------
// phase-bias plumbing
// ---------------------------------------------------------------------------

// Masks built over each role's semantic key domain: sequence frames for
// self/temporal attention, audio frames for cross attention.
template <class T>
struct MaskSet {
    BiasMask<T> d_seq, e_seq;      // t_frames x t_frames
    BiasMask<T> d_audio, e_audio;  // t_frames x t_audio
};

template <class T>
MaskSet<T> build_mask_set(int t_frames, int t_audio, int bandwidth, T sigma) {
    MaskSet<T> m;
    m.d_seq = build_diagonal_bias<T>(t_frames, t_frames, bandwidth);
    m.e_seq = build_dispersed_bias<T>(t_frames, t_frames, sigma);
    m.d_audio = build_diagonal_bias<T>(t_frames, t_audio, bandwidth);
    m.e_audio = build_dispersed_bias<T>(t_frames, t_audio, sigma);
    return m;
}

// Bias-injection state for one denoiser evaluation at a known timestep.
template <class T>
struct PhaseRuntime {
    bool enabled = false;
    int t = 1;
    PhaseConfig cfg;
    const MaskSet<T>* masks = nullptr;
};

enum class AttnRole { self_attn, cross_attn, temporal_attn };

template <class T>
AttnBias<T> resolve_role_bias(AttnRole role, const PhaseRuntime<T>& phase, bool beta0_prepended) {
    AttnBias<T> bias;
    if (!phase.enabled || phase.masks == nullptr) return bias;
    const BiasTargets& tg = phase.cfg.targets;
    const bool wanted = (role == AttnRole::self_attn && tg.self_attn) ||
                        (role == AttnRole::cross_attn && tg.cross_attn) ||
                        (role == AttnRole::temporal_attn && tg.temporal_attn);
    if (!wanted) return bias;
    const MaskSet<T>& ms = *phase.masks;
    Matrix<T> combined = role == AttnRole::cross_attn
                             ? phase_combined_mask(phase.t, phase.cfg, ms.d_audio, ms.e_audio)
                             : phase_combined_mask(phase.t, phase.cfg, ms.d_seq, ms.e_seq);
    bias.active = true;
    bias.additive = phase.cfg.additive;
    switch (role) {
        case AttnRole::self_attn:
            bias.mask = beta0_prepended ? mask_prepend_ones(combined, 1) : std::move(combined);
            break;
        case AttnRole::cross_attn:
            bias.mask = mask_tile_cols(combined, 2);
            break;
        case AttnRole::temporal_attn:
            bias.mask = std::move(combined);
            break;
    }
    return bias;
}

// Per-role attention weights recorded for inspection of the phase logic.
template <class T>
struct AttnTraceEntry {
    int block = 0;
    AttnRole role = AttnRole::self_attn;
    bool bias_active = false;
    bool additive = false;
    Matrix<T> mask;
    std::vector<Matrix<T>> probs_pre;
    std::vector<Matrix<T>> probs;
};

template <class T>
using AttnTrace = std::vector<AttnTraceEntry<T>>;

// ---------------------------------------------------------------------------
// forward / backward
// ---------------------------------------------------------------------------

template <class T>
struct BlockCache {
    Matrix<T> h_in;  // after the timestep embedding add
    LayerNormCache<T> ln1c;
    AttnCache<T> self_c;
    LayerNormCache<T> ln2c;
    AttnCache<T> cross_c;
    LayerNormCache<T> ln3c;
    AttnCache<T> temp_c;
    bool temporal_used = false;
    LayerNormCache<T> ln4c;
    Matrix<T> ffn_in, ffn_pre, ffn_act;
};

template <class T>
struct EpsCache {
    Matrix<T> x_in;
    Matrix<T> temb_sin, temb_pre, temb_act, temb;
    Matrix<T> audio_in, audio_w;
    Matrix<T> beta0_in, beta0_w;
    std::vector<BlockCache<T>> blocks;
    Matrix<T> h_final;  // residual stream entering the output projection
};

inline constexpr double kLayerNormEps = 1e-5;

// One pre-norm residual block: the timestep embedding is added to every
// position at entry, then self attention (beta0 row in keys/values), cross
// attention over audio latents, temporal attention, and the FFN, each summed
// with its input.
template <class T>
Matrix<T> transformer_block_forward(const Matrix<T>& x, const Matrix<T>& beta0_w,
                                    const Matrix<T>& audio_w, const Matrix<T>& t_emb,
                                    const BlockParams<T>& blk, const DenoiserConfig& cfg,
                                    const PhaseRuntime<T>& phase, BlockCache<T>& bc,
                                    AttnTrace<T>* trace = nullptr, int block_index = 0) {
    const T ln_eps = static_cast<T>(kLayerNormEps);
    Matrix<T> none(0, cfg.width);
    Matrix<T> h = x;
    for (int i = 0; i < h.rows; ++i)
        for (int j = 0; j < h.cols; ++j) h.at(i, j) += t_emb.at(0, j);
    bc.h_in = h;

    auto record = [&](AttnRole role, const AttnCache<T>& ac, const AttnBias<T>& bias) {
        if (!trace) return;
        AttnTraceEntry<T> e;
        e.block = block_index;
        e.role = role;
        e.bias_active = bias.active;
        e.additive = bias.additive;
        e.mask = bias.mask;
        e.probs_pre = ac.probs_pre;
        e.probs = ac.probs;
        trace->push_back(std::move(e));
    };

    {
        Matrix<T> normed = layer_norm(h, blk.ln1_g, blk.ln1_b, ln_eps, &bc.ln1c);
        AttnBias<T> bias = resolve_role_bias(AttnRole::self_attn, phase, cfg.use_beta0);
        Matrix<T> kv = cfg.use_beta0 ? vstack(beta0_w, normed) : normed;
        Matrix<T> out = attention_forward(normed, kv, none, blk.self_attn, bias,
                                          static_cast<const TemporalLatent<T>*>(nullptr),
                                          &bc.self_c);
        record(AttnRole::self_attn, bc.self_c, bias);
        add_inplace(h, out);
    }
    {
        Matrix<T> normed = layer_norm(h, blk.ln2_g, blk.ln2_b, ln_eps, &bc.ln2c);
        AttnBias<T> bias = resolve_role_bias(AttnRole::cross_attn, phase, false);
        Matrix<T> out = attention_forward(normed, audio_w, audio_w, blk.cross_attn, bias,
                                          static_cast<const TemporalLatent<T>*>(nullptr),
                                          &bc.cross_c);
        record(AttnRole::cross_attn, bc.cross_c, bias);
        add_inplace(h, out);
    }
    {
        Matrix<T> normed = layer_norm(h, blk.ln3_g, blk.ln3_b, ln_eps, &bc.ln3c);
        AttnBias<T> bias = resolve_role_bias(AttnRole::temporal_attn, phase, false);
        bc.temporal_used = cfg.temporal_revision;
        const TemporalLatent<T>* lat = cfg.temporal_revision ? &blk.temporal : nullptr;
        Matrix<T> out =
            attention_forward(normed, normed, none, blk.temporal_attn, bias, lat, &bc.temp_c);
        record(AttnRole::temporal_attn, bc.temp_c, bias);
        add_inplace(h, out);
    }
    {
        bc.ffn_in = layer_norm(h, blk.ln4_g, blk.ln4_b, ln_eps, &bc.ln4c);
        bc.ffn_pre = linear_forward(bc.ffn_in, blk.ffn1.w, blk.ffn1.b);
        bc.ffn_act = gelu(bc.ffn_pre);
        Matrix<T> out = linear_forward(bc.ffn_act, blk.ffn2.w, blk.ffn2.b);
        add_inplace(h, out);
    }
    return h;
}

template <class T>
struct BlockInputGrads {
    Matrix<T> d_x;
    Matrix<T> d_beta0_w;
    Matrix<T> d_audio_w;
    Matrix<T> d_temb;
};

template <class T>
BlockInputGrads<T> transformer_block_backward(const BlockCache<T>& bc, const BlockParams<T>& blk,
                                              const DenoiserConfig& cfg, const Matrix<T>& d_out,
                                              BlockParams<T>& gblk, int audio_rows) {
    Matrix<T> d_h = d_out;
    BlockInputGrads<T> in;
    in.d_beta0_w = Matrix<T>(1, cfg.width);
    in.d_audio_w = Matrix<T>(audio_rows, cfg.width);

    // FFN sublayer
    {
        Matrix<T> d_act = linear_backward(bc.ffn_act, blk.ffn2.w, d_h, gblk.ffn2.w, gblk.ffn2.b);
        Matrix<T> d_pre = gelu_backward(bc.ffn_pre, d_act);
        Matrix<T> d_norm = linear_backward(bc.ffn_in, blk.ffn1.w, d_pre, gblk.ffn1.w, gblk.ffn1.b);
        Matrix<T> d_x = layer_norm_backward(bc.ln4c, blk.ln4_g, d_norm, gblk.ln4_g, gblk.ln4_b);
        add_inplace(d_h, d_x);
    }
    // temporal attention sublayer
    {
        const TemporalLatent<T>* lat = bc.temporal_used ? &blk.temporal : nullptr;
        TemporalLatent<T>* glat = bc.temporal_used ? &gblk.temporal : nullptr;
        AttnInputGrads<T> ig =
            attention_backward(bc.temp_c, blk.temporal_attn, d_h, gblk.temporal_attn, lat, glat);
        Matrix<T> d_norm = ig.d_q_src;
        add_inplace(d_norm, ig.d_kv_src);
        Matrix<T> d_x = layer_norm_backward(bc.ln3c, blk.ln3_g, d_norm, gblk.ln3_g, gblk.ln3_b);
        add_inplace(d_h, d_x);
    }
    // cross attention sublayer
    {
        AttnInputGrads<T> ig =
            attention_backward(bc.cross_c, blk.cross_attn, d_h, gblk.cross_attn,
                               static_cast<const TemporalLatent<T>*>(nullptr),
                               static_cast<TemporalLatent<T>*>(nullptr));
        add_inplace(in.d_audio_w, ig.d_kv_src);
        add_inplace(in.d_audio_w, ig.d_raw_prepend);
        Matrix<T> d_x = layer_norm_backward(bc.ln2c, blk.ln2_g, ig.d_q_src, gblk.ln2_g, gblk.ln2_b);
        add_inplace(d_h, d_x);
    }
    // self attention sublayer
    {
        AttnInputGrads<T> ig =
            attention_backward(bc.self_c, blk.self_attn, d_h, gblk.self_attn,
                               static_cast<const TemporalLatent<T>*>(nullptr),
                               static_cast<TemporalLatent<T>*>(nullptr));
        Matrix<T> d_norm = ig.d_q_src;
        if (cfg.use_beta0) {
            add_inplace(in.d_beta0_w, row_slice(ig.d_kv_src, 0, 1));
            add_inplace(d_norm, row_slice(ig.d_kv_src, 1, ig.d_kv_src.rows - 1));
        } else {
            add_inplace(d_norm, ig.d_kv_src);
        }
        Matrix<T> d_x = layer_norm_backward(bc.ln1c, blk.ln1_g, d_norm, gblk.ln1_g, gblk.ln1_b);
        add_inplace(d_h, d_x);
    }
    in.d_temb = col_sum(d_h);
    in.d_x = std::move(d_h);
    return in;
}

// The conditional noise predictor: input/audio/beta0 projections, a stack of
// transformer blocks, then the output projection back to coefficient space.
template <class T>
Matrix<T> eps_theta(const Matrix<T>& x_t, int t, const Matrix<T>& beta0, const Matrix<T>& audio,
                    const ModelParams<T>& p, const PhaseRuntime<T>& phase, EpsCache<T>* cache = nullptr,
                    AttnTrace<T>* trace = nullptr) {
    const DenoiserConfig& cfg = p.cfg;
    require_shape(x_t, x_t.rows, cfg.coeff_dim, "eps_theta: x_t");
    require_shape(beta0, 1, cfg.coeff_dim, "eps_theta: beta0");
    if (audio.cols != cfg.audio_dim) throw std::invalid_argument("eps_theta: audio dim mismatch");
    if (audio.rows != x_t.rows)
        throw std::invalid_argument("eps_theta: audio length must equal frame count");

    EpsCache<T> local;
    EpsCache<T>& c = cache ? *cache : local;
    c.x_in = x_t;
    c.audio_in = audio;
    c.beta0_in = beta0;

    c.temb_sin = timestep_embedding<T>(t, cfg.width);
    c.temb_pre = linear_forward(c.temb_sin, p.temb1.w, p.temb1.b);
    c.temb_act = gelu(c.temb_pre);
    c.temb = linear_forward(c.temb_act, p.temb2.w, p.temb2.b);

    c.audio_w = linear_forward(audio, p.audio_proj.w, p.audio_proj.b);
    c.beta0_w = linear_forward(beta0, p.beta0_proj.w, p.beta0_proj.b);

    Matrix<T> h = linear_forward(x_t, p.input_proj.w, p.input_proj.b);
    c.blocks.clear();
    c.blocks.resize(p.blocks.size());

    for (size_t b = 0; b < p.blocks.size(); ++b)
        h = transformer_block_forward(h, c.beta0_w, c.audio_w, c.temb, p.blocks[b], cfg, phase,
                                      c.blocks[b], trace, static_cast<int>(b));
    c.h_final = h;
    return linear_forward(h, p.output_proj.w, p.output_proj.b);
}

// Accumulates parameter gradients for one eps_theta evaluation into `grads`.
// d_eps is the loss gradient with respect to the predicted noise.
template <class T>
void eps_theta_backward(const EpsCache<T>& c, const ModelParams<T>& p, const Matrix<T>& d_eps,
                        ModelParams<T>& grads) {
    const DenoiserConfig& cfg = p.cfg;
    const int width = cfg.width;

    Matrix<T> d_h = linear_backward(c.h_final, p.output_proj.w, d_eps, grads.output_proj.w,
                                    grads.output_proj.b);

    Matrix<T> d_temb(1, width);
    Matrix<T> d_audio_w(c.audio_w.rows, width);
    Matrix<T> d_beta0_w(1, width);

    for (int b = static_cast<int>(p.blocks.size()) - 1; b >= 0; --b) {
        BlockInputGrads<T> ig = transformer_block_backward(c.blocks[b], p.blocks[b], cfg, d_h,
                                                           grads.blocks[b], c.audio_w.rows);
        d_h = std::move(ig.d_x);
        add_inplace(d_temb, ig.d_temb);
        add_inplace(d_audio_w, ig.d_audio_w);
        add_inplace(d_beta0_w, ig.d_beta0_w);
    }

    linear_backward(c.x_in, p.input_proj.w, d_h, grads.input_proj.w, grads.input_proj.b);
    linear_backward(c.audio_in, p.audio_proj.w, d_audio_w, grads.audio_proj.w, grads.audio_proj.b);
    linear_backward(c.beta0_in, p.beta0_proj.w, d_beta0_w, grads.beta0_proj.w, grads.beta0_proj.b);

    Matrix<T> d_temb_act =
        linear_backward(c.temb_act, p.temb2.w, d_temb, grads.temb2.w, grads.temb2.b);
    Matrix<T> d_temb_pre = gelu_backward(c.temb_pre, d_temb_act);
    linear_backward(c.temb_sin, p.temb1.w, d_temb_pre, grads.temb1.w, grads.temb1.b);
}

}  // namespace modit
