#pragma once

#include <array>
#include <vector>

#include "modit/adamw.hpp"
#include "modit/losses.hpp"
#include "modit/matrix.hpp"

namespace modit {

// Per-frame eye-closure intensity, clamped to [0, 1].
template <class T>
struct BlinkTrack {
    std::vector<T> intensity;

    explicit BlinkTrack(std::vector<T> values = {}) : intensity(std::move(values)) {
        for (auto& v : intensity) v = std::min(T(1), std::max(T(0), v));
    }
    int frames() const { return static_cast<int>(intensity.size()); }
};

// ---------------------------------------------------------------------------
// 1-D convolution over time (same padding)
// ---------------------------------------------------------------------------

template <class T>
struct Conv1dParams {
    Matrix<T> w;  // out_ch x (in_ch * kernel)
    Matrix<T> b;  // 1 x out_ch
    int in_ch = 0;
    int kernel = 3;
};

template <class T>
Matrix<T> conv1d_same(const Matrix<T>& x, const Conv1dParams<T>& p) {
    if (x.cols != p.in_ch) throw std::invalid_argument("conv1d_same: channel mismatch");
    const int out_ch = p.w.rows;
    const int pad = p.kernel / 2;
    Matrix<T> out(x.rows, out_ch);
    for (int t = 0; t < x.rows; ++t) {
        for (int oc = 0; oc < out_ch; ++oc) {
            T acc = p.b.at(0, oc);
            for (int d = 0; d < p.kernel; ++d) {
                const int src = t + d - pad;
                if (src < 0 || src >= x.rows) continue;
                for (int ic = 0; ic < p.in_ch; ++ic)
                    acc += p.w.at(oc, ic * p.kernel + d) * x.at(src, ic);
            }
            out.at(t, oc) = acc;
        }
    }
    return out;
}

template <class T>
Matrix<T> conv1d_same_backward(const Matrix<T>& x, const Conv1dParams<T>& p,
                               const Matrix<T>& d_out, Conv1dParams<T>& grads) {
    const int out_ch = p.w.rows;
    const int pad = p.kernel / 2;
    Matrix<T> d_x(x.rows, x.cols);
    for (int t = 0; t < x.rows; ++t) {
        for (int oc = 0; oc < out_ch; ++oc) {
            const T g = d_out.at(t, oc);
            if (g == T(0)) continue;
            grads.b.at(0, oc) += g;
            for (int d = 0; d < p.kernel; ++d) {
                const int src = t + d - pad;
                if (src < 0 || src >= x.rows) continue;
                for (int ic = 0; ic < p.in_ch; ++ic) {
                    grads.w.at(oc, ic * p.kernel + d) += g * x.at(src, ic);
                    d_x.at(src, ic) += g * p.w.at(oc, ic * p.kernel + d);
                }
            }
        }
    }
    return d_x;
}

// ---------------------------------------------------------------------------
// blink fusion + pose heads
// ---------------------------------------------------------------------------

template <class T>
struct BlinkPoseParams {
    std::vector<Conv1dParams<T>> stages;  // conv -> LeakyReLU(0.2), iterated
    Matrix<T> delta_w, delta_b;           // features -> coeff adjustment delta'
    Matrix<T> yaw_w, yaw_b;               // features -> angle bins
    Matrix<T> pitch_w, pitch_b;
    Matrix<T> roll_w, roll_b;
    Matrix<T> tr_w, tr_b;  // features -> translation
    int bins = 66;
    T angle_lo = T(-1.5707963267948966);
    T angle_hi = T(1.5707963267948966);
    static constexpr T leaky_slope = T(0.2);
};

template <class T, class Fn>
void for_each_blink_param(BlinkPoseParams<T>& p, Fn&& fn) {
    for (size_t s = 0; s < p.stages.size(); ++s) {
        fn("stage" + std::to_string(s) + ".w", p.stages[s].w);
        fn("stage" + std::to_string(s) + ".b", p.stages[s].b);
    }
    fn("delta.w", p.delta_w);
    fn("delta.b", p.delta_b);
    fn("yaw.w", p.yaw_w);
    fn("yaw.b", p.yaw_b);
    fn("pitch.w", p.pitch_w);
    fn("pitch.b", p.pitch_b);
    fn("roll.w", p.roll_w);
    fn("roll.b", p.roll_b);
    fn("tr.w", p.tr_w);
    fn("tr.b", p.tr_b);
}

template <class T>
BlinkPoseParams<T> init_blink_params(int coeff_dim, int channels, int stages, int kernel,
                                     uint64_t seed, int bins = 66) {
    if (stages < 1 || channels < 1 || kernel < 1 || kernel % 2 == 0)
        throw ConfigError("blink: need stages >= 1 and odd kernel >= 1");
    BlinkPoseParams<T> p;
    p.bins = bins;
    Rng rng(derive_seed(seed, /*stream=*/0xB1));
    p.stages.resize(stages);
    int in_ch = coeff_dim + 1;  // blink channel concatenated before stage 1
    for (auto& st : p.stages) {
        st.in_ch = in_ch;
        st.kernel = kernel;
        st.w = Matrix<T>(channels, in_ch * kernel);
        const T bound = T(1) / std::sqrt(static_cast<T>(in_ch * kernel));
        st.w.fill_uniform(rng, -bound, bound);
        st.b = Matrix<T>(1, channels);
        in_ch = channels;
    }
    auto head = [&](Matrix<T>& w, Matrix<T>& b, int out) {
        w = Matrix<T>(channels, out);
        const T bound = T(1) / std::sqrt(static_cast<T>(channels));
        w.fill_uniform(rng, -bound, bound);
        b = Matrix<T>(1, out);
    };
    head(p.delta_w, p.delta_b, coeff_dim);
    head(p.yaw_w, p.yaw_b, bins);
    head(p.pitch_w, p.pitch_b, bins);
    head(p.roll_w, p.roll_b, bins);
    head(p.tr_w, p.tr_b, 3);
    return p;
}

template <class T>
struct BlinkFuseCache {
    std::vector<Matrix<T>> stage_in;   // input of each conv stage
    std::vector<Matrix<T>> stage_pre;  // pre-activation output
};

// Fuses a coefficient window with its blink track: the blink intensity is
// concatenated as an extra channel, then N conv/LeakyReLU stages produce the
// shared feature sequence.
template <class T>
Matrix<T> blink_fuse(const Matrix<T>& beta_window, const BlinkTrack<T>& blink,
                     const BlinkPoseParams<T>& p, BlinkFuseCache<T>* cache = nullptr) {
    if (beta_window.rows < 3) throw std::invalid_argument("blink_fuse: window too short");
    if (blink.frames() != beta_window.rows)
        throw std::invalid_argument("blink_fuse: blink track length mismatch");
    Matrix<T> h(beta_window.rows, beta_window.cols + 1);
    for (int t = 0; t < beta_window.rows; ++t) {
        for (int j = 0; j < beta_window.cols; ++j) h.at(t, j) = beta_window.at(t, j);
        h.at(t, beta_window.cols) = blink.intensity[t];
    }
    if (cache) {
        cache->stage_in.clear();
        cache->stage_pre.clear();
    }
    for (const auto& st : p.stages) {
        if (cache) cache->stage_in.push_back(h);
        Matrix<T> pre = conv1d_same(h, st);
        if (cache) cache->stage_pre.push_back(pre);
        h = leaky_relu(pre, BlinkPoseParams<T>::leaky_slope);
    }
    return h;
}

// d_features -> accumulates stage gradients, returns d w.r.t. the fused input
// (coefficient channels and the blink channel).
template <class T>
Matrix<T> blink_fuse_backward(const BlinkFuseCache<T>& cache, const BlinkPoseParams<T>& p,
                              const Matrix<T>& d_features, BlinkPoseParams<T>& grads) {
    Matrix<T> d = d_features;
    for (int s = static_cast<int>(p.stages.size()) - 1; s >= 0; --s) {
        Matrix<T> d_pre = leaky_relu_backward(cache.stage_pre[s], d, BlinkPoseParams<T>::leaky_slope);
        d = conv1d_same_backward(cache.stage_in[s], p.stages[s], d_pre, grads.stages[s]);
    }
    return d;
}

// ---------------------------------------------------------------------------
// pose heads: binned-softmax angles, linear translation and adjustment
// ---------------------------------------------------------------------------

template <class T>
struct PoseOutput {
    Matrix<T> angles;  // frames x 3 (yaw, pitch, roll), radians
    Matrix<T> tr;      // frames x 3 translation tr'
    Matrix<T> delta;   // frames x coeff_dim adjustment delta'
};

template <class T>
struct PoseHeadCache {
    Matrix<T> features;
    std::array<Matrix<T>, 3> probs;  // per angle head
};

template <class T>
std::vector<T> pose_bin_centers(int bins, T lo, T hi) {
    if (bins < 2) throw std::invalid_argument("pose_head: need at least 2 bins");
    std::vector<T> centers(bins);
    for (int k = 0; k < bins; ++k)
        centers[k] = lo + (static_cast<T>(k) + T(0.5)) * (hi - lo) / static_cast<T>(bins);
    return centers;
}

// Each angle is the expectation of bin centers under a softmax over B bins,
// so outputs always lie inside [lo, hi].
template <class T>
PoseOutput<T> pose_head(const Matrix<T>& features, const BlinkPoseParams<T>& p,
                        PoseHeadCache<T>* cache = nullptr) {
    const std::vector<T> centers = pose_bin_centers(p.bins, p.angle_lo, p.angle_hi);
    PoseOutput<T> out;
    out.angles = Matrix<T>(features.rows, 3);
    const Matrix<T>* ws[3] = {&p.yaw_w, &p.pitch_w, &p.roll_w};
    const Matrix<T>* bs[3] = {&p.yaw_b, &p.pitch_b, &p.roll_b};
    for (int a = 0; a < 3; ++a) {
        Matrix<T> probs = softmax_rows(linear_forward(features, *ws[a], *bs[a]));
        for (int t = 0; t < features.rows; ++t) {
            T acc = T(0);
            for (int k = 0; k < p.bins; ++k) acc += probs.at(t, k) * centers[k];
            out.angles.at(t, a) = acc;
        }
        if (cache) cache->probs[a] = std::move(probs);
    }
    out.tr = linear_forward(features, p.tr_w, p.tr_b);
    out.delta = linear_forward(features, p.delta_w, p.delta_b);
    if (cache) cache->features = features;
    return out;
}

// Backward for the full pose head; returns d_features.
template <class T>
Matrix<T> pose_head_backward(const PoseHeadCache<T>& cache, const BlinkPoseParams<T>& p,
                             const Matrix<T>& d_angles, const Matrix<T>& d_tr,
                             const Matrix<T>& d_delta, BlinkPoseParams<T>& grads) {
    const std::vector<T> centers = pose_bin_centers(p.bins, p.angle_lo, p.angle_hi);
    const Matrix<T>* ws[3] = {&p.yaw_w, &p.pitch_w, &p.roll_w};
    Matrix<T>* gw[3] = {&grads.yaw_w, &grads.pitch_w, &grads.roll_w};
    Matrix<T>* gb[3] = {&grads.yaw_b, &grads.pitch_b, &grads.roll_b};
    Matrix<T> d_feat(cache.features.rows, cache.features.cols);
    for (int a = 0; a < 3; ++a) {
        Matrix<T> d_probs(cache.features.rows, p.bins);
        for (int t = 0; t < cache.features.rows; ++t)
            for (int k = 0; k < p.bins; ++k) d_probs.at(t, k) = d_angles.at(t, a) * centers[k];
        Matrix<T> d_logits = softmax_backward(cache.probs[a], d_probs);
        add_inplace(d_feat, linear_backward(cache.features, *ws[a], d_logits, *gw[a], *gb[a]));
    }
    add_inplace(d_feat, linear_backward(cache.features, p.tr_w, d_tr, grads.tr_w, grads.tr_b));
    add_inplace(d_feat,
                linear_backward(cache.features, p.delta_w, d_delta, grads.delta_w, grads.delta_b));
    return d_feat;
}

// ---------------------------------------------------------------------------
// toy face basis and shape assembly
// ---------------------------------------------------------------------------

// Linear face model over V vertices: rows of u_id / u_exp are flattened V*3
// displacement fields, unit-normalized.
template <class T>
struct ToyFaceBasis {
    int vertices = 0;
    Matrix<T> mean;   // V x 3
    Matrix<T> u_id;   // 80 x (V*3)
    Matrix<T> u_exp;  // 64 x (V*3)
    int upper_eyelid = 0;
    int lower_eyelid = 1;
};

template <class T>
Matrix<T> assemble_shape(const Matrix<T>& alpha_id, const Matrix<T>& beta_exp,
                         const ToyFaceBasis<T>& basis) {
    require_shape(alpha_id, 1, basis.u_id.rows, "assemble_shape: alpha");
    require_shape(beta_exp, 1, basis.u_exp.rows, "assemble_shape: beta");
    Matrix<T> flat = matmul(alpha_id, basis.u_id);
    add_inplace(flat, matmul(beta_exp, basis.u_exp));
    Matrix<T> out = basis.mean;
    for (int v = 0; v < basis.vertices; ++v)
        for (int d = 0; d < 3; ++d) out.at(v, d) += flat.at(0, v * 3 + d);
    return out;
}

template <class T>
T eye_closure_distance(const Matrix<T>& vertices, int upper, int lower) {
    if (upper < 0 || lower < 0 || upper >= vertices.rows || lower >= vertices.rows)
        throw std::invalid_argument("eye_closure_distance: vertex index out of range");
    T acc = T(0);
    for (int d = 0; d < 3; ++d) {
        const T diff = vertices.at(upper, d) - vertices.at(lower, d);
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

inline constexpr double kBlinkCoeffGain = 0.9;  // eyelid coefficient at full closure

// Synthetic basis with a known blink geometry: vertex 0 is the upper eyelid
// at (0,1,0), vertex 1 the lower at the origin, and expression channel 0
// moves the upper eyelid straight down by one unit. Channels 1.. only touch
// vertices >= 2, so eyelid distance depends on channel 0 alone.
template <class T>
ToyFaceBasis<T> make_toy_blink_basis(int vertices, uint64_t seed) {
    if (vertices < 4) throw std::invalid_argument("make_toy_blink_basis: need at least 4 vertices");
    ToyFaceBasis<T> basis;
    basis.vertices = vertices;
    basis.mean = Matrix<T>(vertices, 3);
    basis.mean.at(0, 1) = T(1);
    Rng rng(derive_seed(seed, /*stream=*/0xFACE));
    for (int v = 2; v < vertices; ++v)
        for (int d = 0; d < 3; ++d) basis.mean.at(v, d) = static_cast<T>(rng.uniform(-1.0, 1.0));

    auto fill_normalized = [&](Matrix<T>& u, bool skip_eyelids) {
        for (int r = 0; r < u.rows; ++r) {
            T norm = T(0);
            const int v_begin = skip_eyelids ? 2 : 0;
            for (int v = v_begin; v < vertices; ++v)
                for (int d = 0; d < 3; ++d) {
                    const T val = static_cast<T>(rng.normal());
                    u.at(r, v * 3 + d) = val;
                    norm += val * val;
                }
            norm = std::sqrt(norm);
            for (int c = 0; c < u.cols; ++c) u.at(r, c) /= norm;
        }
    };
    basis.u_id = Matrix<T>(80, vertices * 3);
    fill_normalized(basis.u_id, false);
    basis.u_exp = Matrix<T>(64, vertices * 3);
    fill_normalized(basis.u_exp, true);
    // channel 0: unit displacement of the upper eyelid toward the lower one
    for (int c = 0; c < basis.u_exp.cols; ++c) basis.u_exp.at(0, c) = T(0);
    basis.u_exp.at(0, 0 * 3 + 1) = T(-1);
    return basis;
}

// Supervised toy training: constant and pulsed blink tracks paired with the
// eyelid coefficient they should produce (channel 0 = gain * intensity).
// Returns the final MSE.
template <class T>
T train_blink_head(BlinkPoseParams<T>& p, int coeff_dim, int window, uint64_t seed, int steps,
                   T lr = T(1e-3)) {
    OptimizerState<T> opt;
    opt.cfg.lr = lr;
    opt.cfg.weight_decay = T(0);
    Rng rng(derive_seed(seed, /*stream=*/0xB7));
    T last_loss = T(0);
    for (int s = 0; s < steps; ++s) {
        std::vector<T> track(window);
        if (s % 2 == 0) {
            const T level = static_cast<T>(rng.uniform());
            std::fill(track.begin(), track.end(), level);
        } else {
            const int center = static_cast<int>(rng.uniform_int(window));
            const int width = 2 + static_cast<int>(rng.uniform_int(3));
            for (int t = 0; t < window; ++t) {
                const double u = std::abs(t - center) / static_cast<double>(width);
                track[t] = u <= 1.0 ? static_cast<T>(0.5 * (1.0 + std::cos(3.141592653589793 * u)))
                                    : T(0);
            }
        }
        BlinkTrack<T> blink(track);
        Matrix<T> beta(window, coeff_dim);

        BlinkFuseCache<T> fc;
        Matrix<T> features = blink_fuse(beta, blink, p, &fc);
        PoseHeadCache<T> pc;
        PoseOutput<T> out = pose_head(features, p, &pc);

        Matrix<T> target(window, coeff_dim);
        for (int t = 0; t < window; ++t)
            target.at(t, 0) = static_cast<T>(kBlinkCoeffGain) * blink.intensity[t];
        last_loss = noise_loss(target, out.delta);

        BlinkPoseParams<T> grads = p;
        for_each_blink_param(grads, [](const std::string&, Matrix<T>& m) { m.fill(T(0)); });
        Matrix<T> d_delta = noise_loss_backward(target, out.delta);
        Matrix<T> d_angles(window, 3);
        Matrix<T> d_tr(window, 3);
        Matrix<T> d_feat = pose_head_backward(pc, p, d_angles, d_tr, d_delta, grads);
        blink_fuse_backward(fc, p, d_feat, grads);

        std::vector<Matrix<T>*> plist;
        std::vector<const Matrix<T>*> glist;
        for_each_blink_param(p, [&](const std::string&, Matrix<T>& m) { plist.push_back(&m); });
        for_each_blink_param(grads, [&](const std::string&, Matrix<T>& m) { glist.push_back(&m); });
        adamw_update(plist, glist, opt);
    }
    return last_loss;
}

}  // namespace modit
