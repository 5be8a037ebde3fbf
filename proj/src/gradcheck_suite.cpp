#include "modit/gradcheck_suite.hpp"

#include <sstream>

#include "modit/blink.hpp"
#include "modit/denoiser.hpp"
#include "modit/losses.hpp"

namespace modit {

namespace {

using Mat = Matrix<double>;

// Losses here are O(1..10); this step keeps finite-difference roundoff well
// below the 1e-4 tolerance even on directions with near-zero gradients.
constexpr double kSuiteStep = 1e-4;

// Central differences are invalid across a LeakyReLU kink, so fixtures are
// re-seeded until every pre-activation clears this margin (a single-entry
// perturbation of kSuiteStep reaches at most a few times 1e-4).
constexpr double kKinkMargin = 1e-3;

double min_abs(const Mat& m) {
    double v = 1e300;
    for (double x : m.data) v = std::min(v, std::fabs(x));
    return v;
}

Mat randn(int r, int c, Rng& rng, double scale = 1.0) {
    Mat m(r, c);
    m.fill_normal(rng, scale);
    return m;
}

// Test losses are scaled-down MSEs. The scale keeps the absolute
// finite-difference noise (machine epsilon times the loss value) below the
// 1e-8 denominator floor times the 1e-4 tolerance, so near-null gradient
// entries are judged by the floor instead of drowning in roundoff.
constexpr double kLossScale = 1e-2;

double mean_sq_diff(const Mat& a, const Mat& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return kLossScale * acc / static_cast<double>(a.size());
}

Mat mean_sq_diff_grad(const Mat& a, const Mat& target) {
    Mat d = sub(a, target);
    return scale(d, 2.0 * kLossScale / static_cast<double>(a.size()));
}

AttentionParams<double> random_attention(int width, int heads, Rng& rng) {
    AttentionParams<double> a;
    a.heads = heads;
    const double bound = 1.0 / std::sqrt(static_cast<double>(width));
    auto mk = [&](Mat& w) {
        w = Mat(width, width);
        w.fill_uniform(rng, -bound, bound);
    };
    mk(a.w_q);
    mk(a.w_k);
    mk(a.w_v);
    mk(a.w_o);
    auto mkb = [&](Mat& b) {
        b = Mat(1, width);
        b.fill_uniform(rng, -0.1, 0.1);
    };
    mkb(a.b_q);
    mkb(a.b_v);
    mkb(a.b_o);
    return a;
}

void append(GradSuiteResult& res, const std::string& module,
            const std::vector<std::pair<std::string, double>>& per_block) {
    for (const auto& [name, err] : per_block) {
        res.rows.push_back({module, name, err});
        res.overall = std::max(res.overall, err);
    }
}

void check_attention_role(GradSuiteResult& res, const std::string& role, int width, int heads,
                          int frames, uint64_t seed) {
    Rng rng(derive_seed(seed, 0xAC, std::hash<std::string>{}(role)));
    AttentionParams<double> ap = random_attention(width, heads, rng);
    AttentionParams<double> grads = ap;
    for_each_attn_param(grads, "", [](const std::string&, Mat& m) { m.fill(0.0); });

    Mat x = randn(frames, width, rng);
    Mat none(0, width);
    TemporalLatent<double> lat, lat_grads;
    Mat cond;
    AttnBias<double> bias;
    bias.active = true;
    bias.additive = false;

    if (role == "self") {
        cond = randn(1, width, rng);
        bias.mask = mask_prepend_ones(build_dispersed_bias<double>(frames, frames, 1.5).values, 1);
    } else if (role == "cross") {
        cond = randn(frames, width, rng);
        bias.mask = mask_tile_cols(build_dispersed_bias<double>(frames, frames, 1.5).values, 2);
    } else {
        bias.active = false;
        do {
            lat.z = randn(2 * frames - 1, 4, rng, 0.5);
            lat.f1_w = randn(4, 8, rng, 0.4);
            lat.f2_w = randn(8, 1, rng, 0.4);
        } while (min_abs(matmul(lat.z, lat.f1_w)) < kKinkMargin);
        lat_grads = lat;
        for (auto* m : {&lat_grads.z, &lat_grads.f1_w, &lat_grads.f2_w}) m->fill(0.0);
    }
    Mat target = randn(frames, width, rng);

    auto forward = [&]() {
        if (role == "self") return biased_self_attention(x, cond, ap, bias);
        if (role == "cross") return biased_cross_attention(x, cond, ap, bias);
        return revised_temporal_attention(x, lat, ap);
    };
    auto loss_fn = [&]() { return mean_sq_diff(forward(), target); };

    AttnCache<double> cache;
    Mat out;
    if (role == "self") {
        out = biased_self_attention(x, cond, ap, bias, &cache);
    } else if (role == "cross") {
        out = biased_cross_attention(x, cond, ap, bias, &cache);
    } else {
        out = revised_temporal_attention(x, lat, ap, bias, &cache);
    }
    Mat d_out = mean_sq_diff_grad(out, target);
    attention_backward(cache, ap, d_out, grads, role == "temporal" ? &lat : nullptr,
                       role == "temporal" ? &lat_grads : nullptr);

    std::vector<ParamBlockRef> blocks;
    std::vector<Mat*> ps;
    std::vector<Mat*> gs;
    std::vector<std::string> names;
    for_each_attn_param(ap, role, [&](const std::string& n, Mat& m) {
        names.push_back(n);
        ps.push_back(&m);
    });
    for_each_attn_param(grads, role, [&](const std::string&, Mat& m) { gs.push_back(&m); });
    for (size_t i = 0; i < ps.size(); ++i) blocks.push_back({names[i], ps[i], gs[i]});
    if (role == "temporal") {
        blocks.push_back({"temporal.z", &lat.z, &lat_grads.z});
        blocks.push_back({"temporal.f1_w", &lat.f1_w, &lat_grads.f1_w});
        blocks.push_back({"temporal.f2_w", &lat.f2_w, &lat_grads.f2_w});
    }
    std::vector<std::pair<std::string, double>> per_block;
    gradient_check(loss_fn, blocks, kSuiteStep, &per_block);
    append(res, "attention", per_block);
}

// init whose temporal-MLP pre-activations stay clear of the LeakyReLU kink
ModelParams<double> init_params_off_kink(const DenoiserConfig& mc, uint64_t seed) {
    for (int tries = 0; tries < 1000; ++tries) {
        ModelParams<double> model = init_params<double>(mc, seed + tries, /*zero_output=*/false);
        double margin = 1e300;
        for (const auto& blk : model.blocks)
            margin = std::min(margin, min_abs(matmul(blk.temporal.z, blk.temporal.f1_w)));
        if (margin >= kKinkMargin) return model;
    }
    throw NumericError("gradcheck: could not find a kink-free initialization");
}

void check_block(GradSuiteResult& res, const DenoiserConfig& mc, int bandwidth, double sigma,
                 uint64_t seed) {
    ModelParams<double> model = init_params_off_kink(mc, seed);
    BlockParams<double>& blk = model.blocks[0];
    BlockParams<double> gblk = blk;
    for_each_block_param(gblk, "", [](const std::string&, Mat& m) { m.fill(0.0); });

    Rng rng(derive_seed(seed, 0xB10C));
    Mat x = randn(mc.t_frames, mc.width, rng);
    Mat beta0_w = randn(1, mc.width, rng);
    Mat audio_w = randn(mc.t_frames, mc.width, rng);
    Mat temb = randn(1, mc.width, rng);
    Mat target = randn(mc.t_frames, mc.width, rng);

    MaskSet<double> masks = build_mask_set<double>(mc.t_frames, mc.t_frames, bandwidth, sigma);
    PhaseRuntime<double> phase;
    phase.enabled = true;
    phase.t = 1;
    phase.cfg.t_threshold = 2;  // t < threshold: both masks active
    phase.cfg.targets = {true, true, true};
    phase.masks = &masks;

    auto loss_fn = [&]() {
        BlockCache<double> bc;
        Mat out = transformer_block_forward(x, beta0_w, audio_w, temb, blk, mc, phase, bc);
        return mean_sq_diff(out, target);
    };

    BlockCache<double> bc;
    Mat out = transformer_block_forward(x, beta0_w, audio_w, temb, blk, mc, phase, bc);
    transformer_block_backward(bc, blk, mc, mean_sq_diff_grad(out, target), gblk, mc.t_frames);

    std::vector<ParamBlockRef> blocks;
    std::vector<Mat*> ps;
    std::vector<std::string> names;
    for_each_block_param(blk, "block.", [&](const std::string& n, Mat& m) {
        names.push_back(n);
        ps.push_back(&m);
    });
    std::vector<Mat*> gs;
    for_each_block_param(gblk, "", [&](const std::string&, Mat& m) { gs.push_back(&m); });
    for (size_t i = 0; i < ps.size(); ++i) blocks.push_back({names[i], ps[i], gs[i]});

    std::vector<std::pair<std::string, double>> per_block;
    gradient_check(loss_fn, blocks, kSuiteStep, &per_block);
    append(res, "block", per_block);
}

void check_denoiser(GradSuiteResult& res, const DenoiserConfig& mc, int bandwidth, double sigma,
                    uint64_t seed, bool inject_fault) {
    ModelParams<double> model = init_params_off_kink(mc, seed + 1);
    ModelParams<double> grads = zeros_like(model);

    Rng rng(derive_seed(seed, 0xDE40));
    Mat x_t = randn(mc.t_frames, mc.coeff_dim, rng);
    Mat beta0 = randn(1, mc.coeff_dim, rng);
    Mat audio = randn(mc.t_frames, mc.audio_dim, rng);
    Mat eps_target = randn(mc.t_frames, mc.coeff_dim, rng);
    const int t = std::max(1, mc.t_frames / 2);

    MaskSet<double> masks = build_mask_set<double>(mc.t_frames, mc.t_frames, bandwidth, sigma);
    PhaseRuntime<double> phase;
    phase.enabled = true;
    phase.t = t;
    phase.cfg.t_threshold = t + 1;
    phase.cfg.targets = {true, true, true};
    phase.masks = &masks;

    auto loss_fn = [&]() {
        return kLossScale * noise_loss(eps_target, eps_theta(x_t, t, beta0, audio, model, phase));
    };

    EpsCache<double> cache;
    Mat eps_hat = eps_theta(x_t, t, beta0, audio, model, phase, &cache);
    eps_theta_backward(cache, model,
                       scale(noise_loss_backward(eps_target, eps_hat), kLossScale), grads);

    std::vector<ParamBlockRef> blocks;
    std::vector<Mat*> ps;
    std::vector<std::string> names;
    for_each_param(model, [&](const std::string& n, Mat& m) {
        names.push_back(n);
        ps.push_back(&m);
    });
    std::vector<Mat*> gs;
    for_each_param(grads, [&](const std::string&, Mat& m) { gs.push_back(&m); });
    if (inject_fault && !gs.empty()) gs[0]->data[0] += 1.0;
    for (size_t i = 0; i < ps.size(); ++i) blocks.push_back({names[i], ps[i], gs[i]});

    std::vector<std::pair<std::string, double>> per_block;
    gradient_check(loss_fn, blocks, kSuiteStep, &per_block);
    append(res, "denoiser", per_block);
}

void check_losses(GradSuiteResult& res, int frames, int dim, uint64_t seed) {
    Rng rng(derive_seed(seed, 0x105E));
    Mat eps = randn(frames, dim, rng);
    Mat eps_hat = randn(frames, dim, rng);
    Mat x0 = randn(frames, dim, rng);
    Mat x0_hat = randn(frames, dim, rng);
    LossWeights<double> w;

    auto loss_fn = [&]() {
        return kLossScale *
               total_loss(noise_loss(eps, eps_hat), 0.0, 0.0, velocity_loss(x0, x0_hat), w);
    };
    Mat d_eps_hat = scale(noise_loss_backward(eps, eps_hat), kLossScale * w.lambda_t);
    Mat d_x0_hat = scale(velocity_loss_backward(x0, x0_hat), kLossScale * w.lambda_v);

    std::vector<ParamBlockRef> blocks = {{"losses.eps_hat", &eps_hat, &d_eps_hat},
                                         {"losses.x0_hat", &x0_hat, &d_x0_hat}};
    std::vector<std::pair<std::string, double>> per_block;
    gradient_check(loss_fn, blocks, kSuiteStep, &per_block);
    append(res, "losses", per_block);
}

void check_blink(GradSuiteResult& res, int coeff_dim, int window, int channels, int stages,
                 int kernel, int bins, uint64_t seed) {
    Rng rng(derive_seed(seed, 0xB11E));
    Mat beta = randn(window, coeff_dim, rng, 0.5);
    std::vector<double> track(window);
    for (auto& v : track) v = rng.uniform();
    BlinkTrack<double> blink(track);

    BlinkPoseParams<double> p;
    for (int tries = 0;; ++tries) {
        if (tries >= 1000) throw NumericError("gradcheck: blink init stuck at a kink");
        p = init_blink_params<double>(coeff_dim, channels, stages, kernel, seed + tries, bins);
        // biases random so their gradient paths are exercised from a generic point
        Rng brng(derive_seed(seed + tries, 0xB11F));
        for_each_blink_param(p, [&](const std::string& n, Mat& m) {
            if (n.ends_with(".b")) m.fill_uniform(brng, -0.1, 0.1);
        });
        BlinkFuseCache<double> probe;
        blink_fuse(beta, blink, p, &probe);
        double margin = 1e300;
        for (const auto& pre : probe.stage_pre) margin = std::min(margin, min_abs(pre));
        if (margin >= kKinkMargin) break;
    }
    BlinkPoseParams<double> grads = p;
    for_each_blink_param(grads, [](const std::string&, Mat& m) { m.fill(0.0); });
    Mat t_angles = randn(window, 3, rng, 0.3);
    Mat t_tr = randn(window, 3, rng);
    Mat t_delta = randn(window, coeff_dim, rng);

    auto loss_fn = [&]() {
        Mat features = blink_fuse(beta, blink, p);
        PoseOutput<double> out = pose_head(features, p);
        return mean_sq_diff(out.angles, t_angles) + mean_sq_diff(out.tr, t_tr) +
               mean_sq_diff(out.delta, t_delta);
    };

    BlinkFuseCache<double> fc;
    Mat features = blink_fuse(beta, blink, p, &fc);
    PoseHeadCache<double> pc;
    PoseOutput<double> out = pose_head(features, p, &pc);
    Mat d_feat = pose_head_backward(pc, p, mean_sq_diff_grad(out.angles, t_angles),
                                    mean_sq_diff_grad(out.tr, t_tr),
                                    mean_sq_diff_grad(out.delta, t_delta), grads);
    blink_fuse_backward(fc, p, d_feat, grads);

    std::vector<ParamBlockRef> blocks;
    std::vector<Mat*> ps;
    std::vector<std::string> names;
    for_each_blink_param(p, [&](const std::string& n, Mat& m) {
        names.push_back("blink." + n);
        ps.push_back(&m);
    });
    std::vector<Mat*> gs;
    for_each_blink_param(grads, [&](const std::string&, Mat& m) { gs.push_back(&m); });
    for (size_t i = 0; i < ps.size(); ++i) blocks.push_back({names[i], ps[i], gs[i]});

    std::vector<std::pair<std::string, double>> per_block;
    gradient_check(loss_fn, blocks, kSuiteStep, &per_block);
    append(res, "blink", per_block);
}

}  // namespace

std::string GradSuiteResult::to_tsv() const {
    std::ostringstream ss;
    ss << "module\tblock\tmax_rel_error\n";
    char buf[64];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.6e", row.max_rel_error);
        ss << row.module << '\t' << row.block << '\t' << buf << '\n';
    }
    std::snprintf(buf, sizeof(buf), "%.6e", overall);
    ss << "overall\t-\t" << buf << '\n';
    return ss.str();
}

GradSuiteResult run_gradcheck_suite(const RunConfig& cfg, bool inject_fault) {
    GradSuiteResult res;
    const DenoiserConfig mc = denoiser_config(cfg);
    const int bandwidth = static_cast<int>(cfg.get_int("mask.bandwidth"));
    const double sigma = cfg.get_real("mask.sigma");
    const uint64_t seed = static_cast<uint64_t>(cfg.get_int("train.seed"));

    check_attention_role(res, "self", mc.width, mc.heads, mc.t_frames, seed);
    check_attention_role(res, "cross", mc.width, mc.heads, mc.t_frames, seed);
    check_attention_role(res, "temporal", mc.width, mc.heads, mc.t_frames, seed);
    check_block(res, mc, bandwidth, sigma, seed);
    check_denoiser(res, mc, bandwidth, sigma, seed, inject_fault);
    check_losses(res, mc.t_frames, mc.coeff_dim, seed);
    check_blink(res, mc.coeff_dim, std::max(3, mc.t_frames),
                static_cast<int>(cfg.get_int("blink.channels")),
                static_cast<int>(cfg.get_int("blink.stages")),
                static_cast<int>(cfg.get_int("blink.kernel")),
                static_cast<int>(cfg.get_int("blink.bins")), seed);
    return res;
}

}  // namespace modit
