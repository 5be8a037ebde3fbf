#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "modit/pipeline.hpp"
#include "modit/sampler.hpp"

using namespace modit;

namespace {

DenoiserConfig tiny_config() {
    DenoiserConfig c;
    c.width = 16;
    c.ffn_width = 32;
    c.heads = 2;
    c.blocks = 1;
    c.t_frames = 4;
    c.coeff_dim = 6;
    c.audio_dim = 4;
    c.z_dim = 2;
    c.temporal_hidden = 4;
    return c;
}

}  // namespace

TEST_CASE("sample_window: single-step schedule collapses to predict_x0") {
    NoiseSchedule<double> sched = build_schedule<double>(1, 0.1, 0.1);
    Rng rng(1);
    MatD eps_hat(3, 2);
    eps_hat.fill_normal(rng);
    EpsFn<double> fn = [&](const MatD&, int) { return eps_hat; };

    // re-derive the initial state from the same seeded stream the sampler uses
    Rng init(derive_seed(99, 0x5A));
    MatD x1(3, 2);
    x1.fill_normal(init);

    MatD out = sample_window(fn, 3, 2, sched, SamplerMode::ddim, 99);
    MatD expect = predict_x0(x1, eps_hat, 1, sched);
    for (size_t i = 0; i < out.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
}

TEST_CASE("sample_window: ddim runs are bit-identical for equal seeds") {
    NoiseSchedule<double> sched = build_schedule<double>(20, 1e-3, 0.2);
    EpsFn<double> fn = [&](const MatD& x, int) { return scale(x, 0.1); };
    MatD a = sample_window(fn, 4, 3, sched, SamplerMode::ddim, 7);
    MatD b = sample_window(fn, 4, 3, sched, SamplerMode::ddim, 7);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.data[i] == b.data[i]);
    MatD c = sample_window(fn, 4, 3, sched, SamplerMode::ddim, 8);
    bool all_equal = true;
    for (size_t i = 0; i < a.size(); ++i) all_equal &= a.data[i] == c.data[i];
    CHECK_FALSE(all_equal);
}

TEST_CASE("sample_window: perfect oracle denoiser recovers x0") {
    NoiseSchedule<double> sched = build_schedule<double>(100, 1e-3, 0.1);
    Rng rng(5);
    MatD x0(4, 6), eps_true(4, 6);
    x0.fill_normal(rng);
    eps_true.fill_normal(rng);
    MatD x_T = forward_noise(x0, sched.steps, eps_true, sched);
    EpsFn<double> oracle = [&](const MatD&, int) { return eps_true; };

    std::vector<double> norms;
    MatD rec = sample_window(oracle, 4, 6, sched, SamplerMode::ddim, 1, 0, &norms, &x_T);
    for (size_t i = 0; i < x0.size(); ++i)
        CHECK(rec.data[i] == doctest::Approx(x0.data[i]).epsilon(1e-4));
    CHECK(static_cast<int>(norms.size()) == sched.steps);
    const double bound = 10.0 * std::sqrt(4.0 * 6.0);
    for (double n : norms) {
        CHECK(std::isfinite(n));
        CHECK(n < bound);
    }
}

TEST_CASE("sample_window: ddpm is seeded and its terminal step ignores noise") {
    NoiseSchedule<double> sched = build_schedule<double>(10, 0.01, 0.2);
    EpsFn<double> fn = [&](const MatD& x, int) { return scale(x, 0.05); };
    MatD a = sample_window(fn, 3, 2, sched, SamplerMode::ddpm, 17);
    MatD b = sample_window(fn, 3, 2, sched, SamplerMode::ddpm, 17);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.data[i] == b.data[i]);

    // single-step schedule: ddpm equals the posterior mean regardless of seed
    NoiseSchedule<double> one = build_schedule<double>(1, 0.1, 0.1);
    MatD m1 = sample_window(fn, 3, 2, one, SamplerMode::ddpm, 21);
    Rng init(derive_seed(21, 0x5A));
    MatD x1(3, 2);
    x1.fill_normal(init);
    MatD zero(3, 2);
    MatD expect = ddpm_posterior_sample(x1, scale(x1, 0.05), 1, zero, one);
    for (size_t i = 0; i < m1.size(); ++i)
        CHECK(m1.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
}

TEST_CASE("sample_window: resample mode still terminates deterministically") {
    NoiseSchedule<double> sched = build_schedule<double>(8, 0.01, 0.2);
    EpsFn<double> fn = [&](const MatD& x, int) { return scale(x, 0.1); };
    MatD a = sample_window(fn, 3, 2, sched, SamplerMode::ddim, 3, 2);
    MatD b = sample_window(fn, 3, 2, sched, SamplerMode::ddim, 3, 2);
    CHECK(a.all_finite());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("sample_window: non-finite prediction aborts with the timestep") {
    NoiseSchedule<double> sched = build_schedule<double>(5, 0.01, 0.2);
    EpsFn<double> fn = [&](const MatD& x, int t) {
        MatD e = scale(x, 0.1);
        if (t == 3) e.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
        return e;
    };
    try {
        sample_window(fn, 2, 2, sched, SamplerMode::ddim, 1);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("timestep 3") != std::string::npos);
    }
}

TEST_CASE("window_starts: oracle arithmetic") {
    // 36 frames, 12-frame windows, 4-frame overlap -> stride 8
    std::vector<int> starts = window_starts(36, 12, 4);
    CHECK(starts == std::vector<int>{0, 8, 16, 24});
    CHECK(starts.back() + 12 == 36);

    // unaligned total: the last window shifts left to end exactly at total
    std::vector<int> starts2 = window_starts(30, 12, 4);
    CHECK(starts2 == std::vector<int>{0, 8, 16, 18});

    CHECK(window_starts(12, 12, 4) == std::vector<int>{0});
    CHECK_THROWS_AS(window_starts(10, 12, 4), std::invalid_argument);
    CHECK_THROWS_AS(window_starts(24, 12, 12), std::invalid_argument);
}

TEST_CASE("stitch_windows: partition of unity and monotone cross-fade") {
    // identical constant windows reproduce the constant exactly
    MatD k(4, 2);
    k.fill(3.25);
    MatD out = stitch_windows<double>({k, k, k}, {0, 2, 4}, 8);
    CHECK(out.rows == 8);
    for (double v : out.data) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));

    // a 0-window then a 1-window: overlap ramps monotonically from 0 toward 1
    MatD zeros(4, 1), ones(4, 1);
    ones.fill(1.0);
    MatD ramp = stitch_windows<double>({zeros, ones}, {0, 2}, 6);
    CHECK(ramp.at(0, 0) == 0.0);
    CHECK(ramp.at(1, 0) == 0.0);
    CHECK(ramp.at(2, 0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(ramp.at(3, 0) == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(ramp.at(4, 0) == 1.0);
    CHECK(ramp.at(5, 0) == 1.0);
}

TEST_CASE("sample: full model path is deterministic and phase-order agnostic in shape") {
    const DenoiserConfig mc = tiny_config();
    ModelParams<float> params = init_params<float>(mc, 3, /*zero_output=*/false);
    NoiseSchedule<float> sched = build_schedule<float>(12, 0.01f, 0.2f);
    MaskSet<float> masks = build_mask_set<float>(mc.t_frames, mc.t_frames, 1, 2.0f);

    Rng rng(9);
    Matrix<float> beta0(1, mc.coeff_dim), audio(mc.t_frames, mc.audio_dim);
    beta0.fill_normal(rng);
    audio.fill_normal(rng);

    SamplerConfig cfg;
    cfg.seed = 77;
    cfg.phase.t_threshold = 6;

    Matrix<float> a = sample(beta0, audio, params, sched, masks, cfg);
    Matrix<float> b = sample(beta0, audio, params, sched, masks, cfg);
    CHECK(a.rows == mc.t_frames);
    CHECK(a.cols == mc.coeff_dim);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.data[i] == b.data[i]);

    SamplerConfig prose = cfg;
    prose.phase.order = PhaseOrder::prose_order;
    Matrix<float> c = sample(beta0, audio, params, sched, masks, prose);
    CHECK(c.rows == mc.t_frames);
    CHECK(c.all_finite());
}

TEST_CASE("sample: windowed generation covers the requested length") {
    DenoiserConfig mc = tiny_config();
    ModelParams<float> params = init_params<float>(mc, 5, /*zero_output=*/false);
    NoiseSchedule<float> sched = build_schedule<float>(6, 0.01f, 0.2f);
    MaskSet<float> masks = build_mask_set<float>(mc.t_frames, mc.t_frames, 1, 2.0f);

    Rng rng(11);
    Matrix<float> beta0(1, mc.coeff_dim), audio(10, mc.audio_dim);
    beta0.fill_normal(rng);
    audio.fill_normal(rng);

    SamplerConfig cfg;
    cfg.seed = 5;
    cfg.window_overlap = 2;
    cfg.phase.t_threshold = 3;
    Matrix<float> out = sample(beta0, audio, params, sched, masks, cfg);
    CHECK(out.rows == 10);
    CHECK(out.cols == mc.coeff_dim);
    CHECK(out.all_finite());
}

TEST_CASE("sample_batch: equals sequential calls bit-for-bit") {
    DenoiserConfig mc = tiny_config();
    ModelParams<float> params = init_params<float>(mc, 13, /*zero_output=*/false);
    NoiseSchedule<float> sched = build_schedule<float>(8, 0.01f, 0.2f);
    MaskSet<float> masks = build_mask_set<float>(mc.t_frames, mc.t_frames, 1, 2.0f);

    Rng rng(15);
    std::vector<SampleRequest<float>> reqs(3);
    for (auto& r : reqs) {
        r.beta0 = Matrix<float>(1, mc.coeff_dim);
        r.beta0.fill_normal(rng);
        r.audio = Matrix<float>(mc.t_frames, mc.audio_dim);
        r.audio.fill_normal(rng);
    }
    SamplerConfig cfg;
    cfg.seed = 23;
    cfg.phase.t_threshold = 4;

    std::vector<Matrix<float>> batch = sample_batch(reqs, params, sched, masks, cfg);
    for (size_t r = 0; r < reqs.size(); ++r) {
        SamplerConfig rc = cfg;
        rc.seed = derive_seed(cfg.seed, 0xBA7C, r);
        Matrix<float> solo = sample(reqs[r].beta0, reqs[r].audio, params, sched, masks, rc);
        for (size_t i = 0; i < solo.size(); ++i) CHECK(batch[r].data[i] == solo.data[i]);
    }

    // identical requests with identical explicit seeds -> identical outputs
    std::vector<SampleRequest<float>> same(2);
    same[0] = reqs[0];
    same[0].seed = 41;
    same[1] = reqs[0];
    same[1].seed = 41;
    std::vector<Matrix<float>> twins = sample_batch(same, params, sched, masks, cfg);
    for (size_t i = 0; i < twins[0].size(); ++i) CHECK(twins[0].data[i] == twins[1].data[i]);
}
