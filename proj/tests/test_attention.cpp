#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "modit/attention.hpp"
#include "modit/gradcheck.hpp"

using namespace modit;

namespace {

AttentionParams<double> random_params(int width, int heads, uint64_t seed) {
    Rng rng(seed);
    AttentionParams<double> p;
    p.heads = heads;
    auto mk = [&](MatD& m, int r, int c, double s) {
        m = MatD(r, c);
        m.fill_normal(rng, s);
    };
    mk(p.w_q, width, width, 0.4);
    mk(p.w_k, width, width, 0.4);
    mk(p.w_v, width, width, 0.4);
    mk(p.w_o, width, width, 0.4);
    mk(p.b_q, 1, width, 0.1);
    mk(p.b_v, 1, width, 0.1);
    mk(p.b_o, 1, width, 0.1);
    return p;
}

// independent naive single-head attention used as the hand-computation oracle
MatD naive_single_head(const MatD& x, const MatD& kv, const AttentionParams<double>& p) {
    const int d = x.cols;
    MatD q = linear_forward(x, p.w_q, p.b_q);
    MatD k = matmul(kv, p.w_k);
    MatD v = linear_forward(kv, p.w_v, p.b_v);
    MatD ctx(x.rows, d);
    for (int i = 0; i < x.rows; ++i) {
        std::vector<double> scores(k.rows);
        double mx = -1e300;
        for (int j = 0; j < k.rows; ++j) {
            double acc = 0.0;
            for (int c = 0; c < d; ++c) acc += q.at(i, c) * k.at(j, c);
            scores[j] = acc / std::sqrt(static_cast<double>(d));
            mx = std::max(mx, scores[j]);
        }
        double sum = 0.0;
        for (auto& s : scores) {
            s = std::exp(s - mx);
            sum += s;
        }
        for (int j = 0; j < k.rows; ++j)
            for (int c = 0; c < d; ++c) ctx.at(i, c) += scores[j] / sum * v.at(j, c);
    }
    return linear_forward(ctx, p.w_o, p.b_o);
}

}  // namespace

TEST_CASE("diagonal bias: band widths") {
    BiasMask<double> id = build_diagonal_bias<double>(3, 3, 0);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(id.values.at(i, j) == (i == j ? 1.0 : 0.0));

    BiasMask<double> all = build_diagonal_bias<double>(3, 3, 2);
    for (size_t i = 0; i < all.values.size(); ++i) CHECK(all.values.data[i] == 1.0);
}

TEST_CASE("diagonal bias: rectangular index mapping") {
    BiasMask<double> m = build_diagonal_bias<double>(4, 8, 0);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 8; ++j) {
            const double expect = (std::llround(j * 4.0 / 8.0) == i) ? 1.0 : 0.0;
            CHECK(m.values.at(i, j) == expect);
        }
    validate_bias_mask(m);
}

TEST_CASE("dispersed bias: limits and hand value") {
    BiasMask<double> wide = build_dispersed_bias<double>(3, 3, 1e6);
    for (size_t i = 0; i < wide.values.size(); ++i)
        CHECK(wide.values.data[i] == doctest::Approx(1.0).epsilon(1e-9));

    BiasMask<double> unit = build_dispersed_bias<double>(3, 3, 1.0);
    for (int i = 0; i < 3; ++i) CHECK(unit.values.at(i, i) == 1.0);
    CHECK(unit.values.at(0, 2) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
    for (size_t i = 0; i < unit.values.size(); ++i) CHECK(unit.values.data[i] > 0.0);
    validate_bias_mask(unit);
}

TEST_CASE("bias mask validation catches bad masks") {
    BiasMask<double> m;
    m.values = MatD(2, 2, {1.0, 0.0, 0.0, 0.0});
    CHECK_THROWS_AS(validate_bias_mask(m), NumericError);
    m.values = MatD(1, 2, {1.0, -0.5});
    CHECK_THROWS_AS(validate_bias_mask(m), NumericError);
}

TEST_CASE("apply_phase_bias: all-ones masks leave weights unchanged") {
    PhaseConfig cfg;
    cfg.t_threshold = 5;
    BiasMask<double> ones;
    ones.values = MatD(2, 3);
    ones.values.fill(1.0);
    MatD w(2, 3, {0.2, 0.3, 0.5, 0.1, 0.6, 0.3});
    for (int t : {1, 9}) {
        MatD out = apply_phase_bias(w, t, cfg, ones, ones);
        for (size_t i = 0; i < w.size(); ++i)
            CHECK(out.data[i] == doctest::Approx(w.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("apply_phase_bias: hand-renormalized 3x3 band") {
    PhaseConfig cfg;
    cfg.t_threshold = 5;
    BiasMask<double> band = build_diagonal_bias<double>(3, 3, 1);
    BiasMask<double> diag = build_diagonal_bias<double>(3, 3, 0);
    MatD uniform(3, 3);
    uniform.fill(1.0 / 3.0);

    // t >= threshold: M_E only (literal order). Hand renormalization of a
    // uniform row under the band mask keeps the banded entries equal.
    MatD out = apply_phase_bias(uniform, 7, cfg, diag, band);
    CHECK(out.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.at(0, 2) == 0.0);
    CHECK(out.at(1, 0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(out.at(1, 1) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(out.at(1, 2) == doctest::Approx(1.0 / 3).epsilon(1e-12));

    // t < threshold: (M_D + M_E): row 0 weights become (2, 1, 0) / 3
    MatD out2 = apply_phase_bias(uniform, 4, cfg, diag, band);
    CHECK(out2.at(0, 0) == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(out2.at(0, 1) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(out2.at(0, 2) == 0.0);
}

TEST_CASE("apply_phase_bias: boundary and order swap") {
    PhaseConfig literal;
    literal.t_threshold = 5;
    PhaseConfig prose = literal;
    prose.order = PhaseOrder::prose_order;

    BiasMask<double> m_d = build_diagonal_bias<double>(2, 2, 0);
    BiasMask<double> m_e = build_dispersed_bias<double>(2, 2, 1.0);
    MatD w(2, 2, {0.5, 0.5, 0.25, 0.75});

    // t == threshold takes the >= branch in both orders
    MatD lit_at = apply_phase_bias(w, 5, literal, m_d, m_e);
    MatD lit_me = apply_mask_renorm(w, m_e.values);
    for (size_t i = 0; i < w.size(); ++i) CHECK(lit_at.data[i] == lit_me.data[i]);

    MatD pro_at = apply_phase_bias(w, 5, prose, m_d, m_e);
    MatD pro_both = apply_mask_renorm(w, add(m_d.values, m_e.values));
    for (size_t i = 0; i < w.size(); ++i) CHECK(pro_at.data[i] == pro_both.data[i]);

    // below threshold the branches swap
    MatD lit_below = apply_phase_bias(w, 4, literal, m_d, m_e);
    MatD pro_below = apply_phase_bias(w, 4, prose, m_d, m_e);
    for (size_t i = 0; i < w.size(); ++i) {
        CHECK(lit_below.data[i] == pro_at.data[i]);
        CHECK(pro_below.data[i] == lit_at.data[i]);
    }
}

TEST_CASE("apply_phase_bias: equal masks make both branches identical") {
    PhaseConfig cfg;
    cfg.t_threshold = 3;
    BiasMask<double> m = build_dispersed_bias<double>(3, 3, 0.8);
    Rng rng(5);
    MatD scores(3, 3);
    scores.fill_normal(rng);
    MatD w = softmax_rows(scores);
    MatD low = apply_phase_bias(w, 1, cfg, m, m);
    MatD high = apply_phase_bias(w, 3, cfg, m, m);
    for (size_t i = 0; i < w.size(); ++i)
        CHECK(low.data[i] == doctest::Approx(high.data[i]).epsilon(1e-12));
}

TEST_CASE("apply_mask_renorm: degenerate row is an error") {
    MatD w(1, 2, {0.5, 0.5});
    MatD mask(1, 2);  // all zero
    CHECK_THROWS_AS(apply_mask_renorm(w, mask), NumericError);
}

TEST_CASE("mask expansion helpers") {
    BiasMask<double> m = build_diagonal_bias<double>(2, 2, 0);
    MatD pre = mask_prepend_ones(m.values, 1);
    CHECK(pre.cols == 3);
    CHECK(pre.at(0, 0) == 1.0);
    CHECK(pre.at(1, 0) == 1.0);
    CHECK(pre.at(0, 1) == 1.0);
    CHECK(pre.at(0, 2) == 0.0);

    MatD tiled = mask_tile_cols(m.values, 2);
    CHECK(tiled.cols == 4);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            CHECK(tiled.at(i, j) == m.values.at(i, j));
            CHECK(tiled.at(i, 2 + j) == m.values.at(i, j));
        }
}

TEST_CASE("self attention: forced one-hot onto the conditioning row") {
    const int width = 4, t = 3;
    AttentionParams<double> p = random_params(width, 1, 41);
    Rng rng(42);
    MatD x(t, width), beta0(1, width);
    x.fill_normal(rng);
    beta0.fill_normal(rng);

    AttnBias<double> bias;
    bias.active = true;
    bias.additive = true;  // -inf surrogate on every non-prepended key
    bias.mask = MatD(t, t + 1);
    for (int i = 0; i < t; ++i)
        for (int j = 1; j < t + 1; ++j) bias.mask.at(i, j) = -1e9;

    AttnCache<double> cache;
    MatD out = biased_self_attention(x, beta0, p, bias, &cache);

    // every output row equals W_o applied to the value projection of beta0
    MatD v_b0 = linear_forward(beta0, p.w_v, p.b_v);
    MatD expect = linear_forward(v_b0, p.w_o, p.b_o);
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < width; ++j)
            CHECK(out.at(i, j) == doctest::Approx(expect.at(0, j)).epsilon(1e-9));
}

TEST_CASE("self attention: T=1 with X equal to beta0 reduces to single-key attention") {
    const int width = 4;
    AttentionParams<double> p = random_params(width, 2, 43);
    Rng rng(44);
    MatD x(1, width);
    x.fill_normal(rng);

    AttnBias<double> none;
    MatD with_prepend = biased_self_attention(x, x, p, none);
    // single-key oracle: attention over x alone (weights are 1)
    MatD empty(0, width);
    MatD single = attention_forward(x, x, empty, p, none,
                                    static_cast<const TemporalLatent<double>*>(nullptr),
                                    static_cast<AttnCache<double>*>(nullptr));
    for (size_t i = 0; i < with_prepend.size(); ++i)
        CHECK(with_prepend.data[i] == doctest::Approx(single.data[i]).epsilon(1e-12));
}

TEST_CASE("self attention: matches the naive hand computation") {
    const int width = 4, t = 2;
    AttentionParams<double> p = random_params(width, 1, 45);
    Rng rng(46);
    MatD x(t, width), beta0(1, width);
    x.fill_normal(rng);
    beta0.fill_normal(rng);

    AttnBias<double> none;
    MatD out = biased_self_attention(x, beta0, p, none);
    MatD expect = naive_single_head(x, vstack(beta0, x), p);
    for (size_t i = 0; i < out.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-9));
}

TEST_CASE("self attention: permutation equivariance without positional signals") {
    const int width = 4, t = 3;
    AttentionParams<double> p = random_params(width, 2, 47);
    Rng rng(48);
    MatD x(t, width), beta0(1, width);
    x.fill_normal(rng);
    beta0.fill_normal(rng);
    AttnBias<double> none;

    MatD base = biased_self_attention(x, beta0, p, none);
    const int perm[3] = {2, 0, 1};
    MatD xp(t, width);
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < width; ++j) xp.at(i, j) = x.at(perm[i], j);
    MatD out = biased_self_attention(xp, beta0, p, none);
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < width; ++j)
            CHECK(out.at(i, j) == doctest::Approx(base.at(perm[i], j)).epsilon(1e-9));
}

TEST_CASE("cross attention: zero audio with zero value bias yields the output bias") {
    const int width = 4, t = 3;
    AttentionParams<double> p = random_params(width, 2, 49);
    p.b_v.fill(0.0);
    Rng rng(50);
    MatD h(t, width);
    h.fill_normal(rng);
    MatD audio_w(t, width);  // all-zero audio latents, already projected

    AttnBias<double> none;
    MatD out = biased_cross_attention(h, audio_w, p, none);
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < width; ++j)
            CHECK(out.at(i, j) == doctest::Approx(p.b_o.at(0, j)).epsilon(1e-12));
}

TEST_CASE("cross attention: T=1 puts unit weight on the only audio frame") {
    const int width = 4;
    AttentionParams<double> p = random_params(width, 1, 51);
    Rng rng(52);
    MatD h(1, width), audio_w(1, width);
    h.fill_normal(rng);
    audio_w.fill_normal(rng);

    AttnBias<double> none;
    AttnCache<double> cache;
    biased_cross_attention(h, audio_w, p, none, &cache);
    REQUIRE(cache.probs.size() == 1);
    CHECK(cache.probs[0].cols == 2);  // the single frame appears in both key blocks
    CHECK(cache.probs[0].at(0, 0) + cache.probs[0].at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cross attention: bandwidth-0 diagonal concentrates mass on aligned frames") {
    const int width = 8, t = 4;
    AttentionParams<double> p = random_params(width, 2, 53);
    Rng rng(54);
    MatD h(t, width), audio_w(t, width);
    h.fill_normal(rng);
    audio_w.fill_normal(rng);

    AttnBias<double> bias;
    bias.active = true;
    bias.mask = mask_tile_cols(build_diagonal_bias<double>(t, t, 0).values, 2);

    AttnCache<double> cache;
    biased_cross_attention(h, audio_w, p, bias, &cache);

    // brute-force recomputation of the masked weights per head
    const int d_k = width / p.heads;
    MatD q = linear_forward(h, p.w_q, p.b_q);
    MatD k_full = vstack(audio_w, linear_forward(audio_w, p.w_k, p.b_k));
    for (int head = 0; head < p.heads; ++head) {
        const int off = head * d_k;
        for (int i = 0; i < t; ++i) {
            std::vector<double> scores(2 * t);
            double mx = -1e300;
            for (int j = 0; j < 2 * t; ++j) {
                double acc = 0.0;
                for (int c = 0; c < d_k; ++c) acc += q.at(i, off + c) * k_full.at(j, off + c);
                scores[j] = acc / std::sqrt(static_cast<double>(d_k));
                mx = std::max(mx, scores[j]);
            }
            double sum = 0.0;
            for (auto& s : scores) {
                s = std::exp(s - mx);
                sum += s;
            }
            double masked_sum = 0.0;
            for (int j = 0; j < 2 * t; ++j) {
                scores[j] /= sum;
                scores[j] *= bias.mask.at(i, j);
                masked_sum += scores[j];
            }
            for (int j = 0; j < 2 * t; ++j) {
                const double expect = scores[j] / masked_sum;
                CHECK(cache.probs[head].at(i, j) == doctest::Approx(expect).epsilon(1e-9));
            }
            // all renormalized mass sits on the query's aligned audio frame
            const double aligned =
                cache.probs[head].at(i, i) + cache.probs[head].at(i, t + i);
            CHECK(aligned == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("attention weights are row-stochastic after mask and renormalization") {
    const int width = 8, t = 5;
    AttentionParams<double> p = random_params(width, 4, 55);
    Rng rng(56);
    MatD x(t, width), beta0(1, width);
    x.fill_normal(rng);
    beta0.fill_normal(rng);

    AttnBias<double> bias;
    bias.active = true;
    bias.mask = mask_prepend_ones(build_dispersed_bias<double>(t, t, 1.2).values, 1);

    AttnCache<double> cache;
    biased_self_attention(x, beta0, p, bias, &cache);
    for (const auto& probs : cache.probs) {
        for (int i = 0; i < probs.rows; ++i) {
            double sum = 0.0;
            for (int j = 0; j < probs.cols; ++j) {
                CHECK(probs.at(i, j) >= 0.0);
                sum += probs.at(i, j);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("temporal attention: zero, constant, and near-hard relative bias") {
    const int width = 4, t = 3;
    AttentionParams<double> p = random_params(width, 2, 57);
    Rng rng(58);
    MatD h(t, width);
    h.fill_normal(rng);
    MatD empty(0, width);
    AttnBias<double> none;

    TemporalLatent<double> lat;
    lat.z = MatD(2 * t - 1, 1);
    lat.f1_w = MatD(1, 1, {1.0});
    lat.f2_w = MatD(1, 1, {0.0});

    // f == 0: identical to plain attention
    MatD plain = attention_forward(h, h, empty, p, none,
                                   static_cast<const TemporalLatent<double>*>(nullptr),
                                   static_cast<AttnCache<double>*>(nullptr));
    MatD with_zero = revised_temporal_attention(h, lat, p);
    for (size_t i = 0; i < plain.size(); ++i)
        CHECK(with_zero.data[i] == doctest::Approx(plain.data[i]).epsilon(1e-12));

    // constant f (equal latents at every offset): softmax shift invariance
    lat.f2_w.at(0, 0) = 3.7;
    for (int o = 0; o < 2 * t - 1; ++o) lat.z.at(o, 0) = 0.9;
    MatD with_const = revised_temporal_attention(h, lat, p);
    for (size_t i = 0; i < plain.size(); ++i)
        CHECK(with_const.data[i] == doctest::Approx(plain.data[i]).epsilon(1e-6));

    // large negative bias off the diagonal: near-identity attention
    lat.f2_w.at(0, 0) = -1e4;
    for (int o = 0; o < 2 * t - 1; ++o) lat.z.at(o, 0) = (o == t - 1) ? 0.0 : 1.0;
    MatD hard = revised_temporal_attention(h, lat, p);
    MatD v = linear_forward(h, p.w_v, p.b_v);
    MatD expect = linear_forward(v, p.w_o, p.b_o);
    for (size_t i = 0; i < hard.size(); ++i)
        CHECK(hard.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-6));
}

TEST_CASE("attention backward with multiplicative mask passes a gradient check") {
    const int width = 4, t = 3;
    AttentionParams<double> p = random_params(width, 2, 59);
    AttentionParams<double> grads = p;
    for_each_attn_param(grads, "", [](const std::string&, MatD& m) { m.fill(0.0); });

    Rng rng(60);
    MatD x(t, width), beta0(1, width), target(t, width);
    x.fill_normal(rng);
    beta0.fill_normal(rng);
    target.fill_normal(rng);

    AttnBias<double> bias;
    bias.active = true;
    bias.mask = mask_prepend_ones(build_dispersed_bias<double>(t, t, 1.0).values, 1);

    auto loss = [&]() {
        MatD out = biased_self_attention(x, beta0, p, bias);
        double acc = 0.0;
        for (size_t i = 0; i < out.size(); ++i) {
            const double d = out.data[i] - target.data[i];
            acc += d * d;
        }
        return 0.5 * acc;
    };
    AttnCache<double> cache;
    MatD out = biased_self_attention(x, beta0, p, bias, &cache);
    attention_backward(cache, p, sub(out, target), grads,
                       static_cast<const TemporalLatent<double>*>(nullptr),
                       static_cast<TemporalLatent<double>*>(nullptr));

    std::vector<ParamBlockRef> blocks;
    std::vector<std::string> names;
    std::vector<MatD*> ps, gs;
    for_each_attn_param(p, "p", [&](const std::string& n, MatD& m) {
        names.push_back(n);
        ps.push_back(&m);
    });
    for_each_attn_param(grads, "g", [&](const std::string&, MatD& m) { gs.push_back(&m); });
    for (size_t i = 0; i < ps.size(); ++i) blocks.push_back({names[i], ps[i], gs[i]});
    GradCheckReport rep = gradient_check(loss, blocks, 1e-6);
    CHECK(rep.max_relative_error < 1e-6);
}
