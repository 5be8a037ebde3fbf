#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "modit/blink.hpp"

using namespace modit;

TEST_CASE("blink track clamps to [0,1]") {
    BlinkTrack<double> t({-0.5, 0.3, 1.7});
    CHECK(t.intensity[0] == 0.0);
    CHECK(t.intensity[1] == 0.3);
    CHECK(t.intensity[2] == 1.0);
}

TEST_CASE("blink_fuse: zero weights give zero features") {
    BlinkPoseParams<double> p = init_blink_params<double>(6, 4, 3, 3, 1);
    for (auto& st : p.stages) {
        st.w.fill(0.0);
        st.b.fill(0.0);
    }
    Rng rng(2);
    MatD beta(5, 6);
    beta.fill_normal(rng);
    BlinkTrack<double> blink({0.1, 0.5, 0.9, 0.2, 0.0});
    MatD f = blink_fuse(beta, blink, p);
    for (double v : f.data) CHECK(v == 0.0);
}

TEST_CASE("blink_fuse: the blink channel is live") {
    BlinkPoseParams<double> p = init_blink_params<double>(6, 4, 3, 3, 3);
    Rng rng(4);
    MatD beta(5, 6);
    beta.fill_normal(rng);
    BlinkTrack<double> closed({1.0, 1.0, 1.0, 1.0, 1.0});
    BlinkTrack<double> open({0.0, 0.0, 0.0, 0.0, 0.0});
    MatD fc = blink_fuse(beta, closed, p);
    MatD fo = blink_fuse(beta, open, p);
    double max_diff = 0.0;
    for (size_t i = 0; i < fc.size(); ++i)
        max_diff = std::max(max_diff, std::fabs(fc.data[i] - fo.data[i]));
    CHECK(max_diff > 1e-6);
}

TEST_CASE("blink_fuse: identity center taps reproduce the input channels") {
    const int coeff = 4, channels = 4;
    BlinkPoseParams<double> p = init_blink_params<double>(coeff, channels, 3, 3, 5);
    for (auto& st : p.stages) {
        st.w.fill(0.0);
        st.b.fill(0.0);
        for (int oc = 0; oc < channels; ++oc) st.w.at(oc, oc * st.kernel + 1) = 1.0;  // center tap
    }
    Rng rng(6);
    MatD beta(4, coeff);
    beta.fill_uniform(rng, 0.0, 1.0);  // nonnegative so LeakyReLU is the identity
    BlinkTrack<double> blink({0.0, 0.0, 0.0, 0.0});
    MatD f = blink_fuse(beta, blink, p);
    for (int t = 0; t < 4; ++t)
        for (int c = 0; c < channels; ++c)
            CHECK(f.at(t, c) == doctest::Approx(beta.at(t, c)).epsilon(1e-12));
}

TEST_CASE("blink_fuse: window too short") {
    BlinkPoseParams<double> p = init_blink_params<double>(4, 4, 3, 3, 7);
    MatD beta(2, 4);
    BlinkTrack<double> blink({0.0, 0.0});
    CHECK_THROWS_AS(blink_fuse(beta, blink, p), std::invalid_argument);
}

TEST_CASE("pose head: expectation semantics over bins") {
    const int bins = 2;
    BlinkPoseParams<double> p = init_blink_params<double>(4, 3, 1, 3, 9, bins);
    p.angle_lo = -1.0;
    p.angle_hi = 1.0;
    p.yaw_w.fill(0.0);
    p.pitch_w.fill(0.0);
    p.roll_w.fill(0.0);

    // uniform logits: expectation is the midpoint
    p.yaw_b.fill(0.0);
    MatD features(2, 3);
    PoseOutput<double> out = pose_head(features, p);
    CHECK(out.angles.at(0, 0) == doctest::Approx(0.0));

    // logits [0, ln 3] over centers {-0.5, 0.5}: 0.25*(-0.5) + 0.75*0.5 = 0.25
    p.yaw_b.at(0, 1) = std::log(3.0);
    out = pose_head(features, p);
    CHECK(out.angles.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));

    // effectively one-hot logits hit the bin center exactly
    p.yaw_b.fill(0.0);
    p.yaw_b.at(0, 0) = 1000.0;
    out = pose_head(features, p);
    CHECK(out.angles.at(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("pose head: angles always inside the configured range") {
    BlinkPoseParams<double> p = init_blink_params<double>(8, 6, 2, 3, 11, 66);
    Rng rng(12);
    for (int rep = 0; rep < 20; ++rep) {
        MatD features(5, 6);
        features.fill_normal(rng, 3.0);
        PoseOutput<double> out = pose_head(features, p);
        for (int t = 0; t < 5; ++t)
            for (int a = 0; a < 3; ++a) {
                CHECK(out.angles.at(t, a) >= p.angle_lo);
                CHECK(out.angles.at(t, a) <= p.angle_hi);
            }
        CHECK(out.tr.cols == 3);
        CHECK(out.delta.cols == 8);
    }
}

TEST_CASE("pose head: rejects degenerate bin counts") {
    CHECK_THROWS_AS(pose_bin_centers<double>(1, -1.0, 1.0), std::invalid_argument);
}

TEST_CASE("assemble_shape: mean face and linearity") {
    ToyFaceBasis<double> basis = make_toy_blink_basis<double>(6, 21);
    MatD alpha(1, 80), beta(1, 64);
    MatD mean = assemble_shape(alpha, beta, basis);
    for (size_t i = 0; i < mean.size(); ++i) CHECK(mean.data[i] == basis.mean.data[i]);

    Rng rng(22);
    MatD a1(1, 80), b1(1, 64), b2(1, 64);
    a1.fill_normal(rng);
    b1.fill_normal(rng);
    b2.fill_normal(rng);
    MatD combined = assemble_shape(a1, add(b1, b2), basis);
    MatD s1 = assemble_shape(a1, b1, basis);
    MatD s2 = assemble_shape(MatD(1, 80), b2, basis);
    // superposition: S(a, b1+b2) = S(a, b1) + S(0, b2) - mean
    for (size_t i = 0; i < combined.size(); ++i)
        CHECK(combined.data[i] ==
              doctest::Approx(s1.data[i] + s2.data[i] - basis.mean.data[i]).epsilon(1e-12));

    MatD bad(1, 63);
    CHECK_THROWS_AS(assemble_shape(a1, bad, basis), std::invalid_argument);
}

TEST_CASE("assemble_shape: unit basis channel moves its vertex exactly") {
    // constructed basis: expression channel 0 displaces vertex 0 by (0,0,1)
    ToyFaceBasis<double> basis;
    basis.vertices = 4;
    basis.mean = MatD(4, 3);
    basis.u_id = MatD(80, 12);
    basis.u_exp = MatD(64, 12);
    basis.u_exp.at(0, 2) = 1.0;  // vertex 0, z

    MatD alpha(1, 80), beta(1, 64);
    beta.at(0, 0) = 1.0;
    MatD s = assemble_shape(alpha, beta, basis);
    CHECK(s.at(0, 2) == 1.0);
    for (int v = 0; v < 4; ++v)
        for (int d = 0; d < 3; ++d)
            if (!(v == 0 && d == 2)) CHECK(s.at(v, d) == 0.0);
}

TEST_CASE("eye closure distance: forced values") {
    MatD verts(2, 3);
    CHECK(eye_closure_distance(verts, 0, 1) == 0.0);
    verts.at(1, 1) = 3.0;
    verts.at(1, 2) = 4.0;
    CHECK(eye_closure_distance(verts, 0, 1) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK_THROWS_AS(eye_closure_distance(verts, 0, 5), std::invalid_argument);
}

TEST_CASE("toy basis: unit-normalized rows and blink geometry") {
    ToyFaceBasis<double> basis = make_toy_blink_basis<double>(6, 31);
    for (int r = 0; r < basis.u_exp.rows; ++r) {
        double norm = 0.0;
        for (int c = 0; c < basis.u_exp.cols; ++c)
            norm += basis.u_exp.at(r, c) * basis.u_exp.at(r, c);
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));
    }
    // direct coefficient sweep: closure distance decreases monotonically
    MatD alpha(1, 80);
    double prev = 1e300;
    for (int k = 0; k <= 10; ++k) {
        MatD beta(1, 64);
        beta.at(0, 0) = kBlinkCoeffGain * (k / 10.0);
        MatD verts = assemble_shape(alpha, beta, basis);
        const double d = eye_closure_distance(verts, basis.upper_eyelid, basis.lower_eyelid);
        CHECK(d < prev);
        prev = d;
    }
    // full closure reaches below a fifth of the open distance
    MatD open_beta(1, 64), closed_beta(1, 64);
    closed_beta.at(0, 0) = kBlinkCoeffGain;
    const double d_open = eye_closure_distance(assemble_shape(alpha, open_beta, basis), 0, 1);
    const double d_closed = eye_closure_distance(assemble_shape(alpha, closed_beta, basis), 0, 1);
    CHECK(d_closed < 0.2 * d_open);
}

TEST_CASE("trained toy blink head maps intensity to closure") {
    const int coeff = 64, window = 8;
    BlinkPoseParams<double> p = init_blink_params<double>(coeff, 16, 3, 3, 99);
    const double final_loss = train_blink_head(p, coeff, window, 100, 400, 2e-3);
    CHECK(final_loss < 1e-3);

    ToyFaceBasis<double> basis = make_toy_blink_basis<double>(6, 31);
    MatD alpha(1, 80);
    double prev = 1e300;
    for (int k = 0; k <= 10; ++k) {
        const double u = k / 10.0;
        BlinkTrack<double> blink(std::vector<double>(window, u));
        MatD beta(window, coeff);
        MatD features = blink_fuse(beta, blink, p);
        PoseOutput<double> out = pose_head(features, p);
        MatD frame = row_slice(out.delta, window / 2, 1);
        MatD verts = assemble_shape(alpha, frame, basis);
        const double d = eye_closure_distance(verts, 0, 1);
        CHECK(d <= prev + 1e-6);
        prev = d;
    }
}
