#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "modit/gradcheck.hpp"
#include "modit/matrix.hpp"

using namespace modit;

namespace {
const double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("softmax rows: forced values") {
    MatD x(1, 3, {0.0, 0.0, 0.0});
    MatD s = softmax_rows(x);
    for (int j = 0; j < 3; ++j) CHECK(s.at(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));

    MatD y(1, 2, {0.0, std::log(2.0)});
    MatD sy = softmax_rows(y);
    CHECK(sy.at(0, 0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(sy.at(0, 1) == doctest::Approx(2.0 / 3).epsilon(1e-12));

    MatD z(1, 2, {5.0, -kInf});
    MatD sz = softmax_rows(z);
    CHECK(sz.at(0, 0) == doctest::Approx(1.0));
    CHECK(sz.at(0, 1) == 0.0);
}

TEST_CASE("softmax rows: fully masked row is an error") {
    MatD x(2, 2, {0.0, 1.0, -kInf, -kInf});
    CHECK_THROWS_AS(softmax_rows(x), NumericError);
}

TEST_CASE("softmax rows: row-stochastic over random matrices") {
    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        MatD x(3 + static_cast<int>(rng.uniform_int(5)), 2 + static_cast<int>(rng.uniform_int(6)));
        x.fill_normal(rng, 3.0);
        MatD s = softmax_rows(x);
        for (int i = 0; i < s.rows; ++i) {
            double sum = 0.0;
            for (int j = 0; j < s.cols; ++j) {
                CHECK(s.at(i, j) >= 0.0);
                CHECK(s.at(i, j) <= 1.0);
                sum += s.at(i, j);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("linear forward: identity, zero input, hand value") {
    Rng rng(5);
    MatD x(3, 2);
    x.fill_normal(rng);
    MatD eye(2, 2, {1.0, 0.0, 0.0, 1.0});
    MatD b0(1, 2);
    MatD out = linear_forward(x, eye, b0);
    for (size_t i = 0; i < x.size(); ++i) CHECK(out.data[i] == doctest::Approx(x.data[i]));

    MatD zero(3, 2);
    MatD w(2, 2);
    w.fill_normal(rng);
    MatD b(1, 2, {7.0, -3.0});
    MatD out2 = linear_forward(zero, w, b);
    for (int i = 0; i < 3; ++i) {
        CHECK(out2.at(i, 0) == 7.0);
        CHECK(out2.at(i, 1) == -3.0);
    }

    // [[1,2]] * I + [3,4] = [[4,6]]
    MatD x3(1, 2, {1.0, 2.0});
    MatD b3(1, 2, {3.0, 4.0});
    MatD out3 = linear_forward(x3, eye, b3);
    CHECK(out3.at(0, 0) == 4.0);
    CHECK(out3.at(0, 1) == 6.0);
}

TEST_CASE("linear forward: dimension mismatch") {
    MatD x(1, 3);
    MatD w(2, 2);
    MatD b(1, 2);
    CHECK_THROWS_AS(linear_forward(x, w, b), std::invalid_argument);
}

TEST_CASE("linear forward: additive in x up to the bias") {
    Rng rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        MatD x1(4, 5), x2(4, 5), w(5, 3), b(1, 3);
        x1.fill_normal(rng);
        x2.fill_normal(rng);
        w.fill_normal(rng);
        b.fill_normal(rng);
        MatD lhs = linear_forward(add(x1, x2), w, b);
        MatD rhs = add(linear_forward(x1, w, b), linear_forward(x2, w, b));
        // f(x1+x2) = f(x1) + f(x2) - broadcast(b)
        for (int i = 0; i < lhs.rows; ++i)
            for (int j = 0; j < lhs.cols; ++j)
                CHECK(lhs.at(i, j) ==
                      doctest::Approx(rhs.at(i, j) - b.at(0, j)).epsilon(1e-9));
    }
}

TEST_CASE("layer norm: forced values") {
    MatD gain1(1, 2, {1.0, 1.0});
    MatD shift0(1, 2, {0.0, 0.0});

    MatD c(1, 2, {3.0, 3.0});
    MatD out = layer_norm(c, gain1, shift0, 1e-5);
    CHECK(out.at(0, 0) == doctest::Approx(0.0));
    CHECK(out.at(0, 1) == doctest::Approx(0.0));

    MatD r(1, 2, {-1.0, 1.0});
    MatD out2 = layer_norm(r, gain1, shift0, 1e-12);
    CHECK(out2.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(out2.at(0, 1) == doctest::Approx(1.0).epsilon(1e-6));

    // row [0,2], gain [2,2], shift [1,1] -> [-1,3]
    MatD x(1, 2, {0.0, 2.0});
    MatD g(1, 2, {2.0, 2.0});
    MatD s(1, 2, {1.0, 1.0});
    MatD out3 = layer_norm(x, g, s, 1e-12);
    CHECK(out3.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(out3.at(0, 1) == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("gradient check: exact quadratic and constant loss") {
    Rng rng(23);
    MatD x(3, 4);
    x.fill_normal(rng);
    MatD grad = scale(x, 2.0);
    auto loss = [&]() {
        double acc = 0.0;
        for (double v : x.data) acc += v * v;
        return acc;
    };
    GradCheckReport rep = gradient_check(loss, {{"x", &x, &grad}}, 1e-5);
    CHECK(rep.max_relative_error < 1e-8);

    MatD zero_grad(3, 4);
    auto const_loss = []() { return 42.0; };
    GradCheckReport rep2 = gradient_check(const_loss, {{"x", &x, &zero_grad}}, 1e-5);
    CHECK(rep2.max_relative_error == 0.0);
}

TEST_CASE("gradient check: rejects corrupted analytic gradients") {
    MatD x(2, 2, {0.5, -0.3, 0.2, 0.9});
    MatD grad = scale(x, 2.0);
    grad.at(0, 0) += 1.0;  // deliberately wrong
    auto loss = [&]() {
        double acc = 0.0;
        for (double v : x.data) acc += v * v;
        return acc;
    };
    GradCheckReport rep = gradient_check(loss, {{"x", &x, &grad}}, 1e-5);
    CHECK(rep.max_relative_error > 1e-4);
    CHECK(rep.worst_block == "x");
    CHECK(rep.worst_row == 0);
    CHECK(rep.worst_col == 0);
}

TEST_CASE("backward passes of primitives agree with finite differences") {
    Rng rng(31);
    MatD x(3, 4), w(4, 2), b(1, 2), target(3, 2);
    x.fill_normal(rng);
    w.fill_normal(rng);
    b.fill_normal(rng);
    target.fill_normal(rng);

    auto loss_of = [&](const MatD& out) {
        double acc = 0.0;
        for (size_t i = 0; i < out.size(); ++i) {
            const double d = out.data[i] - target.data[i];
            acc += d * d;
        }
        return 0.5 * acc;
    };

    SUBCASE("linear") {
        auto loss = [&]() { return loss_of(linear_forward(x, w, b)); };
        MatD dw(4, 2), db(1, 2);
        MatD out = linear_forward(x, w, b);
        linear_backward(x, w, sub(out, target), dw, db);
        GradCheckReport rep = gradient_check(loss, {{"w", &w, &dw}, {"b", &b, &db}}, 1e-6);
        CHECK(rep.max_relative_error < 1e-7);
    }

    SUBCASE("layer norm") {
        MatD gain(1, 4), shift(1, 4), t2(3, 4);
        gain.fill_uniform(rng, 0.5, 1.5);
        shift.fill_normal(rng);
        t2.fill_normal(rng);
        auto loss = [&]() {
            MatD out = layer_norm(x, gain, shift, 1e-5);
            double acc = 0.0;
            for (size_t i = 0; i < out.size(); ++i) {
                const double d = out.data[i] - t2.data[i];
                acc += d * d;
            }
            return 0.5 * acc;
        };
        LayerNormCache<double> cache;
        MatD out = layer_norm(x, gain, shift, 1e-5, &cache);
        MatD dg(1, 4), ds(1, 4);
        MatD dx = layer_norm_backward(cache, gain, sub(out, t2), dg, ds);
        // check input gradient too by treating x as the parameter
        GradCheckReport rep =
            gradient_check(loss, {{"gain", &gain, &dg}, {"shift", &shift, &ds}, {"x", &x, &dx}},
                           1e-6);
        CHECK(rep.max_relative_error < 1e-6);
    }

    SUBCASE("softmax") {
        MatD t3(3, 4);
        t3.fill_normal(rng);
        auto loss = [&]() {
            MatD out = softmax_rows(x);
            double acc = 0.0;
            for (size_t i = 0; i < out.size(); ++i) {
                const double d = out.data[i] - t3.data[i];
                acc += d * d;
            }
            return 0.5 * acc;
        };
        MatD probs = softmax_rows(x);
        MatD dx = softmax_backward(probs, sub(probs, t3));
        GradCheckReport rep = gradient_check(loss, {{"x", &x, &dx}}, 1e-6);
        CHECK(rep.max_relative_error < 1e-6);
    }

    SUBCASE("gelu") {
        auto loss = [&]() {
            MatD out = gelu(x);
            double acc = 0.0;
            for (double v : out.data) acc += v * v;
            return 0.5 * acc;
        };
        MatD d_out = gelu(x);
        MatD dx = gelu_backward(x, d_out);
        GradCheckReport rep = gradient_check(loss, {{"x", &x, &dx}}, 1e-6);
        CHECK(rep.max_relative_error < 1e-6);
    }
}

TEST_CASE("matrix finiteness guard") {
    MatD x(1, 2, {1.0, kInf});
    CHECK_FALSE(x.all_finite());
    CHECK_THROWS_AS(require_finite(x, "test"), NumericError);
}
