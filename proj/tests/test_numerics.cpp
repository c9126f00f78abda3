#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "palette/gradcheck.hpp"
#include "palette/ops.hpp"
#include "palette/rng.hpp"
#include "palette/tensor.hpp"

using namespace palette;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = true) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    rng.fill_normal(t.data(), 0.0, 1.0);
    return t;
}

// Reverse-mode vs central differences for loss_fn over every listed tensor.
void expect_grads_match(const std::function<Tensor()>& loss_fn,
                        const std::vector<std::pair<std::string, Tensor>>& params,
                        double tol = 1e-6) {
    GradCheckReport report = gradient_check(loss_fn, params, tol);
    CAPTURE(report.to_string());
    CHECK(report.pass);
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t(1, 2) == 6);
    CHECK_THROWS(Tensor::from_data({2, 2}, {1, 2, 3}));
    CHECK_THROWS(Tensor::zeros({0}));
    CHECK_THROWS(Tensor::zeros({2, -1}));

    // Gradient accumulation is additive across uses of the same tensor.
    Tensor x = Tensor::from_data({2}, {3.0, 4.0}, true);
    Tensor y = add(mul(x, x), mul(x, x));
    Tensor s = sum(y);
    s.backward();
    CHECK(x.grad()[0] == doctest::Approx(4 * 3.0).epsilon(1e-12));
    CHECK(x.grad()[1] == doctest::Approx(4 * 4.0).epsilon(1e-12));

    // Handles share storage.
    Tensor alias = x;
    alias.data()[0] = 7.0;
    CHECK(x(0) == 7.0);
    CHECK(alias.same_storage(x));
}

TEST_CASE("matmul identity and zero-row cases") {
    Tensor i2 = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor c = matmul(i2, a);
    for (int i = 0; i < 4; ++i) CHECK(c.data()[i] == a.data()[i]);

    Tensor proj = Tensor::from_data({2, 2}, {1, 0, 0, 0});
    Tensor v = Tensor::from_data({2, 1}, {5, 7});
    Tensor pv = matmul(proj, v);
    CHECK(pv(0, 0) == 5);
    CHECK(pv(1, 0) == 0);
}

TEST_CASE("matmul matches the triple-loop oracle") {
    Rng rng(42);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    Tensor c = matmul(a, b);
    const auto ref = oracle::matmul(a.data(), b.data(), 3, 4, 2);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        CHECK(c.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("matmul dimension errors name both shapes") {
    Tensor a = Tensor::zeros({3, 4});
    Tensor b = Tensor::zeros({5, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b),
                         doctest::Contains("[3,4]"), std::invalid_argument);
    try {
        matmul(a, b);
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("[5,2]") != std::string::npos);
    }
}

TEST_CASE("matmul and matmul_nt gradients") {
    Rng rng(7);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    expect_grads_match([&] { return sum(gelu(matmul(a, b))); }, {{"a", a}, {"b", b}});

    Tensor c = random_tensor({3, 4}, rng);
    Tensor d = random_tensor({2, 4}, rng);
    expect_grads_match([&] { return sum(gelu(matmul_nt(c, d))); }, {{"c", c}, {"d", d}});
}

TEST_CASE("softmax fixed points") {
    Tensor z = softmax(Tensor::from_data({2}, {0.0, 0.0}));
    CHECK(z(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(z(1) == doctest::Approx(0.5).epsilon(1e-12));

    Tensor one = softmax(Tensor::from_data({1}, {123.4}));
    CHECK(one(0) == doctest::Approx(1.0).epsilon(1e-12));

    Tensor logs = softmax(
        Tensor::from_data({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
    CHECK(logs(0) == doctest::Approx(1.0 / 6).epsilon(1e-12));
    CHECK(logs(1) == doctest::Approx(2.0 / 6).epsilon(1e-12));
    CHECK(logs(2) == doctest::Approx(3.0 / 6).epsilon(1e-12));

    CHECK_THROWS(softmax(Tensor{}));
}

TEST_CASE("softmax properties: normalisation and shift invariance") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + rng.below(16);
        Tensor v = random_tensor({n}, rng, false);
        Tensor s = softmax(v);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            CHECK(s(i) > 0.0);
            total += s(i);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

        const double c = rng.normal(0, 10);
        Tensor shifted = Tensor::zeros({n});
        for (int i = 0; i < n; ++i) shifted(i) = v(i) + c;
        Tensor s2 = softmax(shifted);
        for (int i = 0; i < n; ++i) {
            CHECK(s2(i) == doctest::Approx(s(i)).epsilon(1e-12));
        }
    }
}

TEST_CASE("softmax gradient") {
    Rng rng(11);
    Tensor v = random_tensor({6}, rng);
    expect_grads_match([&] { return pick(softmax(v), 2); }, {{"v", v}});
}

TEST_CASE("gelu values") {
    Tensor z = gelu(Tensor::from_data({1}, {0.0}));
    CHECK(z(0) == 0.0);

    Tensor big = gelu(Tensor::from_data({1}, {10.0}));
    CHECK(big(0) == doctest::Approx(10.0).epsilon(1e-9));

    // 1·Φ(1) with Φ the standard Gaussian CDF
    Tensor one = gelu(Tensor::from_data({1}, {1.0}));
    CHECK(one(0) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
}

TEST_CASE("gelu is monotone on [-0.7, inf) and odd-shifted") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        double a = -0.7 + 6.0 * rng.uniform01();
        double b = -0.7 + 6.0 * rng.uniform01();
        if (a > b) std::swap(a, b);
        Tensor ga = gelu(Tensor::from_data({1}, {a}));
        Tensor gb = gelu(Tensor::from_data({1}, {b}));
        CHECK(ga(0) <= gb(0) + 1e-12);

        const double x = rng.normal(0, 3);
        Tensor gx = gelu(Tensor::from_data({1}, {x}));
        Tensor gnx = gelu(Tensor::from_data({1}, {-x}));
        // gelu(x) − gelu(−x) = x because Φ(x) + Φ(−x) = 1
        CHECK(gx(0) - gnx(0) == doctest::Approx(x).epsilon(1e-12));
    }
}

TEST_CASE("elementwise op gradients") {
    Rng rng(13);
    Tensor x = random_tensor({2, 5}, rng);
    expect_grads_match([&] { return sum(gelu(x)); }, {{"x", x}});
    expect_grads_match([&] { return sum(tanh_act(x)); }, {{"x", x}});
    expect_grads_match([&] { return sum(sigmoid_act(x)); }, {{"x", x}});
    Tensor y = random_tensor({2, 5}, rng);
    expect_grads_match([&] { return sum(mul(x, y)); }, {{"x", x}, {"y", y}});
    expect_grads_match([&] { return sum(sub(x, y)); }, {{"x", x}, {"y", y}});
}

TEST_CASE("layer_norm values") {
    Tensor gain = Tensor::full({4}, 1.0);
    Tensor bias = Tensor::zeros({4});

    Tensor constant = layer_norm(Tensor::full({4}, 3.0), gain, bias);
    for (int i = 0; i < 4; ++i) CHECK(constant(i) == doctest::Approx(0.0));

    Tensor g2 = Tensor::full({2}, 1.0);
    Tensor b2 = Tensor::zeros({2});
    Tensor pm = layer_norm(Tensor::from_data({2}, {1.0, -1.0}), g2, b2);
    CHECK(pm(0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(pm(1) == doctest::Approx(-1.0).epsilon(1e-9));

    Tensor zero_gain = Tensor::zeros({4});
    Tensor some_bias = Tensor::from_data({4}, {1, 2, 3, 4});
    Rng rng(17);
    Tensor h = random_tensor({4}, rng, false);
    Tensor out = layer_norm(h, zero_gain, some_bias);
    for (int i = 0; i < 4; ++i) CHECK(out(i) == some_bias(i));
}

TEST_CASE("layer_norm matches oracle and gradients pass") {
    Rng rng(19);
    Tensor x = random_tensor({3, 6}, rng);
    Tensor gain = random_tensor({6}, rng);
    Tensor bias = random_tensor({6}, rng);
    Tensor out = layer_norm(x, gain, bias);
    for (int r = 0; r < 3; ++r) {
        std::vector<double> xr(x.data().begin() + r * 6, x.data().begin() + (r + 1) * 6);
        const auto ref = oracle::layer_norm(xr, gain.data(), bias.data());
        for (int c = 0; c < 6; ++c) {
            CHECK(out(r, c) == doctest::Approx(ref[static_cast<std::size_t>(c)]).epsilon(1e-12));
        }
    }
    expect_grads_match([&] { return sum(gelu(layer_norm(x, gain, bias))); },
                       {{"x", x}, {"gain", gain}, {"bias", bias}});
}

TEST_CASE("structural op gradients: linear, slices, gather, mul_cols") {
    Rng rng(23);
    Tensor x = random_tensor({4, 6}, rng);
    Tensor w = random_tensor({3, 6}, rng);
    Tensor b = random_tensor({3}, rng);
    expect_grads_match([&] { return sum(gelu(linear(x, w, b))); },
                       {{"x", x}, {"w", w}, {"b", b}});

    expect_grads_match([&] { return sum(slice_cols(x, 2, 3)); }, {{"x", x}});
    Tensor y = random_tensor({4, 2}, rng);
    expect_grads_match([&] { return sum(concat_cols({x, y})); }, {{"x", x}, {"y", y}});
    expect_grads_match([&] { return sum(row(x, 1)); }, {{"x", x}});

    Tensor table = random_tensor({5, 3}, rng);
    expect_grads_match([&] { return sum(gather_rows(table, {0, 2, 2, 4})); },
                       {{"table", table}});

    Tensor s = random_tensor({6}, rng);
    expect_grads_match([&] { return sum(mul_cols(x, s)); }, {{"x", x}, {"s", s}});
}

TEST_CASE("loss gradients") {
    Rng rng(29);
    Tensor logits = random_tensor({1, 4}, rng);
    expect_grads_match([&] { return cross_entropy_with_logits(logits, 2); },
                       {{"logits", logits}});
    Tensor pred = random_tensor({1}, rng);
    expect_grads_match([&] { return squared_error(pred, 0.75); }, {{"pred", pred}});
    CHECK_THROWS(cross_entropy_with_logits(logits, 4));
}

TEST_CASE("softmax_rows masking") {
    Rng rng(31);
    Tensor scores = random_tensor({3, 4}, rng, false);
    std::vector<std::uint8_t> mask{1, 0, 1, 0};
    Tensor w = softmax_rows(scores, mask);
    for (int r = 0; r < 3; ++r) {
        CHECK(w(r, 1) == 0.0);  // exactly zero weight on masked keys
        CHECK(w(r, 3) == 0.0);
        CHECK(w(r, 0) + w(r, 2) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS(softmax_rows(scores, std::vector<std::uint8_t>{0, 0, 0, 0}));

    Tensor s2 = random_tensor({2, 5}, rng);
    std::vector<std::uint8_t> m2{1, 1, 0, 1, 1};
    expect_grads_match([&] { return sum(mul(softmax_rows(s2, m2), s2)); }, {{"s2", s2}});
}

TEST_CASE("finite differences: analytic cases") {
    Tensor p = Tensor::from_data({2}, {1.0, 2.0});
    Tensor g = finite_difference_grad(
        [](const Tensor& t) {
            double acc = 0.0;
            for (double v : t.data()) acc += v * v;
            return acc;
        },
        p, 1e-5);
    CHECK(g(0) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(g(1) == doctest::Approx(4.0).epsilon(1e-8));

    Tensor c = finite_difference_grad([](const Tensor&) { return 3.5; }, p, 1e-5);
    CHECK(c(0) == 0.0);
    CHECK(c(1) == 0.0);

    Tensor q = Tensor::from_data({2}, {0.0, 0.0});
    Tensor gs = finite_difference_grad(
        [](const Tensor& t) {
            Tensor s = softmax(t);
            return s(0);
        },
        q, 1e-5);
    CHECK(gs(0) == doctest::Approx(0.25).epsilon(1e-7));
    CHECK(gs(1) == doctest::Approx(-0.25).epsilon(1e-7));

    CHECK_THROWS_WITH_AS(
        finite_difference_grad(
            [](const Tensor& t) { return std::log(t(0) - 100.0); }, p, 1e-5),
        doctest::Contains("coordinate"), std::runtime_error);
}

TEST_CASE("gradient_check passes a linear model and names a corrupted tensor") {
    Rng rng(37);
    Tensor w = random_tensor({1, 5}, rng);
    Tensor x = random_tensor({1, 5}, rng, false);
    GradCheckReport ok =
        gradient_check([&] { return sum(mul(w, x)); }, {{"w", w}}, 1e-6);
    CHECK(ok.pass);

    // A custom op whose backward has the wrong sign must be flagged, and the
    // offending tensor named.
    Tensor v = random_tensor({3}, rng);
    auto bad_square = [](const Tensor& t) {
        std::vector<double> out(t.numel());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.data()[i] * t.data()[i];
        return Tensor::make_op(t.shape(), std::move(out), {t}, [](detail::Node& o) {
            Tensor& p = o.parents[0];
            if (!p.requires_grad()) return;
            auto& g = p.grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] -= o.grad[i] * 2.0 * p.data()[i];  // sign flipped
            }
        });
    };
    GradCheckReport bad =
        gradient_check([&] { return sum(bad_square(v)); }, {{"v", v}, {"w", w}}, 1e-5);
    CHECK_FALSE(bad.pass);
    CHECK(bad.worst_name == "v");
    CHECK_FALSE(bad.entries[0].pass);
    CHECK(bad.entries[1].name == "w");
}

TEST_CASE("rng reproducibility and stream independence") {
    Rng a(12345), b(12345);
    for (int i = 0; i < 10000; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng c(12345), d(12345);
    for (int i = 0; i < 1000; ++i) {
        CHECK(c.uniform01() == d.uniform01());
        CHECK(c.normal(0, 1) == d.normal(0, 1));
    }

    Rng e(1);
    for (int i = 0; i < 1000; ++i) {
        const int v = e.below(7);
        CHECK(v >= 0);
        CHECK(v < 7);
    }
    CHECK_THROWS(e.below(0));

    Rng s1 = Rng::derive(99, 0);
    Rng s2 = Rng::derive(99, 1);
    CHECK(s1.next_u64() != s2.next_u64());
}

TEST_CASE("every composite expression matches finite differences on random inputs") {
    // The blanket reverse-mode invariant: random small graphs mixing the op
    // vocabulary agree with central differences to 1e-5 relative error.
    Rng rng(41);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = random_tensor({3, 8}, rng);
        Tensor w1 = random_tensor({6, 8}, rng);
        Tensor b1 = random_tensor({6}, rng);
        Tensor w2 = random_tensor({5, 6}, rng);
        Tensor gain = random_tensor({5}, rng);
        Tensor bias = random_tensor({5}, rng);
        auto loss = [&] {
            Tensor h = gelu(linear(x, w1, b1));
            Tensor y = layer_norm(linear(h, w2), gain, bias);
            // keep scores out of softmax saturation so central differences
            // stay well conditioned
            Tensor s = softmax_rows(scale(matmul_nt(y, y), 0.2), {});
            return pick(matmul(s, y), 1);
        };
        expect_grads_match(loss,
                           {{"x", x}, {"w1", w1}, {"b1", b1}, {"w2", w2}, {"gain", gain},
                            {"bias", bias}},
                           1e-5);
    }
}
