#include <catch2/catch_amalgamated.hpp>

#include "mrt/gradcheck.hpp"
#include "mrt/graph.hpp"
#include "mrt/ops.hpp"
#include "oracles.hpp"

using namespace mrt;
using Catch::Approx;

TEST_CASE("matmul identity and hand values") {
    GradGraph g;
    Tensor I = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor A = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor r = ops::matmul(g, I, A);
    for (int64_t i = 0; i < 4; ++i) CHECK(r[i] == A[i]);

    Tensor B = Tensor::from({2, 2}, {5, 6, 7, 8});
    Tensor ab = ops::matmul(g, A, B);
    const auto expect = oracle::matmul({1, 2, 3, 4}, {5, 6, 7, 8}, 2, 2, 2);
    CHECK(ab[0] == expect[0]); // 19
    CHECK(ab[1] == expect[1]); // 22
    CHECK(ab[2] == expect[2]); // 43
    CHECK(ab[3] == expect[3]); // 50

    Tensor Z = Tensor::zeros({2, 2});
    Tensor za = ops::matmul(g, Z, A);
    for (int64_t i = 0; i < 4; ++i) CHECK(za[i] == 0.0);
}

TEST_CASE("matmul against naive oracle on random shapes") {
    Rng rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(5));
        const int k = 1 + static_cast<int>(rng.below(5));
        const int n = 1 + static_cast<int>(rng.below(5));
        Tensor a = oracle::random_tensor({m, k}, rng);
        Tensor b = oracle::random_tensor({k, n}, rng);
        GradGraph g;
        Tensor out = ops::matmul(g, a, b);
        const auto ref = oracle::matmul({a.data(), a.data() + a.numel()},
                                        {b.data(), b.data() + b.numel()}, m, k, n);
        for (int64_t i = 0; i < out.numel(); ++i)
            CHECK(out[i] == Approx(ref[static_cast<size_t>(i)]).margin(1e-12));
    }
}

TEST_CASE("matmul errors") {
    GradGraph g;
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(ops::matmul(g, a, b), dimension_error);
    Tensor bad = Tensor::from({2, 2}, {1, 2, 3, std::nan("")});
    CHECK_THROWS_AS(ops::matmul(g, bad, Tensor::zeros({2, 2})), numeric_error);
}

TEST_CASE("conv2d identity, ones kernel, zero kernel") {
    GradGraph g;
    Rng rng(1);
    // 1x1 kernel with weight 1 passes the channel through
    Tensor x = oracle::random_tensor({1, 1, 3, 3}, rng);
    Tensor w1 = Tensor::from({1, 1, 1, 1}, {1.0});
    Tensor same = ops::conv2d(g, x, w1, 1, 0);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(same[i] == x[i]);

    // 3x3 all-ones kernel on a ramp: local sums per the naive oracle
    std::vector<double> ramp(16);
    for (int i = 0; i < 16; ++i) ramp[static_cast<size_t>(i)] = i;
    Tensor r = Tensor::from({1, 1, 4, 4}, ramp);
    Tensor ones = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor sums = ops::conv2d(g, r, ones, 1, 0);
    const auto ref = oracle::conv2d(ramp, std::vector<double>(9, 1.0), 1, 1, 4, 4, 1, 3, 3, 1, 0);
    REQUIRE(sums.numel() == 4);
    for (int64_t i = 0; i < 4; ++i) CHECK(sums[i] == ref[static_cast<size_t>(i)]);

    Tensor zeros = Tensor::zeros({2, 1, 3, 3});
    Tensor zout = ops::conv2d(g, r, zeros, 1, 1);
    for (int64_t i = 0; i < zout.numel(); ++i) CHECK(zout[i] == 0.0);
}

TEST_CASE("conv2d against naive oracle with stride and pad") {
    Rng rng(7);
    for (int trial = 0; trial < 8; ++trial) {
        const int B = 1 + static_cast<int>(rng.below(2));
        const int C = 1 + static_cast<int>(rng.below(3));
        const int F = 1 + static_cast<int>(rng.below(3));
        const int H = 4 + static_cast<int>(rng.below(4));
        const int k = 1 + 2 * static_cast<int>(rng.below(2)); // 1 or 3
        const int pad = static_cast<int>(rng.below(2));
        int stride = 1 + static_cast<int>(rng.below(2));
        if ((H + 2 * pad - k) % stride != 0) stride = 1;
        Tensor x = oracle::random_tensor({B, C, H, H}, rng);
        Tensor w = oracle::random_tensor({F, C, k, k}, rng);
        GradGraph g;
        Tensor out = ops::conv2d(g, x, w, stride, pad);
        const auto ref = oracle::conv2d({x.data(), x.data() + x.numel()},
                                        {w.data(), w.data() + w.numel()}, B, C, H, H, F, k, k, stride, pad);
        REQUIRE(out.numel() == static_cast<int64_t>(ref.size()));
        for (int64_t i = 0; i < out.numel(); ++i)
            CHECK(out[i] == Approx(ref[static_cast<size_t>(i)]).margin(1e-12));
    }
}

TEST_CASE("conv2d non-integral output size is a dimension error") {
    GradGraph g;
    Tensor x = Tensor::zeros({1, 1, 5, 5});
    Tensor w = Tensor::zeros({1, 1, 2, 2});
    CHECK_THROWS_AS(ops::conv2d(g, x, w, 2, 0), dimension_error);
}

TEST_CASE("relu, maxpool2, flatten basics") {
    GradGraph g;
    Tensor x = Tensor::from({3}, {-1, 0, 2});
    Tensor y = ops::relu(g, x);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 2.0);

    Tensor p = ops::maxpool2(g, Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4}));
    REQUIRE(p.numel() == 1);
    CHECK(p[0] == 4.0);

    // flatten: bit-identical row-major values
    Rng rng(3);
    Tensor t = oracle::random_tensor({2, 3, 2, 2}, rng);
    Tensor f = ops::flatten(g, t);
    REQUIRE(f.shape() == Shape{2, 12});
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(f[i] == t[i]);
}

TEST_CASE("backward of sum seeds all-ones") {
    GradGraph g;
    Tensor x = g.leaf(Tensor::from({2, 2}, {1, 2, 3, 4}));
    Tensor s = ops::sum(g, x);
    g.backward(s);
    Tensor gx = g.grad(x);
    for (int64_t i = 0; i < 4; ++i) CHECK(gx[i] == 1.0);
}

TEST_CASE("backward rejects non-scalar seed") {
    GradGraph g;
    Tensor x = g.leaf(Tensor::from({2}, {1, 2}));
    Tensor y = ops::square(g, x);
    CHECK_THROWS_AS(g.backward(y), contract_error);
}

TEST_CASE("y = sum((A x)^2) matches finite differences") {
    Tensor A = Tensor::from({2, 2}, {0.4, -1.2, 2.0, 0.7});
    const double err = grad_check(
        [&A](GradGraph& g, const Tensor& x) {
            return ops::sum(g, ops::square(g, ops::matmul(g, A, x)));
        },
        Tensor::from({2, 1}, {0.3, -0.9}));
    CHECK(err < 1e-6);
}

TEST_CASE("gradient accumulation across fan-out") {
    // x used twice: grad is the sum of both path contributions
    Tensor x0 = Tensor::from({3}, {0.5, -1.5, 2.5});
    GradGraph g1;
    Tensor x = g1.leaf(x0);
    Tensor two_paths = ops::add(g1, ops::sum(g1, x), ops::sum(g1, x));
    g1.backward(two_paths);
    Tensor gx = g1.grad(x);

    GradGraph g2;
    Tensor x2 = g2.leaf(x0);
    g2.backward(ops::sum(g2, x2));
    Tensor gx_single = g2.grad(x2);
    for (int64_t i = 0; i < 3; ++i) CHECK(gx[i] == 2.0 * gx_single[i]);

    // mul(x, x) equals square including gradients
    GradGraph g3;
    Tensor x3 = g3.leaf(x0);
    g3.backward(ops::sum(g3, ops::mul(g3, x3, x3)));
    GradGraph g4;
    Tensor x4 = g4.leaf(x0);
    g4.backward(ops::sum(g4, ops::square(g4, x4)));
    for (int64_t i = 0; i < 3; ++i) CHECK(g3.grad(x3)[i] == g4.grad(x4)[i]);
}

TEST_CASE("detach blocks gradients and keeps values") {
    Tensor x0 = Tensor::from({2}, {1.5, -0.5});

    GradGraph g;
    Tensor x = g.leaf(x0);
    Tensor d = g.detach(x);
    for (int64_t i = 0; i < 2; ++i) CHECK(d[i] == x[i]);

    // loss built only on detach(x): upstream gradient is exactly zero
    Tensor loss = ops::sum_sq(g, d);
    g.backward(loss);
    CHECK_FALSE(g.has_grad(x));
    Tensor gx = g.grad(x);
    for (int64_t i = 0; i < 2; ++i) CHECK(gx[i] == 0.0);
}

TEST_CASE("mixed loss f(x) + g(detach(x)) has the gradient of f alone") {
    Tensor x0 = Tensor::from({3}, {0.2, -0.7, 1.1});

    GradGraph g1;
    Tensor x1 = g1.leaf(x0);
    Tensor mixed = ops::add(g1, ops::sum_sq(g1, x1), ops::sum(g1, ops::square(g1, g1.detach(x1))));
    g1.backward(mixed);

    GradGraph g2;
    Tensor x2 = g2.leaf(x0);
    g2.backward(ops::sum_sq(g2, x2));

    for (int64_t i = 0; i < 3; ++i) CHECK(g1.grad(x1)[i] == g2.grad(x2)[i]);
}

TEST_CASE("grad_check corner cases") {
    // exact quadratic
    CHECK(grad_check([](GradGraph& g, const Tensor& x) { return ops::sum_sq(g, x); },
                     Tensor::from({4}, {1, -2, 3, -4})) < 1e-8);
    // constant function: both sides zero
    CHECK(grad_check([](GradGraph& g, const Tensor& x) {
              return ops::sum(g, ops::scale(g, x, 0.0));
          },
                     Tensor::from({3}, {1, 2, 3})) == 0.0);
    // non-scalar rejected
    CHECK_THROWS_AS(grad_check([](GradGraph& g, const Tensor& x) { return ops::square(g, x); },
                               Tensor::from({2}, {1, 2})),
                    contract_error);
}

TEST_CASE("every differentiable op passes grad_check on random inputs") {
    Rng rng(2024);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor m1 = oracle::random_tensor({3, 4}, rng);
        CHECK(grad_check([&](GradGraph& g, const Tensor& x) {
                  return ops::sum(g, ops::square(g, ops::matmul(g, x, m1.constant())));
              },
                         oracle::random_tensor({2, 3}, rng)) < 1e-4);
        CHECK(grad_check([&](GradGraph& g, const Tensor& x) {
                  return ops::sum(g, ops::square(g, ops::matmul(g, m1.constant(), x)));
              },
                         oracle::random_tensor({4, 2}, rng)) < 1e-4);

        Tensor img = oracle::random_tensor({1, 2, 5, 5}, rng);
        CHECK(grad_check([&](GradGraph& g, const Tensor& w) {
                  return ops::sum(g, ops::square(g, ops::conv2d(g, img.constant(), w, 1, 1)));
              },
                         oracle::random_tensor({2, 2, 3, 3}, rng)) < 1e-4);
        Tensor kern = oracle::random_tensor({2, 2, 3, 3}, rng);
        CHECK(grad_check([&](GradGraph& g, const Tensor& x) {
                  return ops::sum(g, ops::square(g, ops::conv2d(g, x, kern.constant(), 1, 0)));
              },
                         oracle::random_tensor({1, 2, 4, 4}, rng)) < 1e-4);

        // relu away from the kink
        Tensor roff = oracle::random_tensor({6}, rng);
        for (int64_t i = 0; i < roff.numel(); ++i)
            if (std::abs(roff.mutable_data()[i]) < 1e-3) roff.mutable_data()[i] = 0.5;
        CHECK(grad_check([](GradGraph& g, const Tensor& x) { return ops::sum(g, ops::relu(g, x)); },
                         roff) < 1e-4);

        CHECK(grad_check([](GradGraph& g, const Tensor& x) {
                  return ops::sum(g, ops::square(g, ops::maxpool2(g, x)));
              },
                         oracle::random_tensor({1, 1, 4, 4}, rng)) < 1e-4);
        CHECK(grad_check([](GradGraph& g, const Tensor& x) {
                  return ops::sum_sq(g, ops::flatten(g, x));
              },
                         oracle::random_tensor({2, 2, 2, 2}, rng)) < 1e-4);

        Tensor bias = oracle::random_tensor({4}, rng);
        Tensor bx = oracle::random_tensor({3, 4}, rng);
        CHECK(grad_check([&](GradGraph& g, const Tensor& b) {
                  return ops::sum(g, ops::square(g, ops::add_bias(g, bx.constant(), b)));
              },
                         bias) < 1e-4);
    }
}

TEST_CASE("forward and gradients are deterministic") {
    Rng rng(99);
    Tensor a0 = oracle::random_tensor({3, 3}, rng);
    Tensor b0 = oracle::random_tensor({3, 3}, rng);
    auto run = [&](std::vector<double>& grads) {
        GradGraph g;
        Tensor a = g.leaf(a0);
        Tensor y = ops::sum(g, ops::square(g, ops::matmul(g, a, b0)));
        g.backward(y);
        Tensor ga = g.grad(a);
        grads.assign(ga.data(), ga.data() + ga.numel());
        return y.item();
    };
    std::vector<double> g1, g2;
    const double y1 = run(g1);
    const double y2 = run(g2);
    CHECK(y1 == y2);
    CHECK(g1 == g2);
}

TEST_CASE("ScopeBarrier soundness on a deeper chain") {
    // params upstream of a barrier get exactly zero from losses downstream
    Rng rng(5);
    Tensor w1 = oracle::random_tensor({3, 3}, rng);
    Tensor w2 = oracle::random_tensor({3, 3}, rng);
    GradGraph g;
    Tensor w1t = g.leaf(w1);
    Tensor w2t = g.leaf(w2);
    Tensor x = Tensor::from({1, 3}, {0.3, -0.4, 0.8});
    Tensor h = ops::matmul(g, x, w1t);
    Tensor hd = g.detach(h);
    Tensor y = ops::sum_sq(g, ops::matmul(g, hd, w2t));
    g.backward(y);
    CHECK_FALSE(g.has_grad(w1t));
    Tensor gw1 = g.grad(w1t);
    for (int64_t i = 0; i < gw1.numel(); ++i) CHECK(gw1[i] == 0.0);
    CHECK(g.has_grad(w2t));
}
