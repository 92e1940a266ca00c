#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "siamdff/grad.hpp"
#include "siamdff/nn.hpp"
#include "siamdff/rng.hpp"

using namespace siamdff;

namespace {

// Scalarize a tensor-valued function through a fixed random weighting so the
// checks exercise non-uniform output gradients.
Tensor fixed_weights(const std::vector<std::size_t>& shape, std::uint64_t seed) {
    Rng rng(seed);
    return random_uniform(rng, shape, -1, 1);
}

real_t weighted_sum(const Tensor& t, const Tensor& w) {
    real_t acc = 0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += t.at(i) * w.at(i);
    return acc;
}

}  // namespace

TEST_CASE("quadratic analytic gradient") {
    ParamSet params;
    params.set("w", Tensor::from_vector({1, 2}));
    const auto f = [](const ParamSet& p) {
        const Tensor& w = p.get("w");
        real_t acc = 0;
        for (std::size_t i = 0; i < w.size(); ++i) acc += w.at(i) * w.at(i);
        return acc;
    };
    const auto grad = [](const ParamSet& p) {
        ParamSet g;
        g.set("w", scale(p.get("w"), 2));
        return g;
    };
    CHECK(grad_check(f, grad, params, 1e-5) < 1e-7);

    const ParamSet fd = finite_difference_grad(f, params, 1e-5);
    CHECK(fd.get("w").at(0) == doctest::Approx(2).epsilon(1e-7));
    CHECK(fd.get("w").at(1) == doctest::Approx(4).epsilon(1e-7));
}

TEST_CASE("sum of sigmoid of a linear map") {
    Rng rng(100);
    const Tensor x = random_normal(rng, {4, 1});
    ParamSet params;
    params.set("w", random_normal(rng, {3, 4}));
    const auto f = [&x](const ParamSet& p) {
        return sum(sigmoid(matmul(p.get("w"), x)));
    };
    const auto grad = [&x](const ParamSet& p) {
        const Tensor wx = matmul(p.get("w"), x);
        const Tensor y = sigmoid(wx);
        const Tensor gy = Tensor::full(y.shape(), 1);
        const Tensor gpre = sigmoid_vjp(y, gy);
        Tensor gw, gx;
        matmul_vjp(p.get("w"), x, gpre, gw, gx);
        ParamSet g;
        g.set("w", gw);
        return g;
    };
    CHECK(grad_check(f, grad, params, 1e-5) < 1e-5);
}

TEST_CASE("softmax row sums are constant so the gradient vanishes") {
    Rng rng(101);
    ParamSet params;
    params.set("x", random_normal(rng, {3, 5}));
    const auto f = [](const ParamSet& p) { return sum(softmax_rows(p.get("x"))); };
    const ParamSet fd = finite_difference_grad(f, params, 1e-5);
    CHECK(max_abs(fd.get("x")) < 1e-7);
    // The analytic gradient is exactly zero.
    const Tensor y = softmax_rows(params.get("x"));
    const Tensor g = softmax_rows_vjp(y, Tensor::full({3, 5}, 1));
    CHECK(max_abs(g) < 1e-15);
}

TEST_CASE("matmul gradient w.r.t. both factors") {
    Rng rng(102);
    ParamSet params;
    params.set("a", random_normal(rng, {3, 4}));
    params.set("b", random_normal(rng, {4, 2}));
    const Tensor w = fixed_weights({3, 2}, 200);
    const auto f = [&w](const ParamSet& p) {
        return weighted_sum(matmul(p.get("a"), p.get("b")), w);
    };
    const auto grad = [&w](const ParamSet& p) {
        Tensor ga, gb;
        matmul_vjp(p.get("a"), p.get("b"), w, ga, gb);
        ParamSet g;
        g.set("a", ga);
        g.set("b", gb);
        return g;
    };
    CHECK(grad_check(f, grad, params, 1e-5) < 1e-4);
}

TEST_CASE("softmax gradient under a non-uniform weighting") {
    Rng rng(103);
    ParamSet params;
    params.set("x", random_normal(rng, {2, 6}));
    const Tensor w = fixed_weights({2, 6}, 201);
    const auto f = [&w](const ParamSet& p) { return weighted_sum(softmax_rows(p.get("x")), w); };
    const auto grad = [&w](const ParamSet& p) {
        ParamSet g;
        g.set("x", softmax_rows_vjp(softmax_rows(p.get("x")), w));
        return g;
    };
    CHECK(grad_check(f, grad, params, 1e-5) < 1e-4);
}

TEST_CASE("layer norm gradient w.r.t. input, scale and shift") {
    Rng rng(104);
    ParamSet params;
    params.set("x", random_normal(rng, {3, 5}));
    params.set("scale", random_uniform(rng, {5}, 0.5, 1.5));
    params.set("shift", random_normal(rng, {5}));
    const Tensor w = fixed_weights({3, 5}, 202);
    const real_t eps = static_cast<real_t>(1e-5);
    const auto f = [&](const ParamSet& p) {
        return weighted_sum(layer_norm(p.get("x"), p.get("scale"), p.get("shift"), eps), w);
    };
    const auto grad = [&](const ParamSet& p) {
        Tensor gx, gscale, gshift;
        layer_norm_vjp(p.get("x"), p.get("scale"), eps, w, gx, gscale, gshift);
        ParamSet g;
        g.set("x", gx);
        g.set("scale", gscale);
        g.set("shift", gshift);
        return g;
    };
    CHECK(grad_check(f, grad, params, 1e-5) < 1e-4);
}

TEST_CASE("conv2d gradient w.r.t. input and kernel") {
    Rng rng(105);
    ParamSet params;
    params.set("x", random_normal(rng, {2, 4, 4}));
    params.set("k", random_normal(rng, {3, 2, 3, 3}));
    const Tensor w = fixed_weights({3, 4, 4}, 203);
    const auto f = [&w](const ParamSet& p) {
        return weighted_sum(conv2d(p.get("x"), p.get("k"), 1), w);
    };
    const auto grad = [&w](const ParamSet& p) {
        Tensor gx, gk;
        conv2d_vjp(p.get("x"), p.get("k"), 1, w, gx, gk);
        ParamSet g;
        g.set("x", gx);
        g.set("k", gk);
        return g;
    };
    CHECK(grad_check(f, grad, params, 1e-5) < 1e-4);
}

TEST_CASE("conv1d gradient w.r.t. vector and kernel") {
    Rng rng(106);
    ParamSet params;
    params.set("v", random_normal(rng, {7}));
    params.set("k", random_normal(rng, {3}));
    const Tensor w = fixed_weights({7}, 204);
    const auto f = [&w](const ParamSet& p) {
        return weighted_sum(conv1d_channels(p.get("v"), p.get("k")), w);
    };
    const auto grad = [&w](const ParamSet& p) {
        Tensor gv, gk;
        conv1d_channels_vjp(p.get("v"), p.get("k"), w, gv, gk);
        ParamSet g;
        g.set("v", gv);
        g.set("k", gk);
        return g;
    };
    CHECK(grad_check(f, grad, params, 1e-5) < 1e-4);
}

TEST_CASE("pooling gradients") {
    Rng rng(107);
    ParamSet params;
    params.set("x", random_normal(rng, {3, 4, 4}));
    const Tensor w = fixed_weights({1, 4, 4}, 205);
    for (PoolMode mode : {PoolMode::kAvg, PoolMode::kMax}) {
        const auto f = [&w, mode](const ParamSet& p) {
            return weighted_sum(pool_over_channels(p.get("x"), mode), w);
        };
        const auto grad = [&w, mode](const ParamSet& p) {
            ParamSet g;
            g.set("x", pool_over_channels_vjp(p.get("x"), mode, w));
            return g;
        };
        CHECK(grad_check(f, grad, params, 1e-5) < 1e-4);
    }
}

TEST_CASE("relu and sigmoid elementwise gradients") {
    Rng rng(108);
    ParamSet params;
    params.set("x", random_normal(rng, {4, 4}));
    const Tensor w = fixed_weights({4, 4}, 206);

    const auto f_relu = [&w](const ParamSet& p) { return weighted_sum(relu(p.get("x")), w); };
    const auto g_relu = [&w](const ParamSet& p) {
        ParamSet g;
        g.set("x", relu_vjp(p.get("x"), w));
        return g;
    };
    CHECK(grad_check(f_relu, g_relu, params, 1e-5) < 1e-4);

    const auto f_sig = [&w](const ParamSet& p) { return weighted_sum(sigmoid(p.get("x")), w); };
    const auto g_sig = [&w](const ParamSet& p) {
        ParamSet g;
        g.set("x", sigmoid_vjp(sigmoid(p.get("x")), w));
        return g;
    };
    CHECK(grad_check(f_sig, g_sig, params, 1e-5) < 1e-4);
}

TEST_CASE("grad check reports non-finite objectives") {
    ParamSet params;
    params.set("x", Tensor::scalar(0.0));
    const auto f = [](const ParamSet& p) { return std::log(p.get("x").at(0)); };
    const auto grad = [](const ParamSet& p) {
        ParamSet g;
        g.set("x", Tensor::scalar(1 / p.get("x").at(0)));
        return g;
    };
    CHECK_THROWS_AS(grad_check(f, grad, params, 1e-5), std::runtime_error);
    CHECK_THROWS_AS(finite_difference_grad(f, params, 0), std::invalid_argument);
}
