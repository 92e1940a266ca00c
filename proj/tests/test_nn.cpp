#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "siamdff/nn.hpp"
#include "siamdff/rng.hpp"
#include "siamdff/tensor.hpp"

using namespace siamdff;

namespace {

// Independent triple-loop product used as the matmul oracle.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            real_t acc = 0;
            for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(p, j);
            out(i, j) = acc;
        }
    }
    return out;
}

// Six nested loops, no padding tricks: the conv2d oracle.
Tensor conv2d_oracle(const Tensor& x, const Tensor& k, std::size_t pad) {
    const std::size_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
    const std::size_t cout = k.extent(0), kh = k.extent(2), kw = k.extent(3);
    const std::size_t oh = h + 2 * pad - kh + 1, ow = w + 2 * pad - kw + 1;
    Tensor out({cout, oh, ow});
    for (std::size_t oc = 0; oc < cout; ++oc) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                real_t acc = 0;
                for (std::size_t ic = 0; ic < cin; ++ic) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
                            const long ix = static_cast<long>(ox + kx) - static_cast<long>(pad);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) ||
                                ix >= static_cast<long>(w)) {
                                continue;
                            }
                            acc += x(ic, static_cast<std::size_t>(iy),
                                     static_cast<std::size_t>(ix)) *
                                   k(oc, ic, ky, kx);
                        }
                    }
                }
                out(oc, oy, ox) = acc;
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
    const Tensor m = Tensor::from_rows({{1, 2}, {3, 4}});
    CHECK(max_abs_diff(matmul(Tensor::identity(2), m), m) == 0);

    const Tensor a = Tensor::from_rows({{1, 2}});
    const Tensor b({2, 1}, {3, 4});
    const Tensor p = matmul(a, b);
    CHECK(p.shape() == std::vector<std::size_t>{1, 1});
    CHECK(p(0, 0) == 11);
}

TEST_CASE("matmul matches the triple-loop oracle") {
    Rng rng(2024);
    const Tensor a = random_normal(rng, {4, 5});
    const Tensor b = random_normal(rng, {5, 3});
    CHECK(max_abs_diff(matmul(a, b), matmul_oracle(a, b)) < 1e-12);
}

TEST_CASE("matmul associativity against the oracle") {
    Rng rng(77);
    const Tensor a = random_uniform(rng, {3, 4}, -1, 1);
    const Tensor b = random_uniform(rng, {4, 5}, -1, 1);
    const Tensor c = random_uniform(rng, {5, 2}, -1, 1);
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
}

TEST_CASE("matmul names both shapes on mismatch") {
    try {
        matmul(Tensor({2, 3}), Tensor({4, 2}));
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,2]") != std::string::npos);
    }
}

TEST_CASE("softmax rows: symmetry, hand oracle, degenerate row") {
    const Tensor u = softmax_rows(Tensor({1, 3}, {0, 0, 0}));
    for (int j = 0; j < 3; ++j) CHECK(u(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));

    const Tensor s = softmax_rows(Tensor({1, 3}, {2, 1, -1}));
    const double e2 = std::exp(2.0), e1 = std::exp(1.0), em1 = std::exp(-1.0);
    const double z = e2 + e1 + em1;
    CHECK(s(0, 0) == doctest::Approx(e2 / z).epsilon(1e-12));
    CHECK(s(0, 1) == doctest::Approx(e1 / z).epsilon(1e-12));
    CHECK(s(0, 2) == doctest::Approx(em1 / z).epsilon(1e-12));
    // The quoted four-digit values.
    CHECK(s(0, 0) == doctest::Approx(0.7054).epsilon(1e-3));
    CHECK(s(0, 1) == doctest::Approx(0.2595).epsilon(1e-3));
    CHECK(s(0, 2) == doctest::Approx(0.0351).epsilon(2e-2));

    const Tensor one = softmax_rows(Tensor({1, 1}, {42}));
    CHECK(one(0, 0) == 1.0);
}

TEST_CASE("softmax rows sum to one for random inputs") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 1 + rng.below(5), n = 1 + rng.below(9);
        const Tensor x = random_uniform(rng, {m, n}, -30, 30);
        const Tensor y = softmax_rows(x);
        for (std::size_t i = 0; i < m; ++i) {
            real_t row = 0;
            for (std::size_t j = 0; j < n; ++j) {
                CHECK(y(i, j) >= 0);
                row += y(i, j);
            }
            CHECK(std::abs(row - 1) < 1e-9);
        }
    }
}

TEST_CASE("sigmoid values and saturation") {
    CHECK(sigmoid(Tensor::scalar(0)).at(0) == 0.5);
    CHECK(std::abs(sigmoid(Tensor::scalar(1e3)).at(0) - 1.0) < 1e-12);
    // Saturates: exp(1000) overflows, so the value flushes to exactly 0.
    const Tensor neg = sigmoid(Tensor::scalar(-1e3));
    CHECK(neg.at(0) >= 0);
    CHECK(neg.at(0) < 1e-12);
    // Within the representable range the open interval holds.
    const Tensor mid = sigmoid(Tensor::scalar(-30));
    CHECK(mid.at(0) > 0);
    CHECK(mid.at(0) < 1);
}

TEST_CASE("sigmoid derivative at zero is a quarter") {
    const double h = 1e-6;
    const double fd = (sigmoid(Tensor::scalar(h)).at(0) - sigmoid(Tensor::scalar(-h)).at(0)) /
                      (2 * h);
    CHECK(std::abs(fd - 0.25) < 1e-6);
}

TEST_CASE("layer norm hand cases") {
    const Tensor ones_scale = Tensor::full({3}, 1);
    const Tensor zero_shift = Tensor::zeros({3});

    const Tensor constant = layer_norm(Tensor({1, 3}, {5, 5, 5}), ones_scale, zero_shift, 1e-5);
    for (int j = 0; j < 3; ++j) CHECK(constant(0, j) == 0.0);

    const Tensor t = layer_norm(Tensor({1, 3}, {1, 2, 3}), ones_scale, zero_shift, 0);
    const double r = std::sqrt(1.5);
    CHECK(t(0, 0) == doctest::Approx(-r).epsilon(1e-12));
    CHECK(t(0, 1) == doctest::Approx(0).epsilon(1e-12));
    CHECK(t(0, 2) == doctest::Approx(r).epsilon(1e-12));
}

TEST_CASE("layer norm with the row's own stats recovers the input") {
    Rng rng(4);
    const Tensor x = random_uniform(rng, {1, 6}, -2, 2);
    real_t mean = 0;
    for (std::size_t j = 0; j < 6; ++j) mean += x(0, j);
    mean /= 6;
    real_t var = 0;
    for (std::size_t j = 0; j < 6; ++j) var += (x(0, j) - mean) * (x(0, j) - mean);
    var /= 6;
    const Tensor back = layer_norm(x, Tensor::full({6}, std::sqrt(var)),
                                   Tensor::full({6}, mean), 0);
    CHECK(max_abs_diff(back, x) < 1e-12);
}

TEST_CASE("layer norm normalizes the last axis to zero mean unit variance") {
    Rng rng(8);
    const Tensor x = random_normal(rng, {4, 7});
    const Tensor y = layer_norm(x, Tensor::full({7}, 1), Tensor::zeros({7}), 1e-12);
    for (std::size_t i = 0; i < 4; ++i) {
        real_t mean = 0, var = 0;
        for (std::size_t j = 0; j < 7; ++j) mean += y(i, j);
        mean /= 7;
        for (std::size_t j = 0; j < 7; ++j) var += (y(i, j) - mean) * (y(i, j) - mean);
        var /= 7;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1) < 1e-6);
    }
}

TEST_CASE("conv2d identity kernels") {
    Rng rng(13);
    const Tensor x = random_normal(rng, {2, 5, 5});

    // 1x1 kernel: identity over channels.
    Tensor eye({2, 2, 1, 1});
    eye(0, 0, 0, 0) = 1;
    eye(1, 1, 0, 0) = 1;
    CHECK(max_abs_diff(conv2d(x, eye, 0), x) == 0);

    // 3x3 centered delta per channel.
    Tensor delta({2, 2, 3, 3});
    delta(0, 0, 1, 1) = 1;
    delta(1, 1, 1, 1) = 1;
    CHECK(max_abs_diff(conv2d(x, delta, 1), x) == 0);
}

TEST_CASE("conv2d matches the six-loop oracle") {
    Rng rng(14);
    const Tensor x = random_normal(rng, {2, 5, 5});
    const Tensor k = random_normal(rng, {3, 2, 3, 3});
    CHECK(max_abs_diff(conv2d(x, k, 1), conv2d_oracle(x, k, 1)) < 1e-12);
    CHECK(max_abs_diff(conv2d(x, k, 0), conv2d_oracle(x, k, 0)) < 1e-12);
}

TEST_CASE("conv2d is linear in its input") {
    Rng rng(15);
    const Tensor x = random_normal(rng, {2, 4, 4});
    const Tensor y = random_normal(rng, {2, 4, 4});
    const Tensor k = random_normal(rng, {2, 2, 3, 3});
    const Tensor both = conv2d(add(x, y), k, 1);
    const Tensor split = add(conv2d(x, k, 1), conv2d(y, k, 1));
    CHECK(max_abs_diff(both, split) < 1e-10);
}

TEST_CASE("conv2d rejects channel mismatch and even kernels") {
    CHECK_THROWS_AS(conv2d(Tensor({2, 4, 4}), Tensor({1, 3, 3, 3}), 1), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(Tensor({2, 4, 4}), Tensor({1, 2, 2, 2}), 0), std::invalid_argument);
}

TEST_CASE("conv1d over channels") {
    const Tensor v = Tensor::from_vector({1, 2, 3});
    CHECK(max_abs_diff(conv1d_channels(v, Tensor::from_vector({0, 1, 0})), v) == 0);

    const Tensor s = conv1d_channels(v, Tensor::from_vector({1, 1, 1}));
    CHECK(s.at(0) == 3);  // zero pad on the left
    CHECK(s.at(1) == 6);
    CHECK(s.at(2) == 5);  // zero pad on the right

    const Tensor z = conv1d_channels(v, Tensor::from_vector({0, 0, 0}));
    CHECK(max_abs(z) == 0);

    CHECK_THROWS_AS(conv1d_channels(v, Tensor::from_vector({1, 1})), std::invalid_argument);
}

TEST_CASE("channel pooling") {
    Rng rng(16);
    const Tensor single = random_normal(rng, {1, 3, 3});
    CHECK(max_abs_diff(pool_over_channels(single, PoolMode::kMax), single) == 0);
    CHECK(max_abs_diff(pool_over_channels(single, PoolMode::kAvg), single) == 0);

    Tensor two({2, 1, 1});
    two(0, 0, 0) = 1;
    two(1, 0, 0) = 3;
    CHECK(pool_over_channels(two, PoolMode::kMax)(0, 0, 0) == 3);
    CHECK(pool_over_channels(two, PoolMode::kAvg)(0, 0, 0) == 2);
}

TEST_CASE("avg pooling equals channel sum over C on representable values") {
    Rng rng(17);
    Tensor x({4, 3, 3});
    for (std::size_t i = 0; i < x.size(); ++i) {
        x.at(i) = static_cast<real_t>(static_cast<double>(rng.below(17)) - 8);
    }
    const Tensor avg = pool_over_channels(x, PoolMode::kAvg);
    for (std::size_t y = 0; y < 3; ++y) {
        for (std::size_t z = 0; z < 3; ++z) {
            real_t s = 0;
            for (std::size_t c = 0; c < 4; ++c) s += x(c, y, z);
            CHECK(avg(0, y, z) == s / 4);
        }
    }
}

TEST_CASE("subsample2 keeps the top-left sample of each 2x2 block") {
    Tensor x({1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) x.at(i) = static_cast<real_t>(i);
    const Tensor y = subsample2(x);
    CHECK(y.shape() == std::vector<std::size_t>{1, 2, 2});
    CHECK(y(0, 0, 0) == 0);
    CHECK(y(0, 0, 1) == 2);
    CHECK(y(0, 1, 0) == 8);
    CHECK(y(0, 1, 1) == 10);
    CHECK_THROWS_AS(subsample2(Tensor({1, 3, 4})), std::invalid_argument);
}
