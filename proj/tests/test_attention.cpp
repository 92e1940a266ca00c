#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "siamdff/attention.hpp"
#include "siamdff/serialize.hpp"
#include "siamdff/grad.hpp"
#include "siamdff/nn.hpp"
#include "siamdff/rng.hpp"

using namespace siamdff;

namespace {

// Enumeration oracle: softmax the row, walk prefixes of the descending order
// (ties toward lower index), return the minimal count whose mass reaches T.
std::size_t prefix_oracle(const std::vector<double>& row, double threshold) {
    const std::size_t n = row.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    const double hi = *std::max_element(row.begin(), row.end());
    double denom = 0;
    for (double v : row) denom += std::exp(v - hi);
    double cum = 0;
    for (std::size_t k = 0; k < n; ++k) {
        cum += std::exp(row[order[k]] - hi) / denom;
        if (cum >= threshold) return k + 1;
    }
    return n;
}

double retained_mass(const Tensor& scores, const AttentionScores& sel, std::size_t row) {
    const std::size_t n = scores.extent(1);
    double hi = scores(row, 0);
    for (std::size_t j = 1; j < n; ++j) hi = std::max(hi, static_cast<double>(scores(row, j)));
    double denom = 0;
    for (std::size_t j = 0; j < n; ++j) denom += std::exp(scores(row, j) - hi);
    double mass = 0;
    for (std::size_t j = 0; j < n; ++j) {
        if (sel.retained(row, j)) mass += std::exp(scores(row, j) - hi) / denom;
    }
    return mass;
}

// Brute-force masked attention: sort, renormalize over the kept set, mix V.
Tensor imc_oracle(const Tensor& q, const Tensor& k, const Tensor& v, double threshold) {
    const std::size_t m = q.extent(0), n = k.extent(0), d = q.extent(1);
    const std::size_t dv = v.extent(1);
    Tensor out({m, dv});
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> row(n);
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0;
            for (std::size_t c = 0; c < d; ++c) acc += q(i, c) * k(j, c);
            row[j] = acc / std::sqrt(static_cast<double>(d));
        }
        const std::size_t kept = prefix_oracle(row, threshold);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
        const double hi = row[order[0]];
        double denom = 0;
        for (std::size_t r = 0; r < kept; ++r) denom += std::exp(row[order[r]] - hi);
        for (std::size_t r = 0; r < kept; ++r) {
            const double w = std::exp(row[order[r]] - hi) / denom;
            for (std::size_t c = 0; c < dv; ++c) {
                out(i, c) += static_cast<real_t>(w) * v(order[r], c);
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("cross attention with a single key returns that value row") {
    Rng rng(1);
    const Tensor q = random_normal(rng, {4, 3});
    const Tensor k = random_normal(rng, {1, 3});
    const Tensor v = random_normal(rng, {1, 5});
    const Tensor out = cross_attention(q, k, v);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t c = 0; c < 5; ++c) CHECK(out(i, c) == v(0, c));
    }
}

TEST_CASE("cross attention saturates onto the matching key") {
    // Orthogonal keys; the query is one key scaled hard.
    Tensor k({3, 3});
    k(0, 0) = 1;
    k(1, 1) = 1;
    k(2, 2) = 1;
    Rng rng(2);
    const Tensor v = random_normal(rng, {3, 4});
    Tensor q({1, 3});
    q(0, 1) = 60;  // exp(60/sqrt(3)) dwarfs the rest
    const Tensor out = cross_attention(q, k, v);
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(out(0, c) == doctest::Approx(v(1, c)).epsilon(1e-12));
    }
}

TEST_CASE("cross attention is invariant to joint key/value permutation") {
    Rng rng(3);
    const Tensor q = random_normal(rng, {3, 4});
    const Tensor k = random_normal(rng, {5, 4});
    const Tensor v = random_normal(rng, {5, 4});
    // Rotate rows by two.
    Tensor kp({5, 4}), vp({5, 4});
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            kp((i + 2) % 5, j) = k(i, j);
            vp((i + 2) % 5, j) = v(i, j);
        }
    }
    CHECK(max_abs_diff(cross_attention(q, k, v), cross_attention(q, kp, vp)) < 1e-12);
}

TEST_CASE("cross attention rejects zero feature dim and row mismatch") {
    CHECK_THROWS_AS(cross_attention(Tensor({2, 3}), Tensor({3, 3}), Tensor({2, 3})),
                    std::invalid_argument);
    CHECK_THROWS_AS(cross_attention(Tensor({2, 3}), Tensor({3, 2}), Tensor({3, 3})),
                    std::invalid_argument);
}

TEST_CASE("imc mask validates its threshold") {
    const Tensor e({1, 2}, {1, 2});
    CHECK_THROWS_AS(imc_mask(e, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(imc_mask(e, -0.5), std::invalid_argument);
    CHECK_THROWS_AS(imc_mask(e, 1.0 + 1e-9), std::invalid_argument);
    CHECK_NOTHROW(imc_mask(e, 1.0));
}

TEST_CASE("imc mask keeps everything at threshold one") {
    Rng rng(4);
    const Tensor e = random_normal(rng, {3, 7});
    const AttentionScores sel = imc_mask(e, 1.0);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 7; ++j) CHECK(sel.retained(i, j));
    }
}

TEST_CASE("imc mask hand case: one strong score swallows the budget") {
    const Tensor e({1, 3}, {2, 1, -1});
    const AttentionScores sel = imc_mask(e, 0.7);
    CHECK(sel.retained(0, 0));
    CHECK(!sel.retained(0, 1));
    CHECK(!sel.retained(0, 2));
    CHECK(sel.per_row_cutoff.at(0) == 2);
}

TEST_CASE("imc mask on a uniform row keeps ceil(T*n) lowest indices") {
    for (std::size_t n : {3u, 5u, 8u, 10u}) {
        const Tensor e = Tensor::full({1, n}, 1.25);
        const AttentionScores sel = imc_mask(e, 0.7);
        const auto expected = static_cast<std::size_t>(std::ceil(0.7 * static_cast<double>(n)));
        std::size_t kept = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (sel.retained(0, j)) {
                ++kept;
                CHECK(j < expected);  // ties resolve toward the lower index
            }
        }
        CHECK(kept == expected);
    }
}

TEST_CASE("imc mask matches the enumeration oracle on random rows") {
    Rng rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.below(16);
        const double threshold = 0.05 + 0.95 * rng.next_double();
        const Tensor e = random_uniform(rng, {1, n}, -4, 4);
        std::vector<double> row(n);
        for (std::size_t j = 0; j < n; ++j) row[j] = e(0, j);

        const AttentionScores sel = imc_mask(e, threshold);
        std::size_t kept = 0;
        real_t cut = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (sel.retained(0, j)) {
                ++kept;
                cut = std::min(kept == 1 ? e(0, j) : cut, e(0, j));
            }
        }
        CHECK(kept == prefix_oracle(row, threshold));

        // Retained entries are exactly a descending prefix: nothing dropped
        // may exceed the smallest retained score.
        for (std::size_t j = 0; j < n; ++j) {
            if (!sel.retained(0, j)) CHECK(e(0, j) <= cut);
        }
        CHECK(sel.per_row_cutoff.at(0) == cut);

        // Mass reached the threshold, and minimally so.
        const double mass = retained_mass(e, sel, 0);
        CHECK(mass >= threshold - 1e-9);
        if (kept > 1) {
            AttentionScores smaller = sel;
            // Drop the last retained element (the one holding the cutoff).
            for (std::size_t j = 0; j < n; ++j) {
                if (sel.retained(0, j) && e(0, j) == cut) {
                    smaller.retain_mask(0, j) = 0;
                    break;
                }
            }
            CHECK(retained_mass(e, smaller, 0) < threshold);
        }
    }
}

TEST_CASE("raw cumulative mode accumulates scaled scores instead of mass") {
    const Tensor e({1, 3}, {0.6, 0.3, 0.05});
    const AttentionScores sel = imc_mask(e, 0.8, CumulativeMode::kRaw);
    CHECK(sel.retained(0, 0));
    CHECK(sel.retained(0, 1));  // 0.6 + 0.3 >= 0.8
    CHECK(!sel.retained(0, 2));

    // Never reaches the threshold: everything stays.
    const Tensor neg({1, 3}, {-1, -2, -3});
    const AttentionScores all = imc_mask(neg, 0.5, CumulativeMode::kRaw);
    for (std::size_t j = 0; j < 3; ++j) CHECK(all.retained(0, j));
}

TEST_CASE("every row keeps at least one element even for tiny thresholds") {
    Rng rng(6);
    const Tensor e = random_uniform(rng, {4, 9}, -3, 3);
    const AttentionScores sel = imc_mask(e, 1e-6);
    for (std::size_t i = 0; i < 4; ++i) {
        std::size_t kept = 0;
        for (std::size_t j = 0; j < 9; ++j) kept += sel.retained(i, j) ? 1 : 0;
        CHECK(kept == 1);
    }
}

TEST_CASE("imc equals cross attention at threshold one") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 1 + rng.below(5), n = 1 + rng.below(6), d = 1 + rng.below(6);
        const Tensor q = random_normal(rng, {m, d});
        const Tensor k = random_normal(rng, {n, d});
        const Tensor v = random_normal(rng, {n, d});
        CHECK(max_abs_diff(imc(q, k, v, 1.0), cross_attention(q, k, v)) < 1e-9);
    }
}

TEST_CASE("single-survivor imc returns value rows exactly") {
    Rng rng(8);
    const Tensor q = random_normal(rng, {4, 3});
    const Tensor k = random_normal(rng, {6, 3});
    const Tensor v = random_normal(rng, {6, 5});
    const Tensor out = imc(q, k, v, 1e-9);
    const Tensor scores = scale(matmul(q, transpose(k)), 1 / std::sqrt(real_t{3}));
    for (std::size_t i = 0; i < 4; ++i) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < 6; ++j) {
            if (scores(i, j) > scores(i, arg)) arg = j;
        }
        for (std::size_t c = 0; c < 5; ++c) CHECK(out(i, c) == v(arg, c));
    }
}

TEST_CASE("imc matches the brute-force oracle") {
    Rng rng(9);
    for (int trial = 0; trial < 40; ++trial) {
        const Tensor q = random_normal(rng, {3, 4});
        const Tensor k = random_normal(rng, {5, 4});
        const Tensor v = random_normal(rng, {5, 4});
        const double threshold = 0.2 + 0.8 * rng.next_double();
        CHECK(max_abs_diff(imc(q, k, v, threshold), imc_oracle(q, k, v, threshold)) < 1e-12);
    }
}

TEST_CASE("imc rows are convex combinations of value rows") {
    Rng rng(10);
    const Tensor q = random_normal(rng, {6, 4});
    const Tensor k = random_normal(rng, {7, 4});
    const Tensor v = random_normal(rng, {7, 3});
    const Tensor out = imc(q, k, v, 0.7);
    for (std::size_t c = 0; c < 3; ++c) {
        real_t lo = v(0, c), hi = v(0, c);
        for (std::size_t j = 1; j < 7; ++j) {
            lo = std::min(lo, v(j, c));
            hi = std::max(hi, v(j, c));
        }
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(out(i, c) >= lo - 1e-9);
            CHECK(out(i, c) <= hi + 1e-9);
        }
    }
}

TEST_CASE("masked softmax weights renormalize over the kept set") {
    Rng rng(11);
    const Tensor e = random_normal(rng, {4, 6});
    const AttentionScores sel = imc_mask(e, 0.6);
    const Tensor p = masked_softmax_rows(sel, DropMode::kNegInf);
    for (std::size_t i = 0; i < 4; ++i) {
        real_t total = 0;
        for (std::size_t j = 0; j < 6; ++j) {
            CHECK(p(i, j) >= 0);
            if (!sel.retained(i, j)) CHECK(p(i, j) == 0);
            total += p(i, j);
        }
        CHECK(std::abs(total - 1) < 1e-9);
    }
}

TEST_CASE("zero-logit drop mode matches a literal adjusted softmax") {
    Rng rng(12);
    const Tensor e = random_normal(rng, {3, 5});
    const AttentionScores sel = imc_mask(e, 0.6);
    const Tensor p = masked_softmax_rows(sel, DropMode::kZeroLogit);
    Tensor adjusted = e;
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            if (!sel.retained(i, j)) adjusted(i, j) = 0;
        }
    }
    CHECK(max_abs_diff(p, softmax_rows(adjusted)) < 1e-12);
}

TEST_CASE("threshold clamp for the learnable variant") {
    CHECK(clamp_threshold(0.7) == static_cast<real_t>(0.7));
    CHECK(clamp_threshold(2.0) == static_cast<real_t>(1.0));
    CHECK(clamp_threshold(-1.0) > static_cast<real_t>(0.05));
    CHECK(clamp_threshold(0.0) <= static_cast<real_t>(0.051));
}

TEST_CASE("sten params require divisible head count") {
    CHECK_THROWS_AS(StenParams::seeded(10, 4, 1), std::invalid_argument);
    const StenParams p = StenParams::seeded(16, 4, 1);
    CHECK(p.model_dim() == 16);
    const ParamSet set = p.to_param_set();
    CHECK(set.count() == 12);
    const StenParams back = StenParams::from_param_set(set, 4);
    CHECK(max_abs_diff(back.wq, p.wq) == 0);
}

TEST_CASE("sten params serialize through the param-set binary format") {
    const StenParams p = StenParams::seeded(8, 2, 77);
    std::stringstream buf;
    write_params(buf, p.to_param_set());
    const StenParams back = StenParams::from_param_set(read_params(buf), 2);
    CHECK(max_abs_diff(back.ffn_w1, p.ffn_w1) == 0);
    CHECK(max_abs_diff(back.norm2_shift, p.norm2_shift) == 0);
}

TEST_CASE("sten block with zero FFN collapses to stacked norms") {
    Rng rng(13);
    const std::size_t d = 8;
    StenParams p = StenParams::seeded(d, 2, 21);
    p.ffn_w1 = Tensor::zeros({d, 2 * d});
    p.ffn_b1 = Tensor::zeros({2 * d});
    p.ffn_w2 = Tensor::zeros({2 * d, d});
    p.ffn_b2 = Tensor::zeros({d});

    const Tensor query = random_normal(rng, {5, d});
    const Tensor kv = random_normal(rng, {3, d});

    StenCache cache;
    const Tensor out = sten_forward(query, kv, p, 0.7, CumulativeMode::kMass, DropMode::kNegInf,
                                    &cache, nullptr);
    // With FFN == 0, Y = Norm(X) = Norm(Norm(attention + query)).
    const Tensor expected = layer_norm(
        layer_norm(add(cache.attn_out, query), p.norm1_scale, p.norm1_shift, kLayerNormEps),
        p.norm2_scale, p.norm2_shift, kLayerNormEps);
    CHECK(max_abs_diff(out, expected) < 1e-12);
}

TEST_CASE("sten at threshold one equals a vanilla decoder block oracle") {
    Rng rng(14);
    const std::size_t d = 8, heads = 2, dh = d / heads;
    const StenParams p = StenParams::seeded(d, heads, 37);
    const Tensor query = random_normal(rng, {6, d});
    const Tensor kv = random_normal(rng, {4, d});

    // Reference composition, written independently of sten_forward.
    const Tensor q = matmul(query, p.wq);
    const Tensor k = matmul(kv, p.wk);
    const Tensor v = matmul(kv, p.wv);
    Tensor concat({query.extent(0), d});
    for (std::size_t head = 0; head < heads; ++head) {
        Tensor qh({q.extent(0), dh}), kh({k.extent(0), dh}), vh({v.extent(0), dh});
        for (std::size_t i = 0; i < q.extent(0); ++i) {
            for (std::size_t j = 0; j < dh; ++j) qh(i, j) = q(i, head * dh + j);
        }
        for (std::size_t i = 0; i < k.extent(0); ++i) {
            for (std::size_t j = 0; j < dh; ++j) {
                kh(i, j) = k(i, head * dh + j);
                vh(i, j) = v(i, head * dh + j);
            }
        }
        const Tensor probs =
            softmax_rows(scale(matmul(qh, transpose(kh)), 1 / std::sqrt(real_t(dh))));
        const Tensor mixed = matmul(probs, vh);
        for (std::size_t i = 0; i < mixed.extent(0); ++i) {
            for (std::size_t j = 0; j < dh; ++j) concat(i, head * dh + j) = mixed(i, j);
        }
    }
    const Tensor x =
        layer_norm(add(matmul(concat, p.wo), query), p.norm1_scale, p.norm1_shift, kLayerNormEps);
    Tensor h1 = matmul(x, p.ffn_w1);
    for (std::size_t i = 0; i < h1.extent(0); ++i) {
        for (std::size_t j = 0; j < h1.extent(1); ++j) h1(i, j) += p.ffn_b1.at(j);
    }
    Tensor h2 = matmul(relu(h1), p.ffn_w2);
    for (std::size_t i = 0; i < h2.extent(0); ++i) {
        for (std::size_t j = 0; j < h2.extent(1); ++j) h2(i, j) += p.ffn_b2.at(j);
    }
    const Tensor expected = layer_norm(add(h2, x), p.norm2_scale, p.norm2_shift, kLayerNormEps);

    CHECK(max_abs_diff(sten_block(query, kv, p, 1.0), expected) < 1e-9);
}

TEST_CASE("sten block is deterministic") {
    Rng rng(15);
    const StenParams p = StenParams::seeded(8, 2, 5);
    const Tensor query = random_normal(rng, {4, 8});
    const Tensor kv = random_normal(rng, {3, 8});
    const Tensor a = sten_block(query, kv, p, 0.7);
    const Tensor b = sten_block(query, kv, p, 0.7);
    CHECK(max_abs_diff(a, b) == 0);
}

TEST_CASE("sten parameter gradient passes finite differences at fixed masks") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        Rng rng(seed);
        const std::size_t d = 8;
        const StenParams base = StenParams::seeded(d, 2, seed + 50);
        const Tensor query = random_normal(rng, {4, d});
        const Tensor kv = random_normal(rng, {3, d});

        StenCache pin;
        sten_forward(query, kv, base, 0.7, CumulativeMode::kMass, DropMode::kNegInf, &pin,
                     nullptr);
        const auto masks = pin.head_masks;

        const auto f = [&](const ParamSet& set) {
            const StenParams p = StenParams::from_param_set(set, 2);
            return sum(sten_forward(query, kv, p, 0.7, CumulativeMode::kMass, DropMode::kNegInf,
                                    nullptr, &masks));
        };
        const auto grad = [&](const ParamSet& set) {
            const StenParams p = StenParams::from_param_set(set, 2);
            StenCache cache;
            sten_forward(query, kv, p, 0.7, CumulativeMode::kMass, DropMode::kNegInf, &cache,
                         &masks);
            return sten_param_grad(query, kv, p, cache,
                                   Tensor::full({query.extent(0), d}, 1));
        };
        CHECK(grad_check(f, grad, base.to_param_set(), 1e-5) < 1e-4);
    }
}
