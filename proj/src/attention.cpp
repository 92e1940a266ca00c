#include "siamdff/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "siamdff/nn.hpp"
#include "siamdff/rng.hpp"

namespace siamdff {

namespace {

void check_threshold(real_t t) {
    if (!(t > real_t{0}) || t > real_t{1}) {
        throw std::invalid_argument("threshold must lie in (0,1], got " + std::to_string(t));
    }
}

Tensor scaled_scores(const Tensor& q, const Tensor& k) {
    if (q.rank() != 2 || k.rank() != 2) {
        throw std::invalid_argument("attention expects rank-2 Q/K, got " + shape_str(q.shape()) +
                                    " and " + shape_str(k.shape()));
    }
    const std::size_t d = q.extent(1);
    if (d == 0 || k.extent(1) != d) {
        throw std::invalid_argument("attention: Q/K feature dims differ: " +
                                    shape_str(q.shape()) + " vs " + shape_str(k.shape()));
    }
    Tensor s = matmul(q, transpose(k));
    const real_t inv = real_t{1} / std::sqrt(static_cast<real_t>(d));
    return scale(s, inv);
}

Tensor column_slice(const Tensor& x, std::size_t begin, std::size_t width) {
    const std::size_t m = x.extent(0);
    Tensor out({m, width});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < width; ++j) out(i, j) = x(i, begin + j);
    }
    return out;
}

void column_insert(Tensor& dst, const Tensor& block, std::size_t begin) {
    const std::size_t m = block.extent(0), w = block.extent(1);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) dst(i, begin + j) = block(i, j);
    }
}

void column_accumulate(Tensor& dst, const Tensor& block, std::size_t begin) {
    const std::size_t m = block.extent(0), w = block.extent(1);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) dst(i, begin + j) += block(i, j);
    }
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
    const std::size_t m = x.extent(0), n = x.extent(1);
    Tensor out = x;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out(i, j) += bias.at(j);
    }
    return out;
}

Tensor column_sums(const Tensor& x) {
    const std::size_t m = x.extent(0), n = x.extent(1);
    Tensor out({n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out.at(j) += x(i, j);
    }
    return out;
}

}  // namespace

AttentionScores imc_mask(const Tensor& scores, real_t threshold, CumulativeMode mode) {
    check_threshold(threshold);
    if (scores.rank() != 2) {
        throw std::invalid_argument("imc_mask expects rank-2 scores, got " +
                                    shape_str(scores.shape()));
    }
    const std::size_t m = scores.extent(0), n = scores.extent(1);
    AttentionScores out;
    out.scores = scores;
    out.retain_mask = Tensor::zeros({m, n});
    out.threshold = threshold;
    out.per_row_cutoff = Tensor::zeros({m});

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < m; ++i) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        // Descending by score; equal scores resolve to the lower column.
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores(i, a) != scores(i, b)) return scores(i, a) > scores(i, b);
            return a < b;
        });

        real_t cum = 0;
        std::size_t kept = 0;
        if (mode == CumulativeMode::kMass) {
            real_t rowmax = scores(i, order[0]);
            real_t denom = 0;
            for (std::size_t j = 0; j < n; ++j) denom += std::exp(scores(i, j) - rowmax);
            while (kept < n) {
                cum += std::exp(scores(i, order[kept]) - rowmax) / denom;
                ++kept;
                if (cum >= threshold) break;
            }
        } else {
            // Literal reading: accumulate the raw scaled scores. May never
            // reach the threshold, in which case everything stays.
            while (kept < n) {
                cum += scores(i, order[kept]);
                ++kept;
                if (cum >= threshold) break;
            }
        }
        for (std::size_t j = 0; j < kept; ++j) out.retain_mask(i, order[j]) = 1;
        out.per_row_cutoff.at(i) = scores(i, order[kept - 1]);
    }
    return out;
}

Tensor masked_softmax_rows(const AttentionScores& selection, DropMode drop) {
    const Tensor& s = selection.scores;
    const std::size_t m = s.extent(0), n = s.extent(1);
    Tensor out({m, n});
    if (drop == DropMode::kZeroLogit) {
        Tensor adjusted = s;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (!selection.retained(i, j)) adjusted(i, j) = 0;
            }
        }
        return softmax_rows(adjusted);
    }
    for (std::size_t i = 0; i < m; ++i) {
        real_t rowmax = -std::numeric_limits<real_t>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (selection.retained(i, j)) rowmax = std::max(rowmax, s(i, j));
        }
        real_t denom = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (selection.retained(i, j)) {
                out(i, j) = std::exp(s(i, j) - rowmax);
                denom += out(i, j);
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            out(i, j) = selection.retained(i, j) ? out(i, j) / denom : real_t{0};
        }
    }
    return out;
}

Tensor cross_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    if (k.extent(0) != v.extent(0)) {
        throw std::invalid_argument("cross_attention: K rows " + shape_str(k.shape()) +
                                    " vs V rows " + shape_str(v.shape()));
    }
    return matmul(softmax_rows(scaled_scores(q, k)), v);
}

Tensor imc(const Tensor& q, const Tensor& k, const Tensor& v, real_t threshold,
           CumulativeMode mode, DropMode drop) {
    check_threshold(threshold);
    if (k.extent(0) != v.extent(0)) {
        throw std::invalid_argument("imc: K rows " + shape_str(k.shape()) + " vs V rows " +
                                    shape_str(v.shape()));
    }
    const AttentionScores selection = imc_mask(scaled_scores(q, k), threshold, mode);
    return matmul(masked_softmax_rows(selection, drop), v);
}

real_t clamp_threshold(real_t t) {
    const real_t lo = static_cast<real_t>(0.05), hi = static_cast<real_t>(1.0);
    return std::min(hi, std::max(std::nextafter(lo, hi), t));
}

StenParams StenParams::seeded(std::size_t model_dim, std::size_t heads, std::uint64_t seed) {
    if (heads == 0 || model_dim % heads != 0) {
        throw std::invalid_argument("model_dim " + std::to_string(model_dim) +
                                    " must be divisible by head count " + std::to_string(heads));
    }
    Rng rng(seed);
    StenParams p;
    p.heads = heads;
    const std::size_t d = model_dim;
    p.wq = fan_in_init(rng, {d, d}, d);
    p.wk = fan_in_init(rng, {d, d}, d);
    p.wv = fan_in_init(rng, {d, d}, d);
    p.wo = fan_in_init(rng, {d, d}, d);
    p.ffn_w1 = fan_in_init(rng, {d, 2 * d}, d);
    p.ffn_b1 = Tensor::zeros({2 * d});
    p.ffn_w2 = fan_in_init(rng, {2 * d, d}, 2 * d);
    p.ffn_b2 = Tensor::zeros({d});
    p.norm1_scale = Tensor::full({d}, 1);
    p.norm1_shift = Tensor::zeros({d});
    p.norm2_scale = Tensor::full({d}, 1);
    p.norm2_shift = Tensor::zeros({d});
    return p;
}

ParamSet StenParams::to_param_set() const {
    ParamSet set;
    set.set("wq", wq);
    set.set("wk", wk);
    set.set("wv", wv);
    set.set("wo", wo);
    set.set("ffn_w1", ffn_w1);
    set.set("ffn_b1", ffn_b1);
    set.set("ffn_w2", ffn_w2);
    set.set("ffn_b2", ffn_b2);
    set.set("norm1_scale", norm1_scale);
    set.set("norm1_shift", norm1_shift);
    set.set("norm2_scale", norm2_scale);
    set.set("norm2_shift", norm2_shift);
    return set;
}

StenParams StenParams::from_param_set(const ParamSet& set, std::size_t heads) {
    StenParams p;
    p.heads = heads;
    p.wq = set.get("wq");
    p.wk = set.get("wk");
    p.wv = set.get("wv");
    p.wo = set.get("wo");
    p.ffn_w1 = set.get("ffn_w1");
    p.ffn_b1 = set.get("ffn_b1");
    p.ffn_w2 = set.get("ffn_w2");
    p.ffn_b2 = set.get("ffn_b2");
    p.norm1_scale = set.get("norm1_scale");
    p.norm1_shift = set.get("norm1_shift");
    p.norm2_scale = set.get("norm2_scale");
    p.norm2_shift = set.get("norm2_shift");
    if (p.heads == 0 || p.model_dim() % p.heads != 0) {
        throw std::invalid_argument("model_dim " + std::to_string(p.model_dim()) +
                                    " must be divisible by head count " + std::to_string(heads));
    }
    return p;
}

Tensor sten_forward(const Tensor& query_feat, const Tensor& kv_feat, const StenParams& params,
                    real_t threshold, CumulativeMode mode, DropMode drop, StenCache* cache,
                    const std::vector<AttentionScores>* fixed_masks) {
    check_threshold(threshold);
    const std::size_t d = params.model_dim();
    if (query_feat.rank() != 2 || query_feat.extent(1) != d || kv_feat.rank() != 2 ||
        kv_feat.extent(1) != d) {
        throw std::invalid_argument("sten_block: features " + shape_str(query_feat.shape()) +
                                    ", " + shape_str(kv_feat.shape()) +
                                    " do not match model dim " + std::to_string(d));
    }
    const std::size_t heads = params.heads;
    const std::size_t dh = d / heads;
    const std::size_t m = query_feat.extent(0);

    StenCache local;
    StenCache& c = cache ? *cache : local;
    c.q = matmul(query_feat, params.wq);
    c.k = matmul(kv_feat, params.wk);
    c.v = matmul(kv_feat, params.wv);
    c.head_masks.clear();
    c.head_probs.clear();
    c.attn_concat = Tensor::zeros({m, d});

    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = column_slice(c.q, h * dh, dh);
        const Tensor kh = column_slice(c.k, h * dh, dh);
        const Tensor vh = column_slice(c.v, h * dh, dh);
        Tensor scores = matmul(qh, transpose(kh));
        scores = scale(scores, real_t{1} / std::sqrt(static_cast<real_t>(dh)));

        AttentionScores selection;
        if (fixed_masks) {
            selection = (*fixed_masks)[h];
            selection.scores = scores;  // masks pinned, scores follow the params
        } else {
            selection = imc_mask(scores, threshold, mode);
        }
        const Tensor probs = masked_softmax_rows(selection, drop);
        column_insert(c.attn_concat, matmul(probs, vh), h * dh);
        c.head_masks.push_back(std::move(selection));
        c.head_probs.push_back(probs);
    }

    c.attn_out = matmul(c.attn_concat, params.wo);
    c.resid1 = add(c.attn_out, query_feat);
    c.normed1 = layer_norm(c.resid1, params.norm1_scale, params.norm1_shift, kLayerNormEps);

    c.ffn_pre = add_row_bias(matmul(c.normed1, params.ffn_w1), params.ffn_b1);
    c.ffn_act = relu(c.ffn_pre);
    c.ffn_out = add_row_bias(matmul(c.ffn_act, params.ffn_w2), params.ffn_b2);

    c.resid2 = add(c.ffn_out, c.normed1);
    c.output = layer_norm(c.resid2, params.norm2_scale, params.norm2_shift, kLayerNormEps);
    return c.output;
}

Tensor sten_block(const Tensor& query_feat, const Tensor& kv_feat, const StenParams& params,
                  real_t threshold, CumulativeMode mode, DropMode drop) {
    return sten_forward(query_feat, kv_feat, params, threshold, mode, drop, nullptr, nullptr);
}

ParamSet sten_param_grad(const Tensor& query_feat, const Tensor& kv_feat, const StenParams& params,
                         const StenCache& c, const Tensor& gout) {
    const std::size_t d = params.model_dim();
    const std::size_t heads = params.heads;
    const std::size_t dh = d / heads;
    const std::size_t m = query_feat.extent(0);
    const std::size_t n = kv_feat.extent(0);

    ParamSet g = params.to_param_set().zeros_like();

    Tensor g_resid2, g_n2s, g_n2b;
    layer_norm_vjp(c.resid2, params.norm2_scale, kLayerNormEps, gout, g_resid2, g_n2s, g_n2b);
    g.get("norm2_scale") = g_n2s;
    g.get("norm2_shift") = g_n2b;

    // resid2 = ffn_out + normed1
    const Tensor& g_ffn_out = g_resid2;
    Tensor g_normed1 = g_resid2;

    Tensor g_ffn_act = matmul(g_ffn_out, transpose(params.ffn_w2));
    g.get("ffn_w2") = matmul(transpose(c.ffn_act), g_ffn_out);
    g.get("ffn_b2") = column_sums(g_ffn_out);

    const Tensor g_ffn_pre = relu_vjp(c.ffn_pre, g_ffn_act);
    g_normed1 = add(g_normed1, matmul(g_ffn_pre, transpose(params.ffn_w1)));
    g.get("ffn_w1") = matmul(transpose(c.normed1), g_ffn_pre);
    g.get("ffn_b1") = column_sums(g_ffn_pre);

    Tensor g_resid1, g_n1s, g_n1b;
    layer_norm_vjp(c.resid1, params.norm1_scale, kLayerNormEps, g_normed1, g_resid1, g_n1s, g_n1b);
    g.get("norm1_scale") = g_n1s;
    g.get("norm1_shift") = g_n1b;

    // resid1 = attn_out + query_feat; only the attention path carries params.
    const Tensor& g_attn_out = g_resid1;
    Tensor g_attn_concat = matmul(g_attn_out, transpose(params.wo));
    g.get("wo") = matmul(transpose(c.attn_concat), g_attn_out);

    Tensor gq = Tensor::zeros({m, d});
    Tensor gk = Tensor::zeros({n, d});
    Tensor gv = Tensor::zeros({n, d});
    const real_t inv_sqrt = real_t{1} / std::sqrt(static_cast<real_t>(dh));

    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = column_slice(c.q, h * dh, dh);
        const Tensor kh = column_slice(c.k, h * dh, dh);
        const Tensor vh = column_slice(c.v, h * dh, dh);
        const Tensor g_ah = column_slice(g_attn_concat, h * dh, dh);
        const Tensor& probs = c.head_probs[h];
        const AttentionScores& selection = c.head_masks[h];

        Tensor g_probs = matmul(g_ah, transpose(vh));
        column_accumulate(gv, matmul(transpose(probs), g_ah), h * dh);

        // Works for both drop modes: probabilities are a softmax of the
        // (possibly adjusted) logits, and dropped positions are constants.
        Tensor g_scores = softmax_rows_vjp(probs, g_probs);
        for (std::size_t i = 0; i < g_scores.extent(0); ++i) {
            for (std::size_t j = 0; j < g_scores.extent(1); ++j) {
                if (!selection.retained(i, j)) g_scores(i, j) = 0;
            }
        }
        g_scores = scale(g_scores, inv_sqrt);
        column_accumulate(gq, matmul(g_scores, kh), h * dh);
        column_accumulate(gk, matmul(transpose(g_scores), qh), h * dh);
    }

    g.get("wq") = matmul(transpose(query_feat), gq);
    g.get("wk") = matmul(transpose(kv_feat), gk);
    g.get("wv") = matmul(transpose(kv_feat), gv);
    return g;
}

}  // namespace siamdff
