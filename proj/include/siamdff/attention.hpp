#pragma once

#include <cstdint>
#include <vector>

#include "siamdff/params.hpp"
#include "siamdff/tensor.hpp"

namespace siamdff {

/// Where the retention cutoff accumulates: softmax mass of the row (default)
/// or the raw scaled scores, kept for comparison runs.
enum class CumulativeMode { kMass, kRaw };

/// What happens to dropped entries: masked to -inf so retained weights
/// renormalize (default), or literally zeroed as logits.
enum class DropMode { kNegInf, kZeroLogit };

constexpr real_t kLayerNormEps = static_cast<real_t>(1e-5);

/// Scaled similarity matrix plus its per-row retention decision. Every row
/// retains at least one element; retained entries are always a descending
/// prefix of the sorted row with ties broken toward the lower column index.
struct AttentionScores {
    Tensor scores;          // [m,n] = QK^T / sqrt(d)
    Tensor retain_mask;     // [m,n] of exactly 0/1
    real_t threshold = 1;
    Tensor per_row_cutoff;  // [m], score of the last retained element

    bool retained(std::size_t i, std::size_t j) const {
        return retain_mask(i, j) != real_t{0};
    }
};

/// Per-row selection: the minimal descending prefix whose cumulative softmax
/// mass reaches the threshold. Threshold must lie in (0, 1].
AttentionScores imc_mask(const Tensor& scores, real_t threshold,
                         CumulativeMode mode = CumulativeMode::kMass);

/// Softmax over each row with dropped entries handled per DropMode.
Tensor masked_softmax_rows(const AttentionScores& selection, DropMode drop);

/// Plain scaled dot-product cross-attention: softmax(QK^T/sqrt(d)) V.
Tensor cross_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Intensity-aware masked cross-attention, single head. Equals
/// cross_attention when threshold is 1 and drop mode is kNegInf.
Tensor imc(const Tensor& q, const Tensor& k, const Tensor& v, real_t threshold,
           CumulativeMode mode = CumulativeMode::kMass, DropMode drop = DropMode::kNegInf);

/// Clamp for the learnable-threshold variant; the retained-set boundary is
/// treated as non-differentiable, so learning T is a projected update.
real_t clamp_threshold(real_t t);
constexpr real_t kDefaultThreshold = static_cast<real_t>(0.7);

struct StenParams {
    std::size_t heads = 4;
    Tensor wq, wk, wv, wo;            // [d,d]
    Tensor ffn_w1, ffn_b1;            // [d,2d], [2d]
    Tensor ffn_w2, ffn_b2;            // [2d,d], [d]
    Tensor norm1_scale, norm1_shift;  // [d]
    Tensor norm2_scale, norm2_shift;  // [d]

    std::size_t model_dim() const { return wq.extent(0); }

    static StenParams seeded(std::size_t model_dim, std::size_t heads, std::uint64_t seed);
    ParamSet to_param_set() const;
    static StenParams from_param_set(const ParamSet& set, std::size_t heads);
};

/// Forward intermediates kept for the backward pass. `head_masks` doubles as
/// the fixed-mask handle for gradient checking: reusing a cache's masks pins
/// the retained sets while parameters move.
struct StenCache {
    Tensor q, k, v;                         // projected, [m,d]/[n,d]
    std::vector<AttentionScores> head_masks;
    std::vector<Tensor> head_probs;         // softmax outputs per head
    Tensor attn_concat;                     // [m,d] heads reassembled
    Tensor attn_out;                        // [m,d] after wo
    Tensor resid1, normed1;                 // X = Norm(IMC + query)
    Tensor ffn_pre, ffn_act, ffn_out;       // FFN internals
    Tensor resid2, output;                  // Y = Norm(FFN + X)
};

/// Decoder-style block: X = Norm(IMC(Q,K,V) + query), Y = Norm(FFN(X) + X);
/// norms are applied after the residual adds.
Tensor sten_block(const Tensor& query_feat, const Tensor& kv_feat, const StenParams& params,
                  real_t threshold, CumulativeMode mode = CumulativeMode::kMass,
                  DropMode drop = DropMode::kNegInf);

/// Full-control forward: fills `cache` when given; reuses `fixed_masks`
/// instead of recomputing the retention when given.
Tensor sten_forward(const Tensor& query_feat, const Tensor& kv_feat, const StenParams& params,
                    real_t threshold, CumulativeMode mode, DropMode drop, StenCache* cache,
                    const std::vector<AttentionScores>* fixed_masks);

/// Analytic gradient of the output (weighted by gout) w.r.t. every
/// StenParams entry, with the retain masks held constant at the cached
/// decision. The same formula covers both drop modes: dropped positions are
/// constants of the softmax either way.
ParamSet sten_param_grad(const Tensor& query_feat, const Tensor& kv_feat, const StenParams& params,
                         const StenCache& cache, const Tensor& gout);

}  // namespace siamdff
