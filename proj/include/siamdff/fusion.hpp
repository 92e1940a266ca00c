#pragma once

#include <cstdint>

#include "siamdff/params.hpp"
#include "siamdff/tensor.hpp"

namespace siamdff {

enum class FusionMode { kAttention, kSum, kConcat };

/// Per-pixel sigmoid gates for the two spatial branches; both [1,H,W] and
/// strictly inside (0,1).
struct SpatialFusionWeights {
    Tensor alpha1;
    Tensor beta1;
};

/// Per-channel sigmoid gates for the two templates; both [C], inside (0,1).
struct ChannelFusionWeights {
    Tensor alpha2;
    Tensor beta2;
};

struct DsfamParams {
    Tensor squeeze_t;    // [C/2,C,1,1] 1x1 squeeze of the global branch
    Tensor squeeze_c;    // [C/2,C,1,1] 1x1 squeeze of the local branch
    Tensor conv_wc;      // [1,C,3,3]   local spatial response
    Tensor conv_attn;    // [2,3,3,3]   stacked maps -> two gates

    static DsfamParams seeded(std::size_t channels, std::uint64_t seed);
    ParamSet to_param_set() const;
    static DsfamParams from_param_set(const ParamSet& set);
};

struct DcfamParams {
    Tensor kernel_m;  // [k] 1-D cross-channel kernel for the mixed branch
    Tensor kernel_o;  // [k] for the original branch

    static DcfamParams seeded(std::size_t kernel_size, std::uint64_t seed);
    ParamSet to_param_set() const;
    static DcfamParams from_param_set(const ParamSet& set);
};

/// Which input feeds the two 1-D convolutions of the channel attention:
/// the fused template t_m + t_o (default) or each branch separately.
enum class DcfamInput { kFused, kPerBranch };

/// Squeeze both branches to C/2 with 1x1 convolutions and concatenate back
/// to C channels. C must be even.
Tensor dsfam_fuse_input(const Tensor& f_t, const Tensor& f_c, const DsfamParams& params);

/// Local 3x3 response plus channel-axis max/avg pools, stacked to three
/// maps, mixed by a 3x3 convolution into two channels, squashed by sigmoid.
SpatialFusionWeights dsfam_weights(const Tensor& f_f, const DsfamParams& params);

/// F_m[c,h,w] = alpha1[h,w] * F_t[c,h,w] + beta1[h,w] * F_c[c,h,w].
Tensor dsfam_apply(const Tensor& f_t, const Tensor& f_c, const SpatialFusionWeights& w);

/// The whole spatial pipeline: fuse input, derive gates, blend.
Tensor dsfam_fuse(const Tensor& f_t, const Tensor& f_c, const DsfamParams& params);

ChannelFusionWeights dcfam_weights(const Tensor& t_m, const Tensor& t_o, const DcfamParams& params,
                                   DcfamInput input = DcfamInput::kFused);

/// t_g = alpha2 ⊙ t_m + beta2 ⊙ t_o with gates from 1-D cross-channel
/// convolutions of the fused template (no channel compression).
Tensor dcfam_fuse(const Tensor& t_m, const Tensor& t_o, const DcfamParams& params,
                  DcfamInput input = DcfamInput::kFused);

/// Reference strategies for the fusion ablations. kSum adds; kConcat stacks
/// along the leading (channel) axis.
Tensor fuse_baseline(const Tensor& a, const Tensor& b, FusionMode mode);

/// Analytic gradient of sum(dsfam_fuse(f_t, f_c, params)) w.r.t. the params.
ParamSet dsfam_param_grad(const Tensor& f_t, const Tensor& f_c, const DsfamParams& params);

/// Analytic gradient of sum(dcfam_fuse(t_m, t_o, params)) w.r.t. the params.
ParamSet dcfam_param_grad(const Tensor& t_m, const Tensor& t_o, const DcfamParams& params,
                          DcfamInput input = DcfamInput::kFused);

}  // namespace siamdff
