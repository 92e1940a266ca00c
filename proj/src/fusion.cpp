#include "siamdff/fusion.hpp"

#include <stdexcept>

#include "siamdff/nn.hpp"
#include "siamdff/rng.hpp"

namespace siamdff {

namespace {

void require_equal_shapes(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": branch shapes differ: " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

/// Concatenate along the leading axis; row-major layout makes this an append.
Tensor concat_leading(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank() || a.rank() == 0) {
        throw std::invalid_argument("concat: ranks differ or scalar input: " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    for (std::size_t axis = 1; axis < a.rank(); ++axis) {
        if (a.extent(axis) != b.extent(axis)) {
            throw std::invalid_argument("concat: trailing extents differ: " +
                                        shape_str(a.shape()) + " vs " + shape_str(b.shape()));
        }
    }
    std::vector<std::size_t> shape = a.shape();
    shape[0] += b.extent(0);
    std::vector<real_t> data;
    data.reserve(a.size() + b.size());
    data.insert(data.end(), a.values().begin(), a.values().end());
    data.insert(data.end(), b.values().begin(), b.values().end());
    return Tensor(std::move(shape), std::move(data));
}

Tensor leading_slice(const Tensor& x, std::size_t begin, std::size_t count) {
    std::vector<std::size_t> shape = x.shape();
    const std::size_t stride = x.size() / shape[0];
    shape[0] = count;
    std::vector<real_t> data(x.values().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                             x.values().begin() +
                                 static_cast<std::ptrdiff_t>((begin + count) * stride));
    return Tensor(std::move(shape), std::move(data));
}

struct DsfamTrace {
    Tensor squeezed_t, squeezed_c, fused;
    Tensor w_c, w_m, w_a, stacked, gate_pre, gate_sig;
    SpatialFusionWeights weights;
};

DsfamTrace dsfam_trace(const Tensor& f_t, const Tensor& f_c, const DsfamParams& params) {
    require_equal_shapes(f_t, f_c, "dsfam");
    if (f_t.rank() != 3) {
        throw std::invalid_argument("dsfam: expected [C,H,W] features, got " +
                                    shape_str(f_t.shape()));
    }
    if (f_t.extent(0) % 2 != 0) {
        throw std::invalid_argument("dsfam: channel count must be even, got " +
                                    std::to_string(f_t.extent(0)));
    }
    DsfamTrace tr;
    tr.squeezed_t = conv2d(f_t, params.squeeze_t, 0);
    tr.squeezed_c = conv2d(f_c, params.squeeze_c, 0);
    tr.fused = concat_leading(tr.squeezed_t, tr.squeezed_c);

    tr.w_c = conv2d(tr.fused, params.conv_wc, 1);
    tr.w_m = pool_over_channels(tr.fused, PoolMode::kMax);
    tr.w_a = pool_over_channels(tr.fused, PoolMode::kAvg);
    tr.stacked = concat_leading(concat_leading(tr.w_c, tr.w_m), tr.w_a);
    tr.gate_pre = conv2d(tr.stacked, params.conv_attn, 1);
    tr.gate_sig = sigmoid(tr.gate_pre);
    tr.weights.alpha1 = leading_slice(tr.gate_sig, 0, 1);
    tr.weights.beta1 = leading_slice(tr.gate_sig, 1, 1);
    return tr;
}

}  // namespace

DsfamParams DsfamParams::seeded(std::size_t channels, std::uint64_t seed) {
    if (channels == 0 || channels % 2 != 0) {
        throw std::invalid_argument("dsfam: channel count must be positive and even, got " +
                                    std::to_string(channels));
    }
    Rng rng(seed);
    DsfamParams p;
    p.squeeze_t = fan_in_init(rng, {channels / 2, channels, 1, 1}, channels);
    p.squeeze_c = fan_in_init(rng, {channels / 2, channels, 1, 1}, channels);
    p.conv_wc = fan_in_init(rng, {1, channels, 3, 3}, channels * 9);
    p.conv_attn = fan_in_init(rng, {2, 3, 3, 3}, 3 * 9);
    return p;
}

ParamSet DsfamParams::to_param_set() const {
    ParamSet set;
    set.set("squeeze_t", squeeze_t);
    set.set("squeeze_c", squeeze_c);
    set.set("conv_wc", conv_wc);
    set.set("conv_attn", conv_attn);
    return set;
}

DsfamParams DsfamParams::from_param_set(const ParamSet& set) {
    DsfamParams p;
    p.squeeze_t = set.get("squeeze_t");
    p.squeeze_c = set.get("squeeze_c");
    p.conv_wc = set.get("conv_wc");
    p.conv_attn = set.get("conv_attn");
    return p;
}

DcfamParams DcfamParams::seeded(std::size_t kernel_size, std::uint64_t seed) {
    if (kernel_size % 2 == 0) {
        throw std::invalid_argument("dcfam: kernel size must be odd, got " +
                                    std::to_string(kernel_size));
    }
    Rng rng(seed);
    DcfamParams p;
    p.kernel_m = fan_in_init(rng, {kernel_size}, kernel_size);
    p.kernel_o = fan_in_init(rng, {kernel_size}, kernel_size);
    return p;
}

ParamSet DcfamParams::to_param_set() const {
    ParamSet set;
    set.set("kernel_m", kernel_m);
    set.set("kernel_o", kernel_o);
    return set;
}

DcfamParams DcfamParams::from_param_set(const ParamSet& set) {
    DcfamParams p;
    p.kernel_m = set.get("kernel_m");
    p.kernel_o = set.get("kernel_o");
    return p;
}

Tensor dsfam_fuse_input(const Tensor& f_t, const Tensor& f_c, const DsfamParams& params) {
    require_equal_shapes(f_t, f_c, "dsfam_fuse_input");
    if (f_t.extent(0) % 2 != 0) {
        throw std::invalid_argument("dsfam_fuse_input: channel count must be even, got " +
                                    std::to_string(f_t.extent(0)));
    }
    return concat_leading(conv2d(f_t, params.squeeze_t, 0), conv2d(f_c, params.squeeze_c, 0));
}

SpatialFusionWeights dsfam_weights(const Tensor& f_f, const DsfamParams& params) {
    const Tensor w_c = conv2d(f_f, params.conv_wc, 1);
    const Tensor w_m = pool_over_channels(f_f, PoolMode::kMax);
    const Tensor w_a = pool_over_channels(f_f, PoolMode::kAvg);
    const Tensor stacked = concat_leading(concat_leading(w_c, w_m), w_a);
    const Tensor gate = sigmoid(conv2d(stacked, params.conv_attn, 1));
    SpatialFusionWeights w;
    w.alpha1 = leading_slice(gate, 0, 1);
    w.beta1 = leading_slice(gate, 1, 1);
    return w;
}

Tensor dsfam_apply(const Tensor& f_t, const Tensor& f_c, const SpatialFusionWeights& w) {
    require_equal_shapes(f_t, f_c, "dsfam_apply");
    const std::size_t c = f_t.extent(0), h = f_t.extent(1), width = f_t.extent(2);
    if (w.alpha1.rank() != 3 || w.alpha1.extent(1) != h || w.alpha1.extent(2) != width ||
        !w.alpha1.same_shape(w.beta1)) {
        throw std::invalid_argument("dsfam_apply: weight maps " + shape_str(w.alpha1.shape()) +
                                    " do not match features " + shape_str(f_t.shape()));
    }
    Tensor out({c, h, width});
    for (std::size_t ic = 0; ic < c; ++ic) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                out(ic, y, x) =
                    w.alpha1(0, y, x) * f_t(ic, y, x) + w.beta1(0, y, x) * f_c(ic, y, x);
            }
        }
    }
    return out;
}

Tensor dsfam_fuse(const Tensor& f_t, const Tensor& f_c, const DsfamParams& params) {
    const DsfamTrace tr = dsfam_trace(f_t, f_c, params);
    return dsfam_apply(f_t, f_c, tr.weights);
}

ChannelFusionWeights dcfam_weights(const Tensor& t_m, const Tensor& t_o, const DcfamParams& params,
                                   DcfamInput input) {
    require_equal_shapes(t_m, t_o, "dcfam");
    if (t_m.rank() != 1) {
        throw std::invalid_argument("dcfam: expected [C] templates, got " +
                                    shape_str(t_m.shape()));
    }
    const Tensor fused = add(t_m, t_o);
    const Tensor& in_m = input == DcfamInput::kFused ? fused : t_m;
    const Tensor& in_o = input == DcfamInput::kFused ? fused : t_o;
    ChannelFusionWeights w;
    w.alpha2 = sigmoid(conv1d_channels(in_m, params.kernel_m));
    w.beta2 = sigmoid(conv1d_channels(in_o, params.kernel_o));
    return w;
}

Tensor dcfam_fuse(const Tensor& t_m, const Tensor& t_o, const DcfamParams& params,
                  DcfamInput input) {
    const ChannelFusionWeights w = dcfam_weights(t_m, t_o, params, input);
    return add(hadamard(w.alpha2, t_m), hadamard(w.beta2, t_o));
}

Tensor fuse_baseline(const Tensor& a, const Tensor& b, FusionMode mode) {
    switch (mode) {
        case FusionMode::kSum:
            return add(a, b);
        case FusionMode::kConcat:
            return concat_leading(a, b);
        case FusionMode::kAttention:
            break;
    }
    throw std::invalid_argument("fuse_baseline: mode must be sum or concat");
}

ParamSet dsfam_param_grad(const Tensor& f_t, const Tensor& f_c, const DsfamParams& params) {
    const DsfamTrace tr = dsfam_trace(f_t, f_c, params);
    const std::size_t c = f_t.extent(0), h = f_t.extent(1), width = f_t.extent(2);

    // d sum(F_m) / d alpha1 = sum_c F_t, likewise for beta1.
    Tensor g_gate_sig({2, h, width});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            real_t gt = 0, gc = 0;
            for (std::size_t ic = 0; ic < c; ++ic) {
                gt += f_t(ic, y, x);
                gc += f_c(ic, y, x);
            }
            g_gate_sig(0, y, x) = gt;
            g_gate_sig(1, y, x) = gc;
        }
    }
    const Tensor g_gate_pre = sigmoid_vjp(tr.gate_sig, g_gate_sig);

    Tensor g_stacked, g_conv_attn;
    conv2d_vjp(tr.stacked, params.conv_attn, 1, g_gate_pre, g_stacked, g_conv_attn);

    const Tensor g_wc = leading_slice(g_stacked, 0, 1);
    const Tensor g_wm = leading_slice(g_stacked, 1, 1);
    const Tensor g_wa = leading_slice(g_stacked, 2, 1);

    Tensor g_fused, g_conv_wc;
    conv2d_vjp(tr.fused, params.conv_wc, 1, g_wc, g_fused, g_conv_wc);
    g_fused = add(g_fused, pool_over_channels_vjp(tr.fused, PoolMode::kMax, g_wm));
    g_fused = add(g_fused, pool_over_channels_vjp(tr.fused, PoolMode::kAvg, g_wa));

    const std::size_t half = c / 2;
    const Tensor g_sq_t_out = leading_slice(g_fused, 0, half);
    const Tensor g_sq_c_out = leading_slice(g_fused, half, half);

    Tensor unused, g_squeeze_t, g_squeeze_c;
    conv2d_vjp(f_t, params.squeeze_t, 0, g_sq_t_out, unused, g_squeeze_t);
    conv2d_vjp(f_c, params.squeeze_c, 0, g_sq_c_out, unused, g_squeeze_c);

    ParamSet g;
    g.set("squeeze_t", g_squeeze_t);
    g.set("squeeze_c", g_squeeze_c);
    g.set("conv_wc", g_conv_wc);
    g.set("conv_attn", g_conv_attn);
    return g;
}

ParamSet dcfam_param_grad(const Tensor& t_m, const Tensor& t_o, const DcfamParams& params,
                          DcfamInput input) {
    const Tensor fused = add(t_m, t_o);
    const Tensor& in_m = input == DcfamInput::kFused ? fused : t_m;
    const Tensor& in_o = input == DcfamInput::kFused ? fused : t_o;
    const Tensor alpha2 = sigmoid(conv1d_channels(in_m, params.kernel_m));
    const Tensor beta2 = sigmoid(conv1d_channels(in_o, params.kernel_o));

    // d sum(t_g) / d alpha2 = t_m, / d beta2 = t_o.
    const Tensor g_a_pre = sigmoid_vjp(alpha2, t_m);
    const Tensor g_b_pre = sigmoid_vjp(beta2, t_o);

    Tensor unused, g_kernel_m, g_kernel_o;
    conv1d_channels_vjp(in_m, params.kernel_m, g_a_pre, unused, g_kernel_m);
    conv1d_channels_vjp(in_o, params.kernel_o, g_b_pre, unused, g_kernel_o);

    ParamSet g;
    g.set("kernel_m", g_kernel_m);
    g.set("kernel_o", g_kernel_o);
    return g;
}

}  // namespace siamdff
