#include "siamdff/distill.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "siamdff/nn.hpp"
#include "siamdff/rng.hpp"

namespace siamdff {

TargetMask TargetMask::from_grid(Tensor grid) {
    if (grid.rank() != 2) {
        throw std::invalid_argument("target mask must be rank 2, got " + shape_str(grid.shape()));
    }
    bool any = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const real_t v = grid.at(i);
        if (v != real_t{0} && v != real_t{1}) {
            throw std::invalid_argument("target mask entries must be exactly 0 or 1");
        }
        any = any || v == real_t{1};
    }
    if (!any) {
        throw std::invalid_argument("target mask has no target pixel");
    }
    return TargetMask(std::move(grid));
}

TargetMask TargetMask::from_box(std::size_t height, std::size_t width, double x, double y,
                                double w, double h) {
    Tensor grid({height, width});
    bool any = false;
    for (std::size_t i = 0; i < height; ++i) {
        const double cy = static_cast<double>(i) + 0.5;
        for (std::size_t j = 0; j < width; ++j) {
            const double cx = static_cast<double>(j) + 0.5;
            if (cx >= x && cx < x + w && cy >= y && cy < y + h) {
                grid(i, j) = 1;
                any = true;
            }
        }
    }
    if (!any) {
        // Box thinner than a pixel: plant its center.
        const auto ci = static_cast<std::size_t>(std::clamp(
            std::floor(y + h / 2), 0.0, static_cast<double>(height - 1)));
        const auto cj = static_cast<std::size_t>(std::clamp(
            std::floor(x + w / 2), 0.0, static_cast<double>(width - 1)));
        grid(ci, cj) = 1;
    }
    return TargetMask(std::move(grid));
}

TargetMask TargetMask::resample(std::size_t height, std::size_t width) const {
    const std::size_t hin = this->height(), win = this->width();
    Tensor out({height, width});
    bool any = false;
    for (std::size_t i = 0; i < height; ++i) {
        const std::size_t si = std::min(
            hin - 1, static_cast<std::size_t>((static_cast<double>(i) + 0.5) *
                                              static_cast<double>(hin) / static_cast<double>(height)));
        for (std::size_t j = 0; j < width; ++j) {
            const std::size_t sj = std::min(
                win - 1,
                static_cast<std::size_t>((static_cast<double>(j) + 0.5) * static_cast<double>(win) /
                                         static_cast<double>(width)));
            out(i, j) = grid_(si, sj);
            any = any || out(i, j) == real_t{1};
        }
    }
    if (!any) {
        // Target vanished at this resolution; keep its centroid alive.
        double ci = 0, cj = 0, n = 0;
        for (std::size_t i = 0; i < hin; ++i) {
            for (std::size_t j = 0; j < win; ++j) {
                if (grid_(i, j) == real_t{1}) {
                    ci += static_cast<double>(i);
                    cj += static_cast<double>(j);
                    n += 1;
                }
            }
        }
        ci = (ci / n + 0.5) * static_cast<double>(height) / static_cast<double>(hin);
        cj = (cj / n + 0.5) * static_cast<double>(width) / static_cast<double>(win);
        const auto ti = static_cast<std::size_t>(
            std::clamp(ci - 0.5, 0.0, static_cast<double>(height - 1)) + 0.5);
        const auto tj = static_cast<std::size_t>(
            std::clamp(cj - 0.5, 0.0, static_cast<double>(width - 1)) + 0.5);
        out(std::min(ti, height - 1), std::min(tj, width - 1)) = 1;
    }
    return TargetMask(std::move(out));
}

std::string TargetMask::to_text() const {
    std::ostringstream os;
    os << height() << " " << width() << "\n";
    for (std::size_t i = 0; i < height(); ++i) {
        for (std::size_t j = 0; j < width(); ++j) {
            if (j > 0) os << " ";
            os << (grid_(i, j) == real_t{1} ? 1 : 0);
        }
        os << "\n";
    }
    return os.str();
}

TargetMask TargetMask::parse(const std::string& text) {
    std::istringstream is(text);
    std::size_t h = 0, w = 0;
    if (!(is >> h >> w) || h == 0 || w == 0) {
        throw std::runtime_error("mask file must start with a 'H W' header line");
    }
    Tensor grid({h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        int v = 0;
        if (!(is >> v)) {
            throw std::runtime_error("mask file truncated after " + std::to_string(i) +
                                     " of " + std::to_string(h * w) + " entries");
        }
        if (v != 0 && v != 1) {
            throw std::runtime_error("mask entries must be 0 or 1, got " + std::to_string(v));
        }
        grid.at(i) = static_cast<real_t>(v);
    }
    return from_grid(std::move(grid));
}

namespace {

void check_stage(const StageFeatures& f, const TargetMask& mask) {
    if (f.f_z.rank() != 3 || f.f_x.rank() != 3) {
        throw std::invalid_argument("stage features must be [C,H,W], got " +
                                    shape_str(f.f_z.shape()) + " and " + shape_str(f.f_x.shape()));
    }
    if (f.f_z.extent(0) != f.f_x.extent(0)) {
        throw std::invalid_argument("stage template/search channel mismatch: " +
                                    shape_str(f.f_z.shape()) + " vs " + shape_str(f.f_x.shape()));
    }
    if (mask.height() != f.f_z.extent(1) || mask.width() != f.f_z.extent(2)) {
        throw std::invalid_argument("mask " + std::to_string(mask.height()) + "x" +
                                    std::to_string(mask.width()) + " does not match template " +
                                    shape_str(f.f_z.shape()));
    }
}

}  // namespace

Tensor target_attention_map_traced(const StageFeatures& f, const TargetMask& mask,
                                   AttentionTrace& tr) {
    check_stage(f, mask);
    const std::size_t c = f.f_z.extent(0);
    const std::size_t n = f.f_z.extent(1) * f.f_z.extent(2);
    const std::size_t hx = f.f_x.extent(1), wx = f.f_x.extent(2);
    const std::size_t p = hx * wx;
    const real_t inv_sqrt = real_t{1} / std::sqrt(static_cast<real_t>(c));

    tr.gated = Tensor({c, n});
    for (std::size_t ic = 0; ic < c; ++ic) {
        for (std::size_t i = 0; i < n; ++i) {
            tr.gated(ic, i) = f.f_z.at(ic * n + i) * mask.grid().at(i);
        }
    }

    // Scores over template positions per search position, softmax down each
    // column so per-query weights sum to 1.
    Tensor scores({n, p});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t q = 0; q < p; ++q) {
            real_t acc = 0;
            for (std::size_t ic = 0; ic < c; ++ic) {
                acc += tr.gated(ic, i) * f.f_x.at(ic * p + q);
            }
            scores(i, q) = acc * inv_sqrt;
        }
    }
    tr.weights = Tensor({n, p});
    for (std::size_t q = 0; q < p; ++q) {
        real_t colmax = scores(0, q);
        for (std::size_t i = 1; i < n; ++i) colmax = std::max(colmax, scores(i, q));
        real_t denom = 0;
        for (std::size_t i = 0; i < n; ++i) {
            tr.weights(i, q) = std::exp(scores(i, q) - colmax);
            denom += tr.weights(i, q);
        }
        for (std::size_t i = 0; i < n; ++i) tr.weights(i, q) /= denom;
    }

    tr.channel_sum = Tensor({p});
    for (std::size_t q = 0; q < p; ++q) {
        real_t acc = 0;
        for (std::size_t ic = 0; ic < c; ++ic) {
            real_t ctx = 0;
            for (std::size_t i = 0; i < n; ++i) ctx += tr.gated(ic, i) * tr.weights(i, q);
            acc += ctx;
        }
        tr.channel_sum.at(q) = acc;
    }

    tr.map = Tensor({hx, wx});
    for (std::size_t q = 0; q < p; ++q) {
        tr.map.at(q) = real_t{1} / (real_t{1} + std::exp(-tr.channel_sum.at(q)));
    }
    return tr.map;
}

Tensor target_attention_map(const StageFeatures& f, const TargetMask& mask) {
    AttentionTrace tr;
    return target_attention_map_traced(f, mask, tr);
}

void target_attention_map_vjp(const StageFeatures& f, const TargetMask& mask,
                              const AttentionTrace& tr, const Tensor& gmap, Tensor& g_fz,
                              Tensor& g_fx) {
    const std::size_t c = f.f_z.extent(0);
    const std::size_t n = f.f_z.extent(1) * f.f_z.extent(2);
    const std::size_t p = f.f_x.extent(1) * f.f_x.extent(2);
    const real_t inv_sqrt = real_t{1} / std::sqrt(static_cast<real_t>(c));

    // Through the sigmoid and the channel sum: every channel of the context
    // at search position q receives the same gradient g_sum[q].
    Tensor g_sum({p});
    for (std::size_t q = 0; q < p; ++q) {
        const real_t a = tr.map.at(q);
        g_sum.at(q) = gmap.at(q) * a * (real_t{1} - a);
    }

    // context = gated · weights
    Tensor g_gated({c, n});
    Tensor g_weights({n, p});
    for (std::size_t ic = 0; ic < c; ++ic) {
        for (std::size_t i = 0; i < n; ++i) {
            real_t acc = 0;
            for (std::size_t q = 0; q < p; ++q) acc += g_sum.at(q) * tr.weights(i, q);
            g_gated(ic, i) = acc;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        real_t colsum = 0;
        for (std::size_t ic = 0; ic < c; ++ic) colsum += tr.gated(ic, i);
        for (std::size_t q = 0; q < p; ++q) g_weights(i, q) = colsum * g_sum.at(q);
    }

    // Column softmax backward.
    Tensor g_scores({n, p});
    for (std::size_t q = 0; q < p; ++q) {
        real_t dot = 0;
        for (std::size_t i = 0; i < n; ++i) dot += g_weights(i, q) * tr.weights(i, q);
        for (std::size_t i = 0; i < n; ++i) {
            g_scores(i, q) = tr.weights(i, q) * (g_weights(i, q) - dot);
        }
    }

    // scores = gatedᵀ · f_x · inv_sqrt
    g_fx = Tensor::zeros(f.f_x.shape());
    for (std::size_t ic = 0; ic < c; ++ic) {
        for (std::size_t q = 0; q < p; ++q) {
            real_t acc = 0;
            for (std::size_t i = 0; i < n; ++i) acc += tr.gated(ic, i) * g_scores(i, q);
            g_fx.at(ic * p + q) = acc * inv_sqrt;
        }
    }
    for (std::size_t ic = 0; ic < c; ++ic) {
        for (std::size_t i = 0; i < n; ++i) {
            real_t acc = 0;
            for (std::size_t q = 0; q < p; ++q) acc += f.f_x.at(ic * p + q) * g_scores(i, q);
            g_gated(ic, i) += acc * inv_sqrt;
        }
    }

    // Through the mask gate; background template positions get exactly 0.
    g_fz = Tensor::zeros(f.f_z.shape());
    for (std::size_t ic = 0; ic < c; ++ic) {
        for (std::size_t i = 0; i < n; ++i) {
            g_fz.at(ic * n + i) = g_gated(ic, i) * mask.grid().at(i);
        }
    }
}

real_t tcakd_loss(const AttentionMapPair& pair) {
    if (!pair.teacher.same_shape(pair.student)) {
        throw std::invalid_argument("tcakd_loss: map shapes differ: " +
                                    shape_str(pair.teacher.shape()) + " vs " +
                                    shape_str(pair.student.shape()));
    }
    real_t acc = 0;
    for (std::size_t i = 0; i < pair.teacher.size(); ++i) {
        acc += std::abs(pair.teacher.at(i) - pair.student.at(i));
    }
    return acc / static_cast<real_t>(pair.teacher.size());
}

Tensor tcakd_loss_grad_student(const AttentionMapPair& pair) {
    Tensor g = Tensor::zeros(pair.student.shape());
    const real_t inv = real_t{1} / static_cast<real_t>(pair.student.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const real_t diff = pair.student.at(i) - pair.teacher.at(i);
        g.at(i) = diff > 0 ? inv : (diff < 0 ? -inv : real_t{0});
    }
    return g;
}

Tensor bilinear_resample(const Tensor& map, std::size_t height, std::size_t width) {
    if (map.rank() != 2) {
        throw std::invalid_argument("bilinear_resample expects a [H,W] map, got " +
                                    shape_str(map.shape()));
    }
    const std::size_t hin = map.extent(0), win = map.extent(1);
    Tensor out({height, width});
    for (std::size_t i = 0; i < height; ++i) {
        const double sy = (static_cast<double>(i) + 0.5) * static_cast<double>(hin) /
                              static_cast<double>(height) -
                          0.5;
        const double cy = std::clamp(sy, 0.0, static_cast<double>(hin - 1));
        const std::size_t y0 = static_cast<std::size_t>(cy);
        const std::size_t y1 = std::min(y0 + 1, hin - 1);
        const double fy = cy - static_cast<double>(y0);
        for (std::size_t j = 0; j < width; ++j) {
            const double sx = (static_cast<double>(j) + 0.5) * static_cast<double>(win) /
                                  static_cast<double>(width) -
                              0.5;
            const double cx = std::clamp(sx, 0.0, static_cast<double>(win - 1));
            const std::size_t x0 = static_cast<std::size_t>(cx);
            const std::size_t x1 = std::min(x0 + 1, win - 1);
            const double fx = cx - static_cast<double>(x0);
            const double v = (1 - fy) * ((1 - fx) * map(y0, x0) + fx * map(y0, x1)) +
                             fy * ((1 - fx) * map(y1, x0) + fx * map(y1, x1));
            out(i, j) = static_cast<real_t>(v);
        }
    }
    return out;
}

real_t multistage_distill(const std::vector<StageFeatures>& teacher,
                          const std::vector<StageFeatures>& student, const TargetMask& mask) {
    if (teacher.size() != student.size()) {
        throw std::invalid_argument("multistage_distill: stage counts differ: " +
                                    std::to_string(teacher.size()) + " vs " +
                                    std::to_string(student.size()));
    }
    real_t total = 0;
    for (std::size_t s = 0; s < teacher.size(); ++s) {
        const TargetMask mask_t = mask.resample(teacher[s].f_z.extent(1), teacher[s].f_z.extent(2));
        const Tensor a_t = target_attention_map(teacher[s], mask_t);
        const TargetMask mask_s = mask.resample(student[s].f_z.extent(1), student[s].f_z.extent(2));
        Tensor a_s = target_attention_map(student[s], mask_s);
        if (!a_s.same_shape(a_t)) {
            a_s = bilinear_resample(a_s, a_t.extent(0), a_t.extent(1));
        }
        total += tcakd_loss({a_t, a_s});
    }
    return total;
}

namespace {

std::string stage_key(std::size_t s, bool second) {
    std::string key = "stage";
    if (s < 10) key += "0";
    key += std::to_string(s);
    if (second) key += "b";
    return key;
}

}  // namespace

BackboneParams BackboneParams::seeded(std::size_t in_channels,
                                      const std::vector<std::size_t>& stage_channels,
                                      bool double_conv, std::uint64_t seed) {
    if (stage_channels.empty()) {
        throw std::invalid_argument("backbone needs at least one stage");
    }
    Rng rng(seed);
    BackboneParams p;
    p.double_conv = double_conv;
    std::size_t cin = in_channels;
    for (std::size_t cout : stage_channels) {
        p.stage_kernels.push_back(fan_in_init(rng, {cout, cin, 3, 3}, cin * 9));
        if (double_conv) {
            p.stage_kernels2.push_back(fan_in_init(rng, {cout, cout, 3, 3}, cout * 9));
        }
        cin = cout;
    }
    return p;
}

ParamSet BackboneParams::to_param_set() const {
    ParamSet set;
    for (std::size_t s = 0; s < stage_kernels.size(); ++s) {
        set.set(stage_key(s, false), stage_kernels[s]);
        if (double_conv) set.set(stage_key(s, true), stage_kernels2[s]);
    }
    return set;
}

BackboneParams BackboneParams::from_param_set(const ParamSet& set) {
    BackboneParams p;
    p.double_conv = set.has(stage_key(0, true));
    for (std::size_t s = 0; set.has(stage_key(s, false)); ++s) {
        p.stage_kernels.push_back(set.get(stage_key(s, false)));
        if (p.double_conv) p.stage_kernels2.push_back(set.get(stage_key(s, true)));
    }
    if (p.stage_kernels.empty()) {
        throw std::invalid_argument("param set holds no backbone stages");
    }
    return p;
}

std::vector<Tensor> toy_backbone(const Tensor& image, std::size_t depth,
                                 const BackboneParams& params) {
    if (image.rank() != 3) {
        throw std::invalid_argument("toy_backbone expects [C,H,W] input, got " +
                                    shape_str(image.shape()));
    }
    if (depth == 0 || depth > params.stages()) {
        throw std::invalid_argument("depth " + std::to_string(depth) + " out of range, have " +
                                    std::to_string(params.stages()) + " stages");
    }
    const std::size_t h = image.extent(1), w = image.extent(2);
    const std::size_t factor = std::size_t{1} << depth;
    if (h % factor != 0 || w % factor != 0) {
        throw std::invalid_argument("spatial extents " + shape_str(image.shape()) +
                                    " not divisible by 2^" + std::to_string(depth));
    }
    std::vector<Tensor> features;
    Tensor x = image;
    for (std::size_t s = 0; s < depth; ++s) {
        Tensor y = relu(conv2d(x, params.stage_kernels[s], 1));
        if (params.double_conv) {
            y = relu(conv2d(y, params.stage_kernels2[s], 1));
        }
        x = subsample2(y);
        features.push_back(x);
    }
    return features;
}

std::vector<StageFeatures> backbone_stage_features(const Tensor& template_image,
                                                   const Tensor& search_image, std::size_t depth,
                                                   const BackboneParams& params) {
    const std::vector<Tensor> z = toy_backbone(template_image, depth, params);
    const std::vector<Tensor> x = toy_backbone(search_image, depth, params);
    std::vector<StageFeatures> out;
    for (std::size_t s = 0; s < depth; ++s) {
        out.push_back(StageFeatures{z[s], x[s], static_cast<int>(s)});
    }
    return out;
}

namespace {

struct StreamTrace {
    std::vector<Tensor> inputs;  // input of each stage
    std::vector<Tensor> pre1, act1, pre2, act2, out;
};

StreamTrace run_stream(const Tensor& image, const BackboneParams& p, std::size_t depth) {
    StreamTrace tr;
    Tensor x = image;
    for (std::size_t s = 0; s < depth; ++s) {
        tr.inputs.push_back(x);
        Tensor pre = conv2d(x, p.stage_kernels[s], 1);
        Tensor act = relu(pre);
        tr.pre1.push_back(pre);
        tr.act1.push_back(act);
        if (p.double_conv) {
            Tensor pre2 = conv2d(act, p.stage_kernels2[s], 1);
            Tensor act2 = relu(pre2);
            tr.pre2.push_back(pre2);
            tr.act2.push_back(act2);
            x = subsample2(act2);
        } else {
            x = subsample2(act);
        }
        tr.out.push_back(x);
    }
    return tr;
}

void backprop_stream(const StreamTrace& tr, const BackboneParams& p,
                     const std::vector<Tensor>& g_features, ParamSet& grads) {
    const std::size_t depth = tr.out.size();
    Tensor carried;  // gradient flowing into the next-lower stage output
    for (std::size_t si = depth; si-- > 0;) {
        Tensor g_out = g_features[si];
        if (si + 1 < depth) g_out = add(g_out, carried);

        Tensor g_x;
        if (p.double_conv) {
            const Tensor g_act2 = subsample2_vjp(tr.act2[si], g_out);
            const Tensor g_pre2 = relu_vjp(tr.pre2[si], g_act2);
            Tensor g_act1, g_k2;
            conv2d_vjp(tr.act1[si], p.stage_kernels2[si], 1, g_pre2, g_act1, g_k2);
            grads.get(stage_key(si, true)) = add(grads.get(stage_key(si, true)), g_k2);
            const Tensor g_pre1 = relu_vjp(tr.pre1[si], g_act1);
            Tensor g_k1;
            conv2d_vjp(tr.inputs[si], p.stage_kernels[si], 1, g_pre1, g_x, g_k1);
            grads.get(stage_key(si, false)) = add(grads.get(stage_key(si, false)), g_k1);
        } else {
            const Tensor g_act = subsample2_vjp(tr.act1[si], g_out);
            const Tensor g_pre = relu_vjp(tr.pre1[si], g_act);
            Tensor g_k;
            conv2d_vjp(tr.inputs[si], p.stage_kernels[si], 1, g_pre, g_x, g_k);
            grads.get(stage_key(si, false)) = add(grads.get(stage_key(si, false)), g_k);
        }
        carried = g_x;
    }
}

}  // namespace

real_t distill_objective(const std::vector<StageFeatures>& teacher, const Tensor& template_image,
                         const Tensor& search_image, const BackboneParams& student,
                         const TargetMask& mask) {
    const auto stages =
        backbone_stage_features(template_image, search_image, teacher.size(), student);
    return multistage_distill(teacher, stages, mask);
}

ParamSet distill_objective_grad(const std::vector<StageFeatures>& teacher,
                                const Tensor& template_image, const Tensor& search_image,
                                const BackboneParams& student, const TargetMask& mask) {
    const std::size_t depth = teacher.size();
    const StreamTrace tmpl = run_stream(template_image, student, depth);
    const StreamTrace srch = run_stream(search_image, student, depth);

    ParamSet grads = student.to_param_set().zeros_like();
    std::vector<Tensor> g_tmpl(depth), g_srch(depth);
    for (std::size_t s = 0; s < depth; ++s) {
        const StageFeatures stage{tmpl.out[s], srch.out[s], static_cast<int>(s)};
        const TargetMask mask_t =
            mask.resample(teacher[s].f_z.extent(1), teacher[s].f_z.extent(2));
        const Tensor a_t = target_attention_map(teacher[s], mask_t);

        const TargetMask mask_s = mask.resample(stage.f_z.extent(1), stage.f_z.extent(2));
        AttentionTrace tr;
        const Tensor a_s = target_attention_map_traced(stage, mask_s, tr);
        if (!a_s.same_shape(a_t)) {
            throw std::invalid_argument(
                "distill_objective_grad requires matching stage spatial shapes, got " +
                shape_str(a_s.shape()) + " vs " + shape_str(a_t.shape()));
        }
        const Tensor g_map = tcakd_loss_grad_student({a_t, a_s});
        target_attention_map_vjp(stage, mask_s, tr, g_map, g_tmpl[s], g_srch[s]);
    }
    backprop_stream(tmpl, student, g_tmpl, grads);
    backprop_stream(srch, student, g_srch, grads);
    return grads;
}

}  // namespace siamdff
