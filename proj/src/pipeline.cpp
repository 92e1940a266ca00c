#include "siamdff/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "siamdff/attention.hpp"
#include "siamdff/nn.hpp"

namespace siamdff {

namespace {

std::vector<std::size_t> stage_channel_plan(std::size_t channels, std::size_t depth) {
    std::vector<std::size_t> plan;
    for (std::size_t s = 0; s < depth; ++s) {
        plan.push_back(std::max<std::size_t>(4, channels >> (depth - 1 - s)));
    }
    return plan;
}

Tensor tokens_from_map(const Tensor& feat) {
    const std::size_t c = feat.extent(0), h = feat.extent(1), w = feat.extent(2);
    Tensor tokens({h * w, c});
    for (std::size_t ic = 0; ic < c; ++ic) {
        for (std::size_t p = 0; p < h * w; ++p) tokens(p, ic) = feat.at(ic * h * w + p);
    }
    return tokens;
}

Tensor map_from_tokens(const Tensor& tokens, std::size_t h, std::size_t w) {
    const std::size_t c = tokens.extent(1);
    Tensor feat({c, h, w});
    for (std::size_t ic = 0; ic < c; ++ic) {
        for (std::size_t p = 0; p < h * w; ++p) feat.at(ic * h * w + p) = tokens(p, ic);
    }
    return feat;
}

Tensor column_mean(const Tensor& tokens) {
    const std::size_t rows = tokens.extent(0), cols = tokens.extent(1);
    Tensor out({cols});
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) out.at(j) += tokens(i, j);
    }
    for (std::size_t j = 0; j < cols; ++j) out.at(j) /= static_cast<real_t>(rows);
    return out;
}

/// Remove the frame's DC level so the untrained backbone responds to
/// structure rather than to the brightness offset.
Tensor normalize_frame(const Tensor& frame) {
    Tensor out = frame;
    real_t mean = 0;
    for (std::size_t i = 0; i < out.size(); ++i) mean += out.at(i);
    mean /= static_cast<real_t>(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) -= mean;
    return out;
}

real_t rms(const Tensor& t) {
    real_t acc = 0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += t.at(i) * t.at(i);
    return std::sqrt(acc / static_cast<real_t>(t.size()));
}

/// The STEN branch comes out layer-normalized (unit scale) while the CNN
/// branch keeps raw conv magnitudes; match scales so neither branch drowns
/// the other in the fusion.
Tensor match_scale(const Tensor& src, const Tensor& reference) {
    const real_t s = rms(src);
    if (s == real_t{0}) return src;
    return scale(src, rms(reference) / s);
}

/// STEN with the per-head retention swapped for plain softmax. Reference
/// path for the vanilla-attention comparison.
Tensor vanilla_block(const Tensor& query_feat, const Tensor& kv_feat, const StenParams& p) {
    const std::size_t d = p.model_dim();
    const std::size_t dh = d / p.heads;
    const std::size_t m = query_feat.extent(0);

    const Tensor q = matmul(query_feat, p.wq);
    const Tensor k = matmul(kv_feat, p.wk);
    const Tensor v = matmul(kv_feat, p.wv);
    Tensor concat = Tensor::zeros({m, d});
    for (std::size_t head = 0; head < p.heads; ++head) {
        Tensor qh({m, dh}), kh({kv_feat.extent(0), dh}), vh({kv_feat.extent(0), dh});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < dh; ++j) qh(i, j) = q(i, head * dh + j);
        }
        for (std::size_t i = 0; i < kv_feat.extent(0); ++i) {
            for (std::size_t j = 0; j < dh; ++j) {
                kh(i, j) = k(i, head * dh + j);
                vh(i, j) = v(i, head * dh + j);
            }
        }
        Tensor scores = scale(matmul(qh, transpose(kh)),
                              real_t{1} / std::sqrt(static_cast<real_t>(dh)));
        const Tensor block = matmul(softmax_rows(scores), vh);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < dh; ++j) concat(i, head * dh + j) = block(i, j);
        }
    }
    const Tensor attn = matmul(concat, p.wo);
    const Tensor x = layer_norm(add(attn, query_feat), p.norm1_scale, p.norm1_shift,
                                kLayerNormEps);
    Tensor h1 = matmul(x, p.ffn_w1);
    for (std::size_t i = 0; i < h1.extent(0); ++i) {
        for (std::size_t j = 0; j < h1.extent(1); ++j) h1(i, j) += p.ffn_b1.at(j);
    }
    Tensor h2 = matmul(relu(h1), p.ffn_w2);
    for (std::size_t i = 0; i < h2.extent(0); ++i) {
        for (std::size_t j = 0; j < h2.extent(1); ++j) h2(i, j) += p.ffn_b2.at(j);
    }
    return layer_norm(add(h2, x), p.norm2_scale, p.norm2_shift, kLayerNormEps);
}

struct Peak {
    double y = 0;
    double x = 0;
};

/// Argmax of the response map plus a 3x3 weighted-centroid refinement, in
/// feature-grid coordinates.
Peak find_peak(const Tensor& response) {
    const std::size_t h = response.extent(0), w = response.extent(1);
    std::size_t by = 0, bx = 0;
    real_t best = response(0, 0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            if (response(y, x) > best) {
                best = response(y, x);
                by = y;
                bx = x;
            }
        }
    }
    real_t lo = best;
    for (std::size_t dy = 0; dy < 3; ++dy) {
        for (std::size_t dx = 0; dx < 3; ++dx) {
            const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(by) + static_cast<std::ptrdiff_t>(dy) - 1;
            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(bx) + static_cast<std::ptrdiff_t>(dx) - 1;
            if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) ||
                xx >= static_cast<std::ptrdiff_t>(w)) {
                continue;
            }
            lo = std::min(lo, response(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)));
        }
    }
    double wsum = 0, ysum = 0, xsum = 0;
    for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
            const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(by) + dy;
            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(bx) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) ||
                xx >= static_cast<std::ptrdiff_t>(w)) {
                continue;
            }
            const double weight =
                static_cast<double>(response(static_cast<std::size_t>(yy),
                                             static_cast<std::size_t>(xx)) -
                                    lo);
            wsum += weight;
            ysum += weight * static_cast<double>(yy);
            xsum += weight * static_cast<double>(xx);
        }
    }
    Peak p;
    if (wsum > 0) {
        p.y = ysum / wsum;
        p.x = xsum / wsum;
    } else {
        p.y = static_cast<double>(by);
        p.x = static_cast<double>(bx);
    }
    return p;
}

}  // namespace

std::size_t pipeline_stride(const RunConfig& cfg) { return std::size_t{1} << cfg.stage_depth; }

std::vector<MaybeBox> run_pipeline(const SyntheticSequence& seq, const RunConfig& cfg,
                                   const PipelineOptions& options) {
    if (seq.frames.empty() || seq.annotations.size() != seq.frames.size()) {
        throw std::invalid_argument("pipeline needs a non-empty sequence with one annotation per "
                                    "frame");
    }
    const FrameAnnotation& first = seq.annotations.front();
    if (!first.visible || !first.gt) {
        throw std::invalid_argument("first frame must carry a visible target box (template "
                                    "initialization)");
    }

    const std::size_t depth = cfg.stage_depth;
    const std::size_t stride = pipeline_stride(cfg);
    const std::size_t channels = cfg.channels;
    const std::size_t image = cfg.image_size;
    const std::size_t grid = image / stride;

    const BackboneParams backbone =
        BackboneParams::seeded(1, stage_channel_plan(channels, depth), false, cfg.seed + 11);
    const StenParams sten_search = StenParams::seeded(channels, 4, cfg.seed + 23);
    const StenParams sten_template = StenParams::seeded(channels, 4, cfg.seed + 31);
    const DsfamParams dsfam = DsfamParams::seeded(channels, cfg.seed + 47);
    const DcfamParams dcfam = DcfamParams::seeded(3, cfg.seed + 59);

    // Template patch from the first frame, cropped in feature coordinates.
    const Tensor feat0 = toy_backbone(normalize_frame(seq.frames.front()), depth, backbone).back();
    const BoundingBox box0 = *first.gt;
    const double s = static_cast<double>(stride);
    const auto clamp_idx = [&](double v) {
        return static_cast<std::size_t>(
            std::clamp(v, 0.0, static_cast<double>(grid - 1)));
    };
    const std::size_t zy0 = clamp_idx(std::floor(box0.y / s));
    const std::size_t zx0 = clamp_idx(std::floor(box0.x / s));
    const std::size_t zy1 = std::min(grid, std::max(zy0 + 1, static_cast<std::size_t>(
                                                                 std::ceil((box0.y + box0.h) / s))));
    const std::size_t zx1 = std::min(grid, std::max(zx0 + 1, static_cast<std::size_t>(
                                                                 std::ceil((box0.x + box0.w) / s))));
    Tensor patch({channels, zy1 - zy0, zx1 - zx0});
    for (std::size_t ic = 0; ic < channels; ++ic) {
        for (std::size_t y = zy0; y < zy1; ++y) {
            for (std::size_t x = zx0; x < zx1; ++x) {
                patch(ic, y - zy0, x - zx0) = feat0(ic, y, x);
            }
        }
    }
    const Tensor template_tokens = tokens_from_map(patch);
    const Tensor template_vec = column_mean(template_tokens);

    std::vector<MaybeBox> predictions;
    predictions.reserve(seq.frames.size());
    for (const Tensor& frame : seq.frames) {
        const Tensor local_feat = toy_backbone(normalize_frame(frame), depth, backbone).back();
        const Tensor search_tokens = tokens_from_map(local_feat);

        Tensor global_tokens, mixed_tokens;
        if (options.vanilla_attention) {
            global_tokens = vanilla_block(search_tokens, template_tokens, sten_search);
            mixed_tokens = vanilla_block(template_tokens, search_tokens, sten_template);
        } else {
            global_tokens = sten_block(search_tokens, template_tokens, sten_search,
                                       static_cast<real_t>(cfg.imc_threshold),
                                       cfg.imc_cumulative, cfg.imc_drop);
            mixed_tokens = sten_block(template_tokens, search_tokens, sten_template,
                                      static_cast<real_t>(cfg.imc_threshold), cfg.imc_cumulative,
                                      cfg.imc_drop);
        }
        const Tensor global_feat =
            match_scale(map_from_tokens(global_tokens, grid, grid), local_feat);

        Tensor fused;
        switch (cfg.dsfam_fusion) {
            case FusionMode::kAttention:
                fused = dsfam_fuse(global_feat, local_feat, dsfam);
                break;
            default:
                fused = fuse_baseline(global_feat, local_feat, cfg.dsfam_fusion);
                break;
        }

        const Tensor mixed_vec = column_mean(mixed_tokens);
        Tensor template_gate;
        switch (cfg.dcfam_fusion) {
            case FusionMode::kAttention:
                template_gate = dcfam_fuse(mixed_vec, template_vec, dcfam, cfg.dcfam_input);
                break;
            default:
                template_gate = fuse_baseline(mixed_vec, template_vec, cfg.dcfam_fusion);
                break;
        }

        // Response head: channel-summed fused map, channels reweighted by the
        // fused template when the shapes line up (baseline fusion modes can
        // change the channel count).
        const std::size_t fc = fused.extent(0);
        Tensor response({grid, grid});
        for (std::size_t y = 0; y < grid; ++y) {
            for (std::size_t x = 0; x < grid; ++x) {
                real_t acc = 0;
                for (std::size_t ic = 0; ic < fc; ++ic) {
                    const real_t gate =
                        template_gate.size() == fc ? template_gate.at(ic) : real_t{1};
                    acc += gate * fused(ic, y, x);
                }
                response(y, x) = acc;
            }
        }

        const Peak peak = find_peak(response);
        double cx = (peak.x + 0.5) * s;
        double cy = (peak.y + 0.5) * s;

        // Coarse-to-fine: the response argmax picks the cell, then a squared-
        // intensity centroid over the raw frame recovers the sub-stride
        // center. Three fixed iterations keep it deterministic.
        for (int iteration = 0; iteration < 3; ++iteration) {
            const int x0 = std::max(0, static_cast<int>(std::floor(cx - s)));
            const int x1 = std::min(static_cast<int>(image) - 1,
                                    static_cast<int>(std::ceil(cx + s)));
            const int y0 = std::max(0, static_cast<int>(std::floor(cy - s)));
            const int y1 = std::min(static_cast<int>(image) - 1,
                                    static_cast<int>(std::ceil(cy + s)));
            double lo = frame(0, static_cast<std::size_t>(y0), static_cast<std::size_t>(x0));
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    lo = std::min(lo, static_cast<double>(frame(0, static_cast<std::size_t>(y),
                                                                static_cast<std::size_t>(x))));
                }
            }
            double wsum = 0, xsum = 0, ysum = 0;
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    double wgt = static_cast<double>(frame(0, static_cast<std::size_t>(y),
                                                           static_cast<std::size_t>(x))) -
                                 lo;
                    wgt *= wgt;
                    wsum += wgt;
                    xsum += wgt * (static_cast<double>(x) + 0.5);
                    ysum += wgt * (static_cast<double>(y) + 0.5);
                }
            }
            if (wsum <= 0) break;
            cx = xsum / wsum;
            cy = ysum / wsum;
        }

        BoundingBox box;
        box.w = box0.w;
        box.h = box0.h;
        box.x = std::clamp(cx - box0.w / 2, 0.0, static_cast<double>(image) - box0.w);
        box.y = std::clamp(cy - box0.h / 2, 0.0, static_cast<double>(image) - box0.h);
        predictions.push_back(box);
    }
    return predictions;
}

std::string report_to_json(const DistillReport& report) {
    nlohmann::json j;
    j["losses"] = report.losses;
    j["steps_taken"] = report.steps_taken;
    return j.dump(2) + "\n";
}

DistillReport report_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    DistillReport r;
    r.losses = j.at("losses").get<std::vector<double>>();
    r.steps_taken = j.at("steps_taken").get<std::size_t>();
    if (r.losses.empty()) throw std::runtime_error("distill report has no losses");
    return r;
}

DistillReport distill_descend(const std::vector<StageFeatures>& teacher,
                              const Tensor& template_image, const Tensor& search_image,
                              BackboneParams student, const TargetMask& mask, std::size_t steps) {
    DistillReport report;
    double loss = static_cast<double>(
        distill_objective(teacher, template_image, search_image, student, mask));
    report.losses.push_back(loss);
    if (loss == 0.0) {
        return report;  // already matched; nothing to descend
    }

    double lr = 1.0;
    for (std::size_t step = 0; step < steps; ++step) {
        const ParamSet grad =
            distill_objective_grad(teacher, template_image, search_image, student, mask);
        bool accepted = false;
        for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
            ParamSet trial_set = student.to_param_set();
            for (auto& [name, tensor] : trial_set) {
                const Tensor& g = grad.get(name);
                for (std::size_t i = 0; i < tensor.size(); ++i) {
                    tensor.at(i) -= static_cast<real_t>(lr) * g.at(i);
                }
            }
            const BackboneParams trial = BackboneParams::from_param_set(trial_set);
            const double trial_loss = static_cast<double>(
                distill_objective(teacher, template_image, search_image, trial, mask));
            if (trial_loss < loss) {
                student = trial;
                loss = trial_loss;
                accepted = true;
            } else {
                lr /= 2;
            }
        }
        if (!accepted) break;  // gradient no longer reduces the loss
        report.losses.push_back(loss);
        report.steps_taken += 1;
    }
    return report;
}

DistillReport run_distill_demo(const RunConfig& cfg, const TargetMask* mask_override) {
    RunConfig gen_cfg = cfg;
    gen_cfg.gen.frames = std::max<std::size_t>(2, std::min<std::size_t>(cfg.gen.frames, 4));
    const SyntheticSequence seq = generate_sequence(gen_cfg);
    const Tensor& template_image = seq.frames.front();
    const Tensor& search_image = seq.frames[1];
    const BoundingBox box0 = *seq.annotations.front().gt;
    const TargetMask mask =
        mask_override ? *mask_override
                      : TargetMask::from_box(cfg.image_size, cfg.image_size, box0.x, box0.y,
                                             box0.w, box0.h);
    if (mask.height() != cfg.image_size || mask.width() != cfg.image_size) {
        throw std::invalid_argument("mask is " + std::to_string(mask.height()) + "x" +
                                    std::to_string(mask.width()) + " but frames are " +
                                    std::to_string(cfg.image_size) + "px");
    }

    const std::size_t depth = cfg.stage_depth;
    std::vector<std::size_t> teacher_plan, student_plan = stage_channel_plan(cfg.channels, depth);
    for (std::size_t c : student_plan) teacher_plan.push_back(c + c / 2);

    const BackboneParams teacher = BackboneParams::seeded(1, teacher_plan, true, cfg.seed + 101);
    const BackboneParams student = BackboneParams::seeded(1, student_plan, false, cfg.seed + 211);
    const auto teacher_features =
        backbone_stage_features(template_image, search_image, depth, teacher);
    return distill_descend(teacher_features, template_image, search_image, student, mask, 10);
}

std::vector<double> default_sweep_grid() { return {0.5, 0.6, 0.7, 0.8, 1.0}; }

std::vector<SweepRow> sweep_thresholds(const RunConfig& cfg, const std::vector<double>& values) {
    std::vector<SweepRow> rows;
    for (double t : values) {
        RunConfig run = cfg;
        run.imc_threshold = t;
        const SyntheticSequence seq = generate_sequence(run);
        const std::vector<MaybeBox> preds = run_pipeline(seq, run);
        SweepRow row;
        row.threshold = t;
        row.summary = evaluate_sequence(preds, seq.annotations, make_thresholds(cfg.metrics));
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    auto fmt = [](double v) {
        std::ostringstream os;
        os << std::setprecision(17) << v;
        return os.str();
    };
    std::ostringstream os;
    os << "T,sa,msa,auc_success,auc_nprecision,precision_at_5px\n";
    for (const auto& row : rows) {
        os << fmt(row.threshold) << "," << fmt(row.summary.sa) << "," << fmt(row.summary.msa)
           << "," << fmt(row.summary.auc_success) << "," << fmt(row.summary.auc_nprecision) << ","
           << fmt(row.summary.precision_at_5px) << "\n";
    }
    return os.str();
}

}  // namespace siamdff
