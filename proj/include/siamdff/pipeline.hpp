#pragma once

#include <string>
#include <vector>

#include "siamdff/config.hpp"
#include "siamdff/distill.hpp"
#include "siamdff/metrics.hpp"
#include "siamdff/synthetic.hpp"

namespace siamdff {

struct PipelineOptions {
    /// Replace the masked attention inside both STEN blocks with plain
    /// cross-attention; reference path for the threshold ablation.
    bool vanilla_attention = false;
};

/// Template-initialized tracking over a sequence: toy backbone features,
/// STEN interaction on both branches, DSFAM/DCFAM fusion, then an
/// argmax-response head whose box extent is copied from the template box.
/// The first annotation must be visible.
std::vector<MaybeBox> run_pipeline(const SyntheticSequence& seq, const RunConfig& cfg,
                                   const PipelineOptions& options = {});

/// Feature stride of the pipeline under this config.
std::size_t pipeline_stride(const RunConfig& cfg);

struct DistillReport {
    std::vector<double> losses;  // losses[0] is the initial loss
    std::size_t steps_taken = 0;

    double initial_loss() const { return losses.front(); }
    double final_loss() const { return losses.back(); }
};

std::string report_to_json(const DistillReport& report);
DistillReport report_from_json(const std::string& text);

/// Gradient descent of the student kernels against fixed teacher attention
/// maps. Returns the loss after every accepted step; exits immediately when
/// the initial loss is already zero.
DistillReport distill_descend(const std::vector<StageFeatures>& teacher,
                              const Tensor& template_image, const Tensor& search_image,
                              BackboneParams student, const TargetMask& mask, std::size_t steps);

/// Builds a deeper, wider toy teacher and a smaller student on a synthetic
/// frame pair, then runs distill_descend for ten steps. The mask defaults to
/// the rasterized first-frame target box; pass one to override (e.g. loaded
/// from a mask file).
DistillReport run_distill_demo(const RunConfig& cfg, const TargetMask* mask_override = nullptr);

struct SweepRow {
    double threshold = 0;
    MetricSummary summary;
};

/// One tracked-and-scored run per threshold value, same seed throughout.
std::vector<SweepRow> sweep_thresholds(const RunConfig& cfg, const std::vector<double>& values);
std::vector<double> default_sweep_grid();  // {0.5, 0.6, 0.7, 0.8, 1.0}
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace siamdff
