#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "siamdff/params.hpp"
#include "siamdff/tensor.hpp"

namespace siamdff {

/// Binary template-resolution grid: 1 on target pixels, 0 elsewhere. Always
/// contains at least one 1.
class TargetMask {
public:
    static TargetMask from_grid(Tensor grid);
    static TargetMask from_box(std::size_t height, std::size_t width, double x, double y,
                               double w, double h);

    const Tensor& grid() const { return grid_; }
    std::size_t height() const { return grid_.extent(0); }
    std::size_t width() const { return grid_.extent(1); }

    /// Nearest-neighbor resample. If no 1 survives, a single 1 is planted at
    /// the resampled centroid of the source target region.
    TargetMask resample(std::size_t height, std::size_t width) const;

    /// Plain text grid of 0/1 with a "H W" header line.
    std::string to_text() const;
    static TargetMask parse(const std::string& text);

private:
    explicit TargetMask(Tensor grid) : grid_(std::move(grid)) {}
    Tensor grid_;
};

/// Matched template/search feature maps from one backbone stage.
struct StageFeatures {
    Tensor f_z;  // [C,Hz,Wz] template
    Tensor f_x;  // [C,Hx,Wx] search
    int stage_id = 0;
};

/// Teacher/student attention maps over the search frame, both post-sigmoid.
struct AttentionMapPair {
    Tensor teacher;  // A_t, [Hx,Wx]
    Tensor student;  // A_s, same shape
};

struct AttentionTrace {
    Tensor gated;        // [C, Hz*Wz] mask-gated template features
    Tensor weights;      // [Hz*Wz, Hx*Wx], each column sums to 1
    Tensor channel_sum;  // [Hx*Wx] pre-sigmoid
    Tensor map;          // [Hx,Wx]
};

/// Target-gated template-to-search contextual attention, reduced over
/// channels by summation and squashed through a sigmoid. The mask gates the
/// template-side keys and values.
Tensor target_attention_map(const StageFeatures& f, const TargetMask& mask);
Tensor target_attention_map_traced(const StageFeatures& f, const TargetMask& mask,
                                   AttentionTrace& trace);
void target_attention_map_vjp(const StageFeatures& f, const TargetMask& mask,
                              const AttentionTrace& trace, const Tensor& gmap, Tensor& g_fz,
                              Tensor& g_fx);

/// Mean absolute difference over all search positions.
real_t tcakd_loss(const AttentionMapPair& pair);

/// d tcakd_loss / d student map.
Tensor tcakd_loss_grad_student(const AttentionMapPair& pair);

/// Bilinear resample of a [H,W] map (used when teacher and student stage
/// shapes disagree spatially).
Tensor bilinear_resample(const Tensor& map, std::size_t height, std::size_t width);

/// Sum of per-stage losses; the mask is resampled per stage, and student
/// maps are resampled to the teacher's shape when they disagree.
real_t multistage_distill(const std::vector<StageFeatures>& teacher,
                          const std::vector<StageFeatures>& student, const TargetMask& mask);

// Toy backbone: a stack of 3x3 conv + ReLU + stride-2 stages. Stand-in for a
// trained feature extractor, deterministic under seed.
struct BackboneParams {
    std::vector<Tensor> stage_kernels;   // [C_out,C_in,3,3]
    std::vector<Tensor> stage_kernels2;  // optional second conv per stage
    bool double_conv = false;

    std::size_t stages() const { return stage_kernels.size(); }
    static BackboneParams seeded(std::size_t in_channels,
                                 const std::vector<std::size_t>& stage_channels, bool double_conv,
                                 std::uint64_t seed);
    ParamSet to_param_set() const;
    static BackboneParams from_param_set(const ParamSet& set);
};

/// Runs the first `depth` stages; each halves the spatial extents. H and W
/// must be divisible by 2^depth.
std::vector<Tensor> toy_backbone(const Tensor& image, std::size_t depth,
                                 const BackboneParams& params);

std::vector<StageFeatures> backbone_stage_features(const Tensor& template_image,
                                                   const Tensor& search_image, std::size_t depth,
                                                   const BackboneParams& params);

/// Distillation objective for the demo: multistage loss of a fixed teacher
/// stack against the student backbone applied to the same image pair, with
/// the analytic gradient w.r.t. the student's kernels.
real_t distill_objective(const std::vector<StageFeatures>& teacher, const Tensor& template_image,
                         const Tensor& search_image, const BackboneParams& student,
                         const TargetMask& mask);
ParamSet distill_objective_grad(const std::vector<StageFeatures>& teacher,
                                const Tensor& template_image, const Tensor& search_image,
                                const BackboneParams& student, const TargetMask& mask);

}  // namespace siamdff
