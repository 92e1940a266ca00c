#pragma once

#include <optional>
#include <string>
#include <vector>

namespace siamdff {

/// Axis-aligned box in pixels, top-left anchored. An empty optional means
/// the tracker asserts the target is absent.
struct BoundingBox {
    double x = 0;
    double y = 0;
    double w = 0;
    double h = 0;

    double area() const { return w * h; }
    double cx() const { return x + w / 2; }
    double cy() const { return y + h / 2; }
};

using MaybeBox = std::optional<BoundingBox>;

struct FrameAnnotation {
    int frame_index = 0;
    MaybeBox gt;
    bool visible = false;
    std::vector<std::string> tags;  // optional attribute labels
};

/// (threshold, value) samples; thresholds strictly ascending, values in [0,1].
struct MetricCurve {
    std::vector<double> thresholds;
    std::vector<double> values;
};

double iou(const BoundingBox& a, const BoundingBox& b);
double center_error(const BoundingBox& pred, const BoundingBox& gt);
double normalized_center_error(const BoundingBox& pred, const BoundingBox& gt);

std::vector<double> default_precision_thresholds();       // 0..50 px step 1
std::vector<double> default_success_thresholds();         // 0..1 step 0.05
std::vector<double> default_nprecision_thresholds();      // 0..0.5 step 0.005

/// Fraction of counted frames with center error <= t. Frames with invisible
/// targets or EMPTY predictions are not counted (no center exists).
MetricCurve precision_curve(const std::vector<MaybeBox>& preds,
                            const std::vector<FrameAnnotation>& annos,
                            const std::vector<double>& thresholds);

MetricCurve normalized_precision_curve(const std::vector<MaybeBox>& preds,
                                       const std::vector<FrameAnnotation>& annos,
                                       const std::vector<double>& thresholds);

/// Fraction of visible frames with IoU strictly greater than t; an EMPTY
/// prediction on a visible frame scores IoU 0.
MetricCurve success_curve(const std::vector<MaybeBox>& preds,
                          const std::vector<FrameAnnotation>& annos,
                          const std::vector<double>& thresholds);

/// Discrete AUC: the arithmetic mean of the sampled values.
double auc(const MetricCurve& curve);

/// Value of the curve at the given threshold (exact grid point required).
double curve_value_at(const MetricCurve& curve, double threshold);

/// Mean over frames of IoU on visible frames and the EMPTY-prediction
/// indicator on invisible ones.
double state_accuracy(const std::vector<MaybeBox>& preds,
                      const std::vector<FrameAnnotation>& annos);

double msa(const std::vector<double>& per_sequence_sa);

struct MetricSummary {
    double sa = 0;
    double msa = 0;
    double auc_success = 0;
    double auc_nprecision = 0;
    double precision_at_5px = 0;
};

struct MetricThresholds {
    std::vector<double> precision = default_precision_thresholds();
    std::vector<double> success = default_success_thresholds();
    std::vector<double> nprecision = default_nprecision_thresholds();
};

MetricSummary evaluate_sequence(const std::vector<MaybeBox>& preds,
                                const std::vector<FrameAnnotation>& annos,
                                const MetricThresholds& thresholds = {});

// File formats. One CSV line per frame: frame,x,y,w,h,visible with the box
// fields blank for EMPTY; header line required; an optional trailing column
// carries semicolon-separated attribute tags.
std::string annotations_to_csv(const std::vector<FrameAnnotation>& annos);
std::vector<FrameAnnotation> annotations_from_csv(const std::string& text);
std::string predictions_to_csv(const std::vector<MaybeBox>& preds);
std::vector<MaybeBox> predictions_from_csv(const std::string& text);

std::string curve_to_csv(const MetricCurve& curve);
MetricCurve curve_from_csv(const std::string& text);

std::string summary_to_json(const MetricSummary& summary);
MetricSummary summary_from_json(const std::string& text);

/// Keep only frames whose annotation carries the tag (predictions filtered
/// in lockstep).
void filter_by_tag(std::vector<MaybeBox>& preds, std::vector<FrameAnnotation>& annos,
                   const std::string& tag);

}  // namespace siamdff
