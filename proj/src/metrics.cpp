#include "siamdff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace siamdff {

namespace {

void check_box(const BoundingBox& b, const char* op) {
    if (b.w < 0 || b.h < 0) {
        throw std::invalid_argument(std::string(op) + ": negative box extents");
    }
}

void check_lengths(std::size_t preds, std::size_t annos, const char* op) {
    if (preds != annos) {
        throw std::invalid_argument(std::string(op) + ": " + std::to_string(preds) +
                                    " predictions vs " + std::to_string(annos) + " annotations");
    }
}

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

double iou(const BoundingBox& a, const BoundingBox& b) {
    check_box(a, "iou");
    check_box(b, "iou");
    const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

double center_error(const BoundingBox& pred, const BoundingBox& gt) {
    check_box(pred, "center_error");
    check_box(gt, "center_error");
    return std::hypot(pred.cx() - gt.cx(), pred.cy() - gt.cy());
}

double normalized_center_error(const BoundingBox& pred, const BoundingBox& gt) {
    if (gt.w <= 0 || gt.h <= 0) {
        throw std::invalid_argument("normalized_center_error: degenerate ground-truth extents");
    }
    return std::hypot((pred.cx() - gt.cx()) / gt.w, (pred.cy() - gt.cy()) / gt.h);
}

std::vector<double> default_precision_thresholds() {
    std::vector<double> t;
    for (int i = 0; i <= 50; ++i) t.push_back(static_cast<double>(i));
    return t;
}

std::vector<double> default_success_thresholds() {
    std::vector<double> t;
    for (int i = 0; i <= 20; ++i) t.push_back(static_cast<double>(i) * 5 / 100.0);
    return t;
}

std::vector<double> default_nprecision_thresholds() {
    std::vector<double> t;
    for (int i = 0; i <= 100; ++i) t.push_back(static_cast<double>(i) * 5 / 1000.0);
    return t;
}

namespace {

void check_thresholds(const std::vector<double>& thresholds, const char* op) {
    if (thresholds.empty()) {
        throw std::invalid_argument(std::string(op) + ": no thresholds");
    }
    for (std::size_t i = 1; i < thresholds.size(); ++i) {
        if (!(thresholds[i] > thresholds[i - 1])) {
            throw std::invalid_argument(std::string(op) + ": thresholds must strictly ascend");
        }
    }
}

MetricCurve error_cdf_curve(const std::vector<double>& errors,
                            const std::vector<double>& thresholds, const char* op) {
    if (errors.empty()) {
        throw std::runtime_error(std::string(op) + ": no counted frames");
    }
    MetricCurve curve;
    curve.thresholds = thresholds;
    curve.values.reserve(thresholds.size());
    for (double t : thresholds) {
        std::size_t hits = 0;
        for (double e : errors) {
            if (e <= t) ++hits;
        }
        curve.values.push_back(static_cast<double>(hits) / static_cast<double>(errors.size()));
    }
    return curve;
}

}  // namespace

MetricCurve precision_curve(const std::vector<MaybeBox>& preds,
                            const std::vector<FrameAnnotation>& annos,
                            const std::vector<double>& thresholds) {
    check_lengths(preds.size(), annos.size(), "precision_curve");
    check_thresholds(thresholds, "precision_curve");
    std::vector<double> errors;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!annos[i].visible || !annos[i].gt || !preds[i]) continue;
        errors.push_back(center_error(*preds[i], *annos[i].gt));
    }
    return error_cdf_curve(errors, thresholds, "precision_curve");
}

MetricCurve normalized_precision_curve(const std::vector<MaybeBox>& preds,
                                       const std::vector<FrameAnnotation>& annos,
                                       const std::vector<double>& thresholds) {
    check_lengths(preds.size(), annos.size(), "normalized_precision_curve");
    check_thresholds(thresholds, "normalized_precision_curve");
    std::vector<double> errors;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!annos[i].visible || !annos[i].gt || !preds[i]) continue;
        errors.push_back(normalized_center_error(*preds[i], *annos[i].gt));
    }
    return error_cdf_curve(errors, thresholds, "normalized_precision_curve");
}

MetricCurve success_curve(const std::vector<MaybeBox>& preds,
                          const std::vector<FrameAnnotation>& annos,
                          const std::vector<double>& thresholds) {
    check_lengths(preds.size(), annos.size(), "success_curve");
    check_thresholds(thresholds, "success_curve");
    std::vector<double> overlaps;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!annos[i].visible || !annos[i].gt) continue;
        overlaps.push_back(preds[i] ? iou(*preds[i], *annos[i].gt) : 0.0);
    }
    if (overlaps.empty()) {
        throw std::runtime_error("success_curve: no counted frames");
    }
    MetricCurve curve;
    curve.thresholds = thresholds;
    for (double t : thresholds) {
        std::size_t hits = 0;
        for (double v : overlaps) {
            if (v > t) ++hits;  // strict: the overlap must exceed the threshold
        }
        curve.values.push_back(static_cast<double>(hits) / static_cast<double>(overlaps.size()));
    }
    return curve;
}

double auc(const MetricCurve& curve) {
    if (curve.values.empty()) {
        throw std::invalid_argument("auc: empty curve");
    }
    double acc = 0;
    for (double v : curve.values) acc += v;
    return acc / static_cast<double>(curve.values.size());
}

double curve_value_at(const MetricCurve& curve, double threshold) {
    for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
        if (std::abs(curve.thresholds[i] - threshold) < 1e-9) return curve.values[i];
    }
    throw std::invalid_argument("curve has no sample at threshold " + format_double(threshold));
}

double state_accuracy(const std::vector<MaybeBox>& preds,
                      const std::vector<FrameAnnotation>& annos) {
    check_lengths(preds.size(), annos.size(), "state_accuracy");
    if (preds.empty()) {
        throw std::invalid_argument("state_accuracy: no frames");
    }
    double acc = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (annos[i].visible) {
            acc += (preds[i] && annos[i].gt) ? iou(*preds[i], *annos[i].gt) : 0.0;
        } else {
            acc += preds[i] ? 0.0 : 1.0;
        }
    }
    return acc / static_cast<double>(preds.size());
}

double msa(const std::vector<double>& per_sequence_sa) {
    if (per_sequence_sa.empty()) {
        throw std::invalid_argument("msa: empty list");
    }
    double acc = 0;
    for (double v : per_sequence_sa) acc += v;
    return acc / static_cast<double>(per_sequence_sa.size());
}

MetricSummary evaluate_sequence(const std::vector<MaybeBox>& preds,
                                const std::vector<FrameAnnotation>& annos,
                                const MetricThresholds& thresholds) {
    MetricSummary s;
    s.sa = state_accuracy(preds, annos);
    s.msa = s.sa;  // single sequence
    s.auc_success = auc(success_curve(preds, annos, thresholds.success));
    s.auc_nprecision = auc(normalized_precision_curve(preds, annos, thresholds.nprecision));
    s.precision_at_5px = curve_value_at(precision_curve(preds, annos, thresholds.precision), 5.0);
    return s;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double_field(const std::string& field, std::size_t line_no, const char* what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(field, &pos);
        if (pos != field.size()) throw std::invalid_argument(field);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("line " + std::to_string(line_no) + ": bad " + what + " '" +
                                 field + "'");
    }
}

struct CsvRow {
    int frame = 0;
    MaybeBox box;
    bool visible = false;
    std::vector<std::string> tags;
};

std::vector<CsvRow> parse_rows(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<CsvRow> rows;
    bool saw_header = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!saw_header) {
            if (line.rfind("frame,x,y,w,h,visible", 0) != 0) {
                throw std::runtime_error("line " + std::to_string(line_no) +
                                         ": expected header 'frame,x,y,w,h,visible'");
            }
            saw_header = true;
            continue;
        }
        const auto fields = split_fields(line);
        if (fields.size() != 6 && fields.size() != 7) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": expected 6 or 7 " +
                                     "fields, got " + std::to_string(fields.size()));
        }
        CsvRow row;
        row.frame = static_cast<int>(parse_double_field(fields[0], line_no, "frame index"));
        const bool blank = fields[1].empty() && fields[2].empty() && fields[3].empty() &&
                           fields[4].empty();
        const bool any_blank = fields[1].empty() || fields[2].empty() || fields[3].empty() ||
                               fields[4].empty();
        if (any_blank && !blank) {
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": box fields must be all blank or all present");
        }
        if (!blank) {
            BoundingBox b;
            b.x = parse_double_field(fields[1], line_no, "x");
            b.y = parse_double_field(fields[2], line_no, "y");
            b.w = parse_double_field(fields[3], line_no, "w");
            b.h = parse_double_field(fields[4], line_no, "h");
            if (b.w < 0 || b.h < 0) {
                throw std::runtime_error("line " + std::to_string(line_no) +
                                         ": negative box extents");
            }
            row.box = b;
        }
        if (fields[5] == "1") {
            row.visible = true;
        } else if (fields[5] == "0") {
            row.visible = false;
        } else {
            throw std::runtime_error("line " + std::to_string(line_no) + ": visible must be 0 or 1");
        }
        if (fields.size() == 7 && !fields[6].empty()) {
            std::string tag;
            for (char ch : fields[6]) {
                if (ch == ';') {
                    if (!tag.empty()) row.tags.push_back(tag);
                    tag.clear();
                } else {
                    tag += ch;
                }
            }
            if (!tag.empty()) row.tags.push_back(tag);
        }
        rows.push_back(std::move(row));
    }
    if (!saw_header) {
        throw std::runtime_error("line 1: empty file, expected header 'frame,x,y,w,h,visible'");
    }
    return rows;
}

void append_row(std::ostringstream& os, int frame, const MaybeBox& box, bool visible,
                const std::vector<std::string>& tags, bool with_tags) {
    os << frame << ",";
    if (box) {
        os << format_double(box->x) << "," << format_double(box->y) << ","
           << format_double(box->w) << "," << format_double(box->h);
    } else {
        os << ",,,";
    }
    os << "," << (visible ? 1 : 0);
    if (with_tags) {
        os << ",";
        for (std::size_t i = 0; i < tags.size(); ++i) {
            if (i > 0) os << ";";
            os << tags[i];
        }
    }
    os << "\n";
}

}  // namespace

std::string annotations_to_csv(const std::vector<FrameAnnotation>& annos) {
    bool with_tags = false;
    for (const auto& a : annos) with_tags = with_tags || !a.tags.empty();
    std::ostringstream os;
    os << "frame,x,y,w,h,visible" << (with_tags ? ",tags" : "") << "\n";
    for (const auto& a : annos) {
        append_row(os, a.frame_index, a.gt, a.visible, a.tags, with_tags);
    }
    return os.str();
}

std::vector<FrameAnnotation> annotations_from_csv(const std::string& text) {
    std::vector<FrameAnnotation> out;
    for (const auto& row : parse_rows(text)) {
        if (row.visible && !row.box) {
            throw std::runtime_error("annotation for frame " + std::to_string(row.frame) +
                                     " is visible but has no box");
        }
        FrameAnnotation a;
        a.frame_index = row.frame;
        a.gt = row.box;
        a.visible = row.visible;
        a.tags = row.tags;
        out.push_back(std::move(a));
    }
    return out;
}

std::string predictions_to_csv(const std::vector<MaybeBox>& preds) {
    std::ostringstream os;
    os << "frame,x,y,w,h,visible\n";
    for (std::size_t i = 0; i < preds.size(); ++i) {
        append_row(os, static_cast<int>(i), preds[i], preds[i].has_value(), {}, false);
    }
    return os.str();
}

std::vector<MaybeBox> predictions_from_csv(const std::string& text) {
    std::vector<MaybeBox> out;
    for (const auto& row : parse_rows(text)) {
        out.push_back(row.box);
    }
    return out;
}

std::string curve_to_csv(const MetricCurve& curve) {
    std::ostringstream os;
    os << "threshold,value\n";
    for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
        os << format_double(curve.thresholds[i]) << "," << format_double(curve.values[i]) << "\n";
    }
    return os.str();
}

MetricCurve curve_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    MetricCurve curve;
    bool saw_header = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != "threshold,value") {
                throw std::runtime_error("line " + std::to_string(line_no) +
                                         ": expected header 'threshold,value'");
            }
            saw_header = true;
            continue;
        }
        const auto fields = split_fields(line);
        if (fields.size() != 2) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": expected 2 fields");
        }
        curve.thresholds.push_back(parse_double_field(fields[0], line_no, "threshold"));
        curve.values.push_back(parse_double_field(fields[1], line_no, "value"));
    }
    if (!saw_header) {
        throw std::runtime_error("line 1: empty file, expected header 'threshold,value'");
    }
    return curve;
}

std::string summary_to_json(const MetricSummary& summary) {
    nlohmann::json j;
    j["sa"] = summary.sa;
    j["msa"] = summary.msa;
    j["auc_success"] = summary.auc_success;
    j["auc_nprecision"] = summary.auc_nprecision;
    j["precision_at_5px"] = summary.precision_at_5px;
    return j.dump(2) + "\n";
}

MetricSummary summary_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    MetricSummary s;
    s.sa = j.at("sa").get<double>();
    s.msa = j.at("msa").get<double>();
    s.auc_success = j.at("auc_success").get<double>();
    s.auc_nprecision = j.at("auc_nprecision").get<double>();
    s.precision_at_5px = j.at("precision_at_5px").get<double>();
    return s;
}

void filter_by_tag(std::vector<MaybeBox>& preds, std::vector<FrameAnnotation>& annos,
                   const std::string& tag) {
    check_lengths(preds.size(), annos.size(), "filter_by_tag");
    std::vector<MaybeBox> fp;
    std::vector<FrameAnnotation> fa;
    for (std::size_t i = 0; i < annos.size(); ++i) {
        if (std::find(annos[i].tags.begin(), annos[i].tags.end(), tag) != annos[i].tags.end()) {
            fp.push_back(preds[i]);
            fa.push_back(annos[i]);
        }
    }
    preds = std::move(fp);
    annos = std::move(fa);
}

}  // namespace siamdff
