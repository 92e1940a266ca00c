// Python bindings for the core operations. Tensors cross the boundary as
// numpy float64 arrays; boxes as (x, y, w, h) tuples or None for EMPTY.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <stdexcept>
#include <vector>

#include "siamdff/attention.hpp"
#include "siamdff/config.hpp"
#include "siamdff/distill.hpp"
#include "siamdff/fusion.hpp"
#include "siamdff/grad.hpp"
#include "siamdff/metrics.hpp"
#include "siamdff/nn.hpp"
#include "siamdff/pipeline.hpp"
#include "siamdff/synthetic.hpp"

namespace py = pybind11;
using namespace siamdff;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<std::size_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) {
        shape[static_cast<std::size_t>(i)] = static_cast<std::size_t>(a.shape(i));
    }
    std::vector<real_t> data(static_cast<std::size_t>(a.size()));
    const double* src = a.data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<real_t>(src[i]);
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.rank());
    for (std::size_t i = 0; i < t.rank(); ++i) {
        shape[i] = static_cast<py::ssize_t>(t.shape()[i]);
    }
    py::array_t<double> out(shape);
    double* dst = out.mutable_data();
    for (std::size_t i = 0; i < t.size(); ++i) dst[i] = static_cast<double>(t.at(i));
    return out;
}

using NpArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

BoundingBox box_from_tuple(const std::tuple<double, double, double, double>& t) {
    return BoundingBox{std::get<0>(t), std::get<1>(t), std::get<2>(t), std::get<3>(t)};
}

using PyBox = std::optional<std::tuple<double, double, double, double>>;

MaybeBox maybe_box(const PyBox& b) {
    if (!b) return std::nullopt;
    return box_from_tuple(*b);
}

PoolMode pool_mode(const std::string& mode) {
    if (mode == "max") return PoolMode::kMax;
    if (mode == "avg") return PoolMode::kAvg;
    throw std::invalid_argument("mode must be 'max' or 'avg'");
}

CumulativeMode cumulative_mode(const std::string& mode) {
    if (mode == "mass") return CumulativeMode::kMass;
    if (mode == "raw") return CumulativeMode::kRaw;
    throw std::invalid_argument("cumulative must be 'mass' or 'raw'");
}

DropMode drop_mode(const std::string& mode) {
    if (mode == "neg-inf") return DropMode::kNegInf;
    if (mode == "zero-logit") return DropMode::kZeroLogit;
    throw std::invalid_argument("drop must be 'neg-inf' or 'zero-logit'");
}

std::vector<FrameAnnotation> annos_from_py(
    const std::vector<std::tuple<int, PyBox, bool>>& annos) {
    std::vector<FrameAnnotation> out;
    for (const auto& [frame, box, visible] : annos) {
        FrameAnnotation a;
        a.frame_index = frame;
        a.gt = maybe_box(box);
        a.visible = visible;
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<MaybeBox> preds_from_py(const std::vector<PyBox>& preds) {
    std::vector<MaybeBox> out;
    for (const auto& b : preds) out.push_back(maybe_box(b));
    return out;
}

py::dict curve_to_py(const MetricCurve& c) {
    py::dict d;
    d["thresholds"] = c.thresholds;
    d["values"] = c.values;
    return d;
}

}  // namespace

PYBIND11_MODULE(_siamdff, m) {
    m.doc() = "dense-tensor tracker components: masked cross-attention, dual-branch "
              "fusion, attention distillation, and tracking metrics";

    // Tensor primitives.
    m.def("matmul", [](const NpArray& a, const NpArray& b) {
        return array_from_tensor(matmul(tensor_from_array(a), tensor_from_array(b)));
    });
    m.def("softmax_rows", [](const NpArray& x) {
        return array_from_tensor(softmax_rows(tensor_from_array(x)));
    });
    m.def("sigmoid", [](const NpArray& x) {
        return array_from_tensor(sigmoid(tensor_from_array(x)));
    });
    m.def("layer_norm", [](const NpArray& x, const NpArray& scale, const NpArray& shift,
                           double eps) {
        return array_from_tensor(layer_norm(tensor_from_array(x), tensor_from_array(scale),
                                            tensor_from_array(shift), static_cast<real_t>(eps)));
    }, py::arg("x"), py::arg("scale"), py::arg("shift"), py::arg("eps") = 1e-5);
    m.def("conv2d", [](const NpArray& x, const NpArray& kernel, std::size_t padding) {
        return array_from_tensor(conv2d(tensor_from_array(x), tensor_from_array(kernel), padding));
    }, py::arg("x"), py::arg("kernel"), py::arg("padding"));
    m.def("conv1d_channels", [](const NpArray& v, const NpArray& kernel) {
        return array_from_tensor(conv1d_channels(tensor_from_array(v), tensor_from_array(kernel)));
    });
    m.def("pool_over_channels", [](const NpArray& x, const std::string& mode) {
        return array_from_tensor(pool_over_channels(tensor_from_array(x), pool_mode(mode)));
    }, py::arg("x"), py::arg("mode"));

    // Attention.
    m.def("cross_attention", [](const NpArray& q, const NpArray& k, const NpArray& v) {
        return array_from_tensor(
            cross_attention(tensor_from_array(q), tensor_from_array(k), tensor_from_array(v)));
    });
    m.def("imc", [](const NpArray& q, const NpArray& k, const NpArray& v, double threshold,
                    const std::string& cumulative, const std::string& drop) {
        return array_from_tensor(imc(tensor_from_array(q), tensor_from_array(k),
                                     tensor_from_array(v), static_cast<real_t>(threshold),
                                     cumulative_mode(cumulative), drop_mode(drop)));
    }, py::arg("q"), py::arg("k"), py::arg("v"), py::arg("threshold"),
       py::arg("cumulative") = "mass", py::arg("drop") = "neg-inf");
    m.def("imc_mask", [](const NpArray& scores, double threshold, const std::string& cumulative) {
        const auto sel = imc_mask(tensor_from_array(scores), static_cast<real_t>(threshold),
                                  cumulative_mode(cumulative));
        return py::make_tuple(array_from_tensor(sel.retain_mask),
                              array_from_tensor(sel.per_row_cutoff));
    }, py::arg("scores"), py::arg("threshold"), py::arg("cumulative") = "mass");

    py::class_<StenParams>(m, "StenParams")
        .def_static("seeded", &StenParams::seeded, py::arg("model_dim"), py::arg("heads"),
                    py::arg("seed"))
        .def_property_readonly("model_dim", &StenParams::model_dim)
        .def_readonly("heads", &StenParams::heads);
    m.def("sten_block", [](const NpArray& query, const NpArray& kv, const StenParams& params,
                           double threshold, const std::string& cumulative,
                           const std::string& drop) {
        return array_from_tensor(sten_block(tensor_from_array(query), tensor_from_array(kv),
                                            params, static_cast<real_t>(threshold),
                                            cumulative_mode(cumulative), drop_mode(drop)));
    }, py::arg("query"), py::arg("kv"), py::arg("params"), py::arg("threshold") = 0.7,
       py::arg("cumulative") = "mass", py::arg("drop") = "neg-inf");

    // Fusion.
    py::class_<DsfamParams>(m, "DsfamParams")
        .def_static("seeded", &DsfamParams::seeded, py::arg("channels"), py::arg("seed"));
    py::class_<DcfamParams>(m, "DcfamParams")
        .def_static("seeded", &DcfamParams::seeded, py::arg("kernel_size"), py::arg("seed"));
    m.def("dsfam_fuse", [](const NpArray& f_t, const NpArray& f_c, const DsfamParams& params) {
        return array_from_tensor(
            dsfam_fuse(tensor_from_array(f_t), tensor_from_array(f_c), params));
    });
    m.def("dsfam_weights", [](const NpArray& f_f, const DsfamParams& params) {
        const auto w = dsfam_weights(tensor_from_array(f_f), params);
        return py::make_tuple(array_from_tensor(w.alpha1), array_from_tensor(w.beta1));
    });
    m.def("dcfam_fuse", [](const NpArray& t_m, const NpArray& t_o, const DcfamParams& params,
                           const std::string& input) {
        const DcfamInput mode = input == "per-branch" ? DcfamInput::kPerBranch
                                                      : DcfamInput::kFused;
        if (input != "fused" && input != "per-branch") {
            throw std::invalid_argument("input must be 'fused' or 'per-branch'");
        }
        return array_from_tensor(
            dcfam_fuse(tensor_from_array(t_m), tensor_from_array(t_o), params, mode));
    }, py::arg("t_m"), py::arg("t_o"), py::arg("params"), py::arg("input") = "fused");
    m.def("fuse_baseline", [](const NpArray& a, const NpArray& b, const std::string& mode) {
        FusionMode fm;
        if (mode == "sum") {
            fm = FusionMode::kSum;
        } else if (mode == "concat") {
            fm = FusionMode::kConcat;
        } else {
            throw std::invalid_argument("mode must be 'sum' or 'concat'");
        }
        return array_from_tensor(fuse_baseline(tensor_from_array(a), tensor_from_array(b), fm));
    });

    // Distillation.
    m.def("target_attention_map", [](const NpArray& f_z, const NpArray& f_x, const NpArray& mask) {
        StageFeatures f{tensor_from_array(f_z), tensor_from_array(f_x), 0};
        return array_from_tensor(
            target_attention_map(f, TargetMask::from_grid(tensor_from_array(mask))));
    }, py::arg("f_z"), py::arg("f_x"), py::arg("mask"));
    m.def("tcakd_loss", [](const NpArray& teacher, const NpArray& student) {
        return static_cast<double>(
            tcakd_loss({tensor_from_array(teacher), tensor_from_array(student)}));
    });

    // Metrics.
    m.def("iou", [](const std::tuple<double, double, double, double>& a,
                    const std::tuple<double, double, double, double>& b) {
        return iou(box_from_tuple(a), box_from_tuple(b));
    });
    m.def("center_error", [](const std::tuple<double, double, double, double>& a,
                             const std::tuple<double, double, double, double>& b) {
        return center_error(box_from_tuple(a), box_from_tuple(b));
    });
    m.def("normalized_center_error", [](const std::tuple<double, double, double, double>& a,
                                        const std::tuple<double, double, double, double>& b) {
        return normalized_center_error(box_from_tuple(a), box_from_tuple(b));
    });
    m.def("state_accuracy",
          [](const std::vector<PyBox>& preds, const std::vector<std::tuple<int, PyBox, bool>>& annos) {
              return state_accuracy(preds_from_py(preds), annos_from_py(annos));
          });
    m.def("precision_curve",
          [](const std::vector<PyBox>& preds, const std::vector<std::tuple<int, PyBox, bool>>& annos,
             const std::vector<double>& thresholds) {
              return curve_to_py(precision_curve(preds_from_py(preds), annos_from_py(annos),
                                                 thresholds.empty() ? default_precision_thresholds()
                                                                    : thresholds));
          }, py::arg("preds"), py::arg("annos"), py::arg("thresholds") = std::vector<double>{});
    m.def("success_curve",
          [](const std::vector<PyBox>& preds, const std::vector<std::tuple<int, PyBox, bool>>& annos,
             const std::vector<double>& thresholds) {
              return curve_to_py(success_curve(preds_from_py(preds), annos_from_py(annos),
                                               thresholds.empty() ? default_success_thresholds()
                                                                  : thresholds));
          }, py::arg("preds"), py::arg("annos"), py::arg("thresholds") = std::vector<double>{});
    m.def("auc", [](const std::vector<double>& thresholds, const std::vector<double>& values) {
        return auc(MetricCurve{thresholds, values});
    });
    m.def("msa", &msa);

    // Harness.
    m.def("generate_sequence", [](std::uint64_t seed, std::size_t frames, std::size_t image_size,
                                  double clutter, double target_min, double target_max) {
        RunConfig cfg;
        cfg.seed = seed;
        cfg.gen.frames = frames;
        cfg.image_size = image_size;
        cfg.gen.clutter = clutter;
        cfg.gen.target_min = target_min;
        cfg.gen.target_max = target_max;
        const auto seq = generate_sequence(cfg);
        py::list frame_list, anno_list;
        for (const auto& f : seq.frames) frame_list.append(array_from_tensor(f));
        for (const auto& a : seq.annotations) {
            anno_list.append(py::make_tuple(
                a.frame_index,
                a.gt ? py::object(py::make_tuple(a.gt->x, a.gt->y, a.gt->w, a.gt->h))
                     : py::object(py::none()),
                a.visible));
        }
        return py::make_tuple(frame_list, anno_list);
    }, py::arg("seed") = 42, py::arg("frames") = 30, py::arg("image_size") = 64,
       py::arg("clutter") = 0.0, py::arg("target_min") = 5.0, py::arg("target_max") = 30.0);
}
