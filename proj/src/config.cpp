#include "siamdff/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace siamdff {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* key : allowed) {
            if (it.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw std::runtime_error("unknown config key '" + where + it.key() + "'");
        }
    }
}

FusionMode parse_fusion_mode(const std::string& s, const std::string& where) {
    if (s == "attention") return FusionMode::kAttention;
    if (s == "sum") return FusionMode::kSum;
    if (s == "concat") return FusionMode::kConcat;
    throw std::runtime_error(where + " must be one of attention|sum|concat, got '" + s + "'");
}

}  // namespace

std::string fusion_mode_name(FusionMode mode) {
    switch (mode) {
        case FusionMode::kAttention: return "attention";
        case FusionMode::kSum: return "sum";
        case FusionMode::kConcat: return "concat";
    }
    return "attention";
}

std::string cumulative_mode_name(CumulativeMode mode) {
    return mode == CumulativeMode::kMass ? "mass" : "raw";
}

std::string drop_mode_name(DropMode mode) {
    return mode == DropMode::kNegInf ? "neg-inf" : "zero-logit";
}

std::string dcfam_input_name(DcfamInput input) {
    return input == DcfamInput::kFused ? "fused" : "per-branch";
}

RunConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("config must be a JSON object");
    reject_unknown_keys(j,
                        {"seed", "imc", "dsfam", "dcfam", "image_size", "stage_depth", "channels",
                         "gen", "metrics", "out_dir"},
                        "");

    RunConfig cfg;
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("imc")) {
        const auto& imc = j.at("imc");
        reject_unknown_keys(imc, {"T", "cumulative", "drop", "learnable_t"}, "imc.");
        if (imc.contains("T")) cfg.imc_threshold = imc.at("T").get<double>();
        if (imc.contains("cumulative")) {
            const auto s = imc.at("cumulative").get<std::string>();
            if (s == "mass") {
                cfg.imc_cumulative = CumulativeMode::kMass;
            } else if (s == "raw") {
                cfg.imc_cumulative = CumulativeMode::kRaw;
            } else {
                throw std::runtime_error("imc.cumulative must be mass|raw, got '" + s + "'");
            }
        }
        if (imc.contains("drop")) {
            const auto s = imc.at("drop").get<std::string>();
            if (s == "neg-inf") {
                cfg.imc_drop = DropMode::kNegInf;
            } else if (s == "zero-logit") {
                cfg.imc_drop = DropMode::kZeroLogit;
            } else {
                throw std::runtime_error("imc.drop must be neg-inf|zero-logit, got '" + s + "'");
            }
        }
        if (imc.contains("learnable_t")) cfg.imc_learnable_t = imc.at("learnable_t").get<bool>();
    }
    if (j.contains("dsfam")) {
        const auto& d = j.at("dsfam");
        reject_unknown_keys(d, {"fusion"}, "dsfam.");
        if (d.contains("fusion")) {
            cfg.dsfam_fusion = parse_fusion_mode(d.at("fusion").get<std::string>(), "dsfam.fusion");
        }
    }
    if (j.contains("dcfam")) {
        const auto& d = j.at("dcfam");
        reject_unknown_keys(d, {"fusion", "input"}, "dcfam.");
        if (d.contains("fusion")) {
            cfg.dcfam_fusion = parse_fusion_mode(d.at("fusion").get<std::string>(), "dcfam.fusion");
        }
        if (d.contains("input")) {
            const auto s = d.at("input").get<std::string>();
            if (s == "fused") {
                cfg.dcfam_input = DcfamInput::kFused;
            } else if (s == "per-branch") {
                cfg.dcfam_input = DcfamInput::kPerBranch;
            } else {
                throw std::runtime_error("dcfam.input must be fused|per-branch, got '" + s + "'");
            }
        }
    }
    if (j.contains("image_size")) cfg.image_size = j.at("image_size").get<std::size_t>();
    if (j.contains("stage_depth")) cfg.stage_depth = j.at("stage_depth").get<std::size_t>();
    if (j.contains("channels")) cfg.channels = j.at("channels").get<std::size_t>();
    if (j.contains("gen")) {
        const auto& g = j.at("gen");
        reject_unknown_keys(g, {"frames", "target_min", "target_max", "motion", "clutter"},
                            "gen.");
        if (g.contains("frames")) cfg.gen.frames = g.at("frames").get<std::size_t>();
        if (g.contains("target_min")) cfg.gen.target_min = g.at("target_min").get<double>();
        if (g.contains("target_max")) cfg.gen.target_max = g.at("target_max").get<double>();
        if (g.contains("motion")) {
            cfg.gen.motion = g.at("motion").get<std::string>();
            if (cfg.gen.motion != "orbit" && cfg.gen.motion != "scan") {
                throw std::runtime_error("gen.motion must be orbit|scan, got '" + cfg.gen.motion +
                                         "'");
            }
        }
        if (g.contains("clutter")) cfg.gen.clutter = g.at("clutter").get<double>();
    }
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        reject_unknown_keys(m,
                            {"precision_max_px", "precision_step_px", "success_step",
                             "nprecision_max", "nprecision_step"},
                            "metrics.");
        if (m.contains("precision_max_px")) {
            cfg.metrics.precision_max_px = m.at("precision_max_px").get<double>();
        }
        if (m.contains("precision_step_px")) {
            cfg.metrics.precision_step_px = m.at("precision_step_px").get<double>();
        }
        if (m.contains("success_step")) cfg.metrics.success_step = m.at("success_step").get<double>();
        if (m.contains("nprecision_max")) {
            cfg.metrics.nprecision_max = m.at("nprecision_max").get<double>();
        }
        if (m.contains("nprecision_step")) {
            cfg.metrics.nprecision_step = m.at("nprecision_step").get<double>();
        }
    }
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();

    if (!(cfg.imc_threshold > 0) || cfg.imc_threshold > 1) {
        throw std::runtime_error("imc.T must lie in (0,1], got " +
                                 std::to_string(cfg.imc_threshold));
    }
    if (cfg.channels == 0 || cfg.channels % 4 != 0) {
        throw std::runtime_error("channels must be a positive multiple of 4, got " +
                                 std::to_string(cfg.channels));
    }
    if (cfg.stage_depth == 0 || cfg.stage_depth > 6) {
        throw std::runtime_error("stage_depth must be in [1,6], got " +
                                 std::to_string(cfg.stage_depth));
    }
    if (cfg.image_size % (std::size_t{1} << cfg.stage_depth) != 0) {
        throw std::runtime_error("image_size must be divisible by 2^stage_depth");
    }
    if (cfg.gen.target_min < 1 || cfg.gen.target_max < cfg.gen.target_min) {
        throw std::runtime_error("gen.target_min/target_max are not a valid size range");
    }
    if (cfg.gen.clutter < 0 || cfg.gen.clutter > 1) {
        throw std::runtime_error("gen.clutter must lie in [0,1]");
    }
    return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["imc"]["T"] = cfg.imc_threshold;
    j["imc"]["cumulative"] = cumulative_mode_name(cfg.imc_cumulative);
    j["imc"]["drop"] = drop_mode_name(cfg.imc_drop);
    j["imc"]["learnable_t"] = cfg.imc_learnable_t;
    j["dsfam"]["fusion"] = fusion_mode_name(cfg.dsfam_fusion);
    j["dcfam"]["fusion"] = fusion_mode_name(cfg.dcfam_fusion);
    j["dcfam"]["input"] = dcfam_input_name(cfg.dcfam_input);
    j["image_size"] = cfg.image_size;
    j["stage_depth"] = cfg.stage_depth;
    j["channels"] = cfg.channels;
    j["gen"]["frames"] = cfg.gen.frames;
    j["gen"]["target_min"] = cfg.gen.target_min;
    j["gen"]["target_max"] = cfg.gen.target_max;
    j["gen"]["motion"] = cfg.gen.motion;
    j["gen"]["clutter"] = cfg.gen.clutter;
    j["metrics"]["precision_max_px"] = cfg.metrics.precision_max_px;
    j["metrics"]["precision_step_px"] = cfg.metrics.precision_step_px;
    j["metrics"]["success_step"] = cfg.metrics.success_step;
    j["metrics"]["nprecision_max"] = cfg.metrics.nprecision_max;
    j["metrics"]["nprecision_step"] = cfg.metrics.nprecision_step;
    j["out_dir"] = cfg.out_dir;
    return j.dump(2) + "\n";
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config '" + path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return config_from_json(buf.str());
}

MetricThresholds make_thresholds(const MetricGridConfig& grid) {
    auto build = [](double maxv, double step) {
        if (step <= 0 || maxv < step) {
            throw std::runtime_error("metric threshold grid must have positive step <= max");
        }
        std::vector<double> t;
        const int count = static_cast<int>(std::llround(maxv / step));
        for (int i = 0; i <= count; ++i) t.push_back(static_cast<double>(i) * step);
        return t;
    };
    MetricThresholds out;
    out.precision = build(grid.precision_max_px, grid.precision_step_px);
    out.success = build(1.0, grid.success_step);
    out.nprecision = build(grid.nprecision_max, grid.nprecision_step);
    return out;
}

}  // namespace siamdff
