#pragma once

#include <cstdint>
#include <string>

#include "siamdff/attention.hpp"
#include "siamdff/fusion.hpp"
#include "siamdff/metrics.hpp"

namespace siamdff {

struct GenConfig {
    std::size_t frames = 30;
    double target_min = 5;
    double target_max = 30;
    std::string motion = "orbit";  // orbit | scan
    double clutter = 0;

    bool operator==(const GenConfig&) const = default;
};

struct MetricGridConfig {
    double precision_max_px = 50;
    double precision_step_px = 1;
    double success_step = 0.05;
    double nprecision_max = 0.5;
    double nprecision_step = 0.005;

    bool operator==(const MetricGridConfig&) const = default;
};

/// Harness configuration. Desk-scale defaults (64x64 frames, 16 channels,
/// depth 3); larger sizes stay reachable through the config file.
struct RunConfig {
    std::uint64_t seed = 42;

    double imc_threshold = 0.7;
    CumulativeMode imc_cumulative = CumulativeMode::kMass;
    DropMode imc_drop = DropMode::kNegInf;
    bool imc_learnable_t = false;

    FusionMode dsfam_fusion = FusionMode::kAttention;
    FusionMode dcfam_fusion = FusionMode::kAttention;
    DcfamInput dcfam_input = DcfamInput::kFused;

    std::size_t image_size = 64;
    std::size_t stage_depth = 3;
    std::size_t channels = 16;

    GenConfig gen;
    MetricGridConfig metrics;
    std::string out_dir = "out";

    bool operator==(const RunConfig&) const = default;
};

/// Strict parser: every enum value is validated and unknown keys are
/// rejected at every level.
RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::string& path);

MetricThresholds make_thresholds(const MetricGridConfig& grid);

std::string fusion_mode_name(FusionMode mode);
std::string cumulative_mode_name(CumulativeMode mode);
std::string drop_mode_name(DropMode mode);
std::string dcfam_input_name(DcfamInput input);

}  // namespace siamdff
