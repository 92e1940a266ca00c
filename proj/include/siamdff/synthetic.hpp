#pragma once

#include <string>
#include <vector>

#include "siamdff/config.hpp"
#include "siamdff/metrics.hpp"
#include "siamdff/tensor.hpp"

namespace siamdff {

/// Synthetic thermal sequence: a bright Gaussian-blob target drifting over
/// low-frequency background plus optional distractor blobs.
struct SyntheticSequence {
    std::vector<Tensor> frames;  // [1,H,W] each
    std::vector<FrameAnnotation> annotations;
    double target_size = 0;
};

/// Deterministic under cfg.seed; the target box stays inside the frame on
/// every annotated frame.
SyntheticSequence generate_sequence(const RunConfig& cfg);

/// Layout on disk: <dir>/annotations.csv plus <dir>/frames/frame_#####.bin
/// in the flat tensor format.
void save_sequence(const std::string& dir, const SyntheticSequence& seq);
SyntheticSequence load_sequence(const std::string& dir);

}  // namespace siamdff
