#include "siamdff/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "siamdff/rng.hpp"
#include "siamdff/serialize.hpp"

namespace siamdff {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

struct Blob {
    double cx, cy, amplitude, sigma;
};

void add_blob(Tensor& frame, const Blob& b) {
    const std::size_t h = frame.extent(1), w = frame.extent(2);
    const double reach = 3.0 * b.sigma;
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(b.cy - reach)));
    const auto y1 = static_cast<std::size_t>(
        std::min(static_cast<double>(h) - 1, std::ceil(b.cy + reach)));
    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(b.cx - reach)));
    const auto x1 = static_cast<std::size_t>(
        std::min(static_cast<double>(w) - 1, std::ceil(b.cx + reach)));
    const double inv2s2 = 1.0 / (2.0 * b.sigma * b.sigma);
    for (std::size_t y = y0; y <= y1; ++y) {
        for (std::size_t x = x0; x <= x1; ++x) {
            const double dy = static_cast<double>(y) + 0.5 - b.cy;
            const double dx = static_cast<double>(x) + 0.5 - b.cx;
            frame(0, y, x) += static_cast<real_t>(b.amplitude *
                                                  std::exp(-(dx * dx + dy * dy) * inv2s2));
        }
    }
}

}  // namespace

SyntheticSequence generate_sequence(const RunConfig& cfg) {
    const std::size_t size = cfg.image_size;
    if (cfg.gen.target_max >= static_cast<double>(size) / 2) {
        throw std::invalid_argument("gen.target_max " + std::to_string(cfg.gen.target_max) +
                                    " does not fit a " + std::to_string(size) + "px frame");
    }
    Rng rng(cfg.seed);

    const double target = rng.uniform(cfg.gen.target_min, cfg.gen.target_max);

    // Low-frequency background: a gentle offset plus a few broad gratings.
    struct Grating {
        double fx, fy, phase, amp;
    };
    std::vector<Grating> gratings;
    for (int i = 0; i < 3; ++i) {
        gratings.push_back({rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0),
                            rng.uniform(0, 2 * kPi), rng.uniform(0.03, 0.07)});
    }

    // Static distractor blobs, dimmer than the target.
    std::vector<Blob> clutter;
    const int clutter_count = static_cast<int>(std::lround(cfg.gen.clutter * 6));
    for (int i = 0; i < clutter_count; ++i) {
        clutter.push_back({rng.uniform(4, static_cast<double>(size) - 4),
                           rng.uniform(4, static_cast<double>(size) - 4),
                           cfg.gen.clutter * rng.uniform(0.2, 0.5), rng.uniform(2.0, 5.0)});
    }

    // Target path: stays at least `margin` pixels away from the borders.
    const double margin = target / 2 + 2;
    const double cx0 = static_cast<double>(size) / 2;
    const double half_range = static_cast<double>(size) / 2 - margin;
    const double rx = rng.uniform(0.5, 1.0) * half_range;
    const double ry = rng.uniform(0.5, 1.0) * half_range;
    const double theta0 = rng.uniform(0, 2 * kPi);
    const double laps = rng.uniform(0.5, 1.5);
    const double scan_angle = rng.uniform(0, 2 * kPi);

    SyntheticSequence seq;
    seq.target_size = target;
    for (std::size_t f = 0; f < cfg.gen.frames; ++f) {
        const double t = cfg.gen.frames > 1
                             ? static_cast<double>(f) / static_cast<double>(cfg.gen.frames - 1)
                             : 0.0;
        double cx, cy;
        if (cfg.gen.motion == "scan") {
            // Diagonal sweep, reflected at the margins via a triangle wave.
            auto bounce = [&](double start, double velocity) {
                const double span = 2 * half_range;
                double u = std::fmod(start + velocity * t + 4 * span, 2 * span);
                if (u > span) u = 2 * span - u;
                return cx0 - half_range + u;
            };
            cx = bounce(half_range, 2.2 * half_range * std::cos(scan_angle));
            cy = bounce(half_range, 2.2 * half_range * std::sin(scan_angle));
        } else {
            const double angle = theta0 + 2 * kPi * laps * t;
            cx = cx0 + rx * std::cos(angle);
            cy = cx0 + ry * std::sin(angle);
        }

        Tensor frame({1, size, size});
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                double v = 0.2;
                for (const auto& g : gratings) {
                    v += g.amp * std::cos(2 * kPi * (g.fx * static_cast<double>(x) /
                                                         static_cast<double>(size) +
                                                     g.fy * static_cast<double>(y) /
                                                         static_cast<double>(size)) +
                                          g.phase);
                }
                frame(0, y, x) = static_cast<real_t>(v);
            }
        }
        for (const auto& b : clutter) add_blob(frame, b);
        add_blob(frame, {cx, cy, 1.0, target / 4.0});
        seq.frames.push_back(std::move(frame));

        FrameAnnotation anno;
        anno.frame_index = static_cast<int>(f);
        anno.gt = BoundingBox{cx - target / 2, cy - target / 2, target, target};
        anno.visible = true;
        seq.annotations.push_back(std::move(anno));
    }
    return seq;
}

namespace {

std::string frame_path(const std::string& dir, std::size_t index) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05zu.bin", index);
    return dir + "/frames/" + name;
}

}  // namespace

void save_sequence(const std::string& dir, const SyntheticSequence& seq) {
    std::filesystem::create_directories(dir + "/frames");
    std::ofstream os(dir + "/annotations.csv", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write '" + dir + "/annotations.csv'");
    os << annotations_to_csv(seq.annotations);
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        save_tensor(frame_path(dir, i), seq.frames[i]);
    }
}

SyntheticSequence load_sequence(const std::string& dir) {
    std::ifstream is(dir + "/annotations.csv", std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + dir + "/annotations.csv'");
    std::ostringstream buf;
    buf << is.rdbuf();
    SyntheticSequence seq;
    seq.annotations = annotations_from_csv(buf.str());
    for (std::size_t i = 0; i < seq.annotations.size(); ++i) {
        seq.frames.push_back(load_tensor(frame_path(dir, i)));
    }
    if (!seq.annotations.empty() && seq.annotations.front().gt) {
        seq.target_size = seq.annotations.front().gt->w;
    }
    return seq;
}

}  // namespace siamdff
