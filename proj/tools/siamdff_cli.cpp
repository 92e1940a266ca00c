// Command-line harness: synthetic sequences, tracking runs, distillation
// demos, metric evaluation, threshold sweeps, and SVG plots.

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "siamdff/config.hpp"
#include "siamdff/metrics.hpp"
#include "siamdff/pipeline.hpp"
#include "siamdff/plot.hpp"
#include "siamdff/synthetic.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;

struct GlobalArgs {
    std::string config_path;
    std::string out_dir;
    bool has_seed = false;
    std::uint64_t seed = 0;
    bool quiet = false;
};

siamdff::RunConfig resolve_config(const GlobalArgs& args) {
    siamdff::RunConfig cfg;
    if (!args.config_path.empty()) {
        cfg = siamdff::load_config(args.config_path);
    }
    if (args.has_seed) cfg.seed = args.seed;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    return cfg;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write '" + path + "'");
    os << content;
}

void say(const GlobalArgs& args, const std::string& message) {
    if (!args.quiet) std::cout << message << "\n";
}

int run_gen(const GlobalArgs& args) {
    const auto cfg = resolve_config(args);
    const auto seq = siamdff::generate_sequence(cfg);
    siamdff::save_sequence(cfg.out_dir, seq);
    say(args, "wrote " + std::to_string(seq.frames.size()) + " frames to " + cfg.out_dir);
    return kExitOk;
}

int run_track(const GlobalArgs& args, const std::string& seq_dir) {
    const auto cfg = resolve_config(args);
    const std::string dir = seq_dir.empty() ? cfg.out_dir : seq_dir;
    const auto seq = siamdff::load_sequence(dir);
    const auto preds = siamdff::run_pipeline(seq, cfg);
    const std::string path = cfg.out_dir + "/predictions.csv";
    write_file(path, siamdff::predictions_to_csv(preds));
    say(args, "wrote " + path);
    return kExitOk;
}

int run_distill(const GlobalArgs& args, const std::string& mask_path) {
    const auto cfg = resolve_config(args);
    siamdff::DistillReport report;
    if (mask_path.empty()) {
        report = siamdff::run_distill_demo(cfg);
    } else {
        const auto mask = siamdff::TargetMask::parse(read_file(mask_path));
        report = siamdff::run_distill_demo(cfg, &mask);
    }
    const std::string path = cfg.out_dir + "/distill_report.json";
    write_file(path, siamdff::report_to_json(report));
    say(args, "initial loss " + std::to_string(report.initial_loss()) + ", final loss " +
                  std::to_string(report.final_loss()) + " after " +
                  std::to_string(report.steps_taken) + " steps");
    say(args, "wrote " + path);
    return kExitOk;
}

int run_eval(const GlobalArgs& args, const std::string& pred_path, const std::string& anno_path) {
    const auto cfg = resolve_config(args);
    const auto preds = siamdff::predictions_from_csv(read_file(pred_path));
    const auto annos = siamdff::annotations_from_csv(read_file(anno_path));
    if (preds.size() != annos.size()) {
        throw std::runtime_error("frame count mismatch: " + std::to_string(preds.size()) +
                                 " predictions vs " + std::to_string(annos.size()) +
                                 " annotations");
    }
    const auto grids = siamdff::make_thresholds(cfg.metrics);
    const auto summary = siamdff::evaluate_sequence(preds, annos, grids);
    write_file(cfg.out_dir + "/summary.json", siamdff::summary_to_json(summary));
    write_file(cfg.out_dir + "/precision.csv",
               siamdff::curve_to_csv(siamdff::precision_curve(preds, annos, grids.precision)));
    write_file(cfg.out_dir + "/success.csv",
               siamdff::curve_to_csv(siamdff::success_curve(preds, annos, grids.success)));
    write_file(cfg.out_dir + "/nprecision.csv",
               siamdff::curve_to_csv(
                   siamdff::normalized_precision_curve(preds, annos, grids.nprecision)));
    say(args, "sa=" + std::to_string(summary.sa) +
                  " auc_success=" + std::to_string(summary.auc_success) +
                  " precision@5px=" + std::to_string(summary.precision_at_5px));
    say(args, "wrote summary and curves to " + cfg.out_dir);
    return kExitOk;
}

int run_sweep(const GlobalArgs& args, std::vector<double> values) {
    const auto cfg = resolve_config(args);
    if (values.empty()) values = siamdff::default_sweep_grid();
    const auto rows = siamdff::sweep_thresholds(cfg, values);
    const std::string path = cfg.out_dir + "/sweep.csv";
    write_file(path, siamdff::sweep_to_csv(rows));
    say(args, "wrote " + path);
    return kExitOk;
}

int run_plot(const GlobalArgs& args, const std::vector<std::string>& inputs,
             const std::string& out_path, const std::string& x_label,
             const std::string& y_label) {
    std::vector<siamdff::MetricCurve> curves;
    std::vector<std::string> labels;
    for (const auto& path : inputs) {
        curves.push_back(siamdff::curve_from_csv(read_file(path)));
        labels.push_back(std::filesystem::path(path).stem().string());
    }
    write_file(out_path, siamdff::render_curves_svg(curves, labels, x_label, y_label));
    say(args, "wrote " + out_path);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale infrared tracker harness"};
    app.require_subcommand(1);

    GlobalArgs args;
    app.add_option("--config", args.config_path, "JSON config file");
    app.add_option("--out-dir", args.out_dir, "output directory (overrides config)");
    auto* seed_opt = app.add_option("--seed", args.seed, "seed override");
    app.add_flag("--quiet", args.quiet, "suppress progress output");

    auto* gen = app.add_subcommand("gen", "write a synthetic sequence and its annotations");

    std::string seq_dir;
    auto* track = app.add_subcommand("track", "run the tracking pipeline over a sequence");
    track->add_option("--seq-dir", seq_dir, "sequence directory (defaults to out-dir)");

    std::string mask_path;
    auto* distill = app.add_subcommand("distill", "run the distillation demo");
    distill->add_option("--mask", mask_path,
                        "target mask file ('H W' header plus a 0/1 grid); defaults to the "
                        "first-frame target box");

    std::string pred_path, anno_path;
    auto* eval = app.add_subcommand("eval", "evaluate predictions against annotations");
    eval->add_option("--preds", pred_path, "predictions CSV")->required();
    eval->add_option("--annos", anno_path, "annotations CSV")->required();

    std::vector<double> sweep_values;
    auto* sweep = app.add_subcommand("sweep-t", "run the threshold ablation sweep");
    sweep->add_option("--values", sweep_values, "threshold values (default 0.5 0.6 0.7 0.8 1.0)");

    std::vector<std::string> plot_inputs;
    std::string plot_out = "plot.svg", plot_x = "threshold", plot_y = "value";
    auto* plot = app.add_subcommand("plot", "render curve CSVs as an SVG");
    plot->add_option("--curves", plot_inputs, "curve CSV files")->required();
    plot->add_option("--out", plot_out, "output SVG path");
    plot->add_option("--x-label", plot_x, "x axis label");
    plot->add_option("--y-label", plot_y, "y axis label");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitInput;
    }
    args.has_seed = seed_opt->count() > 0;

    try {
        if (gen->parsed()) return run_gen(args);
        if (track->parsed()) return run_track(args, seq_dir);
        if (distill->parsed()) return run_distill(args, mask_path);
        if (eval->parsed()) return run_eval(args, pred_path, anno_path);
        if (sweep->parsed()) return run_sweep(args, sweep_values);
        if (plot->parsed()) return run_plot(args, plot_inputs, plot_out, plot_x, plot_y);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}
