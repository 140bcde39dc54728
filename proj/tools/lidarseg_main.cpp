#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "lidarseg/error.hpp"
#include "lidarseg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lidarseg;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
    std::string output;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config, "TOML configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", flags.seed, "random seed (overrides the config)");
    cmd->add_option("--jobs", flags.jobs, "worker count (overrides the config)")->check(CLI::PositiveNumber);
    cmd->add_option("--output", flags.output, "output directory")->required();
}

pipeline::PipelineConfig effective_config(const CommonFlags& flags) {
    pipeline::PipelineConfig config = flags.config.empty() ? pipeline::PipelineConfig{}
                                                           : pipeline::load_config(flags.config);
    if (flags.seed) config.seed = *flags.seed;
    if (flags.jobs) config.jobs = *flags.jobs;
    config.validate();
    return config;
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("lidarseg");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("LIDARSEG_LOG")) {
        const auto level = spdlog::level::from_str(env);
        // from_str maps unknown names to off; only accept a real match.
        if (level != spdlog::level::off || std::string(env) == "off") {
            spdlog::set_level(level);
        } else {
            spdlog::warn("LIDARSEG_LOG='{}' is not a log level, using warn", env);
        }
    }
}

void report(const pipeline::RunManifest& m, const fs::path& output) {
    spdlog::info("{}: {} output files in {}", m.command, m.outputs.size(), output.string());
    if (!m.failures.empty()) spdlog::warn("{} frame(s) failed", m.failures.size());
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();

    CLI::App app{"LiDAR pointcloud segmentation and classification"};
    app.set_version_flag("--version", std::string(pipeline::kToolVersion));
    app.require_subcommand(1);

    CommonFlags flags;
    std::string input, labels, calib, model;

    auto* pre = app.add_subcommand("preprocess", "ground filter and cluster every velodyne frame");
    pre->add_option("input", input, "velodyne directory or KITTI root")->required();
    add_common(pre, flags);

    auto* ext = app.add_subcommand("extract", "cluster features with ground-truth classes");
    ext->add_option("preprocessed", input, "output directory of preprocess")->required();
    ext->add_option("--labels", labels, "KITTI label_2 directory")->required();
    ext->add_option("--calib", calib, "KITTI calib directory")->required();
    add_common(ext, flags);

    auto* train = app.add_subcommand("train", "train a classifier on a features csv");
    train->add_option("features", input, "features csv")->required()->check(CLI::ExistingFile);
    add_common(train, flags);

    auto* eval = app.add_subcommand("evaluate", "score a model on preprocessed frames");
    eval->add_option("model", model, "model file")->required()->check(CLI::ExistingFile);
    eval->add_option("preprocessed", input, "output directory of preprocess")->required();
    eval->add_option("--labels", labels, "KITTI label_2 directory")->required();
    eval->add_option("--calib", calib, "KITTI calib directory")->required();
    add_common(eval, flags);

    std::string fail_at;
    auto* all = app.add_subcommand("run-all", "preprocess, extract, split, train and evaluate");
    all->add_option("input", input, "KITTI root with velodyne/, label_2/ and calib/")->required();
    all->add_option("--labels", labels, "label directory (default: <input>/label_2)");
    all->add_option("--calib", calib, "calibration directory (default: <input>/calib)");
    all->add_option("--fail-at-stage", fail_at, "abort when the named stage starts")->group("");
    add_common(all, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        const auto config = effective_config(flags);
        const fs::path output = flags.output;
        pipeline::RunManifest manifest;
        if (pre->parsed()) {
            manifest = pipeline::cmd_preprocess(input, config, output);
        } else if (ext->parsed()) {
            manifest = pipeline::cmd_extract(input, labels, calib, config, output);
        } else if (train->parsed()) {
            manifest = pipeline::cmd_train(input, config, output);
        } else if (eval->parsed()) {
            manifest = pipeline::cmd_evaluate(model, input, labels, calib, config, output);
        } else {
            const auto layout = pipeline::resolve_layout(input);
            pipeline::RunAllOptions options{layout.velodyne, labels.empty() ? layout.labels : fs::path(labels),
                                            calib.empty() ? layout.calib : fs::path(calib), output, std::nullopt};
            if (!fail_at.empty()) options.fail_at_stage = fail_at;
            manifest = pipeline::cmd_run_all(options, config);
        }
        report(manifest, output);
        return 0;
    } catch (const Error& e) {
        std::cerr << "lidarseg: " << e.what() << "\n";
        return e.code() == ErrorCode::Config ? kExitUsage : kExitData;
    } catch (const std::exception& e) {
        std::cerr << "lidarseg: " << e.what() << "\n";
        return kExitData;
    }
}
