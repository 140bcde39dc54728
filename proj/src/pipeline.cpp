#include "lidarseg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "lidarseg/error.hpp"
#include "lidarseg/kitti_io.hpp"
#include "parallel.hpp"
#include "text_util.hpp"

namespace lidarseg::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

constexpr const char* kFramesIndex = "frames.csv";
constexpr const char* kFramesDir = "frames";
constexpr const char* kManifest = "manifest.json";

struct FrameSource {
    std::string id;
    fs::path velodyne;
};

// Output files of a command, recorded relative to its output directory.
class OutputSet {
public:
    explicit OutputSet(fs::path root) : root_(std::move(root)) {}

    void write(const fs::path& relative, std::string_view contents) {
        const fs::path full = root_ / relative;
        fs::create_directories(full.parent_path());
        write_file_atomic(full, contents);
        files_.push_back(relative.generic_string());
    }

    void write(const fs::path& relative, std::span<const std::byte> contents) {
        write(relative, std::string_view(reinterpret_cast<const char*>(contents.data()), contents.size()));
    }

    const fs::path& root() const { return root_; }
    std::vector<std::string> files() const {
        auto out = files_;
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    fs::path root_;
    std::vector<std::string> files_;
};

std::string frames_index_csv(std::span<const FrameSource> frames) {
    std::ostringstream os;
    os << "frame_id,velodyne\n";
    for (const FrameSource& f : frames) os << f.id << ',' << f.velodyne.generic_string() << '\n';
    return os.str();
}

std::vector<FrameSource> read_frames_index(const fs::path& preprocessed_dir) {
    const std::string text = kitti::read_text_file(preprocessed_dir / kFramesIndex);
    const auto lines = detail::split_lines(text);
    if (lines.empty() || detail::trim(lines[0]) != "frame_id,velodyne") {
        throw Error(ErrorCode::Format, "frames index in " + preprocessed_dir.string() + " is malformed");
    }
    std::vector<FrameSource> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto line = detail::trim(lines[i]);
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string_view::npos) throw Error(ErrorCode::Format, "frames index line is malformed");
        out.push_back({std::string(line.substr(0, comma)), fs::path(std::string(line.substr(comma + 1)))});
    }
    return out;
}

struct LoadedFrame {
    PointCloud cloud;
    FrameSegmentation seg;
};

LoadedFrame load_preprocessed(const fs::path& preprocessed_dir, const FrameSource& src) {
    LoadedFrame f;
    f.cloud = kitti::parse_velodyne(kitti::read_binary_file(src.velodyne)).cloud;
    f.cloud.frame_id = src.id;
    f.seg = parse_segmentation_csv(kitti::read_text_file(preprocessed_dir / kFramesDir / (src.id + ".csv")));
    if (f.seg.cluster_ids.size() != f.cloud.size()) {
        throw Error(ErrorCode::Format, "frame " + src.id + ": segmentation does not match the velodyne frame");
    }
    return f;
}

// Ground truth for one frame, or nullopt when its label file is missing.
std::optional<std::vector<PointClass>> load_truth(const PointCloud& cloud, const std::string& id,
                                                  const fs::path& labels_dir, const fs::path& calib_dir) {
    const fs::path label_path = labels_dir / (id + ".txt");
    if (!fs::exists(label_path)) return std::nullopt;
    const auto labels = kitti::parse_label_file(kitti::read_text_file(label_path));
    const fs::path calib_path = calib_dir / (id + ".txt");
    const auto calib = fs::exists(calib_path) ? kitti::parse_calibration(kitti::read_text_file(calib_path))
                                              : throw Error(ErrorCode::MissingCalibration,
                                                            "no calibration file for frame " + id);
    return kitti::label_points(cloud, labels, calib);
}

void log_failure(RunManifest& manifest, const std::string& frame, const std::string& message) {
    spdlog::warn("frame {}: {}", frame, message);
    manifest.failures.emplace_back(frame, message);
}

void finish_manifest(RunManifest& manifest, OutputSet& outputs) {
    manifest.outputs = outputs.files();
    manifest.outputs.push_back(kManifest);
    write_file_atomic(outputs.root() / kManifest, manifest.to_json());
}

RunManifest new_manifest(std::string command, const PipelineConfig& config) {
    RunManifest m;
    m.command = std::move(command);
    m.config_json = to_json(config);
    return m;
}

// ---------------------------------------------------------------- stages

struct PreprocessOutcome {
    std::vector<FrameSource> frames;  // successfully processed, sorted by id
};

PreprocessOutcome run_preprocess(const fs::path& velodyne_dir, const PipelineConfig& config, OutputSet& out,
                                 const fs::path& prefix, RunManifest& manifest) {
    const auto paths = list_frames(velodyne_dir);
    if (paths.empty()) throw Error(ErrorCode::EmptyInput, "no velodyne .bin frames in " + velodyne_dir.string());

    struct Result {
        std::optional<std::string> csv;
        std::optional<std::string> ply;
        std::string error;
        std::size_t warnings = 0;
    };
    std::vector<Result> results(paths.size());
    detail::parallel_for(paths.size(), config.jobs, [&](std::size_t i) {
        try {
            auto parsed = kitti::parse_velodyne(kitti::read_binary_file(paths[i]));
            const FrameSegmentation seg = segment_frame(parsed.cloud, config, 1);
            results[i].csv = write_segmentation_csv(seg);
            results[i].warnings = seg.warnings + parsed.clamped_intensities;
            if (config.write_ply) results[i].ply = kitti::export_cluster_ply(parsed.cloud, seg.cluster_ids);
        } catch (const std::exception& e) {
            results[i].error = e.what();
        }
    });

    PreprocessOutcome outcome;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const std::string id = paths[i].stem().string();
        manifest.inputs.push_back(paths[i].generic_string());
        if (!results[i].csv) {
            log_failure(manifest, id, results[i].error);
            continue;
        }
        manifest.warnings += results[i].warnings;
        out.write(prefix / kFramesDir / (id + ".csv"), *results[i].csv);
        if (results[i].ply) out.write(prefix / "ply" / (id + ".ply"), *results[i].ply);
        outcome.frames.push_back({id, paths[i]});
    }
    if (outcome.frames.empty()) throw Error(ErrorCode::EmptyInput, "every frame failed to preprocess");
    out.write(prefix / kFramesIndex, frames_index_csv(outcome.frames));
    return outcome;
}

// Feature rows per frame id; frames without labels are skipped with a warning.
std::map<std::string, std::vector<features::FeatureRow>> run_extract(const fs::path& preprocessed_dir,
                                                                     const fs::path& labels_dir,
                                                                     const fs::path& calib_dir,
                                                                     const PipelineConfig& config,
                                                                     RunManifest& manifest) {
    const auto frames = read_frames_index(preprocessed_dir);
    struct Result {
        std::optional<std::vector<features::FeatureRow>> rows;
        bool missing_labels = false;
        std::string error;
    };
    std::vector<Result> results(frames.size());
    detail::parallel_for(frames.size(), config.jobs, [&](std::size_t i) {
        try {
            const LoadedFrame f = load_preprocessed(preprocessed_dir, frames[i]);
            const auto truth = load_truth(f.cloud, frames[i].id, labels_dir, calib_dir);
            if (!truth) {
                results[i].missing_labels = true;
                return;
            }
            results[i].rows = cluster_feature_rows(f.cloud, f.seg, *truth, config.eigen_mode);
        } catch (const std::exception& e) {
            results[i].error = e.what();
        }
    });
    std::map<std::string, std::vector<features::FeatureRow>> out;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (results[i].missing_labels) {
            spdlog::warn("frame {}: no label file, skipped", frames[i].id);
            ++manifest.warnings;
        } else if (!results[i].rows) {
            log_failure(manifest, frames[i].id, results[i].error);
        } else {
            out[frames[i].id] = std::move(*results[i].rows);
        }
    }
    return out;
}

struct TrainOutcome {
    classifiers::Model model;
    std::string report_json;
};

TrainOutcome run_train(std::span<const features::FeatureRow> rows, const PipelineConfig& config) {
    classifiers::TrainingSet data = classifiers::TrainingSet::from_rows(rows);
    if (data.empty()) throw Error(ErrorCode::EmptyData, "no labeled feature rows to train on");
    const auto counts_before = data.class_counts();
    const auto& cc = config.classifier;
    if (cc.kind == ClassifierKind::Mlp) {
        const auto present = data.classes_present();
        if (present != std::vector<PointClass>{PointClass::Car, PointClass::Pedestrian}) {
            throw Error(ErrorCode::Arity, "mlp training needs exactly the Car and Pedestrian classes");
        }
    }
    if (cc.undersample) data = classifiers::undersample(data, config.seed);

    nlohmann::json report;
    TrainOutcome outcome;
    std::optional<double> final_loss;
    switch (cc.kind) {
        case ClassifierKind::Tree:
            outcome.model = classifiers::train_tree(data, cc.tree.max_depth, cc.tree.min_leaf);
            break;
        case ClassifierKind::Svm:
            outcome.model = classifiers::train_svm(data, cc.svm.c, cc.svm.epochs, config.seed);
            break;
        case ClassifierKind::Mlp: {
            classifiers::MlpTrainParams params = cc.mlp;
            params.seed = config.seed;
            classifiers::MlpTrainingLog log;
            outcome.model = classifiers::train_mlp(data, params, &log);
            if (!log.epoch_loss.empty()) final_loss = log.epoch_loss.back();
            report["epoch_loss"] = log.epoch_loss;
            report["warnings"] = log.warnings;
            break;
        }
    }
    const auto counts_after = data.class_counts();
    report["classifier"] = to_string(cc.kind);
    report["undersampled"] = cc.undersample;
    nlohmann::json before, after;
    for (std::size_t k = 0; k < kNumLabeledClasses; ++k) {
        const std::string name(class_name(static_cast<PointClass>(k)));
        before[name] = counts_before[k];
        after[name] = counts_after[k];
    }
    report["class_counts_input"] = before;
    report["class_counts_trained"] = after;
    report["rows_trained"] = data.size();
    report["training_accuracy"] = classifiers::accuracy(outcome.model, data);
    report["final_loss"] = final_loss ? nlohmann::json(*final_loss) : nlohmann::json(nullptr);
    outcome.report_json = report.dump(2) + "\n";
    return outcome;
}

std::vector<evaluation::FrameReport> run_evaluate(const classifiers::ModelBundle& bundle,
                                                  const fs::path& preprocessed_dir, const fs::path& labels_dir,
                                                  const fs::path& calib_dir, const PipelineConfig& config,
                                                  const std::optional<std::vector<std::string>>& only_frames,
                                                  RunManifest& manifest) {
    if (bundle.feature_mode != config.eigen_mode) {
        throw Error(ErrorCode::Format, "model was trained on '" + std::string(features::to_string(bundle.feature_mode)) +
                                           "' features but the config asks for '" +
                                           std::string(features::to_string(config.eigen_mode)) + "'");
    }
    auto frames = read_frames_index(preprocessed_dir);
    if (only_frames) {
        std::erase_if(frames, [&](const FrameSource& f) {
            return std::find(only_frames->begin(), only_frames->end(), f.id) == only_frames->end();
        });
    }
    struct Result {
        std::optional<evaluation::FrameReport> report;
        bool missing_labels = false;
        std::string error;
    };
    std::vector<Result> results(frames.size());
    detail::parallel_for(frames.size(), config.jobs, [&](std::size_t i) {
        try {
            const LoadedFrame f = load_preprocessed(preprocessed_dir, frames[i]);
            const auto truth = load_truth(f.cloud, frames[i].id, labels_dir, calib_dir);
            if (!truth) {
                results[i].missing_labels = true;
                return;
            }
            const auto predicted = predict_frame(bundle.model, f.cloud, f.seg, config.eigen_mode, config.threshold);
            results[i].report = evaluation::make_report(frames[i].id, evaluation::confusion(*truth, predicted));
        } catch (const std::exception& e) {
            results[i].error = e.what();
        }
    });
    std::vector<evaluation::FrameReport> reports;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (results[i].missing_labels) {
            spdlog::warn("frame {}: no label file, skipped", frames[i].id);
            ++manifest.warnings;
        } else if (!results[i].report) {
            log_failure(manifest, frames[i].id, results[i].error);
        } else {
            reports.push_back(std::move(*results[i].report));
        }
    }
    if (reports.empty()) throw Error(ErrorCode::EmptyData, "no frame could be evaluated");
    return reports;
}

void write_reports(OutputSet& out, const fs::path& prefix, std::span<const evaluation::FrameReport> reports) {
    const auto total = evaluation::aggregate(reports);
    out.write(prefix / "evaluation.json", evaluation::report_json(reports, total));
    out.write(prefix / "evaluation.csv", evaluation::report_csv(reports, total));
}

std::vector<features::FeatureRow> concat_rows(const std::map<std::string, std::vector<features::FeatureRow>>& by_frame,
                                              std::span<const std::string> ids) {
    std::vector<features::FeatureRow> rows;
    for (const std::string& id : ids) {
        const auto it = by_frame.find(id);
        if (it != by_frame.end()) rows.insert(rows.end(), it->second.begin(), it->second.end());
    }
    return rows;
}

std::string joined_lines(std::span<const std::string> ids) {
    std::string s;
    for (const auto& id : ids) s += id + "\n";
    return s;
}

}  // namespace

// ------------------------------------------------------------ per frame

FrameSegmentation segment_frame(const PointCloud& cloud, const PipelineConfig& config, unsigned workers) {
    FrameSegmentation seg;
    ground::GroundPartition partition;
    if (config.ground_filter.method == GroundMethod::Csf) {
        partition = ground::csf_filter(cloud, config.ground_filter.cloth);
    } else if (cloud.size() >= 3) {
        const auto& r = config.ground_filter.ransac;
        const auto fit = ground::ransac_plane(cloud, r.iterations, r.inlier_threshold, config.seed);
        partition = ground::partition_by_plane(cloud, fit.plane, r.ground_threshold);
    } else {
        partition = ground::partition_from_mask(std::vector<bool>(cloud.size(), false));
        partition.warnings = cloud.empty() ? 0 : 1;
    }
    seg.warnings = partition.warnings;
    seg.is_ground = partition.ground_mask(cloud.size());

    std::vector<Vec3> pts;
    pts.reserve(partition.nonground_indices.size());
    for (std::size_t i : partition.nonground_indices) pts.push_back(cloud.points[i].position());

    const auto& ms = config.clustering.mean_shift;
    clustering::ClusterAssignment assignment;
    if (config.clustering.method == ClusterMethod::MeanShift) {
        assignment = clustering::mean_shift_cluster(pts, ms, workers);
    } else {
        assignment = clustering::dbscan(pts, config.clustering.dbscan.eps, config.clustering.dbscan.min_samples);
    }
    // Cluster ids are sorted by descending size, so undersized clusters form a suffix.
    std::size_t kept = 0;
    const auto members = assignment.members();
    while (kept < members.size() && members[kept].size() >= ms.min_cluster_size) ++kept;

    seg.cluster_ids.assign(cloud.size(), clustering::kNoise);
    for (std::size_t k = 0; k < partition.nonground_indices.size(); ++k) {
        const int id = assignment.labels[k];
        if (id >= 0 && static_cast<std::size_t>(id) < kept) seg.cluster_ids[partition.nonground_indices[k]] = id;
    }
    return seg;
}

std::string write_segmentation_csv(const FrameSegmentation& seg) {
    std::ostringstream os;
    os << "point_index,is_ground,cluster_id\n";
    for (std::size_t i = 0; i < seg.cluster_ids.size(); ++i) {
        os << i << ',' << (seg.is_ground[i] ? 1 : 0) << ',' << seg.cluster_ids[i] << '\n';
    }
    return os.str();
}

FrameSegmentation parse_segmentation_csv(std::string_view text) {
    const auto lines = detail::split_lines(text);
    if (lines.empty() || detail::trim(lines[0]) != "point_index,is_ground,cluster_id") {
        throw Error(ErrorCode::Format, "segmentation csv: missing header");
    }
    FrameSegmentation seg;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto line = detail::trim(lines[i]);
        if (line.empty()) continue;
        const auto cols = detail::split(line, ',');
        const auto idx = cols.size() == 3 ? detail::parse_int(cols[0]) : std::nullopt;
        const auto ground = cols.size() == 3 ? detail::parse_int(cols[1]) : std::nullopt;
        const auto id = cols.size() == 3 ? detail::parse_int(cols[2]) : std::nullopt;
        if (!idx || !ground || !id || *idx != static_cast<long long>(seg.cluster_ids.size()) ||
            (*ground != 0 && *ground != 1) || *id < clustering::kNoise) {
            throw Error(ErrorCode::Format, "segmentation csv line " + std::to_string(i + 1) + " is malformed");
        }
        seg.is_ground.push_back(*ground == 1);
        seg.cluster_ids.push_back(static_cast<int>(*id));
    }
    return seg;
}

PointClass majority_class(std::span<const PointClass> member_truth) {
    std::array<std::size_t, kNumClasses> counts{};
    for (PointClass c : member_truth) ++counts[index_of(c)];
    std::size_t best = index_of(PointClass::Ignored);
    for (std::size_t k = 0; k < kNumClasses; ++k)
        if (counts[k] > counts[best] || (counts[k] == counts[best] && k < best)) best = k;
    return static_cast<PointClass>(best);
}

namespace {

std::vector<std::vector<std::size_t>> cluster_members(const FrameSegmentation& seg) {
    std::vector<std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < seg.cluster_ids.size(); ++i) {
        const int id = seg.cluster_ids[i];
        if (id < 0) continue;
        if (static_cast<std::size_t>(id) >= members.size()) members.resize(static_cast<std::size_t>(id) + 1);
        members[static_cast<std::size_t>(id)].push_back(i);
    }
    return members;
}

std::vector<Point> gather(const PointCloud& cloud, std::span<const std::size_t> idx) {
    std::vector<Point> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(cloud.points[i]);
    return out;
}

}  // namespace

std::vector<features::FeatureRow> cluster_feature_rows(const PointCloud& cloud, const FrameSegmentation& seg,
                                                       std::span<const PointClass> truth, features::EigenMode mode) {
    if (truth.size() != cloud.size()) throw Error(ErrorCode::Argument, "truth length does not match the cloud");
    std::vector<features::FeatureRow> rows;
    for (const auto& m : cluster_members(seg)) {
        if (m.empty()) continue;
        std::vector<PointClass> member_truth;
        member_truth.reserve(m.size());
        for (std::size_t i : m) member_truth.push_back(truth[i]);
        rows.push_back({features::extract_features(gather(cloud, m), mode), majority_class(member_truth)});
    }
    return rows;
}

std::vector<PointClass> predict_frame(const classifiers::Model& model, const PointCloud& cloud,
                                      const FrameSegmentation& seg, features::EigenMode mode, double threshold) {
    std::vector<PointClass> predicted(cloud.size(), PointClass::Ignored);
    for (const auto& m : cluster_members(seg)) {
        if (m.empty()) continue;
        const auto p = classifiers::predict(model, features::extract_features(gather(cloud, m), mode));
        const PointClass cls = classifiers::apply_confidence_threshold(p, threshold);
        for (std::size_t i : m) predicted[i] = cls;
    }
    return predicted;
}

// ------------------------------------------------------------- commands

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["tool"] = "lidarseg";
    j["version"] = kToolVersion;
    j["command"] = command;
    j["config"] = nlohmann::json::parse(config_json);
    j["inputs"] = inputs;
    nlohmann::json stage_list = nlohmann::json::array();
    for (const StageTiming& s : stages) {
        stage_list.push_back({{"name", s.name}, {"status", s.status}, {"milliseconds", std::max(0.0, s.milliseconds)}});
    }
    j["stages"] = stage_list;
    j["outputs"] = outputs;
    nlohmann::json fail_list = nlohmann::json::array();
    for (const auto& [frame, message] : failures) fail_list.push_back({{"frame", frame}, {"error", message}});
    j["failures"] = fail_list;
    j["warnings"] = warnings;
    j["failed_stage"] = failed_stage ? nlohmann::json(*failed_stage) : nlohmann::json(nullptr);
    return j.dump(2) + "\n";
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

KittiLayout resolve_layout(const fs::path& root) {
    if (fs::is_directory(root / "velodyne")) return {root / "velodyne", root / "label_2", root / "calib"};
    return {root, root.parent_path() / "label_2", root.parent_path() / "calib"};
}

std::vector<fs::path> list_frames(const fs::path& velodyne_dir) {
    if (!fs::is_directory(velodyne_dir)) throw Error(ErrorCode::Io, "not a directory: " + velodyne_dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(velodyne_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".bin") out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

RunManifest cmd_preprocess(const fs::path& input_dir, const PipelineConfig& config, const fs::path& output_dir) {
    config.validate();
    RunManifest manifest = new_manifest("preprocess", config);
    const auto start = Clock::now();
    const fs::path velodyne = resolve_layout(input_dir).velodyne;
    if (list_frames(velodyne).empty()) {
        throw Error(ErrorCode::EmptyInput, "no velodyne .bin frames in " + velodyne.string());
    }
    fs::create_directories(output_dir);
    OutputSet out(output_dir);
    run_preprocess(velodyne, config, out, "", manifest);
    manifest.stages.push_back({"preprocess", "ok", elapsed_ms(start)});
    finish_manifest(manifest, out);
    return manifest;
}

RunManifest cmd_extract(const fs::path& preprocessed_dir, const fs::path& labels_dir, const fs::path& calib_dir,
                        const PipelineConfig& config, const fs::path& output_dir) {
    config.validate();
    RunManifest manifest = new_manifest("extract", config);
    manifest.inputs = {preprocessed_dir.generic_string(), labels_dir.generic_string(), calib_dir.generic_string()};
    const auto start = Clock::now();
    const auto by_frame = run_extract(preprocessed_dir, labels_dir, calib_dir, config, manifest);
    std::vector<features::FeatureRow> rows;
    for (const auto& [id, r] : by_frame) rows.insert(rows.end(), r.begin(), r.end());
    fs::create_directories(output_dir);
    OutputSet out(output_dir);
    out.write("features.csv", features::write_feature_csv(rows));
    manifest.stages.push_back({"extract", "ok", elapsed_ms(start)});
    finish_manifest(manifest, out);
    return manifest;
}

RunManifest cmd_train(const fs::path& features_csv, const PipelineConfig& config, const fs::path& output_dir) {
    config.validate();
    RunManifest manifest = new_manifest("train", config);
    manifest.inputs = {features_csv.generic_string()};
    const auto start = Clock::now();
    const auto rows = features::parse_feature_csv(kitti::read_text_file(features_csv));
    const TrainOutcome trained = run_train(rows, config);
    fs::create_directories(output_dir);
    OutputSet out(output_dir);
    out.write("model.lseg", classifiers::serialize_model(trained.model, config.eigen_mode));
    out.write("training_report.json", trained.report_json);
    manifest.stages.push_back({"train", "ok", elapsed_ms(start)});
    finish_manifest(manifest, out);
    return manifest;
}

RunManifest cmd_evaluate(const fs::path& model_file, const fs::path& preprocessed_dir, const fs::path& labels_dir,
                         const fs::path& calib_dir, const PipelineConfig& config, const fs::path& output_dir) {
    config.validate();
    RunManifest manifest = new_manifest("evaluate", config);
    manifest.inputs = {model_file.generic_string(), preprocessed_dir.generic_string(), labels_dir.generic_string(),
                       calib_dir.generic_string()};
    const auto start = Clock::now();
    const auto bundle = classifiers::deserialize_model(kitti::read_binary_file(model_file));
    const auto reports =
        run_evaluate(bundle, preprocessed_dir, labels_dir, calib_dir, config, std::nullopt, manifest);
    fs::create_directories(output_dir);
    OutputSet out(output_dir);
    write_reports(out, "", reports);
    manifest.stages.push_back({"evaluate", "ok", elapsed_ms(start)});
    finish_manifest(manifest, out);
    return manifest;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_frames(std::vector<std::string> frame_ids,
                                                                           const SplitConfig& split,
                                                                           std::uint64_t seed) {
    std::sort(frame_ids.begin(), frame_ids.end());
    const std::size_t n = frame_ids.size();
    const double ratio = static_cast<double>(split.train) / static_cast<double>(split.train + split.validation);
    auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));
    if (split.validation > 0 && n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    n_train = std::min(n_train, n);

    std::mt19937_64 rng(seed);
    std::shuffle(frame_ids.begin(), frame_ids.end(), rng);
    std::vector<std::string> train(frame_ids.begin(), frame_ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::string> validation(frame_ids.begin() + static_cast<std::ptrdiff_t>(n_train), frame_ids.end());
    std::sort(train.begin(), train.end());
    std::sort(validation.begin(), validation.end());
    return {train, validation};
}

RunManifest cmd_run_all(const RunAllOptions& options, const PipelineConfig& config) {
    config.validate();
    RunManifest manifest = new_manifest("run-all", config);
    if (list_frames(options.velodyne_dir).empty()) {
        throw Error(ErrorCode::EmptyInput, "no velodyne .bin frames in " + options.velodyne_dir.string());
    }
    fs::create_directories(options.output_dir);
    OutputSet out(options.output_dir);

    const std::vector<std::string> stage_names = {"preprocess", "extract", "split", "train", "evaluate"};
    std::size_t current = 0;
    auto start = Clock::now();
    const auto begin_stage = [&](std::size_t index) {
        current = index;
        start = Clock::now();
        spdlog::info("stage {}", stage_names[index]);
        if (options.fail_at_stage && *options.fail_at_stage == stage_names[index]) {
            throw Error(ErrorCode::Io, "stage " + stage_names[index] + " interrupted");
        }
    };
    const auto end_stage = [&] { manifest.stages.push_back({stage_names[current], "ok", elapsed_ms(start)}); };

    try {
        begin_stage(0);
        const fs::path pre = "preprocess";
        run_preprocess(options.velodyne_dir, config, out, pre, manifest);
        end_stage();

        begin_stage(1);
        const auto by_frame = run_extract(options.output_dir / pre, options.labels_dir, options.calib_dir, config,
                                          manifest);
        for (const auto& [id, rows] : by_frame) out.write(fs::path("features") / (id + ".csv"), features::write_feature_csv(rows));
        end_stage();

        begin_stage(2);
        std::vector<std::string> ids;
        for (const auto& [id, rows] : by_frame) ids.push_back(id);
        const auto [train_ids, validation_ids] = split_frames(ids, config.split, config.seed);
        out.write("split/train_frames.txt", joined_lines(train_ids));
        out.write("split/validation_frames.txt", joined_lines(validation_ids));
        const auto train_rows = concat_rows(by_frame, train_ids);
        out.write("split/train.csv", features::write_feature_csv(train_rows));
        out.write("split/validation.csv", features::write_feature_csv(concat_rows(by_frame, validation_ids)));
        end_stage();

        begin_stage(3);
        const TrainOutcome trained = run_train(train_rows, config);
        out.write("model/model.lseg", classifiers::serialize_model(trained.model, config.eigen_mode));
        out.write("model/training_report.json", trained.report_json);
        end_stage();

        begin_stage(4);
        if (validation_ids.empty()) throw Error(ErrorCode::EmptyData, "no validation frames after the split");
        const classifiers::ModelBundle bundle{trained.model, config.eigen_mode};
        const auto reports = run_evaluate(bundle, options.output_dir / pre, options.labels_dir, options.calib_dir,
                                          config, validation_ids, manifest);
        write_reports(out, "evaluation", reports);
        end_stage();
    } catch (const std::exception& e) {
        manifest.failed_stage = stage_names[current];
        manifest.stages.push_back({stage_names[current], "failed", elapsed_ms(start)});
        for (std::size_t k = current + 1; k < stage_names.size(); ++k) manifest.stages.push_back({stage_names[k], "skipped", 0.0});
        manifest.failures.emplace_back("", e.what());
        finish_manifest(manifest, out);
        throw;
    }
    finish_manifest(manifest, out);
    return manifest;
}

}  // namespace lidarseg::pipeline
