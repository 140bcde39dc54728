#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lidarseg/classifiers.hpp"
#include "lidarseg/clustering.hpp"
#include "lidarseg/evaluation.hpp"
#include "lidarseg/features.hpp"
#include "lidarseg/ground_filter.hpp"

namespace lidarseg::pipeline {

namespace fs = std::filesystem;

inline constexpr std::string_view kToolVersion = "0.1.0";

enum class GroundMethod { Csf, Ransac };
enum class ClusterMethod { MeanShift, Dbscan };
enum class ClassifierKind { Tree, Svm, Mlp };

struct RansacConfig {
    int iterations = 200;
    double inlier_threshold = 0.2;  // m, for fitting
    double ground_threshold = 0.3;  // m, for the final partition
};

struct GroundFilterConfig {
    GroundMethod method = GroundMethod::Csf;
    ground::ClothParams cloth;
    RansacConfig ransac;
};

struct DbscanConfig {
    double eps = 0.5;
    std::size_t min_samples = 10;
};

struct ClusteringConfig {
    ClusterMethod method = ClusterMethod::MeanShift;
    clustering::MeanShiftParams mean_shift;  // min_cluster_size applies to both methods
    DbscanConfig dbscan;
};

struct TreeConfig {
    int max_depth = 8;
    std::size_t min_leaf = 5;
};

struct SvmConfig {
    double c = 1.0;
    int epochs = 100;
};

struct ClassifierConfig {
    ClassifierKind kind = ClassifierKind::Tree;
    bool undersample = true;
    TreeConfig tree;
    SvmConfig svm;
    classifiers::MlpTrainParams mlp;  // seed comes from the top-level seed
};

struct SplitConfig {
    int train = 23;
    int validation = 13;
};

struct PipelineConfig {
    GroundFilterConfig ground_filter;
    ClusteringConfig clustering;
    features::EigenMode eigen_mode = features::EigenMode::Eigenvalues;
    ClassifierConfig classifier;
    double threshold = 0.90;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    SplitConfig split;
    bool write_ply = false;

    /// Checks every parameter block; throws Error(Config).
    void validate() const;
};

PipelineConfig parse_config(std::string_view toml_text);
PipelineConfig load_config(const fs::path& path);
/// Effective configuration as TOML; parse_config(to_toml(c)) reproduces c.
std::string to_toml(const PipelineConfig& config);
std::string to_json(const PipelineConfig& config);

std::string_view to_string(GroundMethod m);
std::string_view to_string(ClusterMethod m);
std::string_view to_string(ClassifierKind k);

// ------------------------------------------------------------ per frame

struct FrameSegmentation {
    std::vector<bool> is_ground;
    std::vector<int> cluster_ids;  // -1 for ground, noise and undersized clusters
    std::size_t warnings = 0;
};

/// Ground filter then clustering of the non-ground points. Cluster ids refer
/// to clusters of at least min_cluster_size points.
FrameSegmentation segment_frame(const PointCloud& cloud, const PipelineConfig& config, unsigned workers = 1);

/// "point_index,is_ground,cluster_id"
std::string write_segmentation_csv(const FrameSegmentation& seg);
FrameSegmentation parse_segmentation_csv(std::string_view text);

/// Feature rows for every cluster, in cluster-id order. The class is the
/// plurality truth class of the member points (ties to the lower class code).
std::vector<features::FeatureRow> cluster_feature_rows(const PointCloud& cloud, const FrameSegmentation& seg,
                                                       std::span<const PointClass> truth, features::EigenMode mode);

PointClass majority_class(std::span<const PointClass> member_truth);

/// Per-point prediction: cluster class broadcast to members after the
/// confidence threshold; ground and noise points are Ignored.
std::vector<PointClass> predict_frame(const classifiers::Model& model, const PointCloud& cloud,
                                      const FrameSegmentation& seg, features::EigenMode mode, double threshold);

// ------------------------------------------------------------- commands

struct StageTiming {
    std::string name;
    std::string status;  // "ok", "failed" or "skipped"
    double milliseconds = 0.0;
};

struct RunManifest {
    std::string command;
    std::string config_json;
    std::vector<std::string> inputs;
    std::vector<StageTiming> stages;
    std::vector<std::string> outputs;  // relative to the output directory
    std::vector<std::pair<std::string, std::string>> failures;  // frame id, message
    std::size_t warnings = 0;
    std::optional<std::string> failed_stage;

    std::string to_json() const;
};

/// Writes next to `path` and renames into place.
void write_file_atomic(const fs::path& path, std::string_view contents);

struct KittiLayout {
    fs::path velodyne;
    fs::path labels;
    fs::path calib;
};

/// Uses `root/velodyne`, `root/label_2`, `root/calib` when present, otherwise
/// `root` itself as the velodyne directory.
KittiLayout resolve_layout(const fs::path& root);

/// Sorted *.bin frames of a directory.
std::vector<fs::path> list_frames(const fs::path& velodyne_dir);

RunManifest cmd_preprocess(const fs::path& input_dir, const PipelineConfig& config, const fs::path& output_dir);

RunManifest cmd_extract(const fs::path& preprocessed_dir, const fs::path& labels_dir, const fs::path& calib_dir,
                        const PipelineConfig& config, const fs::path& output_dir);

RunManifest cmd_train(const fs::path& features_csv, const PipelineConfig& config, const fs::path& output_dir);

RunManifest cmd_evaluate(const fs::path& model_file, const fs::path& preprocessed_dir, const fs::path& labels_dir,
                         const fs::path& calib_dir, const PipelineConfig& config, const fs::path& output_dir);

struct RunAllOptions {
    fs::path velodyne_dir;
    fs::path labels_dir;
    fs::path calib_dir;
    fs::path output_dir;
    std::optional<std::string> fail_at_stage;  // test hook: abort when this stage starts
};

/// preprocess -> extract -> split -> train -> evaluate under one manifest.
RunManifest cmd_run_all(const RunAllOptions& options, const PipelineConfig& config);

/// Frame-level split: seeded shuffle, first round(N * train / (train + validation)) frames train.
std::pair<std::vector<std::string>, std::vector<std::string>> split_frames(std::vector<std::string> frame_ids,
                                                                           const SplitConfig& split,
                                                                           std::uint64_t seed);

}  // namespace lidarseg::pipeline
