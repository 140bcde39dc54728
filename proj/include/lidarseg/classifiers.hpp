#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "lidarseg/features.hpp"
#include "lidarseg/types.hpp"

namespace lidarseg::classifiers {

using features::FeatureRow;
using features::FeatureVector;
using FeatureArray = std::array<double, FeatureVector::kSize>;

/// Labeled feature rows; never contains Ignored.
struct TrainingSet {
    std::vector<FeatureRow> rows;

    /// Keeps only Car/Pedestrian/Cyclist rows.
    static TrainingSet from_rows(std::span<const FeatureRow> rows);

    std::array<std::size_t, kNumLabeledClasses> class_counts() const;
    std::vector<PointClass> classes_present() const;
    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }
};

/// Downsamples every class to the minority count (seeded, without
/// replacement) and shuffles the result.
TrainingSet undersample(const TrainingSet& data, std::uint64_t seed);

struct Prediction {
    PointClass cls = PointClass::Ignored;
    double confidence = 0.0;
};

/// The class when confidence >= threshold, otherwise Ignored.
PointClass apply_confidence_threshold(const Prediction& p, double threshold);

/// Per-feature z-score parameters. Zero-variance features get stddev 1.
struct Standardizer {
    FeatureArray mean{};
    FeatureArray stddev{1.0, 1.0, 1.0, 1.0, 1.0};

    static Standardizer fit(const TrainingSet& data);
    FeatureArray apply(const FeatureArray& raw) const;
};

// ---------------------------------------------------------------- tree

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // rows with value <= threshold go left
    int left = -1;
    int right = -1;
    PointClass cls = PointClass::Ignored;
    std::array<double, kNumLabeledClasses> probabilities{};

    bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    const TreeNode& leaf_for(const FeatureArray& x) const;
    int depth() const;
};

/// CART with Gini impurity over midpoints of sorted unique values. Ties go to
/// the lowest feature index, then the lowest threshold.
DecisionTree train_tree(const TrainingSet& data, int max_depth, std::size_t min_leaf);

// ----------------------------------------------------------------- svm

struct LinearSvmModel {
    Standardizer standardizer;
    std::vector<PointClass> classes;    // one-vs-rest order
    std::vector<FeatureArray> weights;  // per class, standardized space
    std::vector<double> bias;

    /// Raw one-vs-rest scores for already standardized features.
    std::vector<double> scores_standardized(const FeatureArray& z) const;
};

/// One-vs-rest linear SVM minimizing mean hinge loss + ||w||^2 / (2C) with a
/// 1/(lambda t) subgradient schedule, lambda = 1/C.
LinearSvmModel train_svm(const TrainingSet& data, double regularization_c, int epochs, std::uint64_t seed);

// ----------------------------------------------------------------- mlp

struct DenseLayer {
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::vector<double> weights;  // outputs x inputs, row-major
    std::vector<double> bias;

    std::size_t parameter_count() const { return weights.size() + bias.size(); }
};

struct MlpModel {
    static constexpr std::size_t kHiddenUnits = 200;

    Standardizer standardizer;
    double dropout_rate = 0.5;
    std::vector<DenseLayer> layers;  // hidden ReLU layers, then the sigmoid output

    /// 5 -> 200 (ReLU) [-> 200 (ReLU)]... -> 1 (sigmoid), weights drawn from
    /// N(0, 1/fan_in) and zero biases.
    static MlpModel create(int hidden_layers, double dropout_rate, std::uint64_t seed);

    int hidden_layers() const { return static_cast<int>(layers.size()) - 1; }
    std::vector<std::size_t> parameter_counts() const;
    std::size_t parameter_count() const;

    /// Sigmoid output (probability of Pedestrian) for standardized input, no dropout.
    double forward_standardized(const FeatureArray& z) const;
};

struct MlpTrainParams {
    int epochs = 50;
    double dropout_rate = 0.5;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    int hidden_layers = 2;
    std::uint64_t seed = 0;
};

struct MlpTrainingLog {
    std::vector<double> epoch_loss;  // mean training loss after each epoch, dropout off
    std::size_t warnings = 0;
};

/// Binary Pedestrian (1) vs Car (0) network trained with mini-batch gradient
/// descent on binary cross-entropy.
MlpModel train_mlp(const TrainingSet& data, const MlpTrainParams& params, MlpTrainingLog* log = nullptr);

/// Mean binary cross-entropy over standardized inputs, dropout disabled.
double mlp_loss(const MlpModel& model, std::span<const FeatureArray> inputs, std::span<const double> targets);

/// Gradient of mlp_loss, shaped like model.layers (weights then bias per layer).
std::vector<DenseLayer> mlp_gradient(const MlpModel& model, std::span<const FeatureArray> inputs,
                                     std::span<const double> targets);

// ------------------------------------------------------------- generic

using Model = std::variant<DecisionTree, LinearSvmModel, MlpModel>;

enum class ModelKind : std::uint8_t { Tree = 1, Svm = 2, Mlp = 3 };

ModelKind kind_of(const Model& model);

/// Throws Error(Argument) for non-finite features.
Prediction predict(const Model& model, const FeatureVector& features);
Prediction predict(const DecisionTree& model, const FeatureVector& features);
Prediction predict(const LinearSvmModel& model, const FeatureVector& features);
Prediction predict(const MlpModel& model, const FeatureVector& features);

/// Fraction of rows whose predicted class (no threshold) matches the label.
double accuracy(const Model& model, const TrainingSet& data);

inline constexpr std::uint16_t kModelFormatVersion = 1;

struct ModelBundle {
    Model model;
    features::EigenMode feature_mode = features::EigenMode::Eigenvalues;
};

/// "LSEG", u16 version, u8 kind, then a little-endian payload.
std::vector<std::byte> serialize_model(const Model& model,
                                       features::EigenMode feature_mode = features::EigenMode::Eigenvalues);
ModelBundle deserialize_model(std::span<const std::byte> bytes);

}  // namespace lidarseg::classifiers
