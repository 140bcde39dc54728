#include "lidarseg/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lidarseg/error.hpp"

namespace lidarseg::classifiers {

TrainingSet TrainingSet::from_rows(std::span<const FeatureRow> rows) {
    TrainingSet out;
    for (const FeatureRow& r : rows)
        if (r.cls != PointClass::Ignored) out.rows.push_back(r);
    return out;
}

std::array<std::size_t, kNumLabeledClasses> TrainingSet::class_counts() const {
    std::array<std::size_t, kNumLabeledClasses> counts{};
    for (const FeatureRow& r : rows) {
        if (r.cls == PointClass::Ignored) throw Error(ErrorCode::Argument, "training set contains an Ignored row");
        ++counts[index_of(r.cls)];
    }
    return counts;
}

std::vector<PointClass> TrainingSet::classes_present() const {
    const auto counts = class_counts();
    std::vector<PointClass> out;
    for (std::size_t k = 0; k < kNumLabeledClasses; ++k)
        if (counts[k] > 0) out.push_back(static_cast<PointClass>(k));
    return out;
}

TrainingSet undersample(const TrainingSet& data, std::uint64_t seed) {
    const auto present = data.classes_present();
    if (present.size() < 2) throw Error(ErrorCode::Imbalance, "undersample needs at least two classes");
    const auto counts = data.class_counts();
    std::size_t minority = data.size();
    for (PointClass c : present) minority = std::min(minority, counts[index_of(c)]);

    std::mt19937_64 rng(seed);
    TrainingSet out;
    for (PointClass c : present) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < data.rows.size(); ++i)
            if (data.rows[i].cls == c) idx.push_back(i);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(minority);
        std::sort(idx.begin(), idx.end());
        for (std::size_t i : idx) out.rows.push_back(data.rows[i]);
    }
    std::shuffle(out.rows.begin(), out.rows.end(), rng);
    return out;
}

PointClass apply_confidence_threshold(const Prediction& p, double threshold) {
    return p.confidence >= threshold ? p.cls : PointClass::Ignored;
}

Standardizer Standardizer::fit(const TrainingSet& data) {
    Standardizer s;
    if (data.empty()) return s;
    const double n = static_cast<double>(data.size());
    for (const FeatureRow& r : data.rows) {
        const auto a = r.features.to_array();
        for (std::size_t k = 0; k < a.size(); ++k) s.mean[k] += a[k];
    }
    for (double& m : s.mean) m /= n;
    FeatureArray var{};
    for (const FeatureRow& r : data.rows) {
        const auto a = r.features.to_array();
        for (std::size_t k = 0; k < a.size(); ++k) var[k] += (a[k] - s.mean[k]) * (a[k] - s.mean[k]);
    }
    for (std::size_t k = 0; k < var.size(); ++k) {
        const double sd = std::sqrt(var[k] / n);
        s.stddev[k] = sd > 0.0 && std::isfinite(sd) ? sd : 1.0;
    }
    return s;
}

FeatureArray Standardizer::apply(const FeatureArray& raw) const {
    FeatureArray z{};
    for (std::size_t k = 0; k < raw.size(); ++k) z[k] = (raw[k] - mean[k]) / stddev[k];
    return z;
}

namespace {

FeatureArray checked(const FeatureVector& f) {
    if (!f.is_finite()) throw Error(ErrorCode::Argument, "predict: non-finite feature value");
    return f.to_array();
}

}  // namespace

Prediction predict(const DecisionTree& model, const FeatureVector& features) {
    const TreeNode& leaf = model.leaf_for(checked(features));
    return {leaf.cls, leaf.probabilities[index_of(leaf.cls)]};
}

Prediction predict(const LinearSvmModel& model, const FeatureVector& features) {
    const auto scores = model.scores_standardized(model.standardizer.apply(checked(features)));
    if (scores.empty()) throw Error(ErrorCode::Argument, "predict: untrained svm");
    const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    double denom = 0.0;
    for (double s : scores) denom += std::exp(s - scores[best]);
    return {model.classes[best], 1.0 / denom};
}

Prediction predict(const MlpModel& model, const FeatureVector& features) {
    const double p = model.forward_standardized(model.standardizer.apply(checked(features)));
    const PointClass cls = p >= 0.5 ? PointClass::Pedestrian : PointClass::Car;
    return {cls, std::max(p, 1.0 - p)};
}

Prediction predict(const Model& model, const FeatureVector& features) {
    return std::visit([&](const auto& m) { return predict(m, features); }, model);
}

ModelKind kind_of(const Model& model) {
    switch (model.index()) {
        case 0: return ModelKind::Tree;
        case 1: return ModelKind::Svm;
        default: return ModelKind::Mlp;
    }
}

double accuracy(const Model& model, const TrainingSet& data) {
    if (data.empty()) throw Error(ErrorCode::EmptyData, "accuracy over an empty set");
    std::size_t correct = 0;
    for (const FeatureRow& r : data.rows)
        if (predict(model, r.features).cls == r.cls) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace lidarseg::classifiers
