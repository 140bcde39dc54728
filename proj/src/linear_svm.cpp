#include <algorithm>
#include <numeric>
#include <random>

#include "lidarseg/classifiers.hpp"
#include "lidarseg/error.hpp"

namespace lidarseg::classifiers {

std::vector<double> LinearSvmModel::scores_standardized(const FeatureArray& z) const {
    std::vector<double> s(classes.size());
    for (std::size_t k = 0; k < classes.size(); ++k) {
        double v = bias[k];
        for (std::size_t j = 0; j < z.size(); ++j) v += weights[k][j] * z[j];
        s[k] = v;
    }
    return s;
}

LinearSvmModel train_svm(const TrainingSet& data, double regularization_c, int epochs, std::uint64_t seed) {
    if (data.empty()) throw Error(ErrorCode::EmptyData, "train_svm: empty training set");
    if (!(regularization_c > 0.0)) throw Error(ErrorCode::Argument, "train_svm: C must be > 0");
    if (epochs < 0) throw Error(ErrorCode::Argument, "train_svm: epochs must be >= 0");
    const auto classes = data.classes_present();
    if (classes.size() < 2) throw Error(ErrorCode::Imbalance, "train_svm needs at least two classes");

    LinearSvmModel model;
    model.standardizer = Standardizer::fit(data);
    model.classes = classes;
    model.weights.assign(classes.size(), FeatureArray{});
    model.bias.assign(classes.size(), 0.0);

    std::vector<FeatureArray> z;
    z.reserve(data.size());
    for (const FeatureRow& r : data.rows) z.push_back(model.standardizer.apply(r.features.to_array()));

    const double lambda = 1.0 / regularization_c;
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t t = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i : order) {
            ++t;
            const double eta = 1.0 / (lambda * static_cast<double>(t));
            for (std::size_t k = 0; k < classes.size(); ++k) {
                const double y = data.rows[i].cls == classes[k] ? 1.0 : -1.0;
                FeatureArray& w = model.weights[k];
                double margin = model.bias[k];
                for (std::size_t j = 0; j < w.size(); ++j) margin += w[j] * z[i][j];
                margin *= y;
                const double shrink = 1.0 - eta * lambda;
                for (double& wj : w) wj *= shrink;
                if (margin < 1.0) {
                    for (std::size_t j = 0; j < w.size(); ++j) w[j] += eta * y * z[i][j];
                    model.bias[k] += eta * y;
                }
            }
        }
    }
    return model;
}

}  // namespace lidarseg::classifiers
