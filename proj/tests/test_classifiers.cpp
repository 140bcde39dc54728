#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "lidarseg/classifiers.hpp"
#include "lidarseg/error.hpp"
#include "synthetic.hpp"

using namespace lidarseg;
using namespace lidarseg::classifiers;

namespace {

TrainingSet rows_to_set(const std::vector<FeatureRow>& rows) { return TrainingSet::from_rows(rows); }

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Io;
}

TrainingSet split_on_feature0() {
    TrainingSet t;
    for (int i = 0; i < 10; ++i) t.rows.push_back({{static_cast<double>(i) * 0.4, 1, 1, 1, 1}, PointClass::Car});
    for (int i = 0; i < 10; ++i) t.rows.push_back({{5.0 + i * 0.3, 1, 1, 1, 1}, PointClass::Cyclist});
    return t;
}

FeatureVector random_vector(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-2, 6);
    return {u(rng), u(rng), u(rng), u(rng), u(rng)};
}

}  // namespace

TEST_SUITE("classifiers") {

TEST_CASE("training set drops Ignored rows") {
    std::vector<FeatureRow> rows = {{{}, PointClass::Car}, {{}, PointClass::Ignored}, {{}, PointClass::Cyclist}};
    const auto t = TrainingSet::from_rows(rows);
    CHECK(t.size() == 2);
    CHECK(t.class_counts() == std::array<std::size_t, 3>{1, 0, 1});
}

TEST_CASE("undersample to the minority") {
    TrainingSet t;
    for (int i = 0; i < 100; ++i) t.rows.push_back({{double(i), 0, 0, 0, 0}, PointClass::Car});
    for (int i = 0; i < 10; ++i) t.rows.push_back({{double(i), 1, 0, 0, 0}, PointClass::Pedestrian});
    const auto u = undersample(t, 3);
    CHECK(u.class_counts() == std::array<std::size_t, 3>{10, 10, 0});
    const auto again = undersample(t, 3);
    bool same = u.size() == again.size();
    for (std::size_t i = 0; same && i < u.size(); ++i) same = u.rows[i].features == again.rows[i].features;
    CHECK(same);
    const auto other = undersample(t, 4);
    CHECK(other.class_counts() == u.class_counts());

    TrainingSet big;
    for (int i = 0; i < 2918; ++i) big.rows.push_back({{}, PointClass::Pedestrian});
    for (int i = 0; i < 1016; ++i) big.rows.push_back({{}, PointClass::Car});
    CHECK(undersample(big, 1).size() == 2032);

    TrainingSet single;
    single.rows.push_back({{}, PointClass::Car});
    CHECK(code_of([&] { undersample(single, 0); }) == ErrorCode::Imbalance);
}

TEST_CASE("confidence threshold is inclusive") {
    CHECK(apply_confidence_threshold({PointClass::Car, 0.95}, 0.90) == PointClass::Car);
    CHECK(apply_confidence_threshold({PointClass::Car, 0.89}, 0.90) == PointClass::Ignored);
    CHECK(apply_confidence_threshold({PointClass::Cyclist, 0.90}, 0.90) == PointClass::Cyclist);
    CHECK(apply_confidence_threshold({PointClass::Pedestrian, 0.0}, 0.0) == PointClass::Pedestrian);
}

TEST_CASE("tree splits a one-feature separable set at depth 1") {
    const TrainingSet t = split_on_feature0();
    const DecisionTree tree = train_tree(t, 5, 1);
    CHECK(tree.depth() == 1);
    const TreeNode& root = tree.nodes[0];
    CHECK(root.feature == 0);
    CHECK(root.threshold > 3.6);
    CHECK(root.threshold <= 5.0);
    CHECK(accuracy(Model{tree}, t) == 1.0);
    const auto p = predict(tree, {1.0, 1, 1, 1, 1});
    CHECK(p.cls == PointClass::Car);
    CHECK(p.confidence == 1.0);
}

TEST_CASE("tree with a single class is one leaf") {
    TrainingSet t;
    for (int i = 0; i < 5; ++i) t.rows.push_back({{double(i), 0, 0, 0, 0}, PointClass::Pedestrian});
    const DecisionTree tree = train_tree(t, 4, 1);
    REQUIRE(tree.nodes.size() == 1);
    CHECK(tree.nodes[0].cls == PointClass::Pedestrian);
    CHECK(tree.nodes[0].probabilities[1] == 1.0);
    CHECK(code_of([] { train_tree(TrainingSet{}, 3, 1); }) == ErrorCode::EmptyData);
}

TEST_CASE("tree leaves are proper distributions and accuracy grows with depth") {
    const auto t = rows_to_set(synth::car_pedestrian_rows(2, 300));
    double previous = 0.0;
    for (int depth = 1; depth <= 6; ++depth) {
        const DecisionTree tree = train_tree(t, depth, 1);
        for (const TreeNode& n : tree.nodes) {
            if (n.is_leaf()) {
                double sum = 0;
                for (double p : n.probabilities) sum += p;
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            } else {
                CHECK(n.left > 0);
                CHECK(n.right > 0);
            }
        }
        const double acc = accuracy(Model{tree}, t);
        CHECK(acc >= previous);
        previous = acc;
    }
}

TEST_CASE("svm on separable blobs") {
    const auto t = rows_to_set(synth::separable_three_class(3, 100));
    const auto svm = train_svm(t, 1.0, 100, 7);
    CHECK(accuracy(Model{svm}, t) == 1.0);
    CHECK(svm.classes.size() == 3);
    for (double sd : svm.standardizer.stddev) CHECK(sd > 0.0);
    CHECK(code_of([] {
              TrainingSet one;
              one.rows.push_back({{}, PointClass::Car});
              train_svm(one, 1.0, 10, 0);
          }) == ErrorCode::Imbalance);
}

TEST_CASE("untrained svm gives uniform confidence") {
    const auto t = rows_to_set(synth::separable_three_class(4, 20));
    const auto svm = train_svm(t, 1.0, 0, 0);
    for (const auto& w : svm.weights) CHECK(std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; }));
    const auto p = predict(svm, {1, 2, 3, 4, 5});
    CHECK(p.confidence == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("svm argmax is the same for raw and pre-standardized input") {
    const auto t = rows_to_set(synth::separable_three_class(5, 60));
    const auto svm = train_svm(t, 1.0, 50, 1);
    std::mt19937_64 rng(9);
    for (int i = 0; i < 100; ++i) {
        const auto f = random_vector(rng);
        const auto scores = svm.scores_standardized(svm.standardizer.apply(f.to_array()));
        const auto best = std::max_element(scores.begin(), scores.end()) - scores.begin();
        CHECK(predict(svm, f).cls == svm.classes[static_cast<std::size_t>(best)]);
    }
}

TEST_CASE("mlp architecture parameter counts") {
    const MlpModel m = MlpModel::create(2, 0.5, 1);
    CHECK(m.parameter_counts() == std::vector<std::size_t>{1200, 40200, 201});
    CHECK(m.parameter_count() == 41601);
    CHECK(MlpModel::create(1, 0.5, 1).parameter_counts() == std::vector<std::size_t>{1200, 201});
    CHECK(MlpModel::create(3, 0.5, 1).parameter_count() == 1200 + 2 * 40200 + 201);
}

TEST_CASE("mlp output of exactly one half is Pedestrian") {
    MlpModel m = MlpModel::create(2, 0.5, 1);
    for (auto& l : m.layers) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    const auto p = predict(m, {1, 2, 3, 4, 5});
    CHECK(p.cls == PointClass::Pedestrian);
    CHECK(p.confidence == 0.5);
}

TEST_CASE("mlp forward pass is deterministic") {
    const MlpModel m = MlpModel::create(2, 0.5, 3);
    const FeatureArray z{0.1, -0.2, 0.3, 1.5, -1.0};
    CHECK(m.forward_standardized(z) == m.forward_standardized(z));
}

TEST_CASE("mlp gradient matches finite differences") {
    const auto t = rows_to_set(synth::car_pedestrian_rows(6, 8));
    MlpModel m = MlpModel::create(2, 0.0, 11);
    m.standardizer = Standardizer::fit(t);
    std::vector<FeatureArray> x;
    std::vector<double> y;
    for (const auto& r : t.rows) {
        x.push_back(m.standardizer.apply(r.features.to_array()));
        y.push_back(r.cls == PointClass::Pedestrian ? 1.0 : 0.0);
    }
    const auto grad = mlp_gradient(m, x, y);
    std::mt19937_64 rng(1);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        for (int k = 0; k < 4; ++k) {
            const std::size_t w = std::uniform_int_distribution<std::size_t>(0, m.layers[l].weights.size() - 1)(rng);
            const double saved = m.layers[l].weights[w];
            m.layers[l].weights[w] = saved + 1e-4;
            const double up = mlp_loss(m, x, y);
            m.layers[l].weights[w] = saved - 1e-4;
            const double down = mlp_loss(m, x, y);
            m.layers[l].weights[w] = saved;
            const double numeric = (up - down) / 2e-4;
            const double analytic = grad[l].weights[w];
            const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            CHECK(rel <= 1e-4);
        }
    }
}

TEST_CASE("mlp loss falls during the first epoch") {
    const auto t = rows_to_set(synth::car_pedestrian_rows(7, 200));
    MlpTrainParams p;
    p.epochs = 1;
    p.seed = 5;
    MlpTrainingLog log;
    const MlpModel trained = train_mlp(t, p, &log);
    MlpModel initial = MlpModel::create(p.hidden_layers, p.dropout_rate, p.seed);
    initial.standardizer = trained.standardizer;
    std::vector<FeatureArray> x;
    std::vector<double> y;
    for (const auto& r : t.rows) {
        x.push_back(trained.standardizer.apply(r.features.to_array()));
        y.push_back(r.cls == PointClass::Pedestrian ? 1.0 : 0.0);
    }
    CHECK(mlp_loss(trained, x, y) < mlp_loss(initial, x, y));
    REQUIRE(log.epoch_loss.size() == 1);
    CHECK(log.epoch_loss[0] == doctest::Approx(mlp_loss(trained, x, y)));
}

TEST_CASE("mlp arity and skew checks") {
    const auto three = rows_to_set(synth::separable_three_class(8, 10));
    CHECK(code_of([&] { train_mlp(three, {}); }) == ErrorCode::Arity);

    TrainingSet skewed;
    for (int i = 0; i < 30; ++i) skewed.rows.push_back({{1.0 + i, 1, 1, 1, 1}, PointClass::Car});
    for (int i = 0; i < 10; ++i) skewed.rows.push_back({{-1.0 - i, 1, 1, 1, 1}, PointClass::Pedestrian});
    MlpTrainParams p;
    p.epochs = 1;
    MlpTrainingLog log;
    train_mlp(skewed, p, &log);
    CHECK(log.warnings == 1);
}

TEST_CASE("predict rejects non-finite features") {
    const DecisionTree tree = train_tree(split_on_feature0(), 2, 1);
    CHECK(code_of([&] { predict(tree, {NAN, 0, 0, 0, 0}); }) == ErrorCode::Argument);
}

TEST_CASE("model round trips keep predictions") {
    const auto t = rows_to_set(synth::separable_three_class(9, 50));
    const auto binary = rows_to_set(synth::car_pedestrian_rows(9, 50));
    MlpTrainParams mp;
    mp.epochs = 2;
    const std::vector<Model> models = {train_tree(t, 4, 2), train_svm(t, 1.0, 20, 3), train_mlp(binary, mp)};
    std::mt19937_64 rng(10);
    for (const Model& m : models) {
        const auto bytes = serialize_model(m, features::EigenMode::AxisVariances);
        const auto bundle = deserialize_model(bytes);
        CHECK(kind_of(bundle.model) == kind_of(m));
        CHECK(bundle.feature_mode == features::EigenMode::AxisVariances);
        CHECK(serialize_model(bundle.model, bundle.feature_mode) == bytes);
        for (int i = 0; i < 100; ++i) {
            const auto f = random_vector(rng);
            const auto a = predict(m, f);
            const auto b = predict(bundle.model, f);
            CHECK(a.cls == b.cls);
            CHECK(a.confidence == b.confidence);
        }
    }
}

TEST_CASE("malformed model files") {
    const auto bytes = serialize_model(train_tree(split_on_feature0(), 2, 1));
    CHECK(std::string(reinterpret_cast<const char*>(bytes.data()), 4) == "LSEG");
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    CHECK(code_of([&] { deserialize_model(truncated); }) == ErrorCode::Format);
    auto wrong_kind = bytes;
    wrong_kind[6] = std::byte{9};
    CHECK(code_of([&] { deserialize_model(wrong_kind); }) == ErrorCode::Format);
    auto wrong_version = bytes;
    wrong_version[4] = std::byte{2};
    CHECK(code_of([&] { deserialize_model(wrong_version); }) == ErrorCode::Format);
    auto trailing = bytes;
    trailing.push_back(std::byte{0});
    CHECK(code_of([&] { deserialize_model(trailing); }) == ErrorCode::Format);
}

}
