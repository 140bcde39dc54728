#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lidarseg/classifiers.hpp"
#include "lidarseg/error.hpp"

namespace lidarseg::classifiers {

namespace {

constexpr std::uint64_t kDropoutStream = 0x5deece66dull;

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Binary cross-entropy evaluated from the logit, stable for large |z|.
double bce_from_logit(double z, double y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

DenseLayer make_layer(std::size_t inputs, std::size_t outputs, std::mt19937_64& rng) {
    DenseLayer layer;
    layer.inputs = inputs;
    layer.outputs = outputs;
    layer.weights.resize(inputs * outputs);
    layer.bias.assign(outputs, 0.0);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(inputs)));
    for (double& w : layer.weights) w = dist(rng);
    return layer;
}

std::vector<DenseLayer> zeros_like(const std::vector<DenseLayer>& layers) {
    std::vector<DenseLayer> g = layers;
    for (DenseLayer& l : g) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    return g;
}

// Forward + backward for one sample. Adds scale * dLoss/dParam into grads and
// returns the sample loss. dropout_rng == nullptr disables dropout.
double backprop_sample(const MlpModel& model, const FeatureArray& x, double y, std::mt19937_64* dropout_rng,
                       double scale, std::vector<DenseLayer>& grads) {
    const std::size_t num_layers = model.layers.size();
    std::vector<std::vector<double>> acts(num_layers);       // input to each layer
    std::vector<std::vector<double>> pre(num_layers - 1);    // hidden pre-activations
    std::vector<std::vector<double>> masks(num_layers - 1);  // dropout scale per hidden unit
    acts[0].assign(x.begin(), x.end());

    const double keep = 1.0 - model.dropout_rate;
    std::bernoulli_distribution keep_dist(keep);
    for (std::size_t l = 0; l + 1 < num_layers; ++l) {
        const DenseLayer& layer = model.layers[l];
        std::vector<double>& z = pre[l];
        z.assign(layer.bias.begin(), layer.bias.end());
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            const double* w = &layer.weights[o * layer.inputs];
            double s = 0.0;
            for (std::size_t i = 0; i < layer.inputs; ++i) s += w[i] * acts[l][i];
            z[o] += s;
        }
        masks[l].assign(layer.outputs, 1.0);
        if (dropout_rng != nullptr && model.dropout_rate > 0.0) {
            for (double& m : masks[l]) m = keep_dist(*dropout_rng) ? 1.0 / keep : 0.0;
        }
        std::vector<double>& a = acts[l + 1];
        a.resize(layer.outputs);
        for (std::size_t o = 0; o < layer.outputs; ++o) a[o] = std::max(z[o], 0.0) * masks[l][o];
    }
    const DenseLayer& out = model.layers.back();
    double logit = out.bias[0];
    for (std::size_t i = 0; i < out.inputs; ++i) logit += out.weights[i] * acts.back()[i];

    std::vector<double> delta{scale * (sigmoid(logit) - y)};
    for (std::size_t l = num_layers; l-- > 0;) {
        const DenseLayer& layer = model.layers[l];
        DenseLayer& g = grads[l];
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            if (delta[o] == 0.0) continue;
            double* gw = &g.weights[o * layer.inputs];
            for (std::size_t i = 0; i < layer.inputs; ++i) gw[i] += delta[o] * acts[l][i];
            g.bias[o] += delta[o];
        }
        if (l == 0) break;
        std::vector<double> prev(layer.inputs, 0.0);
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            if (delta[o] == 0.0) continue;
            const double* w = &layer.weights[o * layer.inputs];
            for (std::size_t i = 0; i < layer.inputs; ++i) prev[i] += w[i] * delta[o];
        }
        for (std::size_t i = 0; i < layer.inputs; ++i) prev[i] *= (pre[l - 1][i] > 0.0 ? 1.0 : 0.0) * masks[l - 1][i];
        delta = std::move(prev);
    }
    return bce_from_logit(logit, y);
}

double logit_standardized(const MlpModel& model, const FeatureArray& z) {
    std::vector<double> a(z.begin(), z.end());
    std::vector<double> next;
    for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
        const DenseLayer& layer = model.layers[l];
        next.assign(layer.bias.begin(), layer.bias.end());
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            const double* w = &layer.weights[o * layer.inputs];
            double s = 0.0;
            for (std::size_t i = 0; i < layer.inputs; ++i) s += w[i] * a[i];
            next[o] = std::max(next[o] + s, 0.0);
        }
        a.swap(next);
    }
    const DenseLayer& out = model.layers.back();
    double logit = out.bias[0];
    for (std::size_t i = 0; i < out.inputs; ++i) logit += out.weights[i] * a[i];
    return logit;
}

void check_batch(const MlpModel& model, std::span<const FeatureArray> inputs, std::span<const double> targets) {
    if (model.layers.empty()) throw Error(ErrorCode::Argument, "mlp has no layers");
    if (inputs.size() != targets.size()) throw Error(ErrorCode::Argument, "mlp: input/target count mismatch");
    if (inputs.empty()) throw Error(ErrorCode::EmptyData, "mlp: empty batch");
}

}  // namespace

MlpModel MlpModel::create(int hidden_layers, double dropout_rate, std::uint64_t seed) {
    if (hidden_layers < 1 || hidden_layers > 3) throw Error(ErrorCode::Config, "mlp hidden_layers must be 1, 2 or 3");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error(ErrorCode::Config, "mlp dropout_rate must be in [0, 1)");
    MlpModel m;
    m.dropout_rate = dropout_rate;
    std::mt19937_64 rng(seed);
    std::size_t fan_in = FeatureVector::kSize;
    for (int l = 0; l < hidden_layers; ++l) {
        m.layers.push_back(make_layer(fan_in, kHiddenUnits, rng));
        fan_in = kHiddenUnits;
    }
    m.layers.push_back(make_layer(fan_in, 1, rng));
    return m;
}

std::vector<std::size_t> MlpModel::parameter_counts() const {
    std::vector<std::size_t> out;
    for (const DenseLayer& l : layers) out.push_back(l.parameter_count());
    return out;
}

std::size_t MlpModel::parameter_count() const {
    const auto counts = parameter_counts();
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

double MlpModel::forward_standardized(const FeatureArray& z) const {
    if (layers.empty()) throw Error(ErrorCode::Argument, "mlp has no layers");
    return sigmoid(logit_standardized(*this, z));
}

double mlp_loss(const MlpModel& model, std::span<const FeatureArray> inputs, std::span<const double> targets) {
    check_batch(model, inputs, targets);
    double total = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) total += bce_from_logit(logit_standardized(model, inputs[i]), targets[i]);
    return total / static_cast<double>(inputs.size());
}

std::vector<DenseLayer> mlp_gradient(const MlpModel& model, std::span<const FeatureArray> inputs,
                                     std::span<const double> targets) {
    check_batch(model, inputs, targets);
    std::vector<DenseLayer> grads = zeros_like(model.layers);
    const double scale = 1.0 / static_cast<double>(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) backprop_sample(model, inputs[i], targets[i], nullptr, scale, grads);
    return grads;
}

MlpModel train_mlp(const TrainingSet& data, const MlpTrainParams& params, MlpTrainingLog* log) {
    if (data.empty()) throw Error(ErrorCode::EmptyData, "train_mlp: empty training set");
    const auto counts = data.class_counts();
    const std::size_t cars = counts[index_of(PointClass::Car)];
    const std::size_t peds = counts[index_of(PointClass::Pedestrian)];
    if (counts[index_of(PointClass::Cyclist)] != 0 || cars == 0 || peds == 0) {
        throw Error(ErrorCode::Arity, "train_mlp needs exactly the Car and Pedestrian classes");
    }
    if (params.epochs < 0) throw Error(ErrorCode::Argument, "train_mlp: epochs must be >= 0");
    if (params.batch_size < 1) throw Error(ErrorCode::Argument, "train_mlp: batch_size must be >= 1");
    if (!(params.learning_rate > 0.0)) throw Error(ErrorCode::Argument, "train_mlp: learning_rate must be > 0");

    MlpTrainingLog local_log;
    MlpTrainingLog& out_log = log != nullptr ? *log : local_log;
    out_log = {};
    const double skew = static_cast<double>(std::max(cars, peds) - std::min(cars, peds)) /
                        static_cast<double>(std::max(cars, peds));
    if (skew > 0.10) ++out_log.warnings;

    MlpModel model = MlpModel::create(params.hidden_layers, params.dropout_rate, params.seed);
    model.standardizer = Standardizer::fit(data);

    std::vector<FeatureArray> z;
    std::vector<double> y;
    for (const FeatureRow& r : data.rows) {
        z.push_back(model.standardizer.apply(r.features.to_array()));
        y.push_back(r.cls == PointClass::Pedestrian ? 1.0 : 0.0);
    }

    std::mt19937_64 rng(params.seed ^ kDropoutStream);
    std::vector<std::size_t> order(z.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<DenseLayer> grads = zeros_like(model.layers);
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += params.batch_size) {
            const std::size_t end = std::min(order.size(), start + params.batch_size);
            const double scale = 1.0 / static_cast<double>(end - start);
            grads = zeros_like(model.layers);
            for (std::size_t b = start; b < end; ++b) backprop_sample(model, z[order[b]], y[order[b]], &rng, scale, grads);
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                DenseLayer& layer = model.layers[l];
                for (std::size_t k = 0; k < layer.weights.size(); ++k)
                    layer.weights[k] -= params.learning_rate * grads[l].weights[k];
                for (std::size_t k = 0; k < layer.bias.size(); ++k)
                    layer.bias[k] -= params.learning_rate * grads[l].bias[k];
            }
        }
        out_log.epoch_loss.push_back(mlp_loss(model, z, y));
    }
    return model;
}

}  // namespace lidarseg::classifiers
