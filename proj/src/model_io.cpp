#include <algorithm>
#include <cmath>

#include "byte_io.hpp"
#include "lidarseg/classifiers.hpp"
#include "lidarseg/error.hpp"

namespace lidarseg::classifiers {

namespace {

constexpr std::byte kMagic[4] = {std::byte{'L'}, std::byte{'S'}, std::byte{'E'}, std::byte{'G'}};

void write_standardizer(detail::ByteWriter& w, const Standardizer& s) {
    for (double v : s.mean) w.f64(v);
    for (double v : s.stddev) w.f64(v);
}

Standardizer read_standardizer(detail::ByteReader& r) {
    Standardizer s;
    for (double& v : s.mean) v = r.f64();
    for (double& v : s.stddev) {
        v = r.f64();
        if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::Format, "model: invalid standardization stddev");
    }
    return s;
}

PointClass read_labeled_class(detail::ByteReader& r) {
    const auto code = r.u8();
    if (code >= kNumLabeledClasses) throw Error(ErrorCode::Format, "model: invalid class code");
    return static_cast<PointClass>(code);
}

void write_payload(detail::ByteWriter& w, const DecisionTree& tree) {
    w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const TreeNode& n : tree.nodes) {
        w.i32(n.feature);
        w.f64(n.threshold);
        w.i32(n.left);
        w.i32(n.right);
        w.u8(static_cast<std::uint8_t>(n.cls));
        for (double p : n.probabilities) w.f64(p);
    }
}

void write_payload(detail::ByteWriter& w, const LinearSvmModel& svm) {
    write_standardizer(w, svm.standardizer);
    w.u8(static_cast<std::uint8_t>(svm.classes.size()));
    for (std::size_t k = 0; k < svm.classes.size(); ++k) {
        w.u8(static_cast<std::uint8_t>(svm.classes[k]));
        for (double v : svm.weights[k]) w.f64(v);
        w.f64(svm.bias[k]);
    }
}

void write_payload(detail::ByteWriter& w, const MlpModel& mlp) {
    write_standardizer(w, mlp.standardizer);
    w.f64(mlp.dropout_rate);
    w.u32(static_cast<std::uint32_t>(mlp.layers.size()));
    for (const DenseLayer& l : mlp.layers) {
        w.u32(static_cast<std::uint32_t>(l.inputs));
        w.u32(static_cast<std::uint32_t>(l.outputs));
        for (double v : l.weights) w.f64(v);
        for (double v : l.bias) w.f64(v);
    }
}

DecisionTree read_tree(detail::ByteReader& r) {
    DecisionTree tree;
    const std::uint32_t count = r.u32();
    if (count == 0 || count > r.remaining()) throw Error(ErrorCode::Format, "model: bad tree node count");
    tree.nodes.resize(count);
    for (TreeNode& n : tree.nodes) {
        n.feature = r.i32();
        n.threshold = r.f64();
        n.left = r.i32();
        n.right = r.i32();
        n.cls = read_labeled_class(r);
        for (double& p : n.probabilities) p = r.f64();
    }
    // Children must point forward so traversal always terminates.
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        const TreeNode& n = tree.nodes[i];
        if (n.is_leaf()) continue;
        const auto valid = [&](int c) { return c > static_cast<int>(i) && c < static_cast<int>(count); };
        if (n.feature >= static_cast<int>(FeatureVector::kSize) || !valid(n.left) || !valid(n.right)) {
            throw Error(ErrorCode::Format, "model: malformed tree node");
        }
    }
    return tree;
}

LinearSvmModel read_svm(detail::ByteReader& r) {
    LinearSvmModel svm;
    svm.standardizer = read_standardizer(r);
    const auto k = r.u8();
    if (k < 2 || k > kNumLabeledClasses) throw Error(ErrorCode::Format, "model: bad svm class count");
    for (std::size_t i = 0; i < k; ++i) {
        svm.classes.push_back(read_labeled_class(r));
        FeatureArray w{};
        for (double& v : w) v = r.f64();
        svm.weights.push_back(w);
        svm.bias.push_back(r.f64());
    }
    return svm;
}

MlpModel read_mlp(detail::ByteReader& r) {
    MlpModel mlp;
    mlp.standardizer = read_standardizer(r);
    mlp.dropout_rate = r.f64();
    const std::uint32_t count = r.u32();
    if (count < 2 || count > 4) throw Error(ErrorCode::Format, "model: bad mlp layer count");
    std::size_t expected_inputs = FeatureVector::kSize;
    for (std::uint32_t l = 0; l < count; ++l) {
        DenseLayer layer;
        layer.inputs = r.u32();
        layer.outputs = r.u32();
        const std::size_t expected_outputs = l + 1 == count ? 1 : MlpModel::kHiddenUnits;
        if (layer.inputs != expected_inputs || layer.outputs != expected_outputs) {
            throw Error(ErrorCode::Format, "model: unexpected mlp layer shape");
        }
        layer.weights.resize(layer.inputs * layer.outputs);
        for (double& v : layer.weights) v = r.f64();
        layer.bias.resize(layer.outputs);
        for (double& v : layer.bias) v = r.f64();
        mlp.layers.push_back(std::move(layer));
        expected_inputs = expected_outputs;
    }
    return mlp;
}

}  // namespace

std::vector<std::byte> serialize_model(const Model& model, features::EigenMode feature_mode) {
    detail::ByteWriter w;
    w.bytes(kMagic);
    w.u16(kModelFormatVersion);
    w.u8(static_cast<std::uint8_t>(kind_of(model)));
    w.u8(feature_mode == features::EigenMode::Eigenvalues ? 0 : 1);
    std::visit([&](const auto& m) { write_payload(w, m); }, model);
    return w.take();
}

ModelBundle deserialize_model(std::span<const std::byte> bytes) {
    if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4, std::begin(kMagic))) {
        throw Error(ErrorCode::Format, "model: missing LSEG magic");
    }
    detail::ByteReader r(bytes.subspan(4));
    const auto version = r.u16();
    if (version != kModelFormatVersion) {
        throw Error(ErrorCode::Format, "model: unsupported format version " + std::to_string(version));
    }
    const auto kind = r.u8();
    const auto mode = r.u8();
    if (mode > 1) throw Error(ErrorCode::Format, "model: unknown feature schema");
    ModelBundle bundle;
    bundle.feature_mode = mode == 0 ? features::EigenMode::Eigenvalues : features::EigenMode::AxisVariances;
    switch (kind) {
        case static_cast<std::uint8_t>(ModelKind::Tree): bundle.model = read_tree(r); break;
        case static_cast<std::uint8_t>(ModelKind::Svm): bundle.model = read_svm(r); break;
        case static_cast<std::uint8_t>(ModelKind::Mlp): bundle.model = read_mlp(r); break;
        default: throw Error(ErrorCode::Format, "model: unknown model kind " + std::to_string(kind));
    }
    if (!r.at_end()) throw Error(ErrorCode::Format, "model: trailing bytes");
    return bundle;
}

}  // namespace lidarseg::classifiers
