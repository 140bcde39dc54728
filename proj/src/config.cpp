#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lidarseg/error.hpp"
#include "lidarseg/pipeline.hpp"
#include "toml.hpp"

namespace lidarseg::pipeline {

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::Config, msg); }

// Reads typed keys from one TOML table and rejects keys nobody asked for.
class Section {
public:
    Section(const toml::table* table, std::string path) : table_(table), path_(std::move(path)) {}

    template <typename T>
    void read(std::string_view key, T& out) {
        known_.insert(std::string(key));
        if (table_ == nullptr) return;
        const toml::node* node = table_->get(key);
        if (node == nullptr) return;
        if constexpr (std::is_same_v<T, bool>) {
            auto v = node->value_exact<bool>();
            if (!v) config_error(where(key) + " must be a boolean");
            out = *v;
        } else if constexpr (std::is_floating_point_v<T>) {
            auto v = node->value<double>();
            if (!v || node->is_boolean()) config_error(where(key) + " must be a number");
            out = *v;
        } else if constexpr (std::is_integral_v<T>) {
            auto v = node->value_exact<std::int64_t>();
            if (!v) config_error(where(key) + " must be an integer");
            if (*v < 0 && std::is_unsigned_v<T>) config_error(where(key) + " must be non-negative");
            out = static_cast<T>(*v);
        } else {
            auto v = node->value_exact<std::string>();
            if (!v) config_error(where(key) + " must be a string");
            out = *v;
        }
    }

    Section child(std::string_view key) {
        known_.insert(std::string(key));
        const toml::table* sub = nullptr;
        if (table_ != nullptr) {
            if (const toml::node* node = table_->get(key)) {
                sub = node->as_table();
                if (sub == nullptr) config_error(where(key) + " must be a table");
            }
        }
        return Section(sub, where(key));
    }

    void finish() const {
        if (table_ == nullptr) return;
        for (const auto& [key, value] : *table_) {
            if (!known_.count(std::string(key.str()))) config_error("unknown config key " + where(key.str()));
        }
    }

private:
    std::string where(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

    const toml::table* table_;
    std::string path_;
    std::set<std::string> known_;
};

std::uint64_t parse_seed_string(const std::string& s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) config_error("seed must be an unsigned integer");
    return v;
}

}  // namespace

std::string_view to_string(GroundMethod m) { return m == GroundMethod::Csf ? "csf" : "ransac"; }
std::string_view to_string(ClusterMethod m) { return m == ClusterMethod::MeanShift ? "meanshift" : "dbscan"; }
std::string_view to_string(ClassifierKind k) {
    switch (k) {
        case ClassifierKind::Tree: return "tree";
        case ClassifierKind::Svm: return "svm";
        case ClassifierKind::Mlp: return "mlp";
    }
    return "tree";
}

void PipelineConfig::validate() const {
    ground_filter.cloth.validate();
    if (ground_filter.ransac.iterations < 1) config_error("ground_filter.ransac.iterations must be >= 1");
    if (!(ground_filter.ransac.inlier_threshold > 0.0)) config_error("ground_filter.ransac.inlier_threshold must be > 0");
    if (!(ground_filter.ransac.ground_threshold > 0.0)) config_error("ground_filter.ransac.ground_threshold must be > 0");
    clustering.mean_shift.validate();
    if (!(clustering.dbscan.eps > 0.0)) config_error("clustering.dbscan.eps must be > 0");
    if (clustering.dbscan.min_samples < 1) config_error("clustering.dbscan.min_samples must be >= 1");
    if (classifier.tree.max_depth < 1) config_error("classifier.tree.max_depth must be >= 1");
    if (classifier.tree.min_leaf < 1) config_error("classifier.tree.min_leaf must be >= 1");
    if (!(classifier.svm.c > 0.0)) config_error("classifier.svm.c must be > 0");
    if (classifier.svm.epochs < 0) config_error("classifier.svm.epochs must be >= 0");
    const auto& mlp = classifier.mlp;
    if (mlp.epochs < 0) config_error("classifier.mlp.epochs must be >= 0");
    if (!(mlp.dropout_rate >= 0.0 && mlp.dropout_rate < 1.0)) config_error("classifier.mlp.dropout_rate must be in [0, 1)");
    if (!(mlp.learning_rate > 0.0)) config_error("classifier.mlp.learning_rate must be > 0");
    if (mlp.batch_size < 1) config_error("classifier.mlp.batch_size must be >= 1");
    if (mlp.hidden_layers < 1 || mlp.hidden_layers > 3) config_error("classifier.mlp.hidden_layers must be 1, 2 or 3");
    if (!(threshold >= 0.0 && threshold <= 1.0)) config_error("threshold must be in [0, 1]");
    if (jobs < 1) config_error("jobs must be >= 1");
    if (split.train < 1 || split.validation < 0) config_error("split.train must be >= 1 and split.validation >= 0");
}

PipelineConfig parse_config(std::string_view toml_text) {
    toml::table root;
    try {
        root = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        config_error(std::string("config: ") + std::string(e.description()));
    }

    PipelineConfig c;
    Section top(&root, "");
    if (const toml::node* seed = root.get("seed"); seed != nullptr && seed->is_string()) {
        c.seed = parse_seed_string(*seed->value<std::string>());
        std::string ignored;
        top.read("seed", ignored);
    } else {
        std::int64_t s = 0;
        top.read("seed", s);
        if (s < 0) config_error("seed must be non-negative");
        c.seed = static_cast<std::uint64_t>(s);
    }
    top.read("jobs", c.jobs);
    top.read("threshold", c.threshold);

    {
        Section gf = top.child("ground_filter");
        std::string method(to_string(c.ground_filter.method));
        gf.read("method", method);
        if (method == "csf") c.ground_filter.method = GroundMethod::Csf;
        else if (method == "ransac") c.ground_filter.method = GroundMethod::Ransac;
        else config_error("ground_filter.method must be \"csf\" or \"ransac\"");
        Section csf = gf.child("csf");
        auto& cloth = c.ground_filter.cloth;
        csf.read("cell_size", cloth.cell_size);
        csf.read("rigidness", cloth.rigidness);
        csf.read("gravity_step", cloth.gravity_step);
        csf.read("iterations", cloth.iterations);
        csf.read("convergence_eps", cloth.convergence_eps);
        csf.read("class_threshold", cloth.class_threshold);
        csf.finish();
        Section ransac = gf.child("ransac");
        ransac.read("iterations", c.ground_filter.ransac.iterations);
        ransac.read("inlier_threshold", c.ground_filter.ransac.inlier_threshold);
        ransac.read("ground_threshold", c.ground_filter.ransac.ground_threshold);
        ransac.finish();
        gf.finish();
    }
    {
        Section cl = top.child("clustering");
        std::string method(to_string(c.clustering.method));
        cl.read("method", method);
        if (method == "meanshift") c.clustering.method = ClusterMethod::MeanShift;
        else if (method == "dbscan") c.clustering.method = ClusterMethod::Dbscan;
        else config_error("clustering.method must be \"meanshift\" or \"dbscan\"");
        cl.read("min_cluster_size", c.clustering.mean_shift.min_cluster_size);
        Section ms = cl.child("meanshift");
        auto& m = c.clustering.mean_shift;
        ms.read("bandwidth", m.bandwidth);
        ms.read("shift_tolerance", m.shift_tolerance);
        ms.read("max_iterations", m.max_iterations);
        ms.read("mode_merge_radius", m.mode_merge_radius);
        ms.finish();
        Section db = cl.child("dbscan");
        db.read("eps", c.clustering.dbscan.eps);
        db.read("min_samples", c.clustering.dbscan.min_samples);
        db.finish();
        cl.finish();
    }
    {
        Section f = top.child("features");
        std::string mode(features::to_string(c.eigen_mode));
        f.read("eigen_mode", mode);
        c.eigen_mode = features::eigen_mode_from_string(mode);
        f.finish();
    }
    {
        Section cls = top.child("classifier");
        std::string kind(to_string(c.classifier.kind));
        cls.read("kind", kind);
        if (kind == "tree") c.classifier.kind = ClassifierKind::Tree;
        else if (kind == "svm") c.classifier.kind = ClassifierKind::Svm;
        else if (kind == "mlp") c.classifier.kind = ClassifierKind::Mlp;
        else config_error("classifier.kind must be \"tree\", \"svm\" or \"mlp\"");
        cls.read("undersample", c.classifier.undersample);
        Section tree = cls.child("tree");
        tree.read("max_depth", c.classifier.tree.max_depth);
        tree.read("min_leaf", c.classifier.tree.min_leaf);
        tree.finish();
        Section svm = cls.child("svm");
        svm.read("c", c.classifier.svm.c);
        svm.read("epochs", c.classifier.svm.epochs);
        svm.finish();
        Section mlp = cls.child("mlp");
        mlp.read("epochs", c.classifier.mlp.epochs);
        mlp.read("dropout_rate", c.classifier.mlp.dropout_rate);
        mlp.read("learning_rate", c.classifier.mlp.learning_rate);
        mlp.read("batch_size", c.classifier.mlp.batch_size);
        mlp.read("hidden_layers", c.classifier.mlp.hidden_layers);
        mlp.finish();
        cls.finish();
    }
    {
        Section split = top.child("split");
        split.read("train", c.split.train);
        split.read("validation", c.split.validation);
        split.finish();
    }
    {
        Section out = top.child("output");
        out.read("ply", c.write_ply);
        out.finish();
    }
    top.finish();
    c.validate();
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) config_error("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_toml(const PipelineConfig& c) {
    const auto& cloth = c.ground_filter.cloth;
    const auto& ms = c.clustering.mean_shift;
    const auto& mlp = c.classifier.mlp;
    toml::table root{
        {"seed", std::to_string(c.seed)},
        {"jobs", static_cast<std::int64_t>(c.jobs)},
        {"threshold", c.threshold},
        {"ground_filter",
         toml::table{{"method", std::string(to_string(c.ground_filter.method))},
                     {"csf", toml::table{{"cell_size", cloth.cell_size},
                                         {"rigidness", cloth.rigidness},
                                         {"gravity_step", cloth.gravity_step},
                                         {"iterations", cloth.iterations},
                                         {"convergence_eps", cloth.convergence_eps},
                                         {"class_threshold", cloth.class_threshold}}},
                     {"ransac", toml::table{{"iterations", c.ground_filter.ransac.iterations},
                                            {"inlier_threshold", c.ground_filter.ransac.inlier_threshold},
                                            {"ground_threshold", c.ground_filter.ransac.ground_threshold}}}}},
        {"clustering",
         toml::table{{"method", std::string(to_string(c.clustering.method))},
                     {"min_cluster_size", static_cast<std::int64_t>(ms.min_cluster_size)},
                     {"meanshift", toml::table{{"bandwidth", ms.bandwidth},
                                               {"shift_tolerance", ms.shift_tolerance},
                                               {"max_iterations", ms.max_iterations},
                                               {"mode_merge_radius", ms.mode_merge_radius}}},
                     {"dbscan", toml::table{{"eps", c.clustering.dbscan.eps},
                                            {"min_samples", static_cast<std::int64_t>(c.clustering.dbscan.min_samples)}}}}},
        {"features", toml::table{{"eigen_mode", std::string(features::to_string(c.eigen_mode))}}},
        {"classifier",
         toml::table{{"kind", std::string(to_string(c.classifier.kind))},
                     {"undersample", c.classifier.undersample},
                     {"tree", toml::table{{"max_depth", c.classifier.tree.max_depth},
                                          {"min_leaf", static_cast<std::int64_t>(c.classifier.tree.min_leaf)}}},
                     {"svm", toml::table{{"c", c.classifier.svm.c}, {"epochs", c.classifier.svm.epochs}}},
                     {"mlp", toml::table{{"epochs", mlp.epochs},
                                         {"dropout_rate", mlp.dropout_rate},
                                         {"learning_rate", mlp.learning_rate},
                                         {"batch_size", static_cast<std::int64_t>(mlp.batch_size)},
                                         {"hidden_layers", mlp.hidden_layers}}}}},
        {"split", toml::table{{"train", c.split.train}, {"validation", c.split.validation}}},
        {"output", toml::table{{"ply", c.write_ply}}},
    };
    std::ostringstream os;
    os << root << '\n';
    return os.str();
}

std::string to_json(const PipelineConfig& c) {
    const auto& cloth = c.ground_filter.cloth;
    const auto& ms = c.clustering.mean_shift;
    const auto& mlp = c.classifier.mlp;
    nlohmann::json j = {
        {"seed", c.seed},
        {"jobs", c.jobs},
        {"threshold", c.threshold},
        {"ground_filter",
         {{"method", to_string(c.ground_filter.method)},
          {"csf",
           {{"cell_size", cloth.cell_size},
            {"rigidness", cloth.rigidness},
            {"gravity_step", cloth.gravity_step},
            {"iterations", cloth.iterations},
            {"convergence_eps", cloth.convergence_eps},
            {"class_threshold", cloth.class_threshold}}},
          {"ransac",
           {{"iterations", c.ground_filter.ransac.iterations},
            {"inlier_threshold", c.ground_filter.ransac.inlier_threshold},
            {"ground_threshold", c.ground_filter.ransac.ground_threshold}}}}},
        {"clustering",
         {{"method", to_string(c.clustering.method)},
          {"min_cluster_size", ms.min_cluster_size},
          {"meanshift",
           {{"bandwidth", ms.bandwidth},
            {"shift_tolerance", ms.shift_tolerance},
            {"max_iterations", ms.max_iterations},
            {"mode_merge_radius", ms.mode_merge_radius}}},
          {"dbscan", {{"eps", c.clustering.dbscan.eps}, {"min_samples", c.clustering.dbscan.min_samples}}}}},
        {"features", {{"eigen_mode", features::to_string(c.eigen_mode)}}},
        {"classifier",
         {{"kind", to_string(c.classifier.kind)},
          {"undersample", c.classifier.undersample},
          {"tree", {{"max_depth", c.classifier.tree.max_depth}, {"min_leaf", c.classifier.tree.min_leaf}}},
          {"svm", {{"c", c.classifier.svm.c}, {"epochs", c.classifier.svm.epochs}}},
          {"mlp",
           {{"epochs", mlp.epochs},
            {"dropout_rate", mlp.dropout_rate},
            {"learning_rate", mlp.learning_rate},
            {"batch_size", mlp.batch_size},
            {"hidden_layers", mlp.hidden_layers}}}}},
        {"split", {{"train", c.split.train}, {"validation", c.split.validation}}},
        {"output", {{"ply", c.write_ply}}},
    };
    return j.dump();
}

}  // namespace lidarseg::pipeline
