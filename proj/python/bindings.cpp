#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "lidarseg/classifiers.hpp"
#include "lidarseg/clustering.hpp"
#include "lidarseg/error.hpp"
#include "lidarseg/evaluation.hpp"
#include "lidarseg/features.hpp"
#include "lidarseg/ground_filter.hpp"
#include "lidarseg/kitti_io.hpp"
#include "lidarseg/pipeline.hpp"

namespace py = pybind11;
using namespace lidarseg;

namespace {

using FloatArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ClassArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

// Accepts (N, 3) or (N, 4); a missing intensity column reads as 0.
PointCloud cloud_from_array(const FloatArray& arr) {
    if (arr.ndim() != 2 || (arr.shape(1) != 3 && arr.shape(1) != 4)) {
        throw Error(ErrorCode::Argument, "points must have shape (N, 3) or (N, 4)");
    }
    const auto v = arr.unchecked<2>();
    PointCloud cloud;
    cloud.points.resize(static_cast<std::size_t>(v.shape(0)));
    for (py::ssize_t i = 0; i < v.shape(0); ++i) {
        auto& p = cloud.points[static_cast<std::size_t>(i)];
        p.x = static_cast<float>(v(i, 0));
        p.y = static_cast<float>(v(i, 1));
        p.z = static_cast<float>(v(i, 2));
        p.intensity = v.shape(1) == 4 ? static_cast<float>(v(i, 3)) : 0.0f;
    }
    return cloud;
}

std::vector<Vec3> positions_from_array(const FloatArray& arr) {
    if (arr.ndim() != 2 || arr.shape(1) < 3) throw Error(ErrorCode::Argument, "points must have shape (N, >=3)");
    const auto v = arr.unchecked<2>();
    std::vector<Vec3> out(static_cast<std::size_t>(v.shape(0)));
    for (py::ssize_t i = 0; i < v.shape(0); ++i) out[static_cast<std::size_t>(i)] = {v(i, 0), v(i, 1), v(i, 2)};
    return out;
}

py::array_t<float> cloud_to_array(const PointCloud& cloud) {
    py::array_t<float> out({static_cast<py::ssize_t>(cloud.size()), py::ssize_t{4}});
    if (!cloud.empty()) std::memcpy(out.mutable_data(), cloud.points.data(), cloud.size() * sizeof(Point));
    return out;
}

std::vector<PointClass> classes_from_array(const ClassArray& arr) {
    std::vector<PointClass> out;
    out.reserve(static_cast<std::size_t>(arr.size()));
    for (py::ssize_t i = 0; i < arr.size(); ++i) {
        const auto c = class_from_code(arr.data()[i]);
        if (!c) throw Error(ErrorCode::Argument, "class codes must be 0..3");
        out.push_back(*c);
    }
    return out;
}

template <typename T>
py::array_t<T> to_numpy(const std::vector<T>& v) {
    py::array_t<T> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::array_t<bool> mask_to_numpy(const std::vector<bool>& mask) {
    py::array_t<bool> out(static_cast<py::ssize_t>(mask.size()));
    for (std::size_t i = 0; i < mask.size(); ++i) out.mutable_data()[i] = mask[i];
    return out;
}

py::tuple assignment_to_python(const clustering::ClusterAssignment& a) {
    py::array_t<double> modes({static_cast<py::ssize_t>(a.modes.size()), py::ssize_t{3}});
    auto m = modes.mutable_unchecked<2>();
    for (std::size_t k = 0; k < a.modes.size(); ++k) {
        const auto r = static_cast<py::ssize_t>(k);
        m(r, 0) = a.modes[k].x;
        m(r, 1) = a.modes[k].y;
        m(r, 2) = a.modes[k].z;
    }
    return py::make_tuple(to_numpy(a.labels), modes);
}

classifiers::TrainingSet training_set(const FloatArray& x, const ClassArray& y) {
    if (x.ndim() != 2 || x.shape(1) != 5) throw Error(ErrorCode::Argument, "features must have shape (N, 5)");
    if (y.size() != x.shape(0)) throw Error(ErrorCode::Argument, "labels and features differ in length");
    const auto v = x.unchecked<2>();
    const auto cls = classes_from_array(y);
    std::vector<features::FeatureRow> rows;
    for (py::ssize_t i = 0; i < v.shape(0); ++i) {
        rows.push_back({{v(i, 0), v(i, 1), v(i, 2), v(i, 3), v(i, 4)}, cls[static_cast<std::size_t>(i)]});
    }
    return classifiers::TrainingSet::from_rows(rows);
}

// Thin owner of a trained model and the feature mode it expects.
struct PyModel {
    classifiers::ModelBundle bundle;

    std::string kind() const {
        switch (classifiers::kind_of(bundle.model)) {
            case classifiers::ModelKind::Tree: return "tree";
            case classifiers::ModelKind::Svm: return "svm";
            case classifiers::ModelKind::Mlp: return "mlp";
        }
        return "";
    }

    py::tuple predict(const FloatArray& x, double threshold) const {
        if (x.ndim() != 2 || x.shape(1) != 5) throw Error(ErrorCode::Argument, "features must have shape (N, 5)");
        const auto v = x.unchecked<2>();
        py::array_t<int> cls(v.shape(0));
        py::array_t<double> conf(v.shape(0));
        for (py::ssize_t i = 0; i < v.shape(0); ++i) {
            const auto p = classifiers::predict(bundle.model, {v(i, 0), v(i, 1), v(i, 2), v(i, 3), v(i, 4)});
            cls.mutable_data()[i] = static_cast<int>(classifiers::apply_confidence_threshold(p, threshold));
            conf.mutable_data()[i] = p.confidence;
        }
        return py::make_tuple(cls, conf);
    }

    py::bytes to_bytes() const {
        const auto bytes = classifiers::serialize_model(bundle.model, bundle.feature_mode);
        return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
    }

    static PyModel from_bytes(const py::bytes& data) {
        const std::string s = data;
        const auto* p = reinterpret_cast<const std::byte*>(s.data());
        return {classifiers::deserialize_model({p, s.size()})};
    }
};

PyModel train(const FloatArray& x, const ClassArray& y, const std::string& kind, const py::kwargs& kw) {
    auto data = training_set(x, y);
    const auto get = [&](const char* key, auto fallback) {
        return kw.contains(key) ? kw[key].cast<decltype(fallback)>() : fallback;
    };
    const auto seed = get("seed", std::uint64_t{0});
    if (get("undersample", false)) data = classifiers::undersample(data, seed);
    const auto mode = features::eigen_mode_from_string(get("feature_mode", std::string("eigenvalues")));
    if (kind == "tree") {
        return {{classifiers::train_tree(data, get("max_depth", 8), get("min_leaf", std::size_t{5})), mode}};
    }
    if (kind == "svm") {
        return {{classifiers::train_svm(data, get("c", 1.0), get("epochs", 100), seed), mode}};
    }
    if (kind == "mlp") {
        classifiers::MlpTrainParams p;
        p.epochs = get("epochs", p.epochs);
        p.learning_rate = get("learning_rate", p.learning_rate);
        p.dropout_rate = get("dropout_rate", p.dropout_rate);
        p.batch_size = get("batch_size", p.batch_size);
        p.hidden_layers = get("hidden_layers", p.hidden_layers);
        p.seed = seed;
        return {{classifiers::train_mlp(data, p), mode}};
    }
    throw Error(ErrorCode::Argument, "kind must be tree, svm or mlp");
}

}  // namespace

PYBIND11_MODULE(_lidarseg, m) {
    m.doc() = "LiDAR pointcloud segmentation and classification";

    static py::exception<Error> error_type(m, "LidarsegError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type.ptr())(py::str(e.what()));
            exc.attr("code") = py::str(to_string(e.code()));
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    m.attr("CAR") = 0;
    m.attr("PEDESTRIAN") = 1;
    m.attr("CYCLIST") = 2;
    m.attr("IGNORED") = 3;
    m.attr("__version__") = std::string(pipeline::kToolVersion);

    m.def("class_name", [](int code) {
        const auto c = class_from_code(code);
        if (!c) throw Error(ErrorCode::Argument, "class codes must be 0..3");
        return std::string(class_name(*c));
    });

    m.def(
        "parse_velodyne",
        [](const py::bytes& data) {
            const std::string s = data;
            return cloud_to_array(kitti::parse_velodyne_bin({reinterpret_cast<const std::byte*>(s.data()), s.size()}));
        },
        py::arg("data"), "Decode a KITTI velodyne .bin buffer into an (N, 4) float32 array.");
    m.def(
        "load_velodyne", [](const std::filesystem::path& p) { return cloud_to_array(kitti::load_velodyne_file(p)); },
        py::arg("path"));
    m.def(
        "label_points",
        [](const FloatArray& points, const std::string& label_text, const std::string& calib_text) {
            const auto cls = kitti::label_points(cloud_from_array(points), kitti::parse_label_file(label_text),
                                                 kitti::parse_calibration(calib_text));
            std::vector<int> out(cls.size());
            for (std::size_t i = 0; i < cls.size(); ++i) out[i] = static_cast<int>(cls[i]);
            return to_numpy(out);
        },
        py::arg("points"), py::arg("label_text"), py::arg("calib_text"));

    m.def(
        "csf_ground_mask",
        [](const FloatArray& points, double cell_size, int rigidness, double gravity_step, int iterations,
           double convergence_eps, double class_threshold) {
            ground::ClothParams p{cell_size, rigidness, gravity_step, iterations, convergence_eps, class_threshold};
            p.validate();
            const auto cloud = cloud_from_array(points);
            return mask_to_numpy(ground::csf_filter(cloud, p).ground_mask(cloud.size()));
        },
        py::arg("points"), py::arg("cell_size") = 0.5, py::arg("rigidness") = 3, py::arg("gravity_step") = 0.065,
        py::arg("iterations") = 500, py::arg("convergence_eps") = 0.005, py::arg("class_threshold") = 0.3,
        "Cloth simulation ground filter; returns a boolean mask, true for ground.");
    m.def(
        "ransac_plane",
        [](const FloatArray& points, int iterations, double threshold, std::uint64_t seed) {
            const auto r = ground::ransac_plane(cloud_from_array(points), iterations, threshold, seed);
            return py::make_tuple(py::make_tuple(r.plane.a, r.plane.b, r.plane.c, r.plane.d), r.inliers.size());
        },
        py::arg("points"), py::arg("iterations") = 200, py::arg("threshold") = 0.2, py::arg("seed") = 0,
        "Returns ((a, b, c, d), inlier_count) for the plane a x + b y + c z + d = 0.");

    m.def(
        "mean_shift",
        [](const FloatArray& points, double bandwidth, double mode_merge_radius, std::size_t min_cluster_size,
           unsigned workers) {
            clustering::MeanShiftParams p;
            p.bandwidth = bandwidth;
            p.mode_merge_radius = mode_merge_radius;
            p.min_cluster_size = min_cluster_size;
            const auto pts = positions_from_array(points);
            py::gil_scoped_release release;
            const auto a = clustering::mean_shift_cluster(pts, p, workers);
            py::gil_scoped_acquire acquire;
            return assignment_to_python(a);
        },
        py::arg("points"), py::arg("bandwidth") = 1.0, py::arg("mode_merge_radius") = 0.5,
        py::arg("min_cluster_size") = 1, py::arg("workers") = 1, "Returns (labels, modes); noise is -1.");
    m.def(
        "dbscan",
        [](const FloatArray& points, double eps, std::size_t min_samples) {
            return assignment_to_python(clustering::dbscan(positions_from_array(points), eps, min_samples));
        },
        py::arg("points"), py::arg("eps") = 0.5, py::arg("min_samples") = 10);

    m.def(
        "extract_features",
        [](const FloatArray& points, const std::string& mode) {
            const auto f = features::extract_features(cloud_from_array(points).points, features::eigen_mode_from_string(mode));
            return to_numpy(std::vector<double>{f.eig1, f.eig2, f.eig3, f.volume, f.intensity_variance});
        },
        py::arg("points"), py::arg("mode") = "eigenvalues",
        "Five cluster features: eig1, eig2, eig3, AABB volume, intensity variance.");

    py::class_<PyModel>(m, "Model")
        .def_property_readonly("kind", &PyModel::kind)
        .def_property_readonly("feature_mode",
                               [](const PyModel& p) { return std::string(features::to_string(p.bundle.feature_mode)); })
        .def("predict", &PyModel::predict, py::arg("features"), py::arg("threshold") = 0.0,
             "Returns (classes, confidences); classes below the threshold are IGNORED.")
        .def("to_bytes", &PyModel::to_bytes)
        .def_static("from_bytes", &PyModel::from_bytes, py::arg("data"));
    m.def("train", &train, py::arg("features"), py::arg("labels"), py::arg("kind") = "tree",
          "Train a tree, svm or mlp classifier on (N, 5) features and class codes.");

    m.def(
        "confusion",
        [](const ClassArray& truth, const ClassArray& predicted) {
            const auto cm = evaluation::confusion(classes_from_array(truth), classes_from_array(predicted));
            py::array_t<std::int64_t> out({py::ssize_t{4}, py::ssize_t{4}});
            auto o = out.mutable_unchecked<2>();
            for (py::ssize_t a = 0; a < 4; ++a)
                for (py::ssize_t b = 0; b < 4; ++b) o(a, b) = static_cast<std::int64_t>(cm.counts[a][b]);
            return out;
        },
        py::arg("truth"), py::arg("predicted"), "4x4 counts indexed [truth, predicted].");
    m.def(
        "frame_accuracy",
        [](const ClassArray& truth, const ClassArray& predicted) {
            return evaluation::frame_accuracy(evaluation::confusion(classes_from_array(truth), classes_from_array(predicted)));
        },
        py::arg("truth"), py::arg("predicted"));
    m.def(
        "labeled_accuracy",
        [](const ClassArray& truth, const ClassArray& predicted) {
            return evaluation::labeled_accuracy(
                evaluation::confusion(classes_from_array(truth), classes_from_array(predicted)));
        },
        py::arg("truth"), py::arg("predicted"));

    m.def(
        "run_all",
        [](const std::filesystem::path& input, const std::filesystem::path& output,
           const std::optional<std::string>& config_toml, std::optional<std::uint64_t> seed,
           std::optional<unsigned> jobs) {
            auto config = config_toml ? pipeline::parse_config(*config_toml) : pipeline::PipelineConfig{};
            if (seed) config.seed = *seed;
            if (jobs) config.jobs = *jobs;
            config.validate();
            const auto layout = pipeline::resolve_layout(input);
            pipeline::RunAllOptions opts{layout.velodyne, layout.labels, layout.calib, output, std::nullopt};
            py::gil_scoped_release release;
            return pipeline::cmd_run_all(opts, config).to_json();
        },
        py::arg("input"), py::arg("output"), py::arg("config_toml") = std::nullopt, py::arg("seed") = std::nullopt,
        py::arg("jobs") = std::nullopt, "Full pipeline on a KITTI-style directory; returns the manifest JSON.");
}
