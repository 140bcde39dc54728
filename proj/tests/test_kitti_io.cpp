#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "doctest.h"
#include "lidarseg/error.hpp"
#include "lidarseg/kitti_io.hpp"
#include "synthetic.hpp"

using namespace lidarseg;
using namespace lidarseg::kitti;

namespace {

std::vector<std::byte> float_bytes(std::initializer_list<float> values) {
    std::vector<std::byte> out;
    for (float v : values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xffu));
    }
    return out;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::Io;
}

// Independent containment test: rotate the offset into the box frame with an
// explicit rotation matrix about the camera Y axis.
bool inside_oracle(const ObjectLabel& l, const Vec3& p) {
    const double c = std::cos(l.rotation_y), s = std::sin(l.rotation_y);
    // R_y(ry) maps box-local to camera; the inverse is its transpose.
    const double r[3][3] = {{c, 0, s}, {0, 1, 0}, {-s, 0, c}};
    const double d[3] = {p.x - l.center.x, p.y - l.center.y, p.z - l.center.z};
    double local[3];
    for (int i = 0; i < 3; ++i) local[i] = r[0][i] * d[0] + r[1][i] * d[1] + r[2][i] * d[2];
    return std::abs(local[0]) <= l.length / 2 && std::abs(local[2]) <= l.width / 2 && local[1] <= 0 &&
           local[1] >= -l.height;
}

}  // namespace

TEST_SUITE("kitti_io") {

TEST_CASE("velodyne decodes one point") {
    const auto cloud = parse_velodyne_bin(float_bytes({1.0f, 2.0f, 3.0f, 0.5f}));
    REQUIRE(cloud.size() == 1);
    CHECK(cloud.points[0] == Point{1, 2, 3, 0.5f});
}

TEST_CASE("velodyne empty and malformed inputs") {
    CHECK(parse_velodyne_bin({}).empty());
    auto bytes = float_bytes({1, 2, 3, 0.5f});
    bytes.pop_back();
    CHECK(code_of([&] { parse_velodyne_bin(bytes); }) == ErrorCode::MalformedFrame);

    const auto nan_bytes = float_bytes({0, 0, 0, 0, 1, NAN, 0, 0});
    try {
        parse_velodyne_bin(nan_bytes);
        FAIL("expected malformed point");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MalformedPoint);
        CHECK(std::string(e.what()).find('1') != std::string::npos);
    }
}

TEST_CASE("velodyne clamps intensity with a counter") {
    const auto r = parse_velodyne(float_bytes({0, 0, 0, 1.5f, 0, 0, 0, -0.25f, 0, 0, 0, 0.5f}));
    CHECK(r.clamped_intensities == 2);
    CHECK(r.cloud.points[0].intensity == 1.0f);
    CHECK(r.cloud.points[1].intensity == 0.0f);
}

TEST_CASE("velodyne binary round trip is bit identical") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> u(-80.0f, 80.0f);
    std::uniform_real_distribution<float> i(0.0f, 1.0f);
    PointCloud cloud;
    for (int k = 0; k < 10000; ++k) cloud.points.push_back({u(rng), u(rng), u(rng), i(rng)});
    const auto bytes = serialize_velodyne_bin(cloud);
    CHECK(bytes.size() == 160000);
    const auto back = parse_velodyne_bin(bytes);
    REQUIRE(back.size() == cloud.size());
    bool identical = true;
    for (std::size_t k = 0; k < cloud.size(); ++k)
        identical = identical && std::memcmp(&back.points[k], &cloud.points[k], sizeof(Point)) == 0;
    CHECK(identical);
}

TEST_CASE("label line parses") {
    const auto labels = parse_label_file(
        "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59\n");
    REQUIRE(labels.size() == 1);
    const auto& l = labels[0];
    CHECK(l.cls == PointClass::Car);
    CHECK(l.height == 1.65);
    CHECK(l.width == 1.67);
    CHECK(l.length == 3.64);
    CHECK(l.center == Vec3{-0.65, 1.71, 46.70});
    CHECK(l.rotation_y == -1.59);
}

TEST_CASE("label types outside the three classes are Ignored") {
    const auto labels = parse_label_file(
        "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n"
        "Van 0.00 0 1.0 1 1 2 2 2.0 1.9 4.5 1 1 20 0.1\n");
    REQUIRE(labels.size() == 2);
    CHECK(labels[0].cls == PointClass::Ignored);
    CHECK(labels[1].cls == PointClass::Ignored);
    CHECK(labels[1].type == "Van");
    CHECK(parse_label_file("").empty());
    CHECK(parse_label_file("\n\n").empty());
}

TEST_CASE("label errors carry the line number") {
    try {
        parse_label_file("Car 0 0 0 0 0 0 0 1 1 1 0 0 0 0\nCar 0 0 0 0 0 0 0 1 1 1 0 0 0\n");
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Parse);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK(code_of([] { parse_label_file("Car 0 0 0 0 0 0 0 1 x 1 0 0 0 0\n"); }) == ErrorCode::Parse);
}

TEST_CASE("calibration parsing") {
    const auto identity = parse_calibration("R0_rect: 1 0 0 0 1 0 0 0 1\nTr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n");
    CHECK(identity.velo_to_cam == Calibration::identity().velo_to_cam);
    CHECK(identity.rect == Calibration::identity().rect);

    // Hand-checked fixture from a KITTI object calib file.
    const auto c = parse_calibration(
        "P2: 7.215377e+02 0 6.095593e+02 4.485728e+01 0 7.215377e+02 1.728540e+02 2.163791e-01 0 0 1 2.745884e-03\n"
        "R0_rect: 9.999239e-01 9.837760e-03 -7.445048e-03 -9.869795e-03 9.999421e-01 -4.278459e-03 "
        "7.402527e-03 4.351614e-03 9.999631e-01\n"
        "Tr_velo_to_cam: 7.533745e-03 -9.999714e-01 -6.166020e-04 -4.069766e-03 1.480249e-02 7.280733e-04 "
        "-9.998902e-01 -7.631618e-02 9.998621e-01 7.523790e-03 1.480755e-02 -2.717806e-01\n");
    CHECK(c.velo_to_cam[0][1] == -9.999714e-01);
    CHECK(c.velo_to_cam[1][3] == -7.631618e-02);
    CHECK(c.velo_to_cam[2][3] == -2.717806e-01);
    CHECK(c.rect[0][0] == 9.999239e-01);
    CHECK(c.rect[2][1] == 4.351614e-03);
    CHECK_NOTHROW(c.validate());

    CHECK(code_of([] { parse_calibration("Tr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n"); }) ==
          ErrorCode::MissingCalibration);
    CHECK(code_of([] { parse_calibration("R0_rect: 1 0 0 0 1 0 0 0\nTr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n"); }) ==
          ErrorCode::Parse);
}

TEST_CASE("non-orthonormal rect is rejected") {
    Calibration c = Calibration::identity();
    c.rect[0][0] = 1.01;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidCalibration);
}

TEST_CASE("label_points basic cases") {
    ObjectLabel car{PointClass::Car, "Car", 1.5, 1.8, 4.0, {0, 0, 0}, 0.0};
    PointCloud cloud;
    cloud.points = {{0, 0, -0.75f, 0}, {100, 100, 100, 0}};
    const auto classes = label_points(cloud, std::vector{car}, Calibration::identity());
    CHECK(classes[0] == PointClass::Car);
    CHECK(classes[1] == PointClass::Ignored);
}

TEST_CASE("label_points through the sensor calibration") {
    const auto frame = synth::kitti_frame(3, "x");
    const auto labels = parse_label_file(frame.label_text);
    const auto classes = label_points(frame.cloud, labels, synth::sensor_calibration());
    std::size_t labeled = 0;
    for (auto c : classes) labeled += c != PointClass::Ignored;
    std::size_t object_points = frame.cloud.size() - 12000;
    CHECK(labeled == object_points);
}

TEST_CASE("label_points matches a brute-force containment oracle") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    std::uniform_real_distribution<double> angle(-3.1, 3.1);
    // Unit box at the origin, then rotated variants.
    for (int trial = 0; trial < 4; ++trial) {
        ObjectLabel box{PointClass::Pedestrian, "Pedestrian", 1.0, 1.0, 1.0, {0, 0.5, 0}, trial == 0 ? 0.0 : angle(rng)};
        PointCloud cloud;
        for (int i = 0; i < 1000; ++i)
            cloud.points.push_back({static_cast<float>(u(rng)), static_cast<float>(u(rng)), static_cast<float>(u(rng)), 0});
        const auto classes = label_points(cloud, std::vector{box}, Calibration::identity());
        std::size_t mismatches = 0;
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const bool expected = inside_oracle(box, cloud.points[i].position());
            mismatches += expected != (classes[i] == PointClass::Pedestrian);
        }
        CHECK(mismatches == 0);
    }
}

TEST_CASE("overlapping boxes go to the smallest") {
    ObjectLabel big{PointClass::Car, "Car", 3, 3, 3, {0, 1.5, 0}, 0};
    ObjectLabel small{PointClass::Cyclist, "Cyclist", 1, 1, 1, {0, 0.5, 0}, 0};
    PointCloud cloud;
    cloud.points = {{0, 0, 0, 0}, {1.2f, 0, 0, 0}};
    for (const auto& order : {std::vector{big, small}, std::vector{small, big}}) {
        const auto classes = label_points(cloud, order, Calibration::identity());
        CHECK(classes[0] == PointClass::Cyclist);
        CHECK(classes[1] == PointClass::Car);
    }
}

TEST_CASE("ply export") {
    PointCloud one;
    one.points = {{1, 2, 3, 0.5f}};
    const std::string ply = export_ply(one, std::vector{PointClass::Car});
    CHECK(ply.find("element vertex 1\n") != std::string::npos);
    CHECK(ply.substr(ply.size() - 9) == " 255 0 0\n");

    const std::string empty = export_ply(PointCloud{}, {});
    CHECK(empty.find("element vertex 0\n") != std::string::npos);
    CHECK(empty.substr(empty.size() - 11) == "end_header\n");

    CHECK(code_of([&] { export_ply(one, {}); }) == ErrorCode::Argument);
    CHECK(class_color(PointClass::Ignored) == Rgb{128, 128, 128});
}

TEST_CASE("ply text round trip") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(-50.0f, 50.0f);
    PointCloud cloud;
    for (int i = 0; i < 100; ++i) cloud.points.push_back({u(rng), u(rng), u(rng), 0.25f});
    const std::string ply = export_ply(cloud, std::vector<PointClass>(100, PointClass::Pedestrian));
    std::istringstream in(ply.substr(ply.find("end_header\n") + 11));
    for (const Point& p : cloud.points) {
        double x, y, z, i;
        int r, g, b;
        in >> x >> y >> z >> i >> r >> g >> b;
        CHECK(std::abs(x - p.x) <= 1e-5);
        CHECK(std::abs(y - p.y) <= 1e-5);
        CHECK(std::abs(z - p.z) <= 1e-5);
        CHECK(g == 255);
    }
}

TEST_CASE("cluster colors are deterministic") {
    CHECK(cluster_color(-1) == Rgb{128, 128, 128});
    CHECK(cluster_color(4) == cluster_color(4));
    CHECK_FALSE(cluster_color(1) == cluster_color(2));
}

}
