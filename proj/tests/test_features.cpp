#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "lidarseg/error.hpp"
#include "lidarseg/features.hpp"

using namespace lidarseg;
using namespace lidarseg::features;

namespace {

std::vector<Point> cube_corners(float intensity = 0.5f) {
    std::vector<Point> out;
    for (int i = 0; i < 8; ++i)
        out.push_back({(i & 1) ? 0.5f : -0.5f, (i & 2) ? 0.5f : -0.5f, (i & 4) ? 0.5f : -0.5f, intensity});
    return out;
}

std::vector<Point> random_cluster(std::uint64_t seed, std::size_t n) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g(0.0f, 1.0f);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<Point> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({3 + 2 * g(rng), -1 + 0.5f * g(rng), 0.3f * g(rng), u(rng)});
    return out;
}

// Two-pass population covariance, long double.
std::array<long double, 6> covariance_oracle(const std::vector<Point>& pts) {
    long double mx = 0, my = 0, mz = 0;
    for (const Point& p : pts) {
        mx += p.x;
        my += p.y;
        mz += p.z;
    }
    const long double n = static_cast<long double>(pts.size());
    mx /= n;
    my /= n;
    mz /= n;
    std::array<long double, 6> c{};
    for (const Point& p : pts) {
        const long double dx = p.x - mx, dy = p.y - my, dz = p.z - mz;
        c[0] += dx * dx;
        c[1] += dx * dy;
        c[2] += dx * dz;
        c[3] += dy * dy;
        c[4] += dy * dz;
        c[5] += dz * dz;
    }
    for (auto& v : c) v /= n;
    return c;
}

bool close_rel(double a, long double b, double rel) {
    return std::abs(static_cast<long double>(a) - b) <= rel * std::max(1e-300L, std::abs(b));
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Io;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("covariance basics") {
    const std::vector<Point> one = {{1, 2, 3, 0}};
    const SymMatrix3 z = covariance(one);
    CHECK(z.frobenius_norm() == 0.0);
    const SymMatrix3 c = covariance(cube_corners());
    CHECK(c.xx == doctest::Approx(0.25));
    CHECK(c.yy == doctest::Approx(0.25));
    CHECK(c.zz == doctest::Approx(0.25));
    CHECK(c.xy == 0.0);
    CHECK(code_of([] { covariance({}); }) == ErrorCode::EmptyCluster);
}

TEST_CASE("covariance matches the two-pass oracle") {
    const auto pts = random_cluster(1, 200);
    const SymMatrix3 c = covariance(pts);
    const auto o = covariance_oracle(pts);
    const double got[6] = {c.xx, c.xy, c.xz, c.yy, c.yz, c.zz};
    for (int k = 0; k < 6; ++k) CHECK(close_rel(got[k], o[k], 1e-12));
}

TEST_CASE("eigenvalues of simple matrices") {
    const auto id = eigenvalues_sym3({1, 0, 0, 1, 0, 1});
    CHECK(id == std::array<double, 3>{1, 1, 1});
    const auto d = eigenvalues_sym3({0.25, 0, 0, 4, 0, 1});
    CHECK(d == std::array<double, 3>{4, 1, 0.25});
    CHECK(code_of([] { eigenvalues_sym3({NAN, 0, 0, 1, 0, 1}); }) == ErrorCode::Argument);
}

TEST_CASE("eigen decomposition vectors satisfy M v = lambda v") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-10, 10);
    for (int t = 0; t < 200; ++t) {
        const SymMatrix3 m{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
        const auto e = eigen_decompose_sym3(m);
        CHECK(e.values[0] >= e.values[1]);
        CHECK(e.values[1] >= e.values[2]);
        for (int k = 0; k < 3; ++k) {
            const Vec3 v = e.vectors[k];
            CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-12));
            const Vec3 mv{m.xx * v.x + m.xy * v.y + m.xz * v.z, m.xy * v.x + m.yy * v.y + m.yz * v.z,
                          m.xz * v.x + m.yz * v.y + m.zz * v.z};
            CHECK((mv - e.values[k] * v).norm() <= 1e-9 * m.frobenius_norm());
        }
    }
}

TEST_CASE("aabb volume") {
    CHECK(aabb_volume(cube_corners()) == 1.0);
    const std::vector<Point> one = {{1, 2, 3, 0}};
    CHECK(aabb_volume(one) == 0.0);
    const std::vector<Point> line = {{0, 0, 0, 0}, {1, 1, 1, 0}, {2, 2, 2, 0}};
    CHECK(aabb_volume(line) == 8.0);
    const std::vector<Point> collinear = {{0, 0, 0, 0}, {1, 0, 0, 0}, {5, 0, 0, 0}};
    CHECK(aabb_volume(collinear) == 0.0);

    const auto pts = random_cluster(3, 300);
    double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
    for (const Point& p : pts) {
        const double c[3] = {p.x, p.y, p.z};
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], c[k]);
            hi[k] = std::max(hi[k], c[k]);
        }
    }
    CHECK(aabb_volume(pts) == (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]));
    CHECK(code_of([] { aabb_volume({}); }) == ErrorCode::EmptyCluster);
}

TEST_CASE("intensity variance") {
    std::vector<Point> constant(50, Point{0, 0, 0, 0.7f});
    CHECK(intensity_variance(constant) == 0.0);
    const std::vector<Point> two = {{0, 0, 0, 0}, {0, 0, 0, 1}};
    CHECK(intensity_variance(two) == 0.25);

    const auto pts = random_cluster(4, 500);
    long double mean = 0;
    for (const Point& p : pts) mean += p.intensity;
    mean /= pts.size();
    long double var = 0;
    for (const Point& p : pts) var += (p.intensity - mean) * (p.intensity - mean);
    var /= pts.size();
    CHECK(close_rel(intensity_variance(pts), var, 1e-12));
}

TEST_CASE("extract features compositions") {
    const auto cube = extract_features(cube_corners());
    CHECK(cube.eig1 == doctest::Approx(0.25));
    CHECK(cube.eig2 == doctest::Approx(0.25));
    CHECK(cube.eig3 == doctest::Approx(0.25));
    CHECK(cube.volume == 1.0);
    CHECK(cube.intensity_variance == 0.0);

    const std::vector<Point> one = {{1, 2, 3, 0.4f}};
    CHECK(extract_features(one) == FeatureVector{});
}

TEST_CASE("pedestrian-like cylinder is dominated by vertical spread") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point> cyl;
    for (int i = 0; i < 500; ++i) {
        const double a = 2 * std::numbers::pi * u(rng);
        cyl.push_back({static_cast<float>(0.3 * std::cos(a)), static_cast<float>(0.3 * std::sin(a)),
                       static_cast<float>(1.8 * u(rng)), 0.3f});
    }
    const auto f = extract_features(cyl);
    CHECK(f.eig1 > 3 * f.eig2);
}

TEST_CASE("axis variance mode reports x y z variances") {
    const auto pts = random_cluster(6, 300);
    const auto f = extract_features(pts, EigenMode::AxisVariances);
    const SymMatrix3 c = covariance(pts);
    CHECK(f.eig1 == c.xx);
    CHECK(f.eig2 == c.yy);
    CHECK(f.eig3 == c.zz);
    CHECK(eigen_mode_from_string(to_string(EigenMode::AxisVariances)) == EigenMode::AxisVariances);
    CHECK_THROWS_AS(eigen_mode_from_string("pca"), Error);
}

TEST_CASE("feature invariances") {
    const auto pts = random_cluster(7, 400);
    const auto base = extract_features(pts);

    std::vector<Point> moved = pts;
    for (Point& p : moved) {
        p.x += 0.5f;
        p.y -= 2.0f;
        p.z += 1.0f;
    }
    const auto t = extract_features(moved);
    CHECK(t.eig1 == doctest::Approx(base.eig1).epsilon(1e-5));
    CHECK(t.eig3 == doctest::Approx(base.eig3).epsilon(1e-5));
    CHECK(t.volume == doctest::Approx(base.volume).epsilon(1e-5));

    // Rotation about z keeps the eigenvalues.
    const double a = 0.7;
    std::vector<Point> rotated = pts;
    for (Point& p : rotated) {
        const double x = p.x, y = p.y;
        p.x = static_cast<float>(std::cos(a) * x - std::sin(a) * y);
        p.y = static_cast<float>(std::sin(a) * x + std::cos(a) * y);
    }
    const auto r = extract_features(rotated);
    CHECK(r.eig1 == doctest::Approx(base.eig1).epsilon(1e-5));
    CHECK(r.eig2 == doctest::Approx(base.eig2).epsilon(1e-5));
    CHECK(r.eig3 == doctest::Approx(base.eig3).epsilon(1e-5));

    std::vector<Point> scaled = pts;
    for (Point& p : scaled) {
        p.x *= 2;
        p.y *= 2;
        p.z *= 2;
    }
    const auto s = extract_features(scaled);
    CHECK(s.eig1 == doctest::Approx(4 * base.eig1).epsilon(1e-9));
    CHECK(s.volume == doctest::Approx(8 * base.volume).epsilon(1e-9));
    CHECK(s.intensity_variance == base.intensity_variance);
}

TEST_CASE("features stay finite and non-negative") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto f = extract_features(random_cluster(seed, 1 + seed % 7));
        CHECK(f.is_finite());
        CHECK(f.eig3 >= 0.0);
        CHECK(f.eig1 >= f.eig2);
        CHECK(f.eig2 >= f.eig3);
    }
}

TEST_CASE("feature csv round trip") {
    std::vector<FeatureRow> rows = {{{0.1, 0.02, 1e-7, 3.25, 0.0125}, PointClass::Cyclist},
                                    {{1.0 / 3.0, 0, 0, 0, 0}, PointClass::Ignored}};
    const std::string csv = write_feature_csv(rows);
    CHECK(csv.rfind("eig1,eig2,eig3,volume,ivar,class\n", 0) == 0);
    const auto back = parse_feature_csv(csv);
    REQUIRE(back.size() == 2);
    CHECK(back[0].features == rows[0].features);
    CHECK(back[1].features == rows[1].features);
    CHECK(back[0].cls == PointClass::Cyclist);
    CHECK(back[1].cls == PointClass::Ignored);
    CHECK(code_of([] { parse_feature_csv("a,b\n"); }) == ErrorCode::Format);
    CHECK(code_of([] { parse_feature_csv("eig1,eig2,eig3,volume,ivar,class\n1,2,3,4,5,9\n"); }) == ErrorCode::Format);
}

}
