#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lidarseg/types.hpp"

namespace lidarseg::features {

/// Symmetric 3x3 matrix stored as its six unique entries.
struct SymMatrix3 {
    double xx = 0.0, xy = 0.0, xz = 0.0;
    double yy = 0.0, yz = 0.0;
    double zz = 0.0;

    double at(int row, int col) const;
    double trace() const { return xx + yy + zz; }
    double determinant() const;
    double frobenius_norm() const;
    bool is_finite() const;
};

struct EigenDecomposition {
    std::array<double, 3> values{};  // descending
    std::array<Vec3, 3> vectors{};   // unit eigenvector for each value
};

/// Cyclic Jacobi; iterates until the off-diagonal norm drops below
/// 1e-12 * ||m||_F. Throws Error(Argument) on non-finite input.
EigenDecomposition eigen_decompose_sym3(const SymMatrix3& m);
std::array<double, 3> eigenvalues_sym3(const SymMatrix3& m);

/// Population covariance of the positions about their centroid.
SymMatrix3 covariance(std::span<const Point> cluster);
double aabb_volume(std::span<const Point> cluster);
double intensity_variance(std::span<const Point> cluster);

enum class EigenMode {
    Eigenvalues,    // sorted covariance eigenvalues
    AxisVariances,  // raw x, y, z variances (diagonal), in axis order
};

std::string_view to_string(EigenMode mode);
EigenMode eigen_mode_from_string(std::string_view s);

struct FeatureVector {
    double eig1 = 0.0;
    double eig2 = 0.0;
    double eig3 = 0.0;
    double volume = 0.0;
    double intensity_variance = 0.0;

    static constexpr std::size_t kSize = 5;
    std::array<double, kSize> to_array() const { return {eig1, eig2, eig3, volume, intensity_variance}; }
    static FeatureVector from_array(const std::array<double, kSize>& a) { return {a[0], a[1], a[2], a[3], a[4]}; }
    bool is_finite() const;
    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

FeatureVector extract_features(std::span<const Point> cluster, EigenMode mode = EigenMode::Eigenvalues);

/// One row of the feature dataset file.
struct FeatureRow {
    FeatureVector features;
    PointClass cls = PointClass::Ignored;
};

inline constexpr std::string_view kFeatureCsvHeader = "eig1,eig2,eig3,volume,ivar,class";

std::string write_feature_csv(std::span<const FeatureRow> rows);
std::vector<FeatureRow> parse_feature_csv(std::string_view text);

}  // namespace lidarseg::features
