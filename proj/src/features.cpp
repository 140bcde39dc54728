#include "lidarseg/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lidarseg/error.hpp"
#include "text_util.hpp"

namespace lidarseg::features {

namespace {

constexpr int kMaxSweeps = 64;
constexpr double kNegativeClamp = 1e-9;

void require_non_empty(std::span<const Point> cluster, const char* op) {
    if (cluster.empty()) throw Error(ErrorCode::EmptyCluster, std::string(op) + ": empty cluster");
}

}  // namespace

double SymMatrix3::at(int row, int col) const {
    if (row > col) std::swap(row, col);
    switch (row * 3 + col) {
        case 0: return xx;
        case 1: return xy;
        case 2: return xz;
        case 4: return yy;
        case 5: return yz;
        case 8: return zz;
        default: return 0.0;
    }
}

double SymMatrix3::determinant() const {
    return xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz) + xz * (xy * yz - yy * xz);
}

double SymMatrix3::frobenius_norm() const {
    return std::sqrt(xx * xx + yy * yy + zz * zz + 2.0 * (xy * xy + xz * xz + yz * yz));
}

bool SymMatrix3::is_finite() const {
    return std::isfinite(xx) && std::isfinite(xy) && std::isfinite(xz) && std::isfinite(yy) && std::isfinite(yz) &&
           std::isfinite(zz);
}

EigenDecomposition eigen_decompose_sym3(const SymMatrix3& m) {
    if (!m.is_finite()) throw Error(ErrorCode::Argument, "eigenvalues_sym3: non-finite matrix entry");

    double a[3][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a[i][j] = m.at(i, j);
    double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

    const double tol = 1e-12 * m.frobenius_norm();
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        const double off = std::sqrt(2.0 * (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]));
        if (off <= tol) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (a[p][q] == 0.0) continue;
                // Rotation angle that annihilates a[p][q].
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double akp = a[k][p];
                    const double akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a[p][k];
                    const double aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for (int k = 0; k < 3; ++k) {
                    const double vkp = v[k][p];
                    const double vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }

    std::array<int, 3> order = {0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int i, int j) { return a[i][i] > a[j][j]; });
    EigenDecomposition out;
    for (int k = 0; k < 3; ++k) {
        const int i = order[k];
        out.values[k] = a[i][i];
        out.vectors[k] = {v[0][i], v[1][i], v[2][i]};
    }
    return out;
}

std::array<double, 3> eigenvalues_sym3(const SymMatrix3& m) {
    return eigen_decompose_sym3(m).values;
}

SymMatrix3 covariance(std::span<const Point> cluster) {
    require_non_empty(cluster, "covariance");
    const double n = static_cast<double>(cluster.size());
    double cx = 0.0, cy = 0.0, cz = 0.0;
    for (const Point& p : cluster) {
        cx += p.x;
        cy += p.y;
        cz += p.z;
    }
    cx /= n;
    cy /= n;
    cz /= n;
    SymMatrix3 s;
    for (const Point& p : cluster) {
        const double dx = p.x - cx;
        const double dy = p.y - cy;
        const double dz = p.z - cz;
        s.xx += dx * dx;
        s.xy += dx * dy;
        s.xz += dx * dz;
        s.yy += dy * dy;
        s.yz += dy * dz;
        s.zz += dz * dz;
    }
    s.xx /= n;
    s.xy /= n;
    s.xz /= n;
    s.yy /= n;
    s.yz /= n;
    s.zz /= n;
    return s;
}

double aabb_volume(std::span<const Point> cluster) {
    require_non_empty(cluster, "aabb_volume");
    float lo[3] = {cluster[0].x, cluster[0].y, cluster[0].z};
    float hi[3] = {lo[0], lo[1], lo[2]};
    for (const Point& p : cluster) {
        const float c[3] = {p.x, p.y, p.z};
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], c[k]);
            hi[k] = std::max(hi[k], c[k]);
        }
    }
    return (static_cast<double>(hi[0]) - lo[0]) * (static_cast<double>(hi[1]) - lo[1]) *
           (static_cast<double>(hi[2]) - lo[2]);
}

double intensity_variance(std::span<const Point> cluster) {
    require_non_empty(cluster, "intensity_variance");
    const double n = static_cast<double>(cluster.size());
    double mean = 0.0;
    for (const Point& p : cluster) mean += p.intensity;
    mean /= n;
    double acc = 0.0;
    for (const Point& p : cluster) {
        const double d = p.intensity - mean;
        acc += d * d;
    }
    return acc / n;
}

std::string_view to_string(EigenMode mode) {
    return mode == EigenMode::Eigenvalues ? "eigenvalues" : "axis_variances";
}

EigenMode eigen_mode_from_string(std::string_view s) {
    if (s == "eigenvalues") return EigenMode::Eigenvalues;
    if (s == "axis_variances") return EigenMode::AxisVariances;
    throw Error(ErrorCode::Config, "unknown eigen_mode '" + std::string(s) + "'");
}

bool FeatureVector::is_finite() const {
    for (double v : to_array())
        if (!std::isfinite(v)) return false;
    return true;
}

FeatureVector extract_features(std::span<const Point> cluster, EigenMode mode) {
    const SymMatrix3 cov = covariance(cluster);
    FeatureVector f;
    if (mode == EigenMode::Eigenvalues) {
        auto eig = eigenvalues_sym3(cov);
        for (double& e : eig)
            if (e < 0.0 && e >= -kNegativeClamp) e = 0.0;
        f.eig1 = eig[0];
        f.eig2 = eig[1];
        f.eig3 = eig[2];
    } else {
        f.eig1 = cov.xx;
        f.eig2 = cov.yy;
        f.eig3 = cov.zz;
    }
    f.volume = aabb_volume(cluster);
    f.intensity_variance = intensity_variance(cluster);
    return f;
}

std::string write_feature_csv(std::span<const FeatureRow> rows) {
    std::ostringstream os;
    os << kFeatureCsvHeader << '\n';
    for (const FeatureRow& r : rows) {
        for (double v : r.features.to_array()) os << detail::format_double(v) << ',';
        os << static_cast<int>(r.cls) << '\n';
    }
    return os.str();
}

std::vector<FeatureRow> parse_feature_csv(std::string_view text) {
    const auto lines = detail::split_lines(text);
    if (lines.empty() || detail::trim(lines[0]) != kFeatureCsvHeader) {
        throw Error(ErrorCode::Format, "feature csv: expected header '" + std::string(kFeatureCsvHeader) + "'");
    }
    std::vector<FeatureRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto line = detail::trim(lines[i]);
        if (line.empty()) continue;
        const auto cols = detail::split(line, ',');
        if (cols.size() != 6) {
            throw Error(ErrorCode::Format, "feature csv line " + std::to_string(i + 1) + ": expected 6 columns");
        }
        std::array<double, FeatureVector::kSize> values{};
        for (std::size_t k = 0; k < FeatureVector::kSize; ++k) {
            auto v = detail::parse_double(cols[k]);
            if (!v) throw Error(ErrorCode::Format, "feature csv line " + std::to_string(i + 1) + ": bad number");
            values[k] = *v;
        }
        const auto code = detail::parse_int(cols[5]);
        const auto cls = code ? class_from_code(static_cast<int>(*code)) : std::nullopt;
        if (!cls) throw Error(ErrorCode::Format, "feature csv line " + std::to_string(i + 1) + ": bad class code");
        rows.push_back({FeatureVector::from_array(values), *cls});
    }
    return rows;
}

}  // namespace lidarseg::features
