#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lidarseg {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double squared_norm() const { return dot(*this); }
    double norm() const { return std::sqrt(squared_norm()); }
};

/// One LiDAR return in the sensor frame (x forward, y left, z up).
struct Point {
    float x = 0.0f;
    float y = 0.0f;
    float z = 0.0f;
    float intensity = 0.0f;

    Vec3 position() const { return {x, y, z}; }
    friend bool operator==(const Point&, const Point&) = default;
};

struct PointCloud {
    std::string frame_id;
    std::vector<Point> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

/// Integer values are the on-disk class encoding used by every file format.
enum class PointClass : std::uint8_t {
    Car = 0,
    Pedestrian = 1,
    Cyclist = 2,
    Ignored = 3,
};

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::size_t kNumLabeledClasses = 3;

inline constexpr std::array<PointClass, kNumClasses> kAllClasses = {
    PointClass::Car, PointClass::Pedestrian, PointClass::Cyclist, PointClass::Ignored};

inline constexpr std::size_t index_of(PointClass c) { return static_cast<std::size_t>(c); }

std::string_view class_name(PointClass c);
std::optional<PointClass> class_from_name(std::string_view name);
std::optional<PointClass> class_from_code(int code);

/// Positions of every point, in cloud order.
std::vector<Vec3> positions(const PointCloud& cloud);

}  // namespace lidarseg
