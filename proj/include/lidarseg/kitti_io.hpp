#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lidarseg/types.hpp"

namespace lidarseg::kitti {

/// A KITTI object label. Box center is the bottom-face center in the
/// rectified camera frame (x right, y down, z forward).
struct ObjectLabel {
    PointClass cls = PointClass::Ignored;
    std::string type;  // raw KITTI type string
    double height = 0.0;
    double width = 0.0;
    double length = 0.0;
    Vec3 center;
    double rotation_y = 0.0;

    double volume() const { return height * width * length; }
};

struct Calibration {
    std::array<std::array<double, 4>, 3> velo_to_cam{};
    std::array<std::array<double, 3>, 3> rect{};

    static Calibration identity();

    /// Throws Error(InvalidCalibration) unless rect is orthonormal within 1e-4.
    void validate() const;

    /// rect * (velo_to_cam * [p; 1])
    Vec3 velodyne_to_rect(const Vec3& p) const;
};

struct VelodyneParseResult {
    PointCloud cloud;
    std::size_t clamped_intensities = 0;
};

/// Decodes consecutive little-endian float32 (x, y, z, reflectance) records.
/// Intensities outside [0, 1] are clamped and counted.
VelodyneParseResult parse_velodyne(std::span<const std::byte> bytes);
PointCloud parse_velodyne_bin(std::span<const std::byte> bytes);
std::vector<std::byte> serialize_velodyne_bin(const PointCloud& cloud);

std::vector<ObjectLabel> parse_label_file(std::string_view text);
Calibration parse_calibration(std::string_view text);

/// Per-point ground truth from labeled boxes. Overlaps go to the smallest box,
/// ties to the earlier label.
std::vector<PointClass> label_points(const PointCloud& cloud,
                                     std::span<const ObjectLabel> labels,
                                     const Calibration& calib);

/// True if a point in the rectified camera frame lies inside the label's box
/// (boundary inclusive).
bool box_contains(const ObjectLabel& label, const Vec3& rect_point);

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

Rgb class_color(PointClass c);
/// Deterministic color for a cluster id; noise (-1) is gray.
Rgb cluster_color(int cluster_id);

/// ASCII PLY with x, y, z, intensity and a per-class RGB color.
std::string export_ply(const PointCloud& cloud, std::span<const PointClass> classes);
std::string export_cluster_ply(const PointCloud& cloud, std::span<const int> cluster_ids);

std::vector<std::byte> read_binary_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
PointCloud load_velodyne_file(const std::filesystem::path& path);

}  // namespace lidarseg::kitti
